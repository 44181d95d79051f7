"""Dense complex linear algebra shared by every processor module.

Kets are 1-d complex numpy arrays, operators 2-d complex numpy arrays; all
functions are pure. The composite-index convention is row-major throughout
(first tensor factor major): the joint index of (i_a, i_b) is
i_a * dim_b + i_b. It is fixed once here so every module agrees on basis
ordering.
"""
from __future__ import annotations

import numpy as np

# |sum |amp|^2 - 1| bound for a ket considered normalized.
TOL_NORM = 1e-10
# Smallest-to-largest singular value ratio below which a matrix is treated
# as singular. Both values sized for double precision at dims <= ~350.
TOL_SINGULAR = 1e-9

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z)


class SingularOperator(ValueError):
    """Matrix inversion requested below the singularity threshold."""


class NotUnitary(ValueError):
    """A unitary matrix was required."""


def ket(amps) -> np.ndarray:
    """Build a ket from a sequence of amplitudes; rejects non-finite entries."""
    v = np.asarray(amps, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("ket amplitudes must be finite")
    return v


def basis_ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def is_normalized(v: np.ndarray, tol: float = TOL_NORM) -> bool:
    return abs(np.vdot(v, v).real - 1.0) <= tol


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of kets or operators, row-major index convention."""
    return np.kron(a, b)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conjugate(m).T


def apply(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product m @ v with an explicit dimension check."""
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: operator cols {m.shape[1]} vs ket dim {v.shape[0]}")
    return m @ v


def is_unitary(m: np.ndarray, tol: float = 1e-10) -> bool:
    """True iff ||m^dag m - I||_F <= tol (square matrices only)."""
    if m.shape[0] != m.shape[1]:
        return False
    delta = dagger(m) @ m - np.eye(m.shape[0])
    return np.linalg.norm(delta) <= tol


def inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a square matrix; raises SingularOperator below threshold.

    The threshold is relative: smallest singular value <= TOL_SINGULAR times
    the largest counts as singular.
    """
    if m.shape[0] != m.shape[1]:
        raise ValueError("inverse requires a square matrix")
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0 or s[-1] <= TOL_SINGULAR * s[0]:
        raise SingularOperator(f"singular value ratio {s[-1]:.3e}/{s[0]:.3e} below threshold")
    return np.linalg.inv(m)


def su2_exp(mu) -> np.ndarray:
    """exp(i mu . sigma) = cos|mu| I + i (sin|mu|/|mu|) mu . sigma.

    The |mu| -> 0 limit is taken analytically (sin x / x -> 1).
    """
    mu = np.asarray(mu, dtype=float)
    m = np.linalg.norm(mu)
    mdotsig = mu[0] * SIGMA_X + mu[1] * SIGMA_Y + mu[2] * SIGMA_Z
    return np.cos(m) * SIGMA_0 + 1j * np.sinc(m / np.pi) * mdotsig


def su2_log(u: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Invert su2_exp up to a global phase: u = e^{i phase} exp(i mu . sigma).

    Returns (mu, phase) with |mu| in [0, pi] and phase in (-pi, pi]. The
    phase branch is fixed by taking arg(det u) in [-pi, pi), which makes the
    map the identity on exp(i mu . sigma) for |mu| < pi. At |mu| = pi the
    rotation axis is not unique; an arbitrary unit axis is returned.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not is_unitary(u, tol):
        raise NotUnitary("su2_log requires a 2x2 unitary")
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    ang = float(np.angle(det))
    if ang >= np.pi - 1e-12:
        ang -= 2 * np.pi
    phase = ang / 2.0
    v = np.exp(-1j * phase) * u
    # v = a0 I + i (a . sigma) with a0, a real for det v = 1.
    a0 = (v[0, 0] + v[1, 1]).real / 2.0
    a = np.array(
        [
            ((v[0, 1] + v[1, 0]) / 2j).real,
            ((v[0, 1] - v[1, 0]) / 2.0).real,
            ((v[0, 0] - v[1, 1]) / 2j).real,
        ]
    )
    s = np.linalg.norm(a)
    mu = float(np.arctan2(s, a0))
    if s > 1e-12:
        vec = mu * a / s
    elif a0 > 0:
        vec = np.zeros(3)
    else:
        vec = np.array([np.pi, 0.0, 0.0])
    return vec, phase


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """min over phi of ||a - e^{i phi} b||_F (global-phase-blind distance)."""
    overlap = np.vdot(b, a)
    phi = np.angle(overlap) if overlap != 0 else 0.0
    return float(np.linalg.norm(a - np.exp(1j * phi) * b))


def proportionality_scale(a: np.ndarray, b: np.ndarray, tol: float = 1e-9):
    """Complex c with a = c * b within tol (Frobenius), or None."""
    bb = np.vdot(b, b)
    if bb == 0:
        return None
    c = np.vdot(b, a) / bb
    if np.linalg.norm(a - c * b) > tol * max(1.0, float(np.linalg.norm(a))):
        return None
    return complex(c)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state of the given dimension."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return normalize(v)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with the standard phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
