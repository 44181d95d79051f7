"""Generic programmable-processor engine.

A processor is a fixed unitary G on data (x) program space, stored as the
N x N grid of D x D blocks A_jk with G = sum_jk A_jk (x) |j><k|. Running the
processor on (psi, program) and measuring the program register in some
orthonormal basis splits the evolution into measurement branches, each with
a branch operator acting on the data alone. This module assembles and
validates processors, decomposes runs into branches and samples outcomes;
the concrete constructions live in `zoo`.

All types are immutable after construction and safe to share across tasks;
`decompose` is pure and `sample` touches only the caller-supplied RNG
stream (derive independent streams per task via `streams.derive_stream`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import qlinalg

# Branches below this probability carry no post-state and are never
# sampled; normalizing them would amplify numerical noise.
PROB_CUTOFF = 1e-12

_COMPLETENESS_TOL = 1e-9
_INPUT_NORM_TOL = 1e-8


class InvalidProcessor(ValueError):
    """Block grid violates the completeness sums (G would not be unitary)."""


class DimensionMismatch(ValueError):
    """State or basis dimension does not match the processor."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProgramState:
    """A normalized program-register ket plus its encoding metadata.

    `encoding` tags which parameterization produced the ket: one of
    "u1", "su2", "diagonal", "geometric", "weyl", "raw". `params` holds the
    plain-Python parameters of that encoding (angles, complex ratios, ...),
    which is what gets serialized into traces.
    """

    ket: np.ndarray
    encoding: str = "raw"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        v = qlinalg.ket(self.ket)
        if not qlinalg.is_normalized(v, tol=_INPUT_NORM_TOL):
            raise ValueError("program ket must be normalized")
        object.__setattr__(self, "ket", _readonly(v))

    @property
    def dim(self) -> int:
        return self.ket.shape[0]


@dataclass(frozen=True)
class ProgramBasis:
    """Orthonormal measurement basis for the program register."""

    vectors: np.ndarray  # shape (N, N); vectors[i] is the i-th basis ket
    labels: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("basis must hold N vectors of dimension N")
        if len(self.labels) != v.shape[0]:
            raise ValueError("one label per basis vector required")
        gram = np.conjugate(v) @ v.T
        if np.linalg.norm(gram - np.eye(v.shape[0])) > _COMPLETENESS_TOL:
            raise ValueError("basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", _readonly(v))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def computational(cls, dim: int) -> "ProgramBasis":
        return cls(np.eye(dim, dtype=complex), tuple(str(j) for j in range(dim)))


@dataclass(frozen=True)
class Branch:
    label: str
    operator: np.ndarray  # D x D branch operator A_b(program)
    probability: float
    post_state: np.ndarray | None  # None when probability < PROB_CUTOFF


@dataclass(frozen=True)
class BranchDecomposition:
    branches: tuple[Branch, ...]

    def probabilities(self) -> np.ndarray:
        return np.array([b.probability for b in self.branches])

    def by_label(self, label: str) -> Branch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)


@dataclass(frozen=True)
class ProcessorDefinition:
    """Block form of a programmable processor.

    blocks[j, k] is the D x D operator A_jk; validity means both
    completeness sums hold: sum_j A_jk1^dag A_jk2 = I delta_k1k2 and
    sum_j A_k1j A_k2j^dag = I delta_k1k2 (equivalently G is unitary).
    Construct through `assemble`, which enforces them.
    """

    data_dim: int
    program_dim: int
    blocks: np.ndarray  # shape (N, N, D, D)
    label: str = ""

    def global_unitary(self) -> np.ndarray:
        """Materialize G = sum_jk A_jk (x) |j><k| as a (D*N) x (D*N) matrix."""
        d, n = self.data_dim, self.program_dim
        return self.blocks.transpose(2, 0, 3, 1).reshape(d * n, d * n)


def assemble(blocks, label: str = "", tol: float = _COMPLETENESS_TOL) -> ProcessorDefinition:
    """Validate a block grid and wrap it as a ProcessorDefinition.

    `blocks` is anything shaped (N, N, D, D). Raises InvalidProcessor when
    either completeness sum deviates from identity by more than tol.
    """
    b = np.asarray(blocks, dtype=complex)
    if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2] != b.shape[3]:
        raise ValueError("blocks must form an N x N grid of D x D operators")
    n, d = b.shape[0], b.shape[2]
    eye = np.einsum("kl,bc->klbc", np.eye(n), np.eye(d))
    left = np.einsum("jkab,jlac->klbc", np.conjugate(b), b)
    right = np.einsum("kjab,ljcb->klac", b, np.conjugate(b))
    dev = max(np.abs(left - eye).max(), np.abs(right - eye).max())
    if dev > tol:
        raise InvalidProcessor(f"completeness sums deviate by {dev:.3e} (> {tol:.1e})")
    return ProcessorDefinition(data_dim=d, program_dim=n, blocks=_readonly(b), label=label)


def _program_ket(xi) -> np.ndarray:
    return xi.ket if isinstance(xi, ProgramState) else qlinalg.ket(xi)


def program_operator(proc: ProcessorDefinition, xi, j: int) -> np.ndarray:
    """A_j(program) = sum_k <k|program> A_jk for computational outcome j."""
    if not 0 <= j < proc.program_dim:
        raise IndexError(f"program outcome index {j} out of range")
    amps = _program_ket(xi)
    return np.tensordot(amps, proc.blocks[j], axes=(0, 0))


def branch_operators(proc: ProcessorDefinition, xi, basis: ProgramBasis) -> np.ndarray:
    """All branch operators A_b = sum_j <b|j> A_j(program), shape (N, D, D)."""
    amps = _program_ket(xi)
    if amps.shape[0] != proc.program_dim:
        raise DimensionMismatch("program dimension does not match processor")
    if basis.dim != proc.program_dim:
        raise DimensionMismatch("basis dimension does not match processor")
    a_j = np.tensordot(proc.blocks, amps, axes=([1], [0]))  # (N, D, D)
    return np.tensordot(np.conjugate(basis.vectors), a_j, axes=([1], [0]))


def decompose(
    proc: ProcessorDefinition,
    psi: np.ndarray,
    xi,
    basis: ProgramBasis | None = None,
) -> BranchDecomposition:
    """Split one processor run into measurement branches.

    Branch b carries operator A_b, probability ||A_b psi||^2 and the
    normalized post-state; probabilities sum to 1 for a valid processor.
    The basis defaults to the computational program basis.
    """
    psi = qlinalg.ket(psi)
    if psi.shape[0] != proc.data_dim:
        raise DimensionMismatch("data state dimension does not match processor")
    if not qlinalg.is_normalized(psi, tol=_INPUT_NORM_TOL):
        raise ValueError("data state must be normalized")
    if basis is None:
        basis = ProgramBasis.computational(proc.program_dim)
    ops = branch_operators(proc, xi, basis)
    branches = []
    for b, label in enumerate(basis.labels):
        amp = ops[b] @ psi
        p = float(np.vdot(amp, amp).real)
        post = amp / np.sqrt(p) if p >= PROB_CUTOFF else None
        branches.append(Branch(label=label, operator=_readonly(ops[b]), probability=p, post_state=post))
    return BranchDecomposition(branches=tuple(branches))


def select_branch(dec: BranchDecomposition, rng: np.random.Generator) -> Branch:
    """Inverse-CDF draw over branches in label order; sub-cutoff branches never fire."""
    r = rng.random()
    acc = 0.0
    chosen = None
    for b in dec.branches:
        if b.probability < PROB_CUTOFF:
            continue
        chosen = b
        acc += b.probability
        if r < acc:
            break
    if chosen is None:
        raise ValueError("no branch has probability above the cutoff")
    return chosen


def sample(
    proc: ProcessorDefinition,
    psi: np.ndarray,
    xi,
    basis: ProgramBasis | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[str, np.ndarray]:
    """Run once: draw an outcome label and return (label, post_state)."""
    if rng is None:
        raise ValueError("sample requires an explicitly seeded RNG stream")
    dec = decompose(proc, psi, xi, basis)
    branch = select_branch(dec, rng)
    return branch.label, branch.post_state
