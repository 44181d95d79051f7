"""Conditional-loop execution: repeat a processor with corrected programs.

A failed run leaves the data in (branch operator) @ psi for a known, heralded
branch operator. Each correction rule re-encodes "target composed with the
inverse of everything applied so far" in its family's program encoding, so
that the next successful branch restores proportionality to the target. The
residual (the accumulated applied operator) is tracked as a matrix and the
comparison is always up to global phase.

`exact_success` evaluates the outcome tree exactly; `run_loop` samples
Monte Carlo trajectories from a caller-supplied RNG stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import zoo
from .processor import (
    ProcessorDefinition,
    ProgramBasis,
    ProgramState,
    branch_operators,
    decompose,
    select_branch,
)
from .qlinalg import SingularOperator, is_normalized, inverse, su2_log

# Failure branches with less probability mass than this cannot move a
# 1e-12 comparison and are pruned from the exact tree.
_PRUNE = 1e-25


class SingularProgram(ValueError):
    """The residual cannot be inverted in this encoding; the loop cannot proceed."""


@dataclass(frozen=True)
class LoopPolicy:
    """Round budget and which outcome labels count as success.

    success_labels = None defers to the rule's per-family default (the
    designated success outcome of each construction).
    """

    max_rounds: int
    success_labels: frozenset[str] | None = None

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.success_labels is not None:
            object.__setattr__(self, "success_labels", frozenset(self.success_labels))


@dataclass(frozen=True)
class LoopRound:
    program: ProgramState
    outcome: str
    probability: float
    post_state: np.ndarray | None = None


@dataclass(frozen=True)
class LoopTrace:
    """Per-round record of one loop trajectory.

    status is "succeeded", "exhausted" (round budget spent) or
    "uncorrectable" (the residual became singular in the rule's encoding, so
    no correcting program exists).
    """

    rounds: tuple[LoopRound, ...]
    succeeded: bool
    status: str

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)


@dataclass(frozen=True)
class CorrectionRule:
    """Family-specific program correction.

    `next_program(proc, target, residual)` encodes target @ residual^{-1}
    in the family's program encoding; with residual = I it encodes the
    target itself, so it also provides the first-round program.
    """

    family: str
    basis_for: Callable[[ProcessorDefinition], ProgramBasis] = field(repr=False)
    success_labels_for: Callable[[ProcessorDefinition], frozenset[str]] = field(repr=False)
    _next_program: Callable = field(repr=False)

    def success_labels(self, proc: ProcessorDefinition) -> frozenset[str]:
        return self.success_labels_for(proc)

    def next_program(self, proc: ProcessorDefinition, target: np.ndarray, residual: np.ndarray) -> ProgramState:
        return self._next_program(proc, np.asarray(target, dtype=complex), np.asarray(residual, dtype=complex))


def _computational_basis(proc: ProcessorDefinition) -> ProgramBasis:
    return ProgramBasis.computational(proc.program_dim)


def _diag_entries(m: np.ndarray, what: str) -> np.ndarray:
    d = np.diagonal(m)
    off = m - np.diag(d)
    if np.linalg.norm(off) > 1e-9 * max(1.0, float(np.linalg.norm(m))):
        raise ValueError(f"{what} must be diagonal for this correction family")
    return d


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    scale = np.abs(den).max()
    if scale == 0 or np.any(np.abs(den) <= 1e-12 * scale):
        raise SingularProgram("applied operator has a vanishing diagonal entry")
    return num / den


def u1_rule() -> CorrectionRule:
    """Angle-doubling correction for the single-CNOT processor.

    A failure applies U(-beta); encoding the difference angle of
    target @ residual^{-1} doubles the angle after each consecutive failure
    (alpha, 2 alpha, 4 alpha, ...), so one success restores U(alpha).
    """

    def next_program(proc, target, residual):
        t = _diag_entries(target, "target")
        r = _diag_entries(residual, "residual")
        beta = ((np.angle(t[0]) - np.angle(t[1])) - (np.angle(r[0]) - np.angle(r[1]))) / 2.0
        return zoo.u1_program(float(beta))

    return CorrectionRule(
        family="u1",
        basis_for=_computational_basis,
        success_labels_for=lambda proc: frozenset({"0"}),
        _next_program=next_program,
    )


def bz_rule() -> CorrectionRule:
    """Parameter-squaring correction for B(z) on the cyclic-shift processor.

    On the 2-dim program a failure applies z|0><0| + |1><1| up to scale, so
    the needed ratio squares: z, z^2, z^4, ... On N-dim programs the single
    failure branch leaves c0 (z^{N-1}|0><0| + |1><1|) and the same ratio
    arithmetic applies (an extension of the 2-dim chain; the rule only needs
    the residual to stay invertible).
    """

    def next_program(proc, target, residual):
        t = _diag_entries(target, "target")
        r = _diag_entries(residual, "residual")
        m = _safe_ratio(t, r)
        if abs(m[0]) <= 1e-12 * abs(m).max():
            raise SingularProgram("corrected ratio is unbounded (m00 ~ 0)")
        return zoo.geometric_program(complex(m[1] / m[0]), proc.program_dim)

    return CorrectionRule(
        family="bz",
        basis_for=_computational_basis,
        success_labels_for=lambda proc: frozenset(str(j) for j in range(proc.program_dim - 1)),
        _next_program=next_program,
    )


def diagonal_rule(dim: int) -> CorrectionRule:
    """Entrywise-quotient correction for the qudit diagonal processor.

    Next program entries are lambda * (target entry) / (residual entry),
    lambda fixed by normalization. Raises SingularProgram when an applied
    diagonal entry vanished: the failed operation is non-invertible and the
    loop cannot proceed.
    """

    def next_program(proc, target, residual):
        if proc.data_dim != dim:
            raise ValueError("rule dimension does not match processor")
        t = _diag_entries(target, "target")
        r = _diag_entries(residual, "residual")
        return zoo.diagonal_program(_safe_ratio(t, r))

    return CorrectionRule(
        family="diagonal",
        basis_for=_computational_basis,
        success_labels_for=lambda proc: frozenset({"0"}),
        _next_program=next_program,
    )


@lru_cache(maxsize=None)
def _eye(dim: int) -> np.ndarray:
    e = np.eye(dim, dtype=complex)
    e.setflags(write=False)
    return e


def _needed(target: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """target @ residual^{-1}, skipping the inversion on the first round."""
    if np.array_equal(residual, _eye(residual.shape[0])):
        return target
    return target @ inverse(residual)


def _unitary_part(m: np.ndarray) -> np.ndarray:
    """Rescale a proportional-to-unitary matrix to an exact unitary."""
    g = np.conjugate(m).T @ m
    c = float(np.trace(g).real) / m.shape[0]
    if c <= 0 or np.linalg.norm(g - c * np.eye(m.shape[0])) > 1e-8 * max(1.0, c) * m.shape[0]:
        raise ValueError("operator is not proportional to a unitary")
    return m / np.sqrt(c)


def qid2_rule() -> CorrectionRule:
    """Conjugation correction for the qubit distributor.

    On outcome j != 0+ the data picked up sigma_j U sigma_j, so the next
    program encodes U (sigma_j U sigma_j)^{-1} = U sigma_j U^dag sigma_j,
    re-extracted through the SU(2) logarithm (global phases are dropped).
    """

    def next_program(proc, target, residual):
        needed = _unitary_part(_needed(target, residual))
        mu_vec, _ = su2_log(needed)
        return zoo.su2_program(mu_vec)

    return CorrectionRule(
        family="qid2",
        basis_for=lambda proc: zoo.qid2_basis(),
        success_labels_for=lambda proc: frozenset({"0+"}),
        _next_program=next_program,
    )


def qidN_rule(n: int) -> CorrectionRule:
    """Conjugation correction for the qudit distributor.

    On outcome (r,s) != (0,0) the applied operator is proportional to
    U^{(s,r)} V U^{(s,r)dag}; the next program encodes
    V [U^{(s,r)} V U^{(s,r)dag}]^{-1} via the operator-basis expansion.
    Raises SingularOperator when the accumulated branch is not invertible.
    """

    def next_program(proc, target, residual):
        if proc.data_dim != n:
            raise ValueError("rule dimension does not match processor")
        return zoo.program_for(_needed(target, residual))

    return CorrectionRule(
        family="qidN",
        basis_for=lambda proc: zoo.phi_basis(n),
        success_labels_for=lambda proc: frozenset({"0,0"}),
        _next_program=next_program,
    )


def _rescaled(residual: np.ndarray) -> np.ndarray:
    """Keep the residual at O(1) scale; only its direction matters."""
    norm = np.linalg.norm(residual)
    if norm == 0:
        raise SingularProgram("residual collapsed to zero")
    return residual * (np.sqrt(residual.shape[0]) / norm)


def _require_state(psi, dim: int) -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.shape[0] != dim:
        raise ValueError("data state dimension does not match processor")
    if not is_normalized(v, tol=1e-8):
        raise ValueError("data state must be normalized")
    return v


def run_loop(
    proc: ProcessorDefinition,
    psi,
    target,
    rule: CorrectionRule,
    policy: LoopPolicy,
    rng: np.random.Generator,
) -> LoopTrace:
    """Sample one corrected-loop trajectory.

    Rounds are sampled until a success label fires or the budget runs out;
    the trace records the program, outcome, branch probability and
    post-state of every round. On success the final post-state is
    proportional to target @ psi (up to global phase).
    """
    state = _require_state(psi, proc.data_dim)
    target = np.asarray(target, dtype=complex)
    basis = rule.basis_for(proc)
    success = policy.success_labels if policy.success_labels is not None else rule.success_labels(proc)
    residual = np.eye(proc.data_dim, dtype=complex)
    rounds: list[LoopRound] = []
    status = "exhausted"
    for _ in range(policy.max_rounds):
        try:
            program = rule.next_program(proc, target, residual)
        except (SingularOperator, SingularProgram):
            status = "uncorrectable"
            break
        dec = decompose(proc, state, program, basis)
        branch = select_branch(dec, rng)
        rounds.append(
            LoopRound(
                program=program,
                outcome=branch.label,
                probability=branch.probability,
                post_state=branch.post_state,
            )
        )
        if branch.label in success:
            status = "succeeded"
            break
        state = branch.post_state
        residual = _rescaled(branch.operator @ residual)
    return LoopTrace(rounds=tuple(rounds), succeeded=(status == "succeeded"), status=status)


def _state_independent(ops: np.ndarray, probs: np.ndarray) -> bool:
    """True when every branch operator is proportional to an isometry.

    Then outcome probabilities cannot depend on the data state, which is
    what lets the exact tree collapse.
    """
    d = ops.shape[2]
    eye = np.eye(d)
    for m, p in zip(ops, probs):
        if np.linalg.norm(np.conjugate(m).T @ m - p * eye) > 1e-11:
            return False
    return True


def exact_success(
    proc: ProcessorDefinition,
    target,
    rule: CorrectionRule,
    n: int,
    psi=None,
    success_labels: frozenset[str] | None = None,
) -> float:
    """Exact cumulative success probability of an n-round corrected loop.

    The outcome tree is evaluated with decompose at every node. Nodes whose
    branch operators are all proportional to isometries have
    state-independent probabilities; their failure subtrees are congruent
    (the residuals are conjugation-related), so a single representative
    child is evaluated. Other nodes (non-unitary targets) recurse branch by
    branch. The collapsed and fully enumerated evaluations are checked
    against each other for small n in the test suite.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    target = np.asarray(target, dtype=complex)
    basis = rule.basis_for(proc)
    success = success_labels if success_labels is not None else rule.success_labels(proc)
    labels = basis.labels
    success_idx = [i for i, lab in enumerate(labels) if lab in success]
    fail_idx = [i for i, lab in enumerate(labels) if lab not in success]
    if psi is None:
        psi = np.ones(proc.data_dim, dtype=complex) / np.sqrt(proc.data_dim)
    state0 = _require_state(psi, proc.data_dim)

    def node(state: np.ndarray, residual: np.ndarray, remaining: int) -> float:
        try:
            program = rule.next_program(proc, target, residual)
        except (SingularOperator, SingularProgram):
            return 0.0
        ops = branch_operators(proc, program, basis)
        amps = np.einsum("bij,j->bi", ops, state)
        probs = np.einsum("bi,bi->b", np.conjugate(amps), amps).real
        s = float(probs[success_idx].sum())
        if remaining == 1:
            return s
        fails = [i for i in fail_idx if probs[i] > _PRUNE]
        if not fails:
            return s
        if _state_independent(ops, probs):
            i = fails[0]
            child = node(amps[i] / np.sqrt(probs[i]), _rescaled(ops[i] @ residual), remaining - 1)
            return s + (1.0 - s) * child
        total = s
        for i in fails:
            child = node(amps[i] / np.sqrt(probs[i]), _rescaled(ops[i] @ residual), remaining - 1)
            total += probs[i] * child
        return total

    return float(node(state0, np.eye(proc.data_dim, dtype=complex), n))
