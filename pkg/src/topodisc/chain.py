"""The knowledge chain: kernel, absorption times, spectrum and report bounds.

States are neighbour masks.  From state ``k`` a report from tile ``s``
moves the chain to ``k | s``, so the kernel only moves up the subset
lattice and its diagonal is its spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bits
from .tessellation import TileMeasure

DENSE_LIMIT = 12
DELTA_TOL = 1e-12


class _Marker:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return self.name


UNREACHABLE = _Marker("UNREACHABLE")
UNBOUNDED = _Marker("UNBOUNDED")


def transition_prob(measure: TileMeasure, k: int, l: int) -> float:
    """P(k, l): probability that one report moves knowledge ``k`` to exactly ``l``."""
    if k & ~l:
        return 0.0
    missing = l & ~k
    return float(sum(measure.mass[m | missing] for m in bits.iter_subsets(k)))


def kernel_row(measure: TileMeasure, k: int) -> np.ndarray:
    """Row ``k`` of the kernel: a report from tile ``s`` lands on ``k | s``."""
    size = measure.mass.shape[0]
    return np.bincount(k | np.arange(size), weights=measure.mass, minlength=size)


def kernel_matrix(measure: TileMeasure) -> np.ndarray:
    """Dense kernel indexed by mask; refused above ``DENSE_LIMIT`` neighbours."""
    if measure.n_neighbours > DENSE_LIMIT:
        raise ValueError(f"dense kernel refused for N={measure.n_neighbours} > {DENSE_LIMIT}")
    return np.stack([kernel_row(measure, k) for k in range(measure.mass.shape[0])])


def eigenvalues(measure: TileMeasure) -> np.ndarray:
    """λ_k = total mass of tiles contained in ``k`` (the kernel diagonal)."""
    return bits.subset_sums(measure.mass)


def fk_reachable(measure: TileMeasure) -> tuple[bool, list[int]]:
    """Whether full knowledge is reachable, and the 1-based undiscoverable neighbours."""
    seen = discoverable(measure)
    missing = bits.members(bits.complement(seen, measure.n_neighbours))
    return not missing, missing


def discoverable(measure: TileMeasure) -> int:
    """Union of all tiles carrying positive mass."""
    support = np.flatnonzero(measure.mass > 0)
    return int(np.bitwise_or.reduce(support)) if support.size else 0


def fk_absorbing(n: int) -> np.ndarray:
    absorbing = np.zeros(1 << n, dtype=bool)
    absorbing[bits.full(n)] = True
    return absorbing


def delta_absorbing(measure: TileMeasure, delta: float) -> np.ndarray:
    """States whose covered share of the serving area is at least ``delta``."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    absorbing = eigenvalues(measure) >= delta - DELTA_TOL
    absorbing[measure.full] = True
    return absorbing


def absorbing_states(measure: TileMeasure, delta: float | None = None) -> np.ndarray:
    if delta is None:
        return fk_absorbing(measure.n_neighbours)
    return delta_absorbing(measure, delta)


def second_largest_eigenvalue(measure: TileMeasure, absorbing: np.ndarray | None = None) -> float:
    """Largest λ_k over the non-absorbing states.

    With only the full state absorbing this is the maximum over the order
    N-1 states.  With a δ-aggregated absorbing set it is the largest
    eigenvalue of the aggregated transient block.
    """
    lam = eigenvalues(measure)
    if absorbing is None:
        absorbing = fk_absorbing(measure.n_neighbours)
    transient = lam[~absorbing]
    return float(transient.max()) if transient.size else 0.0


@dataclass(frozen=True, eq=False)
class ChainSolution:
    """Expected absorption times (in reports) from every state.

    ``expected_steps`` and ``variance`` hold NaN where ``reachable`` is
    False; use :meth:`steps` or :attr:`mean` for the typed result.
    """

    expected_steps: np.ndarray
    variance: np.ndarray
    reachable: np.ndarray
    absorbing: np.ndarray
    eigenvalues: np.ndarray
    second_largest: float
    start_state: int = 0
    delta: float | None = field(default=None)

    def steps(self, k: int):
        return float(self.expected_steps[k]) if self.reachable[k] else UNREACHABLE

    @property
    def mean(self):
        return self.steps(self.start_state)

    @property
    def std(self):
        if not self.reachable[self.start_state]:
            return UNREACHABLE
        return math.sqrt(max(float(self.variance[self.start_state]), 0.0))

    def bound(self, epsilon: float):
        return report_bound(self.second_largest, epsilon)

    def to_json(self, epsilons=(0.1, 0.01)) -> dict:
        def enc(v):
            return "unreachable" if v is UNREACHABLE else v

        def enc_bound(v):
            return "unbounded" if v is UNBOUNDED else v

        n = self.eigenvalues.shape[0].bit_length() - 1
        return {
            "n_neighbours": n,
            "delta": self.delta,
            "start_state": self.start_state,
            "expected_steps": enc(self.mean),
            "std": enc(self.std),
            "per_state": [enc(self.steps(k)) for k in range(self.eigenvalues.shape[0])],
            "eigenvalues": self.eigenvalues.tolist(),
            "second_largest": self.second_largest,
            "bounds": {repr(e): enc_bound(self.bound(e)) for e in epsilons},
        }


def expected_absorption_steps(measure: TileMeasure, absorbing: np.ndarray, start_state: int = 0,
                              delta: float | None = None) -> ChainSolution:
    """Mean and variance of the number of reports until absorption.

    Back-substitution from the top of the lattice down: for transient ``k``,

        h(k) (1 - λ_k) = 1 + Σ_s mass[s] · h(k | s)        (over s ⊄ k)
        m(k) (1 - λ_k) = 2 h(k) - 1 + Σ_s mass[s] · m(k | s)

    where ``m`` is the second moment.  States whose most-informed reachable
    state ``k | discoverable`` is not absorbing are unreachable.
    """
    absorbing = np.asarray(absorbing, dtype=bool)
    size = measure.mass.shape[0]
    if absorbing.shape != (size,):
        raise ValueError("absorbing mask has the wrong length")
    if not absorbing.any():
        raise ValueError("absorbing set is empty")
    states = np.arange(size)
    for b in range(measure.n_neighbours):
        if np.any(absorbing & ~absorbing[states | (1 << b)]):
            raise ValueError("absorbing set must be closed under supersets")

    lam = eigenvalues(measure)
    reach = absorbing[states | discoverable(measure)]
    support = np.flatnonzero(measure.mass > 0)
    weights = measure.mass[support]

    h = np.zeros(size)
    m2 = np.zeros(size)
    for k in bits.state_order(measure.n_neighbours)[::-1]:
        if absorbing[k] or not reach[k]:
            continue
        targets = k | support
        # escape mass summed directly; 1 - λ_k cancels badly when λ_k ≈ 1
        stay = weights[targets != k].sum()
        h[k] = (1.0 + weights @ h[targets]) / stay
        m2[k] = (2.0 * h[k] - 1.0 + weights @ m2[targets]) / stay

    var = m2 - h * h
    h[~reach] = np.nan
    var[~reach] = np.nan
    return ChainSolution(
        expected_steps=h,
        variance=var,
        reachable=reach,
        absorbing=absorbing,
        eigenvalues=lam,
        second_largest=second_largest_eigenvalue(measure, absorbing),
        start_state=start_state,
        delta=delta,
    )


def solve_fk(measure: TileMeasure) -> ChainSolution:
    return expected_absorption_steps(measure, fk_absorbing(measure.n_neighbours))


def solve_delta(measure: TileMeasure, delta: float) -> ChainSolution:
    return expected_absorption_steps(measure, delta_absorbing(measure, delta), delta=delta)


def dense_expected_steps(measure: TileMeasure, absorbing: np.ndarray) -> np.ndarray:
    """E[τ] from every transient state by a dense solve of (I - Q) h = 1.

    Independent of the back-substitution path; meant for checking it on
    small chains.  Requires every transient state to reach absorption.
    """
    P = kernel_matrix(measure)
    transient = np.flatnonzero(~np.asarray(absorbing, dtype=bool))
    Q = P[np.ix_(transient, transient)]
    h = np.zeros(P.shape[0])
    h[transient] = np.linalg.solve(np.eye(transient.size) - Q, np.ones(transient.size))
    return h


def report_bound(second_largest: float, epsilon: float):
    """S(1-ε) = log ε / log λ̃, or ``UNBOUNDED`` when λ̃ = 1."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if second_largest <= 0:
        return 0.0
    if second_largest >= 1:
        return UNBOUNDED
    return math.log(epsilon) / math.log(second_largest)


def tail_bound(second_largest: float, t: int) -> float:
    """λ̃**t, the single-eigenvalue tail estimate for P(τ > t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(second_largest) ** t


def union_tail_bound(measure: TileMeasure, t: int, absorbing: np.ndarray | None = None) -> float:
    """Σ over maximal transient states of λ_k**t, a valid bound on P(τ > t).

    τ > t means the chain is still inside some maximal transient state's
    down-set, which happens with probability λ_k**t for that state.
    """
    if absorbing is None:
        absorbing = fk_absorbing(measure.n_neighbours)
    lam = eigenvalues(measure)
    n = measure.n_neighbours
    total = 0.0
    for k in np.flatnonzero(~absorbing):
        k = int(k)
        if all(absorbing[k | (1 << b)] for b in range(n) if not k >> b & 1):
            total += lam[k] ** t
    return min(1.0, total)
