"""How many responding drivers does full block coverage take?

With driver blocks i.i.d. uniform over ``N = 2**l`` values this is the
coupon collector's problem, expectation ``N * H_N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import IncompleteExperiment, LOutOfRange

if TYPE_CHECKING:
    from .attack import AttackState
    from .protocol_sim import MatchTranscript

QUANTILES = (50, 90, 99)
_BATCH_CELLS = 1 << 22  # trials * 2**l booleans per batch


def expected_drivers_closed_form(l: int) -> Fraction:
    """Exact ``2**l * (1 + 1/2 + ... + 1/2**l)``; ``float()`` it for the real value."""
    if not 1 <= l <= 16:
        raise LOutOfRange(f"l must be in [1, 16], got {l}")
    n = 1 << l
    return n * sum((Fraction(1, t) for t in range(1, n + 1)), Fraction(0))


@dataclass(frozen=True)
class CouponStats:
    l: int
    expected_closed_form: Fraction
    mc_mean: float
    mc_stddev: float
    mc_quantiles: Mapping[int, float]
    trials: int
    unfinished: int = 0
    counts: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def closed_form_ceil(self) -> int:
        return math.ceil(self.expected_closed_form)

    def csv_row(self) -> list[str]:
        return [
            str(self.l),
            str(self.trials),
            f"{float(self.expected_closed_form):.6f}",
            str(self.closed_form_ceil),
            f"{self.mc_mean:.6f}",
            f"{self.mc_stddev:.6f}",
            *(f"{self.mc_quantiles[q]:g}" for q in QUANTILES),
        ]


CSV_HEADER = ["l", "trials", "closed_form", "closed_form_ceil", "mc_mean", "mc_std", "p50", "p90", "p99"]


def draws_to_coverage(
    n_values: int,
    trials: int,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    rng: np.random.Generator,
    max_draws: int | None = None,
) -> np.ndarray:
    """Per trial, the number of draws until every value in ``[0, n_values)`` was seen.

    ``draw(rng, k)`` returns ``k`` values, one per still-running trial.
    Trials that hit ``max_draws`` report ``-1``.
    """
    out = np.empty(trials, dtype=np.int64)
    batch = max(1, _BATCH_CELLS // n_values)
    for b, brng in enumerate(rng.spawn((trials + batch - 1) // batch)):
        start = b * batch
        size = min(batch, trials - start)
        seen = np.zeros((size, n_values), dtype=bool)
        distinct = np.zeros(size, dtype=np.int64)
        active = np.arange(size)
        result = np.full(size, -1, dtype=np.int64)
        step = 0
        while active.size and (max_draws is None or step < max_draws):
            step += 1
            values = draw(brng, active.size)
            fresh = ~seen[active, values]
            seen[active, values] = True
            distinct[active] += fresh
            done = distinct[active] == n_values
            result[active[done]] = step
            active = active[~done]
        out[start : start + size] = result
    return out


def _stats(l: int, counts: np.ndarray) -> CouponStats:
    finished = counts[counts >= 0]
    if finished.size == 0:
        nan = float("nan")
        return CouponStats(l, expected_drivers_closed_form(l), nan, nan, {q: nan for q in QUANTILES},
                           int(counts.size), int(counts.size), counts)
    std = float(finished.std(ddof=1)) if finished.size > 1 else 0.0
    quantiles = {q: float(np.percentile(finished, q, method="inverted_cdf")) for q in QUANTILES}
    return CouponStats(
        l,
        expected_drivers_closed_form(l),
        float(finished.mean()),
        std,
        quantiles,
        int(counts.size),
        int(counts.size - finished.size),
        counts,
    )


def monte_carlo_drivers_needed(l: int, trials: int, rng: np.random.Generator) -> CouponStats:
    """Draw uniform l-bit blocks until all ``2**l`` values appear, ``trials`` times."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    expected_drivers_closed_form(l)  # range check
    n = 1 << l
    counts = draws_to_coverage(n, trials, lambda g, k: g.integers(0, n, size=k), rng)
    return _stats(l, counts)


def monte_carlo_graph_drivers(
    l: int,
    block_pool: Sequence[int],
    trials: int,
    rng: np.random.Generator,
    max_draws: int = 10_000,
) -> CouponStats:
    """Same experiment, but each driver's block is that of a uniformly chosen node.

    ``block_pool[u]`` is the block value at a fixed (coordinate, block) position
    for node ``u``. Values absent from the pool are never covered; such trials
    count as unfinished, which is how non-uniformity shows up.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    pool = np.asarray(block_pool, dtype=np.int64)
    n = 1 << l
    if pool.size == 0 or pool.min() < 0 or pool.max() >= n:
        raise ValueError(f"block pool must be non-empty with values in [0, {n})")
    counts = draws_to_coverage(n, trials, lambda g, k: pool[g.integers(0, pool.size, size=k)], rng, max_draws)
    return _stats(l, counts)


@dataclass(frozen=True)
class CoverageCount:
    coordinate: int
    block: int
    drivers_to_singleton: int
    drivers_to_full_coverage: int | None  # None if the drivers never covered every value


@dataclass(frozen=True)
class ExperimentRecord:
    """One attacked query: when each position became a singleton, and the drivers' true
    block values at that position in arrival order."""

    l: int
    singleton_at: Sequence[Sequence[int | None]]
    driver_blocks: Sequence[Sequence[Sequence[int]]] | None  # [coordinate][block][arrival]


def empirical_coverage_from_sim(records: Iterable[ExperimentRecord]) -> list[CoverageCount]:
    out = []
    for rec in records:
        if rec.driver_blocks is None:
            raise IncompleteExperiment("experiment ran without ground truth")
        n = 1 << rec.l
        for i, row in enumerate(rec.singleton_at):
            for j, at in enumerate(row):
                if at is None:
                    raise IncompleteExperiment(f"position ({i}, {j}) never became a singleton")
                seen: set[int] = set()
                full = None
                for k, b in enumerate(rec.driver_blocks[i][j], 1):
                    seen.add(b)
                    if len(seen) == n:
                        full = k
                        break
                out.append(CoverageCount(i, j, at, full))
    return out


def experiment_record(state: AttackState, transcript: MatchTranscript) -> ExperimentRecord:
    """Pair an attack state with the ground truth carried by its transcript."""
    truth = [d.vec_hidden for d in transcript.per_driver]
    if any(v is None for v in truth):
        return ExperimentRecord(state.l, state.singleton_at, None)
    mask = (1 << state.l) - 1
    blocks = [
        [[(v.coords[i] >> (j * state.l)) & mask for v in truth] for j in range(state.m)]  # type: ignore[union-attr]
        for i in range(state.eta)
    ]
    return ExperimentRecord(state.l, state.singleton_at, blocks)
