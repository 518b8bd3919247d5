"""Passive SP attack on the block-difference leakage.

For each coordinate i and block j the SP sees, from every responding driver
k, the signed difference ``d = v*_{k,j} - v_j``. Since both block values lie
in ``[0, 2**l)``, the rider block ``x`` must satisfy ``0 <= x + d < 2**l`` for
every observed ``d``. The feasible set is the interval

    [max(0, -min d), (2**l - 1) - max(0, max d)]

which collapses to a single value once the drivers' blocks reach both ends of
the range, in particular once all ``2**l`` values have been seen. Knowing the
rider block then gives every driver block as ``x + d``.
"""
from __future__ import annotations

from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .block_codec import BlockVector, recompose
from .errors import ConfigMismatch, DimensionMismatch, InconsistentObservation, MalformedDifferenceSet
from .protocol_sim import MatchTranscript
from .road_network import ReferenceSets, RneVector, RoadGraph, embed_all


def lemma1_recover(diffs: Collection[int], l: int) -> int:
    """Recover ``x`` from the full multiset ``{z - x : 0 <= z < 2**l}``."""
    n = 1 << l
    values = sorted(diffs)
    if len(values) != n:
        raise MalformedDifferenceSet(f"expected {n} differences, got {len(values)}")
    lo = values[0]
    if values != list(range(lo, lo + n)):
        raise MalformedDifferenceSet(f"differences are not a contiguous run: {values}")
    x = -lo
    if not 0 <= x < n:
        raise MalformedDifferenceSet(f"run {lo}..{values[-1]} does not contain 0")
    assert x == (n - 1) - values[-1]
    return x


@dataclass
class BlockCandidateSet:
    """Rider-block values consistent with every difference seen at one position."""

    l: int
    lo: int = 0
    hi: int = -1
    observed_diffs: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.hi < 0:
            self.hi = (1 << self.l) - 1

    @property
    def candidates(self) -> range:
        return range(self.lo, self.hi + 1)

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def narrowed(self, d: int) -> tuple[int, int]:
        return max(self.lo, -d), min(self.hi, (1 << self.l) - 1 - d)


@dataclass
class AttackState:
    eta: int
    l: int
    m: int
    blocks: list[list[BlockCandidateSet]] = field(init=False)
    drivers: dict[int, tuple[tuple[int, ...], ...]] = field(default_factory=dict)
    drivers_consumed: int = 0
    # drivers consumed when (i, j) first became a singleton through leakage alone
    singleton_at: list[list[int | None]] = field(init=False)
    query_ids: set[int] = field(default_factory=set)
    map_refined: bool = False

    def __post_init__(self) -> None:
        self.blocks = [[BlockCandidateSet(self.l) for _ in range(self.m)] for _ in range(self.eta)]
        self.singleton_at = [[None] * self.m for _ in range(self.eta)]

    @classmethod
    def for_transcript(cls, t: MatchTranscript) -> AttackState:
        return cls(t.eta, t.l, t.m)

    @property
    def complete(self) -> bool:
        return all(b.is_singleton for row in self.blocks for b in row)

    def intervals(self) -> list[list[tuple[int, int]]]:
        return [[(b.lo, b.hi) for b in row] for row in self.blocks]

    def observe_driver(self, driver_id: int, diffs: Sequence[Sequence[int]]) -> None:
        """Fold in one driver's unscaled differences, indexed ``[coordinate][block]``.

        All-or-nothing: on InconsistentObservation the state is unchanged.
        """
        if len(diffs) != self.eta or any(len(row) != self.m for row in diffs):
            raise InconsistentObservation(f"driver {driver_id}: expected {self.eta}x{self.m} differences")
        if driver_id in self.drivers:
            raise InconsistentObservation(f"driver {driver_id} observed twice")
        updates = []
        for i, row in enumerate(diffs):
            for j, d in enumerate(row):
                lo, hi = self.blocks[i][j].narrowed(d)
                if lo > hi:
                    raise InconsistentObservation(
                        f"driver {driver_id}: difference {d} at ({i}, {j}) leaves no feasible rider block"
                    )
                updates.append((i, j, d, lo, hi))
        self.drivers_consumed += 1
        for i, j, d, lo, hi in updates:
            b = self.blocks[i][j]
            b.lo, b.hi = lo, hi
            b.observed_diffs.add(d)
            if lo == hi and self.singleton_at[i][j] is None:
                self.singleton_at[i][j] = self.drivers_consumed
        self.drivers[driver_id] = tuple(tuple(r) for r in diffs)


def unscale_transcript(t: MatchTranscript) -> dict[int, list[list[int]]]:
    """Validate a transcript and return unscaled differences per driver.

    Raises InconsistentObservation for anything the real protocol could not
    have produced: missing or repeated blocks, values off the block scale,
    distances or winner that disagree with the diffs.
    """
    out: dict[int, list[list[int]]] = {}
    span = (1 << t.l) - 1
    for leak in t.per_driver:
        if leak.driver_id in out:
            raise InconsistentObservation(f"driver {leak.driver_id} appears twice")
        grid: list[list[int | None]] = [[None] * t.m for _ in range(t.eta)]
        for i, j, v in leak.diffs:
            if not (0 <= i < t.eta and 0 <= j < t.m):
                raise InconsistentObservation(f"driver {leak.driver_id}: position ({i}, {j}) out of range")
            if grid[i][j] is not None:
                raise InconsistentObservation(f"driver {leak.driver_id}: duplicate block ({i}, {j})")
            scale = 1 << (j * t.l)
            if v % scale or abs(v // scale) > span:
                raise InconsistentObservation(
                    f"driver {leak.driver_id}: {v} is not a valid scaled difference for block {j}"
                )
            grid[i][j] = v // scale
        if any(d is None for row in grid for d in row):
            raise InconsistentObservation(f"driver {leak.driver_id}: missing blocks")
        sums = [sum(d << (j * t.l) for j, d in enumerate(row)) for row in grid]  # type: ignore[operator]
        if max(abs(s) for s in sums) != leak.distance:
            raise InconsistentObservation(f"driver {leak.driver_id}: stated distance disagrees with diffs")
        out[leak.driver_id] = grid  # type: ignore[assignment]
    if t.per_driver:
        dist = {d.driver_id: d.distance for d in t.per_driver}
        if t.winner != min(dist, key=lambda k: (dist[k], k)):
            raise InconsistentObservation(f"winner {t.winner} is not the nearest driver")
    return out


def observe(state: AttackState, transcript: MatchTranscript, same_rider: bool = False) -> AttackState:
    """Narrow ``state`` with every driver in ``transcript``.

    Transcripts from a different query are refused unless the caller vouches
    that the same rider (at the same location) issued them.
    """
    t = transcript
    if (t.eta, t.l, t.m) != (state.eta, state.l, state.m):
        raise ConfigMismatch(f"transcript (eta, l, m) = {(t.eta, t.l, t.m)} vs state {(state.eta, state.l, state.m)}")
    if state.query_ids and t.query_id not in state.query_ids and not same_rider:
        raise ConfigMismatch(
            f"transcript belongs to query {t.query_id}; pass same_rider=True to accumulate across queries"
        )
    per_driver = unscale_transcript(t)
    snapshot = (
        [[(b.lo, b.hi, set(b.observed_diffs)) for b in row] for row in state.blocks],
        dict(state.drivers),
        state.drivers_consumed,
        [list(r) for r in state.singleton_at],
    )
    try:
        for driver_id, diffs in per_driver.items():
            state.observe_driver(driver_id, diffs)
    except InconsistentObservation:
        blocks, state.drivers, state.drivers_consumed, state.singleton_at = snapshot
        for row, saved in zip(state.blocks, blocks):
            for b, (lo, hi, seen) in zip(row, saved):
                b.lo, b.hi, b.observed_diffs = lo, hi, seen
        raise
    state.query_ids.add(t.query_id)
    return state


def refine_with_map(state: AttackState, table: Sequence[RneVector]) -> list[int]:
    """Narrow the state with the public map.

    ``table[u]`` is the embedding of node ``u``. A node is a rider candidate if
    its embedding fits every block interval and, for every observed driver,
    shifting it by that driver's per-coordinate difference lands on the
    embedding of some node. Block intervals shrink to the hull of the
    candidates. Returns the candidate node ids.
    """
    if table and len(table[0]) != state.eta:
        raise DimensionMismatch(f"map embeds into {len(table[0])} dims, state has {state.eta}")
    l, m = state.l, state.m
    known = {v.coords for v in table}
    shifts = [
        tuple(sum(d << (j * l) for j, d in enumerate(row)) for row in diffs)
        for diffs in state.drivers.values()
    ]
    mask = (1 << l) - 1
    candidates = []
    for u, v in enumerate(table):
        ok = True
        for i, c in enumerate(v.coords):
            for j in range(m):
                b = state.blocks[i][j]
                if not b.lo <= (c >> (j * l)) & mask <= b.hi or c >> (m * l):
                    ok = False
                    break
            if not ok:
                break
        if ok and all(tuple(c + s for c, s in zip(v.coords, sh)) in known for sh in shifts):
            candidates.append(u)
    if not candidates:
        raise InconsistentObservation("no node of the map is consistent with the observations")
    for i in range(state.eta):
        for j in range(m):
            blocks = [(table[u].coords[i] >> (j * l)) & mask for u in candidates]
            b = state.blocks[i][j]
            b.lo, b.hi = max(b.lo, min(blocks)), min(b.hi, max(blocks))
    state.map_refined = True
    return candidates


@dataclass(frozen=True)
class RecoveredLocations:
    rider: RneVector | None
    intervals: list[list[tuple[int, int]]]
    drivers: dict[int, RneVector]
    driver_blocks: dict[int, list[list[int | None]]]
    complete: bool
    drivers_consumed: int


def recover(state: AttackState) -> RecoveredLocations:
    """Read out whatever the state pins down; partial recovery is fine."""
    intervals = state.intervals()
    rider_blocks = [[lo if lo == hi else None for lo, hi in row] for row in intervals]
    driver_blocks = {
        k: [[None if x is None else x + d for x, d in zip(xs, ds)] for xs, ds in zip(rider_blocks, diffs)]
        for k, diffs in state.drivers.items()
    }

    def assemble(grid: list[list[int | None]]) -> RneVector | None:
        if any(b is None for row in grid for b in row):
            return None
        return RneVector(tuple(recompose(BlockVector(state.l, tuple(row))) for row in grid))  # type: ignore[arg-type]

    rider = assemble(rider_blocks)
    drivers = {}
    for k, grid in driver_blocks.items():
        v = assemble(grid)
        if v is not None:
            drivers[k] = v
    return RecoveredLocations(
        rider=rider,
        intervals=intervals,
        drivers=drivers,
        driver_blocks=driver_blocks,
        complete=rider is not None,
        drivers_consumed=state.drivers_consumed,
    )


def invert_to_nodes(g: RoadGraph, refs: ReferenceSets, vec: RneVector | Sequence[int]) -> list[int]:
    """Every node whose embedding equals ``vec``."""
    if len(vec) != refs.eta:
        raise DimensionMismatch(f"vector has {len(vec)} coordinates, embedding has {refs.eta}")
    target = tuple(vec)
    return [u for u, e in enumerate(embed_all(g, refs)) if e.coords == target]


def attack_transcript(
    transcript: MatchTranscript, table: Sequence[RneVector] | None = None
) -> tuple[AttackState, RecoveredLocations]:
    """Per-query attack: leakage narrowing, then map refinement when a map is given."""
    state = observe(AttackState.for_transcript(transcript), transcript)
    if table is not None and not state.complete:
        refine_with_map(state, table)
    return state, recover(state)


def exact_match(rec: RecoveredLocations, transcript: MatchTranscript) -> dict[str, Any] | None:
    """Compare a recovery against the transcript's ground truth, if it has any."""
    if transcript.rider_hidden is None:
        return None
    drivers = {
        str(d.driver_id): rec.drivers.get(d.driver_id) == d.vec_hidden
        for d in transcript.per_driver
        if d.vec_hidden is not None
    }
    return {"rider": rec.rider == transcript.rider_hidden, "drivers": drivers}


def report_dict(rec: RecoveredLocations, truth: Mapping[str, Any] | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "per_block": [
            {"coordinate": i, "block": j, "candidates_lo": lo, "candidates_hi": hi}
            for i, row in enumerate(rec.intervals)
            for j, (lo, hi) in enumerate(row)
        ],
    }
    if rec.rider is not None:
        doc["rider_vec"] = list(rec.rider.coords)
    doc["drivers"] = {str(k): list(v.coords) for k, v in sorted(rec.drivers.items())}
    doc["complete"] = rec.complete
    doc["drivers_consumed"] = rec.drivers_consumed
    if truth is not None:
        doc["exact_match"] = truth
    return doc
