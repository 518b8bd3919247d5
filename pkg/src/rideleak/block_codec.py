"""Little-endian l-bit block decomposition of RNE coordinates.

Block ``j`` carries weight ``2**(j*l)``. Differences are kept as true signed
integers; nothing here wraps modulo anything.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import BlockOutOfRange, DuplicateBlock, MissingBlock, ValueOutOfRange
from .road_network import MAX_BLOCK_BITS


def _check_l(l: int) -> None:
    if not 1 <= l <= MAX_BLOCK_BITS:
        raise ValueError(f"l must be in [1, {MAX_BLOCK_BITS}], got {l}")


@dataclass(frozen=True)
class BlockVector:
    l: int
    blocks: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_l(self.l)
        for j, b in enumerate(self.blocks):
            if not 0 <= b < (1 << self.l):
                raise BlockOutOfRange(f"block {j} = {b} outside [0, {1 << self.l})")

    @property
    def m(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ScaledDiff:
    """``(driver_block - rider_block) * 2**(j*l)`` for one block position."""

    j: int
    l: int
    value: int

    def __post_init__(self) -> None:
        scale = 1 << (self.j * self.l)
        if self.j < 0:
            raise ValueError(f"block index must be non-negative, got {self.j}")
        if self.value % scale:
            raise ValueError(f"{self.value} is not a multiple of 2^{self.j * self.l}")
        if abs(self.value // scale) > (1 << self.l) - 1:
            raise ValueError(f"|{self.value}| exceeds (2^l - 1) * 2^(j*l)")

    @property
    def unscaled(self) -> int:
        return self.value >> (self.j * self.l)


def decompose(x: int, l: int, m: int) -> BlockVector:
    _check_l(l)
    if not 0 <= x < (1 << (m * l)):
        raise ValueOutOfRange(f"{x} does not fit in {m} blocks of {l} bits")
    mask = (1 << l) - 1
    return BlockVector(l, tuple((x >> (j * l)) & mask for j in range(m)))


def recompose(b: BlockVector) -> int:
    return sum(v << (j * b.l) for j, v in enumerate(b.blocks))


def signed_scaled_diff(driver_block: int, rider_block: int, j: int, l: int) -> ScaledDiff:
    _check_l(l)
    for name, b in (("driver", driver_block), ("rider", rider_block)):
        if not 0 <= b < (1 << l):
            raise BlockOutOfRange(f"{name} block {b} outside [0, {1 << l})")
    return ScaledDiff(j, l, (driver_block - rider_block) * (1 << (j * l)))


def sum_partial_diffs(diffs: Iterable[ScaledDiff], m: int | None = None) -> int:
    """Sum one scaled difference per block index ``0..m-1``.

    ``m`` defaults to ``max(j) + 1``; every index below it must be present.
    """
    seen: dict[int, int] = {}
    for d in diffs:
        if d.j in seen:
            raise DuplicateBlock(f"block {d.j} supplied twice")
        seen[d.j] = d.value
    if m is None:
        m = max(seen, default=-1) + 1
    missing = [j for j in range(m) if j not in seen]
    if missing:
        raise MissingBlock(f"missing block(s) {missing}")
    extra = [j for j in seen if j >= m]
    if extra:
        raise ValueError(f"block(s) {extra} beyond m={m}")
    return sum(seen.values())
