"""Leakage-level simulation of one ride-matching round.

The pairing-based encryption of the real protocol is not implemented. Guess
tokens and driver commitments are opaque records keyed under a secret shared
by rider and drivers; the SP can only test them for equality, and a matching
pair discloses the signed scaled block difference. That disclosure is exactly
what the SP sees in the real protocol, and is all the attack needs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .block_codec import ScaledDiff, decompose
from .errors import ConfigMismatch, EmptyResponseSet, NoMatch
from .road_network import EmbeddingConfig, RneVector, rne_distance

_MASK_BITS = 128
_MASK_MOD = 1 << _MASK_BITS


@dataclass(frozen=True)
class Session:
    """Secret shared by the rider and the responding drivers, plus the public request nonce."""

    key: bytes
    nonce: bytes
    _memo: dict[tuple[int, int, int], tuple[bytes, int]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    @classmethod
    def generate(cls, rng: np.random.Generator) -> Session:
        return cls(key=rng.bytes(32), nonce=rng.bytes(16))

    def tag(self, i: int, j: int, z: int) -> bytes:
        msg = self.nonce + i.to_bytes(4, "big") + j.to_bytes(4, "big") + z.to_bytes(4, "big")
        return hashlib.blake2b(msg, key=self.key, digest_size=16, person=b"rideleak-tag").digest()

    def pad(self, tag: bytes) -> int:
        h = hashlib.blake2b(tag, key=self.key, digest_size=16, person=b"rideleak-pad").digest()
        return int.from_bytes(h, "big")

    def keyed(self, i: int, j: int, z: int) -> tuple[bytes, int]:
        """``(tag, pad)`` for guess ``z`` at block (i, j); memoised per session."""
        hit = self._memo.get((i, j, z))
        if hit is None:
            tag = self.tag(i, j, z)
            hit = self._memo[(i, j, z)] = (tag, self.pad(tag))
        return hit

    def unmask(self, token: Token) -> int:
        """Rider-side opening of a guess token."""
        return _unmask(token.sealed, self.pad(token.tag))


def _unmask(sealed: int, pad: int) -> int:
    v = (sealed - pad) % _MASK_MOD
    return v - _MASK_MOD if v >= _MASK_MOD // 2 else v


@dataclass(frozen=True)
class Token:
    tag: bytes
    sealed: int


@dataclass(frozen=True)
class Commitment:
    tag: bytes
    opening: int


@dataclass(frozen=True)
class RideRequest:
    """What the SP receives from the rider: ``2**l`` permuted tokens per block."""

    query_id: int
    eta: int
    l: int
    m: int
    nonce: bytes
    tokens: tuple[tuple[tuple[Token, ...], ...], ...]  # [coordinate][block][slot]

    @cached_property
    def _by_tag(self) -> dict[tuple[int, int, bytes], Token]:
        return {
            (i, j, t.tag): t
            for i, row in enumerate(self.tokens)
            for j, slots in enumerate(row)
            for t in slots
        }


@dataclass(frozen=True)
class DriverResponse:
    driver_id: int
    eta: int
    l: int
    m: int
    nonce: bytes
    commitments: tuple[tuple[Commitment, ...], ...]  # [coordinate][block]


@dataclass(frozen=True)
class DriverLeak:
    """Everything the SP learns about one responding driver."""

    driver_id: int
    diffs: tuple[tuple[int, int, int], ...]  # (coordinate, block, scaled value)
    coord_diffs: tuple[int, ...]
    distance: int
    vec_hidden: RneVector | None = field(default=None, compare=False)


@dataclass(frozen=True)
class MatchResult:
    winner: int
    distances: Mapping[int, int]


@dataclass(frozen=True)
class MatchTranscript:
    eta: int
    l: int
    m: int
    query_id: int
    per_driver: tuple[DriverLeak, ...]
    winner: int
    rider_hidden: RneVector | None = field(default=None, compare=False)
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def config(self) -> dict[str, Any]:
        return {"eta": self.eta, "l": self.l, "m": self.m, "query_id": self.query_id, **self.meta}

    def with_truth(self, rider: RneVector, drivers: Mapping[int, RneVector]) -> MatchTranscript:
        leaks = tuple(
            DriverLeak(d.driver_id, d.diffs, d.coord_diffs, d.distance, drivers[d.driver_id])
            for d in self.per_driver
        )
        return MatchTranscript(self.eta, self.l, self.m, self.query_id, leaks, self.winner, rider, self.meta)

    def to_dict(self, reveal_truth: bool = False) -> dict[str, Any]:
        doc: dict[str, Any] = {"config": self.config}
        if reveal_truth and self.rider_hidden is not None:
            doc["rider_hidden"] = list(self.rider_hidden.coords)
        entries = []
        for d in self.per_driver:
            e: dict[str, Any] = {
                "driver_id": d.driver_id,
                "diffs": [list(t) for t in d.diffs],
                "distance": d.distance,
            }
            if reveal_truth and d.vec_hidden is not None:
                e["vec_hidden"] = list(d.vec_hidden.coords)
            entries.append(e)
        doc["per_driver"] = entries
        doc["winner"] = self.winner
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> MatchTranscript:
        """Rebuild from JSON. Per-coordinate sums are recomputed from the diffs;
        the stated distances are kept verbatim so forged documents stay detectable."""
        cfg = dict(doc["config"])
        eta, l, m = int(cfg.pop("eta")), int(cfg.pop("l")), int(cfg.pop("m"))
        query_id = int(cfg.pop("query_id", 0))
        leaks = []
        for e in doc["per_driver"]:
            diffs = tuple((int(i), int(j), int(v)) for i, j, v in e["diffs"])
            sums = [0] * eta
            for i, _, v in diffs:
                if 0 <= i < eta:
                    sums[i] += v
            hidden = RneVector(tuple(e["vec_hidden"])) if "vec_hidden" in e else None
            leaks.append(DriverLeak(int(e["driver_id"]), diffs, tuple(sums), int(e["distance"]), hidden))
        rider = RneVector(tuple(doc["rider_hidden"])) if "rider_hidden" in doc else None
        return cls(eta, l, m, query_id, tuple(leaks), int(doc["winner"]), rider, cfg)


def _check_vec(vec: RneVector, cfg: EmbeddingConfig) -> None:
    if cfg.coord_bits > _MASK_BITS - 8:
        raise ConfigMismatch(f"m*l = {cfg.coord_bits} bits is too wide for the simulated masking")
    if len(vec) != cfg.eta:
        raise ConfigMismatch(f"vector has {len(vec)} coordinates, config expects eta={cfg.eta}")
    for i, c in enumerate(vec):
        if not 0 <= c < cfg.coord_limit:
            raise ConfigMismatch(f"coordinate {i} = {c} does not fit m*l = {cfg.coord_bits} bits")


def rider_make_request(
    rider_vec: RneVector,
    cfg: EmbeddingConfig,
    rng: np.random.Generator,
    session: Session,
    query_id: int = 0,
) -> RideRequest:
    """Build the rider's guess tokens.

    For coordinate i and block j the rider seals ``(z - v_j) * 2**(j*l)`` for
    every guess ``z`` in ``[0, 2**l)`` and shuffles the ``2**l`` tokens.
    """
    _check_vec(rider_vec, cfg)
    n = 1 << cfg.l
    rows = []
    for i, coord in enumerate(rider_vec):
        blocks = decompose(coord, cfg.l, cfg.m).blocks
        row = []
        for j, v in enumerate(blocks):
            scale = 1 << (j * cfg.l)
            slots = []
            for z in rng.permutation(n):
                z = int(z)
                tag, pad = session.keyed(i, j, z)
                slots.append(Token(tag, ((z - v) * scale + pad) % _MASK_MOD))
            row.append(tuple(slots))
        rows.append(tuple(row))
    return RideRequest(query_id, cfg.eta, cfg.l, cfg.m, session.nonce, tuple(rows))


def driver_make_response(
    driver_vec: RneVector, cfg: EmbeddingConfig, session: Session, driver_id: int
) -> DriverResponse:
    _check_vec(driver_vec, cfg)
    rows = []
    for i, coord in enumerate(driver_vec):
        row = []
        for j, v in enumerate(decompose(coord, cfg.l, cfg.m).blocks):
            row.append(Commitment(*session.keyed(i, j, v)))
        rows.append(tuple(row))
    return DriverResponse(driver_id, cfg.eta, cfg.l, cfg.m, session.nonce, tuple(rows))


def _check_compatible(request: RideRequest, response: DriverResponse) -> None:
    if (request.eta, request.l, request.m) != (response.eta, response.l, response.m):
        raise ConfigMismatch(
            f"request (eta, l, m) = {(request.eta, request.l, request.m)} but driver "
            f"{response.driver_id} answered with {(response.eta, response.l, response.m)}"
        )
    if request.nonce != response.nonce:
        raise ConfigMismatch(f"driver {response.driver_id} answered a different request")


def sp_resolve_block_diff(request: RideRequest, response: DriverResponse, i: int, j: int) -> ScaledDiff:
    """Equality-match the driver's commitment against the rider's tokens for block (i, j)."""
    _check_compatible(request, response)
    return ScaledDiff(j, request.l, _resolve(request, response, i, j))


def _resolve(request: RideRequest, response: DriverResponse, i: int, j: int) -> int:
    c = response.commitments[i][j]
    token = request._by_tag.get((i, j, c.tag))
    if token is None:
        raise NoMatch(f"no guess token matches driver {response.driver_id} at ({i}, {j})")
    return _unmask(token.sealed, c.opening)


def sp_match(
    request: RideRequest, responses: Sequence[DriverResponse]
) -> tuple[MatchResult, MatchTranscript]:
    """Run the SP side: resolve every block, assemble distances, pick the nearest driver.

    Ties go to the smallest driver id.
    """
    if not responses:
        raise EmptyResponseSet("no driver responded")
    ids = [r.driver_id for r in responses]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate driver ids in response set")
    leaks = []
    for resp in responses:
        _check_compatible(request, resp)
        diffs = []
        sums = []
        for i in range(request.eta):
            total = 0
            for j in range(request.m):
                value = _resolve(request, resp, i, j)
                diffs.append((i, j, value))
                total += value
            sums.append(total)
        dist = max(abs(s) for s in sums)
        leaks.append(DriverLeak(resp.driver_id, tuple(diffs), tuple(sums), dist))
    distances = {d.driver_id: d.distance for d in leaks}
    winner = min(distances, key=lambda k: (distances[k], k))
    transcript = MatchTranscript(request.eta, request.l, request.m, request.query_id, tuple(leaks), winner)
    return MatchResult(winner, distances), transcript


def simulate_query(
    rider_vec: RneVector,
    driver_vecs: Mapping[int, RneVector] | Sequence[RneVector],
    cfg: EmbeddingConfig,
    rng: np.random.Generator,
    query_id: int = 0,
) -> tuple[MatchResult, MatchTranscript]:
    """One full round with fresh session secrets. The transcript carries ground truth
    (exported only on request)."""
    if not isinstance(driver_vecs, Mapping):
        driver_vecs = dict(enumerate(driver_vecs))
    session = Session.generate(rng)
    request = rider_make_request(rider_vec, cfg, rng, session, query_id)
    responses = [driver_make_response(v, cfg, session, k) for k, v in driver_vecs.items()]
    result, transcript = sp_match(request, responses)
    return result, transcript.with_truth(rider_vec, driver_vecs)


def direct_distances(rider_vec: RneVector, driver_vecs: Mapping[int, RneVector]) -> dict[int, int]:
    return {k: rne_distance(rider_vec, v) for k, v in driver_vecs.items()}


def random_vector(cfg: EmbeddingConfig, rng: np.random.Generator) -> RneVector:
    """Synthetic encoding whose blocks are i.i.d. uniform over ``[0, 2**l)``."""
    blocks = rng.integers(0, 1 << cfg.l, size=(cfg.eta, cfg.m))
    return RneVector(tuple(sum(int(b) << (j * cfg.l) for j, b in enumerate(row)) for row in blocks))
