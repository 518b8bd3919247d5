import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rideleak.attack import (
    AttackState,
    attack_transcript,
    exact_match,
    invert_to_nodes,
    lemma1_recover,
    observe,
    recover,
    refine_with_map,
    report_dict,
)
from rideleak.errors import ConfigMismatch, InconsistentObservation, MalformedDifferenceSet
from rideleak.protocol_sim import DriverLeak, MatchTranscript, random_vector, simulate_query
from rideleak.road_network import EmbeddingConfig, RneVector, embed, vec


def transcript_from_unscaled(l, per_driver, query_id=0):
    """per_driver: list of [coordinate][block] unscaled diffs."""
    eta, m = len(per_driver[0]), len(per_driver[0][0])
    leaks = []
    for k, grid in enumerate(per_driver):
        diffs = tuple((i, j, d << (j * l)) for i, row in enumerate(grid) for j, d in enumerate(row))
        sums = tuple(sum(d << (j * l) for j, d in enumerate(row)) for row in grid)
        leaks.append(DriverLeak(k, diffs, sums, max(abs(s) for s in sums)))
    dist = {d.driver_id: d.distance for d in leaks}
    winner = min(dist, key=lambda k: (dist[k], k))
    return MatchTranscript(eta, l, m, query_id, tuple(leaks), winner)


class TestSingleBlockRecovery:
    def test_l1_minus_one(self):
        assert lemma1_recover([-1, 0], 1) == 1

    def test_l1_plus_one(self):
        assert lemma1_recover([0, 1], 1) == 0

    @pytest.mark.parametrize("l", range(1, 9))
    def test_exhaustive(self, l):
        rng = np.random.default_rng(l)
        n = 1 << l
        for x in range(n):
            diffs = [int(z) - x for z in rng.permutation(n)]
            assert lemma1_recover(diffs, l) == x
            assert -min(diffs) == (n - 1) - max(diffs)

    @pytest.mark.parametrize("diffs,l", [([0], 1), ([0, 2], 1), ([-1, 0, 1, 1], 2), ([1, 2], 1), ([-2, -1], 1)])
    def test_malformed(self, diffs, l):
        with pytest.raises(MalformedDifferenceSet):
            lemma1_recover(diffs, l)


class TestObserve:
    def test_l1_zero_is_ambiguous(self):
        s = observe(AttackState(1, 1, 1), transcript_from_unscaled(1, [[[0]]]))
        assert list(s.blocks[0][0].candidates) == [0, 1]

    def test_l1_second_driver_resolves(self):
        s = observe(AttackState(1, 1, 1), transcript_from_unscaled(1, [[[0]], [[-1]]]))
        assert list(s.blocks[0][0].candidates) == [1]
        assert s.singleton_at[0][0] == 2

    def test_boundary_diff_forces_extreme(self):
        s = observe(AttackState(1, 2, 1), transcript_from_unscaled(2, [[[3]]]))
        assert list(s.blocks[0][0].candidates) == [0]

    def test_contradiction_rejected_atomically(self):
        s = observe(AttackState(1, 2, 2), transcript_from_unscaled(2, [[[1, 0]]]))
        before = s.intervals()
        forged = transcript_from_unscaled(2, [[[0, 2]], [[0, -3]]])
        with pytest.raises(InconsistentObservation):
            observe(s, forged, same_rider=True)
        assert s.intervals() == before
        assert s.drivers_consumed == 1

    def test_other_query_needs_same_rider(self):
        s = observe(AttackState(1, 1, 1), transcript_from_unscaled(1, [[[0]]], query_id=0))
        with pytest.raises(ConfigMismatch):
            observe(s, transcript_from_unscaled(1, [[[1]]], query_id=1))

    def test_config_mismatch(self):
        with pytest.raises(ConfigMismatch):
            observe(AttackState(2, 1, 1), transcript_from_unscaled(1, [[[0]]]))

    @pytest.mark.parametrize("mutate", ["off_scale", "too_big", "distance", "winner", "missing"])
    def test_forged_transcripts(self, mutate):
        t = transcript_from_unscaled(2, [[[1, 2], [0, -1]], [[3, 0], [2, 1]]])
        d0 = t.per_driver[0]
        if mutate == "off_scale":
            d0 = DriverLeak(0, ((0, 0, 1), (0, 1, 5), (1, 0, 0), (1, 1, -4)), d0.coord_diffs, d0.distance)
        elif mutate == "too_big":
            d0 = DriverLeak(0, ((0, 0, 4), (0, 1, 8), (1, 0, 0), (1, 1, -4)), d0.coord_diffs, d0.distance)
        elif mutate == "distance":
            d0 = DriverLeak(0, d0.diffs, d0.coord_diffs, d0.distance + 1)
        elif mutate == "missing":
            d0 = DriverLeak(0, d0.diffs[:-1], d0.coord_diffs, d0.distance)
        winner = 1 - t.winner if mutate == "winner" else t.winner
        forged = MatchTranscript(t.eta, t.l, t.m, 0, (d0, t.per_driver[1]), winner)
        with pytest.raises(InconsistentObservation):
            observe(AttackState(2, 2, 2), forged)


class TestRecover:
    def test_empty_state(self):
        rec = recover(AttackState(2, 3, 2))
        assert not rec.complete and rec.rider is None
        assert rec.intervals == [[(0, 7), (0, 7)], [(0, 7), (0, 7)]]

    def test_one_coordinate_ambiguous(self):
        # coordinate 0 pinned by a boundary diff, coordinate 1 only ever differs by 0
        t = transcript_from_unscaled(2, [[[3], [0]]])
        rec = recover(observe(AttackState(2, 2, 1), t))
        assert not rec.complete and rec.rider is None
        assert rec.intervals == [[(0, 0)], [(0, 3)]]
        assert rec.driver_blocks[0] == [[3], [None]]
        assert rec.drivers == {}

    def test_end_to_end_exact(self, rng):
        cfg = EmbeddingConfig(eta=4, l=2, m=4)
        rider = random_vector(cfg, rng)
        drivers = [random_vector(cfg, rng) for _ in range(80)]
        _, t = simulate_query(rider, drivers, cfg, rng)
        state, rec = attack_transcript(t)
        assert rec.complete and state.complete
        assert rec.rider == rider
        assert rec.drivers == dict(enumerate(drivers))
        assert exact_match(rec, t) == {"rider": True, "drivers": {str(k): True for k in range(80)}}

    def test_report_shape(self, rng):
        cfg = EmbeddingConfig(eta=2, l=4, m=2)
        _, t = simulate_query(random_vector(cfg, rng), [random_vector(cfg, rng)], cfg, rng)
        _, rec = attack_transcript(t)
        doc = report_dict(rec)
        assert not doc["complete"] and "rider_vec" not in doc
        assert doc["drivers_consumed"] == 1
        assert len(doc["per_block"]) == 4
        assert set(doc["per_block"][0]) == {"coordinate", "block", "candidates_lo", "candidates_hi"}


@st.composite
def scenario(draw):
    l = draw(st.integers(1, 4))
    m = draw(st.integers(1, 3))
    eta = draw(st.integers(1, 3))
    top = (1 << (l * m)) - 1
    coords = st.lists(st.integers(0, top), min_size=eta, max_size=eta)
    rider = draw(coords)
    drivers = draw(st.lists(coords, min_size=1, max_size=12))
    return l, m, rider, drivers


def unscaled(rider, driver, l, m):
    mask = (1 << l) - 1
    return [[((b >> (j * l)) & mask) - ((a >> (j * l)) & mask) for j in range(m)] for a, b in zip(rider, driver)]


@settings(max_examples=300, deadline=None)
@given(scenario())
def test_soundness_monotonicity_interval(sc):
    l, m, rider, drivers = sc
    state = AttackState(len(rider), l, m)
    mask = (1 << l) - 1
    prev = state.intervals()
    for k, d in enumerate(drivers):
        diffs = unscaled(rider, d, l, m)
        state.observe_driver(k, diffs)
        for i, row in enumerate(state.blocks):
            for j, b in enumerate(row):
                truth = (rider[i] >> (j * l)) & mask
                assert b.lo <= truth <= b.hi
                plo, phi = prev[i][j]
                assert plo <= b.lo and b.hi <= phi
                # interval form: exactly the values consistent with every diff
                assert list(b.candidates) == [x for x in range(mask + 1)
                                              if all(0 <= x + dd <= mask for dd in b.observed_diffs)]
        prev = state.intervals()


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.data())
def test_completeness_at_full_coverage(l, data):
    n = 1 << l
    x = data.draw(st.integers(0, n - 1))
    extra = data.draw(st.lists(st.integers(0, n - 1), max_size=10))
    values = data.draw(st.permutations(list(range(n)) + extra))
    state = AttackState(1, l, 1)
    for k, v in enumerate(values):
        state.observe_driver(k, [[v - x]])
    assert list(state.blocks[0][0].candidates) == [x]
    assert lemma1_recover(list(range(-x, n - x)), l) == x


class TestMap:
    def test_invert_contains_node(self, grid10, grid10_embedding):
        _, refs, _ = grid10_embedding
        for u in (0, 45, 99):
            assert u in invert_to_nodes(grid10, refs, embed(grid10, refs, u))

    def test_invert_beyond_diameter(self, grid10, grid10_embedding):
        _, refs, _ = grid10_embedding
        assert invert_to_nodes(grid10, refs, RneVector((19,) * 8)) == []

    def test_preimage_sizes(self, grid10, grid10_embedding):
        _, refs, table = grid10_embedding
        sizes = [len(invert_to_nodes(grid10, refs, table[u])) for u in range(100)]
        assert min(sizes) >= 1
        mean = sum(sizes) / len(sizes)
        print(f"10x10 grid, eta=8: mean preimage size {mean:.3f}, max {max(sizes)}")
        assert mean < 2

    def test_refinement_sound_and_complete(self, grid10_embedding, rng):
        cfg, _, table = grid10_embedding
        u = int(rng.integers(100))
        drivers = {k: table[int(w)] for k, w in enumerate(rng.integers(100, size=200))}
        _, t = simulate_query(table[u], drivers, cfg, rng)
        state = observe(AttackState.for_transcript(t), t)
        assert not state.complete  # high blocks are 0 for everyone
        nodes = refine_with_map(state, table)
        assert u in nodes
        rec = recover(state)
        assert rec.complete and rec.rider == table[u]
        assert rec.drivers == drivers

    def test_refinement_rejects_foreign_map(self, grid10_embedding, rng):
        cfg, _, table = grid10_embedding
        _, t = simulate_query(RneVector((200,) * 8), [RneVector((201,) * 8)], cfg, rng)
        state = observe(AttackState.for_transcript(t), t)
        with pytest.raises(InconsistentObservation):
            refine_with_map(state, table)
