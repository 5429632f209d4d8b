import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nregion.similarity import (rate, ratio, weight, build_weight_matrix,
                                candidate_pairs, write_weights,
                                write_normalized_sq, read_weight_files)

from conftest import make_graph, random_bipartite


def brute_force_adamic_adar(g, i, j):
    """Independent oracle: explicit loop over users, no adjacency shortcuts."""
    total = 0.0
    for u in range(g.n_users):
        items = g.user_items(u)
        if i in items and j in items:
            total += 1.0 / math.log(len(items))
    return total


class TestRate:
    def test_two_common_neighbors_degrees_3_2(self):
        # u0 clicks i0,i1,i2 (degree 3); u1 clicks i0,i1 (degree 2)
        g = make_graph(2, 3, {(0, 0), (0, 1), (0, 2), (1, 0), (1, 1)})
        expected = 1 / math.log(3) + 1 / math.log(2)
        assert rate(g, 0, 1) == pytest.approx(2.352934267515801, abs=1e-15)
        assert rate(g, 0, 1) == pytest.approx(expected, abs=1e-15)

    def test_no_common_neighbors(self):
        g = make_graph(2, 2, {(0, 0), (1, 1)})
        assert rate(g, 0, 1) == 0.0

    def test_ten_degree_two_neighbors(self):
        clicks = {(u, 0) for u in range(10)} | {(u, 1) for u in range(10)}
        g = make_graph(10, 2, clicks)
        assert rate(g, 0, 1) == pytest.approx(14.426950408889635, rel=1e-14)

    def test_self_pair_rejected(self):
        g = make_graph(1, 1, {(0, 0)})
        with pytest.raises(ValueError):
            rate(g, 0, 0)

    @settings(max_examples=30, deadline=None)
    @given(graph_seed=st.integers(0, 10_000))
    def test_matches_brute_force(self, graph_seed):
        rng = np.random.default_rng(graph_seed)
        g = random_bipartite(rng, 10, 12, 0.25, 0.1)
        for i in range(g.n_items):
            for j in range(i + 1, g.n_items):
                assert rate(g, i, j) == pytest.approx(
                    brute_force_adamic_adar(g, i, j), abs=1e-12)

    def test_extra_common_neighbor_increases_rate(self):
        base = {(0, 0), (0, 1), (1, 0), (1, 1)}
        g1 = make_graph(3, 2, base)
        g2 = make_graph(3, 2, base | {(2, 0), (2, 1)})
        assert rate(g2, 0, 1) > rate(g1, 0, 1)


class TestRatio:
    def test_identity_without_exposures(self, rng):
        g = random_bipartite(rng, 8, 10, 0.3)
        for i in range(5):
            for j in range(i + 1, 5):
                assert ratio(g, i, j) == rate(g, i, j)

    def test_exposure_only_pair_is_zero(self):
        g = make_graph(1, 2, set(), {(0, 0), (0, 1)})
        assert ratio(g, 0, 1) == 0.0
        assert rate(g, 0, 1) == 0.0

    def test_mixed_graph_matches_click_only_oracle(self, rng):
        g = random_bipartite(rng, 10, 12, 0.2, 0.2)
        click_only = g.click_subgraph()
        for i in range(g.n_items):
            for j in range(i + 1, g.n_items):
                assert ratio(g, i, j) == pytest.approx(
                    brute_force_adamic_adar(click_only, i, j), abs=1e-12)


class TestWeight:
    def test_both_e(self):
        assert weight(math.e, math.e) == pytest.approx(5.43656365691809, rel=1e-15)

    def test_zero_extension(self):
        assert weight(0.0, 3.7) == 0.0
        assert weight(2.5, 0.0) == 0.0

    def test_negative_weight_occurs(self):
        assert weight(2.0, 0.5) == pytest.approx(-1.0397207708399179, rel=1e-14)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            weight(-1.0, 1.0)

    @given(a=st.floats(0.01, 50), b=st.floats(0.01, 50))
    def test_symmetric_function(self, a, b):
        assert weight(a, b) == pytest.approx(weight(b, a), rel=1e-12)


class TestWeightMatrix:
    def test_empty_graph(self):
        g = make_graph(2, 2, set())
        wm = build_weight_matrix(g)
        assert len(wm) == 0 and wm.max_abs_weight == 0.0

    def test_single_pair_self_normalizes(self):
        g = make_graph(2, 2, {(0, 0), (0, 1), (1, 0), (1, 1)})
        wm = build_weight_matrix(g)
        entry = wm.get(0, 1)
        assert entry is not None and entry.weight != 0
        assert entry.normalized_sq == pytest.approx(1.0)

    def test_matches_per_pair_recomputation(self, rng):
        g = random_bipartite(rng, 10, 10, 0.3, 0.1)
        wm = build_weight_matrix(g)
        for (i, j), entry in wm.entries.items():
            r = rate(g, i, j)
            q = ratio(g, i, j)
            assert entry.rate == pytest.approx(r, abs=1e-15)
            assert entry.ratio == pytest.approx(q, abs=1e-15)
            assert entry.weight == pytest.approx(weight(r, q), abs=1e-15)

    def test_symmetric_lookup(self, rng):
        g = random_bipartite(rng, 8, 10, 0.3)
        wm = build_weight_matrix(g)
        for (i, j) in wm.entries:
            assert wm.get(i, j) == wm.get(j, i)

    def test_normalized_sq_in_unit_interval(self, rng):
        g = random_bipartite(rng, 12, 14, 0.25, 0.1)
        wm = build_weight_matrix(g)
        for entry in wm.entries.values():
            assert 0.0 <= entry.normalized_sq <= 1.0

    def test_normalized_sq_scale_invariant(self, rng):
        # scaling all weights by c > 0 scales max_abs too, fixing the ratio
        g = random_bipartite(rng, 10, 12, 0.3)
        wm = build_weight_matrix(g)
        if wm.max_abs_weight == 0:
            return
        c = 3.7
        scaled = {k: (e.weight * c / (wm.max_abs_weight * c)) ** 2
                  for k, e in wm.entries.items()}
        for k, e in wm.entries.items():
            assert scaled[k] == pytest.approx(e.normalized_sq, rel=1e-12)

    def test_candidate_pairs_cover_exposure_adjacency(self):
        # i0 and i1 share only an exposure neighbor: pair exists, all zeros
        g = make_graph(2, 2, {(1, 0)}, {(0, 0), (0, 1)})
        pairs = set(candidate_pairs(g))
        assert (0, 1) in pairs
        wm = build_weight_matrix(g)
        entry = wm.get(0, 1)
        assert entry.rate == 0 and entry.weight == 0 and entry.normalized_sq == 0

    def test_dump_and_reload(self, tmp_path, rng):
        g = random_bipartite(rng, 8, 10, 0.3, 0.1)
        wm = build_weight_matrix(g)
        wp, np_ = tmp_path / "w.tsv", tmp_path / "nsq.tsv"
        write_weights(wm, wp)
        write_normalized_sq(wm, np_)
        loaded = read_weight_files(wp, np_)
        assert set(loaded.entries) == set(wm.entries)
        for k, e in wm.entries.items():
            assert loaded.entries[k].weight == e.weight
            assert loaded.entries[k].normalized_sq == e.normalized_sq
        assert loaded.max_abs_weight == wm.max_abs_weight
