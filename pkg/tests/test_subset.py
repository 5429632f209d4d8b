import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nregion.graph import InteractionGraph
from nregion.regions import user_shells
from nregion.similarity import build_weight_matrix
from nregion.subset import (bic_score, fisher_exact, CandidateTable,
                            stagewise_select, select_core_negatives,
                            build_candidate_table, write_selection,
                            FEATURE_NAMES)

from conftest import random_bipartite


def fisher_oracle(a, b, c, d):
    """Exact-rational two-sided Fisher p: enumerate the hypergeometric support
    with integer combinatorics and sum the tables no likelier than observed."""
    r1, r2, c1 = a + b, c + d, a + c
    n = r1 + r2
    if r1 == 0 or r2 == 0 or c1 == 0 or (b + d) == 0:
        return Fraction(1)
    denom = math.comb(n, c1)
    probs = {x: Fraction(math.comb(r1, x) * math.comb(r2, c1 - x), denom)
             for x in range(max(0, c1 - r2), min(r1, c1) + 1)}
    observed = probs[a]
    return sum(p for p in probs.values() if p <= observed)


class TestBic:
    def test_rss_equals_n_and_no_params(self):
        assert bic_score(4.0, 4, 0) == pytest.approx(0.0)

    def test_param_penalty_linear(self):
        base = bic_score(3.0, 9, 1)
        assert bic_score(3.0, 9, 2) - base == pytest.approx(math.log(9))
        assert bic_score(3.0, 9, 4) - base == pytest.approx(3 * math.log(9))

    def test_direct_value(self):
        assert bic_score(2.0, 4, 1) == pytest.approx(-1.3862943611198906, rel=1e-15)

    def test_zero_rss_floored(self):
        assert math.isfinite(bic_score(0.0, 10, 1))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            bic_score(1.0, 0, 0)
        with pytest.raises(ValueError):
            bic_score(-1.0, 5, 0)


class TestFisherExact:
    def test_degenerate_margins(self):
        assert fisher_exact([[0, 0], [0, 7]]) == 1.0
        assert fisher_exact([[0, 0], [0, 0]]) == 1.0

    def test_diagonal_table(self):
        assert fisher_exact([[10, 0], [0, 10]]) == pytest.approx(
            1.082508822446903e-05, rel=1e-10)

    def test_transpose_symmetry(self, rng):
        for _ in range(50):
            a, b, c, d = (int(x) for x in rng.integers(0, 12, size=4))
            p1 = fisher_exact([[a, b], [c, d]])
            p2 = fisher_exact([[a, c], [b, d]])
            assert p1 == pytest.approx(p2, rel=1e-12)

    def test_matches_fraction_oracle_small_margins(self):
        for a in range(0, 9):
            for b in range(0, 9 - a):
                for c in range(0, 9):
                    for d in range(0, 9 - c):
                        got = fisher_exact([[a, b], [c, d]])
                        want = float(fisher_oracle(a, b, c, d))
                        assert got == pytest.approx(want, abs=1e-10), (a, b, c, d)

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            fisher_exact([[1, -1], [0, 2]])


def table_from(features, target, items=None):
    features = np.asarray(features, dtype=float)
    items = np.arange(len(features)) if items is None else np.asarray(items)
    names = tuple(f"f{k}" for k in range(features.shape[1]))
    return CandidateTable(items=items, features=features,
                          target=np.asarray(target), feature_names=names)


class TestStagewise:
    def test_perfect_single_feature_unit_step(self):
        y = np.array([1, 0, 1, 0, 1])
        table = table_from(y.reshape(-1, 1), y)
        result = stagewise_select(table, step=1.0, m=3)
        assert result.trace and result.trace[-1][2] == pytest.approx(0.0, abs=1e-12)
        assert result.coefficients[0] == pytest.approx(1.0)
        # top-m of the fitted score are the target's ones, smallest ids first
        assert result.selected == [0, 2, 4]

    def test_orthogonal_features_stay_zero(self):
        # feature sums to zero against a constant-one target slice
        x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        y = np.array([1, 1, 1, 1])
        result = stagewise_select(table_from(x, y), step=0.1, m=2)
        assert np.all(result.coefficients == 0)
        assert not result.significant

    def test_all_zero_features_flagged_empty(self):
        x = np.zeros((4, 2))
        y = np.array([1, 0, 1, 0])
        result = stagewise_select(table_from(x, y), step=0.1, m=2)
        assert result.selected == [] and not result.significant

    def test_residual_norm_nonincreasing(self, rng):
        x = rng.normal(size=(40, 4))
        y = (rng.random(40) < 0.4).astype(int)
        result = stagewise_select(table_from(x, y), step=0.01, m=5)
        norms = [t[2] for t in result.trace]
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    def test_single_feature_converges_to_ols(self, rng):
        x = rng.normal(size=(60, 1))
        y = (x[:, 0] + rng.normal(scale=0.4, size=60) > 0).astype(int)
        table = table_from(x, y)
        result = stagewise_select(table, step=1e-3, m=1,
                                  residual_threshold=0.0, max_iter=100_000)
        beta_ols = float(x[:, 0] @ y / (x[:, 0] @ x[:, 0]))
        assert result.coefficients[0] == pytest.approx(beta_ols, rel=0.05)

    def test_two_features_match_least_squares_ranking(self, rng):
        # dominant feature and a noisy echo; stagewise should rank by the
        # same dominant direction as the closed-form least-squares fit
        n = 80
        dominant = rng.normal(size=n)
        echo = dominant * 0.3 + rng.normal(scale=1.0, size=n)
        y = (dominant > 0.2).astype(int)
        x = np.column_stack([dominant, echo])
        result = stagewise_select(table_from(x, y), step=0.005, m=10,
                                  max_iter=50_000)
        coef_ls, *_ = np.linalg.lstsq(x, y.astype(float), rcond=None)
        ls_scores = x @ coef_ls
        ls_top = set(np.argsort(-ls_scores)[:10])
        overlap = len(set(result.selected) & ls_top)
        assert overlap >= 8

    def test_saturation_returns_all(self):
        y = np.array([1, 0, 1])
        result = stagewise_select(table_from(y.reshape(-1, 1), y), step=1.0, m=50)
        assert sorted(result.selected) == [0, 1, 2]

    def test_bad_params(self):
        y = np.array([1, 0])
        table = table_from(y.reshape(-1, 1), y)
        with pytest.raises(ValueError):
            stagewise_select(table, step=0.0, m=1)
        with pytest.raises(ValueError):
            stagewise_select(table, step=0.1, m=0)


def planted_graph(seed):
    """Clicks in two blocks; the user's exposures concentrate on a planted
    set of intermediate items."""
    rng = np.random.default_rng(seed)
    g = random_bipartite(rng, 14, 30, 0.18)
    exposures = set()
    shells = user_shells(g, 0, 100)
    from nregion.regions import assign_regions
    region_of = assign_regions(shells, 4, shells.reached_items())
    intermediates = [i for i, r in region_of.items() if 2 <= r <= 3]
    planted = intermediates[: max(3, len(intermediates) // 3)]
    for i in planted:
        if (0, i) not in g.click_edges:
            exposures.add((0, i))
    g2 = InteractionGraph(g.n_users, g.n_items, g.click_edges, exposures)
    return g2, planted


class TestSelectCoreNegatives:
    def test_empty_intermediate_regions(self):
        g = InteractionGraph(1, 3, {(0, 0)})
        shells = user_shells(g, 0, 100)
        wm = build_weight_matrix(g)
        out = select_core_negatives(g, shells, wm, g.exposed_not_clicked(), n=2, m=4)
        assert out == []

    def test_saturation(self, rng):
        g = random_bipartite(rng, 10, 20, 0.2, 0.15)
        shells = user_shells(g, 0, 100)
        wm = build_weight_matrix(g)
        table = build_candidate_table(
            g, 0, __import__("nregion.regions", fromlist=["assign_regions"]).assign_regions(
                shells, 4, shells.reached_items()), wm, g.exposed_not_clicked(), 4)
        out = select_core_negatives(g, shells, wm, g.exposed_not_clicked(),
                                    n=4, m=1000)
        assert len(out) == len(table.items)

    def test_planted_exposures_recovered_better_than_random(self):
        hits, random_hits, total = 0, 0, 0
        for seed in range(6):
            g, planted = planted_graph(seed)
            if not planted:
                continue
            shells = user_shells(g, 0, 100)
            wm = build_weight_matrix(g)
            m = len(planted)
            out = select_core_negatives(g, shells, wm, g.exposed_not_clicked(),
                                        n=4, m=m)
            hits += len(set(out) & set(planted))
            rng = np.random.default_rng(seed + 1000)
            from nregion.regions import assign_regions
            region_of = assign_regions(shells, 4, shells.reached_items())
            pool = [i for i, r in region_of.items() if 2 <= r <= 3]
            rnd = rng.choice(pool, size=min(m, len(pool)), replace=False)
            random_hits += len(set(rnd.tolist()) & set(planted))
            total += m
        assert total > 0
        assert hits >= random_hits
        assert hits / total > 0.5

    def test_deterministic(self, rng):
        g = random_bipartite(rng, 12, 24, 0.2, 0.1)
        shells = user_shells(g, 1, 100)
        wm = build_weight_matrix(g)
        a = select_core_negatives(g, shells, wm, g.exposed_not_clicked(), n=4, m=6)
        b = select_core_negatives(g, shells, wm, g.exposed_not_clicked(), n=4, m=6)
        assert a == b

    def test_selection_dump(self, tmp_path, rng):
        g = random_bipartite(rng, 12, 24, 0.2, 0.1)
        from nregion.regions import assign_regions
        shells = user_shells(g, 0, 100)
        region_of = assign_regions(shells, 4, shells.reached_items())
        wm = build_weight_matrix(g)
        table = build_candidate_table(g, 0, region_of, wm,
                                      g.exposed_not_clicked(), 4)
        if len(table.items) == 0:
            pytest.skip("no intermediate candidates for this seed")
        result = stagewise_select(table, m=3)
        out = tmp_path / "selection.tsv"
        write_selection(table, result, out)
        text = out.read_text()
        assert "fisher_p" in text and "residual_norm" in text
