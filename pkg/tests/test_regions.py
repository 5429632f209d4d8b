import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nregion.regions import (bfs_layer, user_shells, assign_regions, ShellArray,
                             build_partition, auto_region_count,
                             write_partition, read_partition)

from conftest import make_graph, random_bipartite, bfs_distances


class TestBfsLayer:
    def test_star_expansion(self):
        g = make_graph(1, 5, {(0, i) for i in range(5)})
        visited = {("u", 0)}
        frontier = bfs_layer(g, [("u", 0)], visited)
        assert frontier == [("i", i) for i in range(5)]

    def test_exhausted_graph(self):
        g = make_graph(1, 3, {(0, i) for i in range(3)})
        visited = {("u", 0)}
        leaves = bfs_layer(g, [("u", 0)], visited)
        assert bfs_layer(g, leaves, visited) == []

    def test_path_case(self, chain_graph):
        visited = {("u", 0)}
        assert bfs_layer(chain_graph, [("u", 0)], visited) == [("i", 0)]

    def test_frontier_sorted_and_deduplicated(self):
        g = make_graph(2, 4, {(0, 3), (0, 1), (1, 1), (1, 2)})
        visited = {("u", 0), ("u", 1)}
        frontier = bfs_layer(g, [("u", 1), ("u", 0)], visited)
        assert frontier == [("i", 1), ("i", 2), ("i", 3)]


class TestUserShells:
    def test_one_hop_only(self):
        g = make_graph(1, 2, {(0, 0), (0, 1)})
        sh = user_shells(g, 0, khop=100)
        assert sh.shells == ((0, 1),)

    def test_chain_two_shells(self, chain_graph):
        sh = user_shells(chain_graph, 0, khop=4)
        assert sh.shells == ((0,), (1,))
        dist = bfs_distances(chain_graph, 0)
        assert dist[("i", 1)] == 3

    def test_khop_one_is_clicked_items(self, rng):
        g = random_bipartite(rng, 10, 15, 0.3)
        for u in range(g.n_users):
            sh = user_shells(g, u, khop=1)
            assert sh.shells == ((g.user_items(u),) if g.user_items(u) else ())

    def test_no_clicks_gives_empty(self):
        g = make_graph(2, 2, {(1, 0)})
        assert user_shells(g, 0, khop=5).shells == ()

    def test_bad_khop(self, chain_graph):
        with pytest.raises(ValueError):
            user_shells(chain_graph, 0, khop=0)

    @settings(max_examples=25, deadline=None)
    @given(graph_seed=st.integers(0, 10_000))
    def test_shells_match_bfs_distance_oracle(self, graph_seed):
        rng = np.random.default_rng(graph_seed)
        g = random_bipartite(rng, 12, 18, 0.15)
        for u in range(g.n_users):
            sh = user_shells(g, u, khop=100)
            dist = bfs_distances(g, u)
            reached = {}
            for d, shell in enumerate(sh.shells):
                for item in shell:
                    reached[item] = 2 * d + 1
            oracle = {idx: d for (kind, idx), d in dist.items() if kind == "i"}
            assert reached == oracle
            # disjointness
            all_items = [i for shell in sh.shells for i in shell]
            assert len(all_items) == len(set(all_items))

    def test_early_termination_stable(self, rng):
        g = random_bipartite(rng, 10, 12, 0.2)
        for u in range(g.n_users):
            assert user_shells(g, u, 50).shells == user_shells(g, u, 200).shells


class TestAssignRegions:
    def make_shells(self, *shells):
        return ShellArray(user=0, shells=tuple(tuple(s) for s in shells), khop=100)

    def test_four_shells_three_regions(self):
        sh = self.make_shells([0], [1], [2], [3])
        regions = assign_regions(sh, 3, range(6))
        assert regions[0] == 1 and regions[1] == 1
        assert regions[2] == 2 and regions[3] == 2
        assert regions[4] == 3 and regions[5] == 3

    def test_n_one_all_region_one(self):
        sh = self.make_shells([0], [1])
        regions = assign_regions(sh, 1, range(4))
        assert set(regions.values()) == {1}

    def test_fewer_shells_than_regions(self):
        sh = self.make_shells([0], [1])
        regions = assign_regions(sh, 5, range(4))
        assert regions[0] == 1
        assert regions[1] == 2
        assert regions[2] == 5 and regions[3] == 5
        # regions 3 and 4 stay empty
        assert 3 not in regions.values() and 4 not in regions.values()

    def test_bad_n(self):
        with pytest.raises(ValueError):
            assign_regions(self.make_shells([0]), 0, range(1))

    def test_total_and_disjoint(self, rng):
        g = random_bipartite(rng, 8, 20, 0.2)
        for u in range(g.n_users):
            sh = user_shells(g, u, 100)
            regions = assign_regions(sh, 4, range(g.n_items))
            assert set(regions.keys()) == set(range(g.n_items))
            assert all(1 <= r <= 4 for r in regions.values())

    def test_monotone_in_distance(self, rng):
        g = random_bipartite(rng, 8, 20, 0.2)
        for u in range(g.n_users):
            sh = user_shells(g, u, 100)
            regions = assign_regions(sh, 4, range(g.n_items))
            dist = bfs_distances(g, u)
            items = [(d, idx) for (kind, idx), d in dist.items() if kind == "i"]
            for d1, i1 in items:
                for d2, i2 in items:
                    if d1 < d2:
                        assert regions[i1] <= regions[i2]


class TestPartition:
    def test_build_and_round_trip(self, tmp_path, rng):
        g = random_bipartite(rng, 6, 10, 0.25)
        partition = build_partition(g, n=3, khop=10)
        path = tmp_path / "partition.tsv"
        write_partition(partition, path)
        loaded = read_partition(path)
        assert loaded.n == partition.n and loaded.khop == partition.khop
        assert loaded.region_of == partition.region_of

    def test_auto_region_count(self, chain_graph):
        # two shells at most -> 3 regions (shells + distant)
        assert auto_region_count(chain_graph, khop=100) == 3

    def test_items_in_region(self, chain_graph):
        partition = build_partition(chain_graph, n=3, khop=10)
        assert partition.items_in_region(0, 1) == [0]
        assert partition.items_in_region(0, 2) == [1]
        assert partition.items_in_region(0, (1, 2)) == [0, 1]
