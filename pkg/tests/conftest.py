import numpy as np
import pytest

from nregion.graph import InteractionGraph


def make_graph(n_users, n_items, clicks, exposures=()):
    return InteractionGraph(n_users, n_items, clicks, exposures)


def random_bipartite(rng, n_users, n_items, p_click, p_exposure=0.0):
    """Independent-edge random bipartite graph (oracle-test workhorse)."""
    clicks = set()
    exposures = set()
    for u in range(n_users):
        for i in range(n_items):
            r = rng.random()
            if r < p_click:
                clicks.add((u, i))
            elif r < p_click + p_exposure:
                exposures.add((u, i))
    return InteractionGraph(n_users, n_items, clicks, exposures)


def bfs_distances(g, u):
    """Plain unlayered BFS distance oracle over the bipartite click graph.

    Returns {("u"|"i", id): hop distance} from user u.
    """
    from collections import deque

    dist = {("u", u): 0}
    queue = deque([("u", u)])
    while queue:
        kind, idx = queue.popleft()
        d = dist[(kind, idx)]
        neighbors = g.user_items(idx) if kind == "u" else g.item_users(idx)
        nkind = "i" if kind == "u" else "u"
        for n in neighbors:
            node = (nkind, n)
            if node not in dist:
                dist[node] = d + 1
                queue.append(node)
    return dist


@pytest.fixture
def chain_graph():
    # u0 - i0 - u1 - i1: item i1 sits at bipartite distance 3 from u0
    return make_graph(2, 2, {(0, 0), (1, 0), (1, 1)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
