"""Per-user layered BFS shells and their grouping into distance-ordered regions."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import InteractionGraph

# BFS nodes are ("u", id) or ("i", id); frontiers are homogeneous because the
# graph is strictly bipartite, so sorting tuples sorts by ascending id.
Node = tuple[str, int]

DEFAULT_KHOP = 100


def bfs_layer(g: InteractionGraph, queue: list[Node], visited: set[Node]) -> list[Node]:
    """Expand one frontier over click edges.

    Returns the unvisited neighbors of the queue nodes, deduplicated and in
    ascending node-id order, and adds them to ``visited``.
    """
    frontier: set[Node] = set()
    for kind, idx in queue:
        if kind == "u":
            neighbors, nkind = g.user_items(idx), "i"
        else:
            neighbors, nkind = g.item_users(idx), "u"
        for n in neighbors:
            node = (nkind, n)
            if node not in visited:
                frontier.add(node)
    out = sorted(frontier)
    visited.update(out)
    return out


@dataclass(frozen=True)
class ShellArray:
    """Item shells of one user: shells[d] holds the items first reached at
    bipartite hop distance 2d+1, so shells[0] is the user's clicked items."""

    user: int
    shells: tuple[tuple[int, ...], ...]
    khop: int

    def reached_items(self) -> set[int]:
        return {i for shell in self.shells for i in shell}


def user_shells(g: InteractionGraph, u: int, khop: int = DEFAULT_KHOP) -> ShellArray:
    """Drill the click graph layer by layer from user u, up to khop hops.

    Odd-hop frontiers are items and become shells; even-hop frontiers are
    users and only continue the traversal. Stops early once a frontier is
    empty, so a generous khop costs nothing on small graphs.
    """
    if khop < 1:
        raise ValueError(f"khop must be >= 1, got {khop}")
    if not (0 <= u < g.n_users):
        raise ValueError(f"unknown user {u}")
    visited: set[Node] = {("u", u)}
    queue: list[Node] = [("u", u)]
    shells: list[tuple[int, ...]] = []
    for hop in range(1, khop + 1):
        frontier = bfs_layer(g, queue, visited)
        if not frontier:
            break
        if hop % 2 == 1:
            shells.append(tuple(idx for _, idx in frontier))
        queue = frontier
    return ShellArray(user=u, shells=tuple(shells), khop=khop)


def assign_regions(shells: ShellArray, n: int, item_universe) -> dict[int, int]:
    """Map every item to a region index in 1..n for this user.

    Shells are grouped into regions 1..n-1 as contiguous ascending chunks of
    near-equal size (earlier chunks take the remainder); items never reached
    by the traversal fall in region n. With fewer shells than regions, the
    trailing pre-distant regions stay empty. n=1 collapses everything into
    region 1.
    """
    if n < 1:
        raise ValueError(f"region count must be >= 1, got {n}")
    universe = list(item_universe)
    if n == 1:
        return {i: 1 for i in universe}
    region_of = {i: n for i in universe}
    groups = max(n - 1, 1)
    s = len(shells.shells)
    if s == 0:
        return region_of
    base, extra = divmod(s, groups)
    start = 0
    for gidx in range(groups):
        size = base + (1 if gidx < extra else 0)
        for shell in shells.shells[start:start + size]:
            for item in shell:
                region_of[item] = gidx + 1
        start += size
    return region_of


@dataclass(frozen=True)
class RegionPartition:
    """Per-user item-to-region assignment for a fixed region count n."""

    n: int
    region_of: dict[int, dict[int, int]]
    khop: int

    def users(self):
        return self.region_of.keys()

    def items_in_region(self, u: int, region) -> list[int]:
        wanted = {region} if isinstance(region, int) else set(region)
        return sorted(i for i, r in self.region_of[u].items() if r in wanted)


def build_partition(g: InteractionGraph, n: int, khop: int = DEFAULT_KHOP,
                    users=None) -> RegionPartition:
    """Run the layered traversal for every user and assign regions."""
    users = range(g.n_users) if users is None else users
    universe = range(g.n_items)
    region_of = {}
    for u in users:
        shells = user_shells(g, u, khop)
        region_of[u] = assign_regions(shells, n, universe)
    return RegionPartition(n=n, region_of=region_of, khop=khop)


def auto_region_count(g: InteractionGraph, khop: int) -> int:
    """Default region count: one region per observed shell plus the distant
    region, capped at khop."""
    max_shells = 0
    for u in range(g.n_users):
        max_shells = max(max_shells, len(user_shells(g, u, khop).shells))
    return max(1, min(khop, max_shells + 1))


def write_partition(partition: RegionPartition, path) -> None:
    """Dump as tab-separated (user, item, region) rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={partition.n}\tkhop={partition.khop}\n")
        for u in sorted(partition.region_of):
            assignment = partition.region_of[u]
            for i in sorted(assignment):
                fh.write(f"{u}\t{i}\t{assignment[i]}\n")


def read_partition(path) -> RegionPartition:
    n = khop = None
    region_of: dict[int, dict[int, int]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing partition header")
        for field in header.lstrip("#").split("\t"):
            key, _, value = field.strip().partition("=")
            if key == "n":
                n = int(value)
            elif key == "khop":
                khop = int(value)
        if n is None or khop is None:
            raise ValueError(f"{path}: header must carry n and khop")
        for line in fh:
            if not line.strip():
                continue
            u, i, r = line.split("\t")
            region_of.setdefault(int(u), {})[int(i)] = int(r)
    return RegionPartition(n=n, region_of=region_of, khop=khop)
