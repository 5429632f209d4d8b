"""Bipartite user-item interaction graph with click and exposure-only edges."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CLICK_LABEL = 1
EXPOSURE_LABEL = 0

_DELIMITERS = {"tab": "\t", "comma": ",", "space": " "}


class GraphFormatError(ValueError):
    """Malformed edge-list record; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EmptyGraphError(ValueError):
    """Dataset contained no usable interaction records."""


def resolve_delimiter(name: str) -> str:
    return _DELIMITERS.get(name, name)


class InteractionGraph:
    """Immutable bipartite graph over dense user/item integer ids.

    Click edges are confirmed positives; exposure edges record items shown
    to a user without a click. The two sets are disjoint, and every
    adjacency list is kept in ascending id order so traversals are
    deterministic.
    """

    def __init__(self, n_users, n_items, click_edges, exposure_edges=()):
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        clicks = frozenset((int(u), int(i)) for u, i in click_edges)
        exposures = frozenset((int(u), int(i)) for u, i in exposure_edges)
        overlap = clicks & exposures
        if overlap:
            raise ValueError(f"edges labelled both click and exposure: {sorted(overlap)[:3]}")
        for u, i in clicks | exposures:
            if not (0 <= u < self.n_users and 0 <= i < self.n_items):
                raise ValueError(f"edge ({u}, {i}) outside id range "
                                 f"({self.n_users} users, {self.n_items} items)")
        self.click_edges = clicks
        self.exposure_edges = exposures

        user_items = [[] for _ in range(self.n_users)]
        item_users = [[] for _ in range(self.n_items)]
        for u, i in clicks:
            user_items[u].append(i)
            item_users[i].append(u)
        user_exposed = [[] for _ in range(self.n_users)]
        item_exposed = [[] for _ in range(self.n_items)]
        for u, i in exposures:
            user_exposed[u].append(i)
            item_exposed[i].append(u)
        self._user_items = tuple(tuple(sorted(a)) for a in user_items)
        self._item_users = tuple(tuple(sorted(a)) for a in item_users)
        self._user_exposed = tuple(tuple(sorted(a)) for a in user_exposed)
        self._item_exposed = tuple(tuple(sorted(a)) for a in item_exposed)
        self._click_only: InteractionGraph | None = None

    # -- adjacency ---------------------------------------------------------

    def user_items(self, u: int) -> tuple[int, ...]:
        """Items clicked by user u."""
        return self._user_items[u]

    def item_users(self, i: int) -> tuple[int, ...]:
        """Users who clicked item i."""
        return self._item_users[i]

    def exposed_items(self, u: int) -> tuple[int, ...]:
        """Items exposed to u without a click (u's weak-negative evidence)."""
        return self._user_exposed[u]

    def degree_user(self, u: int) -> int:
        return len(self._user_items[u])

    def degree_item(self, i: int) -> int:
        return len(self._item_users[i])

    def exposed_not_clicked(self) -> dict[int, tuple[int, ...]]:
        """Per-user exposed-not-clicked item lists for all users."""
        return {u: self._user_exposed[u] for u in range(self.n_users)}

    # -- derived graphs ----------------------------------------------------

    def click_subgraph(self) -> "InteractionGraph":
        """Graph restricted to confirmed (click) edges; cached."""
        if not self.exposure_edges:
            return self
        if self._click_only is None:
            self._click_only = InteractionGraph(
                self.n_users, self.n_items, self.click_edges, ())
        return self._click_only

    def common_neighbors(self, i: int, j: int) -> set[int]:
        """Users adjacent via click edges to both items i and j."""
        if i == j:
            raise ValueError("common_neighbors requires two distinct items")
        a, b = self._item_users[i], self._item_users[j]
        if len(a) > len(b):
            a, b = b, a
        bs = set(b)
        return {u for u in a if u in bs}

    def __eq__(self, other):
        if not isinstance(other, InteractionGraph):
            return NotImplemented
        return (self.n_users == other.n_users and self.n_items == other.n_items
                and self.click_edges == other.click_edges
                and self.exposure_edges == other.exposure_edges)

    def __repr__(self):
        return (f"InteractionGraph(users={self.n_users}, items={self.n_items}, "
                f"clicks={len(self.click_edges)}, exposures={len(self.exposure_edges)})")


def restrict_clicks(g: InteractionGraph, edges) -> InteractionGraph:
    """Copy of g whose click set is limited to ``edges``; exposures kept."""
    keep = frozenset(edges)
    missing = keep - g.click_edges
    if missing:
        raise ValueError(f"{len(missing)} edges are not click edges of the graph")
    return InteractionGraph(g.n_users, g.n_items, keep, g.exposure_edges)


@dataclass(frozen=True)
class LoadResult:
    """Graph plus the raw-id vocabulary discovered while loading."""

    graph: InteractionGraph
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]


def load_interactions(path, delimiter: str = "\t") -> LoadResult:
    """Parse an edge-list file into a deduplicated InteractionGraph.

    Each line is ``user <delim> item <delim> label[ <delim> timestamp]`` with
    label 1 for a click, 0 for an exposure; the timestamp column is ignored.
    Raw ids are remapped to dense indices in sorted order. A (user, item)
    pair recorded as both click and exposure keeps only the click.
    """
    delimiter = resolve_delimiter(delimiter)
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split(delimiter)
            if len(fields) not in (3, 4):
                raise GraphFormatError(
                    f"expected 3 or 4 fields, got {len(fields)}", line_no)
            user, item, label = fields[0], fields[1], fields[2]
            try:
                label_val = int(label)
            except ValueError:
                raise GraphFormatError(f"label {label!r} is not an integer", line_no) from None
            if label_val not in (CLICK_LABEL, EXPOSURE_LABEL):
                raise GraphFormatError(f"label must be 0 or 1, got {label_val}", line_no)
            records.append((user, item, label_val))
    if not records:
        raise EmptyGraphError(f"{path}: no interaction records")

    user_ids = tuple(sorted({r[0] for r in records}))
    item_ids = tuple(sorted({r[1] for r in records}))
    u_index = {raw: k for k, raw in enumerate(user_ids)}
    i_index = {raw: k for k, raw in enumerate(item_ids)}

    clicks: set[tuple[int, int]] = set()
    exposures: set[tuple[int, int]] = set()
    for user, item, label_val in records:
        edge = (u_index[user], i_index[item])
        if label_val == CLICK_LABEL:
            clicks.add(edge)
            exposures.discard(edge)
        elif edge not in clicks:
            exposures.add(edge)
    graph = InteractionGraph(len(user_ids), len(item_ids), clicks, exposures)
    return LoadResult(graph, user_ids, item_ids)


def export_interactions(g: InteractionGraph, path, user_ids=None, item_ids=None,
                        delimiter: str = "\t") -> None:
    """Write the graph back to edge-list text (clicks first, sorted)."""
    delimiter = resolve_delimiter(delimiter)
    user_ids = user_ids or tuple(str(u) for u in range(g.n_users))
    item_ids = item_ids or tuple(str(i) for i in range(g.n_items))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in sorted(g.click_edges):
            fh.write(f"{user_ids[u]}{delimiter}{item_ids[i]}{delimiter}{CLICK_LABEL}\n")
        for u, i in sorted(g.exposure_edges):
            fh.write(f"{user_ids[u]}{delimiter}{item_ids[i]}{delimiter}{EXPOSURE_LABEL}\n")


def save_id_map(path, ids) -> None:
    """Persist raw id -> dense index as two-column text."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, raw in enumerate(ids):
            fh.write(f"{raw}\t{k}\n")


def load_id_map(path) -> tuple[str, ...]:
    ids: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw, k = line.rstrip("\n").split("\t")
            ids[int(k)] = raw
    return tuple(ids[k] for k in range(len(ids)))


@dataclass(frozen=True)
class DatasetSplit:
    """Per-user partition of click edges into train/valid/test sets."""

    train: frozenset
    valid: frozenset
    test: frozenset
    ratios: tuple[float, float, float]
    seed: int

    def train_items(self, g: InteractionGraph) -> dict[int, set[int]]:
        by_user: dict[int, set[int]] = {u: set() for u in range(g.n_users)}
        for u, i in self.train:
            by_user[u].add(i)
        return by_user

    def heldout_items(self, g: InteractionGraph) -> dict[int, set[int]]:
        """Valid plus test positives per user (leakage exclusion set)."""
        by_user: dict[int, set[int]] = {u: set() for u in range(g.n_users)}
        for u, i in self.valid | self.test:
            by_user[u].add(i)
        return by_user


def _quota(n: int, ratios) -> tuple[int, int, int]:
    # largest-remainder apportionment, ties resolved train > valid > test
    raw = [n * r for r in ratios]
    counts = [int(x) for x in raw]
    leftover = n - sum(counts)
    order = sorted(range(3), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:leftover]:
        counts[k] += 1
    if n >= 1 and counts[0] == 0:
        donor = max(range(1, 3), key=lambda k: counts[k])
        counts[donor] -= 1
        counts[0] += 1
    return counts[0], counts[1], counts[2]


def split_dataset(g: InteractionGraph, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Randomly split each user's clicks by the given ratios.

    Deterministic for a fixed seed: users are processed in ascending order
    with one RNG stream. A user with a single click keeps it in train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    train, valid, test = set(), set(), set()
    for u in range(g.n_users):
        items = list(g.user_items(u))
        if not items:
            continue
        if len(items) == 1:
            train.add((u, items[0]))
            continue
        perm = rng.permutation(len(items))
        shuffled = [items[p] for p in perm]
        n_train, n_valid, _ = _quota(len(items), ratios)
        for pos, item in enumerate(shuffled):
            if pos < n_train:
                train.add((u, item))
            elif pos < n_train + n_valid:
                valid.add((u, item))
            else:
                test.add((u, item))
    return DatasetSplit(frozenset(train), frozenset(valid), frozenset(test),
                        tuple(ratios), seed)
