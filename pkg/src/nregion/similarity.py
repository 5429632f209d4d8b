"""Item-item connection weights from co-click structure.

``rate`` is the Adamic-Adar score over common click-neighbors, ``ratio`` is
the same score after projecting the graph onto confirmed clicks, and
``weight`` couples the two through logs:

    weight = rate * ln(ratio) + ratio * ln(rate)

A pair with no common structure carries weight 0. Downstream sampling uses
the squared normalized weight (w / max|w|)^2, which lands in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple

from .graph import InteractionGraph


def rate(g: InteractionGraph, i: int, j: int) -> float:
    """Sum of 1/ln(click degree) over users who clicked both i and j."""
    if i == j:
        raise ValueError("self-similarity is undefined")
    total = 0.0
    for u in g.common_neighbors(i, j):
        total += 1.0 / math.log(g.degree_user(u))
    return total


def ratio(g: InteractionGraph, i: int, j: int) -> float:
    """``rate`` computed on the click-only projection of the graph."""
    return rate(g.click_subgraph(), i, j)


def weight(rate_value: float, ratio_value: float) -> float:
    """Combine the two scores; zero by convention when either is zero."""
    if rate_value < 0 or ratio_value < 0:
        raise ValueError("rate and ratio must be non-negative")
    if rate_value == 0.0 or ratio_value == 0.0:
        return 0.0
    return rate_value * math.log(ratio_value) + ratio_value * math.log(rate_value)


class WeightEntry(NamedTuple):
    rate: float
    ratio: float
    weight: float
    normalized_sq: float


@dataclass
class WeightMatrix:
    """Sparse symmetric item-pair weights; keys are (min(i,j), max(i,j))."""

    entries: dict[tuple[int, int], WeightEntry] = field(default_factory=dict)
    max_abs_weight: float = 0.0

    @staticmethod
    def key(i: int, j: int) -> tuple[int, int]:
        return (i, j) if i < j else (j, i)

    def get(self, i: int, j: int) -> WeightEntry | None:
        return self.entries.get(self.key(i, j))

    def normalized_sq(self, i: int, j: int) -> float:
        entry = self.get(i, j)
        return entry.normalized_sq if entry is not None else 0.0

    def weight_of(self, i: int, j: int) -> float:
        entry = self.get(i, j)
        return entry.weight if entry is not None else 0.0

    def __len__(self):
        return len(self.entries)


def candidate_pairs(g: InteractionGraph) -> Iterable[tuple[int, int]]:
    """Item pairs sharing at least one neighbor when exposures count as
    adjacency. All other pairs have zero rate, ratio and weight."""
    seen: set[tuple[int, int]] = set()
    for u in range(g.n_users):
        neighborhood = sorted(set(g.user_items(u)) | set(g.exposed_items(u)))
        for pair in combinations(neighborhood, 2):
            if pair not in seen:
                seen.add(pair)
                yield pair


def build_weight_matrix(g: InteractionGraph, pairs=None) -> WeightMatrix:
    """Compute rate/ratio/weight for every candidate pair and normalize.

    ``normalized_sq`` is (weight / max_abs_weight)^2, or 0 when the matrix
    has no nonzero weight at all.
    """
    if pairs is None:
        pairs = candidate_pairs(g)
    click_graph = g.click_subgraph()
    raw: dict[tuple[int, int], tuple[float, float, float]] = {}
    max_abs = 0.0
    for i, j in pairs:
        key = WeightMatrix.key(i, j)
        if key in raw:
            continue
        r = rate(g, i, j)
        # identical click structure, routed through the confirmed projection
        q = rate(click_graph, i, j)
        w = weight(r, q)
        raw[key] = (r, q, w)
        max_abs = max(max_abs, abs(w))
    entries = {}
    for key, (r, q, w) in raw.items():
        nsq = (w / max_abs) ** 2 if max_abs > 0 else 0.0
        entries[key] = WeightEntry(rate=r, ratio=q, weight=w, normalized_sq=nsq)
    return WeightMatrix(entries=entries, max_abs_weight=max_abs)


def write_weights(matrix: WeightMatrix, path) -> None:
    """Dump (i, j, weight) triples, ascending key order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (i, j) in sorted(matrix.entries):
            fh.write(f"{i}\t{j}\t{matrix.entries[(i, j)].weight!r}\n")


def write_normalized_sq(matrix: WeightMatrix, path) -> None:
    """Dump (i, j, normalized_sq) triples, ascending key order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (i, j) in sorted(matrix.entries):
            fh.write(f"{i}\t{j}\t{matrix.entries[(i, j)].normalized_sq!r}\n")


def read_weight_files(weight_path, normalized_path) -> WeightMatrix:
    """Rebuild a matrix from the two dump files.

    Only weight and normalized_sq survive a round trip; the rate/ratio
    components are not re-derivable from the dumps and are stored as NaN.
    """
    weights: dict[tuple[int, int], float] = {}
    with open(weight_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            i, j, w = line.split("\t")
            weights[(int(i), int(j))] = float(w)
    entries: dict[tuple[int, int], WeightEntry] = {}
    with open(normalized_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            i, j, nsq = line.split("\t")
            key = (int(i), int(j))
            entries[key] = WeightEntry(rate=math.nan, ratio=math.nan,
                                       weight=weights[key],
                                       normalized_sq=float(nsq))
    max_abs = max((abs(e.weight) for e in entries.values()), default=0.0)
    return WeightMatrix(entries=entries, max_abs_weight=max_abs)
