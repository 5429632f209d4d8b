"""Top-K ranking metrics (percent scale) and model evaluation over a split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import InteractionGraph, DatasetSplit
from .model import EmbeddingModel, recommend_topk


def _check_k(K: int):
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")


def recall_at_k(ranked, relevant, K: int) -> float:
    """100 * |top-K hits| / |relevant|."""
    _check_k(K)
    relevant = set(relevant)
    hits = sum(1 for item in ranked[:K] if item in relevant)
    return 100.0 * hits / len(relevant)


def hr_at_k(ranked, relevant, K: int) -> float:
    """100 if any relevant item appears in the top K, else 0."""
    _check_k(K)
    relevant = set(relevant)
    return 100.0 if any(item in relevant for item in ranked[:K]) else 0.0


def ndcg_at_k(ranked, relevant, K: int) -> float:
    """Binary-gain NDCG with 1/log2(rank+1) discounts, in percent."""
    _check_k(K)
    relevant = set(relevant)
    dcg = 0.0
    for pos, item in enumerate(ranked[:K]):
        if item in relevant:
            dcg += 1.0 / math.log2(pos + 2)
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(K, len(relevant)) + 1))
    return 100.0 * dcg / ideal


@dataclass(frozen=True)
class MetricValues:
    recall: float
    ndcg: float
    hr: float

    def as_dict(self) -> dict[str, float]:
        return {"recall": self.recall, "ndcg": self.ndcg, "hr": self.hr}


def evaluate(model: EmbeddingModel, split: DatasetSplit, g: InteractionGraph,
             K: int = 20) -> MetricValues:
    """Mean Recall/NDCG/HR at K over test users, ranking every item the user
    has not clicked in training."""
    _check_k(K)
    test_by_user: dict[int, set[int]] = {}
    for u, i in split.test:
        test_by_user.setdefault(u, set()).add(i)
    if not test_by_user:
        raise ValueError("empty test set")
    train_by_user = split.train_items(g)
    recalls, ndcgs, hrs = [], [], []
    for u in sorted(test_by_user):
        relevant = test_by_user[u]
        exclude = train_by_user[u]
        ranked = recommend_topk(model, u, K, exclude=exclude)
        if exclude.intersection(ranked):
            raise AssertionError(f"user {u}: a training item was ranked")
        recalls.append(recall_at_k(ranked, relevant, K))
        ndcgs.append(ndcg_at_k(ranked, relevant, K))
        hrs.append(hr_at_k(ranked, relevant, K))
    return MetricValues(recall=float(np.mean(recalls)),
                        ndcg=float(np.mean(ndcgs)),
                        hr=float(np.mean(hrs)))


@dataclass(frozen=True)
class MetricsReport:
    """Per-configuration metric summary over a seed grid."""

    label: str
    K: int
    seeds: tuple[int, ...]
    per_seed: tuple[MetricValues, ...]
    mean: MetricValues
    std: MetricValues

    @classmethod
    def from_runs(cls, label: str, K: int, seeds, values) -> "MetricsReport":
        values = tuple(values)
        arr = np.array([[v.recall, v.ndcg, v.hr] for v in values])
        mean = MetricValues(*(float(x) for x in arr.mean(axis=0)))
        std = MetricValues(*(float(x) for x in arr.std(axis=0)))
        return cls(label=label, K=K, seeds=tuple(seeds), per_seed=values,
                   mean=mean, std=std)

    def row(self) -> str:
        m, s = self.mean, self.std
        return (f"{self.label}: recall@{self.K} {m.recall:.2f}+/-{s.recall:.2f}  "
                f"ndcg@{self.K} {m.ndcg:.2f}+/-{s.ndcg:.2f}  "
                f"hr@{self.K} {m.hr:.2f}+/-{s.hr:.2f}")
