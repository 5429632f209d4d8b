"""Propagation-based embedding recommender with a sigmoid hinge ranking loss.

The encoder keeps one base vector per node and averages it with L rounds of
symmetric-normalized neighborhood propagation over the training click graph
(no feature transforms, no nonlinearity). Because the fused vectors are a
fixed linear map of the base embeddings, gradients are exact and hand-derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import InteractionGraph, DatasetSplit, restrict_clicks
from .sampler import SamplerConfig, NegativeSampler, build_negative_sampler


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    gamma: float = 0.1
    lr: float = 0.05
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    dim: int = 64
    layers: int = 2
    refresh: str = "batch"  # refresh fused cache per "batch" or per "epoch"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    @property
    def k(self) -> int:
        """Negatives per positive interaction (owned by the sampler config)."""
        return self.sampler.k

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.refresh not in ("batch", "epoch"):
            raise ValueError(f"refresh must be 'batch' or 'epoch', got {self.refresh!r}")


def normalized_adjacency(g: InteractionGraph) -> sp.csr_matrix:
    """Symmetric-normalized bipartite click adjacency over user+item nodes."""
    n = g.n_users + g.n_items
    rows, cols, vals = [], [], []
    for u, i in g.click_edges:
        w = 1.0 / math.sqrt(g.degree_user(u) * g.degree_item(i))
        rows.extend((u, g.n_users + i))
        cols.extend((g.n_users + i, u))
        vals.extend((w, w))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class EmbeddingModel:
    """Base embeddings plus the cached fused (propagated) representation."""

    def __init__(self, g: InteractionGraph, dim: int = 64, layers: int = 2,
                 seed: int = 0):
        self.n_users = g.n_users
        self.n_items = g.n_items
        self.dim = dim
        self.layers = layers
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(dim)
        n = g.n_users + g.n_items
        self.base = rng.uniform(-bound, bound, size=(n, dim))
        self.adjacency = normalized_adjacency(g)
        self._fused: np.ndarray | None = None
        self.stale = True

    @property
    def user_emb(self) -> np.ndarray:
        return self.base[:self.n_users]

    @property
    def item_emb(self) -> np.ndarray:
        return self.base[self.n_users:]

    def item_node(self, v: int) -> int:
        return self.n_users + v

    def mark_stale(self):
        self.stale = True

    @property
    def fused(self) -> np.ndarray:
        if self.stale or self._fused is None:
            self.refresh()
        return self._fused

    def refresh(self) -> np.ndarray:
        self._fused = fuse(propagate(self))
        self.stale = False
        return self._fused

    def score(self, u: int, v: int) -> float:
        """Inner product of the fused user and item vectors."""
        if not (0 <= u < self.n_users):
            raise ValueError(f"unknown user {u}")
        if not (0 <= v < self.n_items):
            raise ValueError(f"unknown item {v}")
        f = self.fused
        return float(f[u] @ f[self.item_node(v)])

    def propagation_pullback(self, grad_fused: np.ndarray) -> np.ndarray:
        """Map a gradient w.r.t. the fused vectors back onto the base
        embeddings (the propagation operator is symmetric)."""
        acc = grad_fused
        out = grad_fused.copy()
        for _ in range(self.layers):
            acc = self.adjacency @ acc
            out += acc
        return out / (self.layers + 1)


def propagate(model: EmbeddingModel) -> list[np.ndarray]:
    """Layer representations h0..hL; h0 is the base table and each next layer
    is the normalized neighborhood sum of the previous one."""
    h = model.base
    layers = [h]
    for _ in range(model.layers):
        h = model.adjacency @ h
        layers.append(h)
    return layers


def fuse(layers: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean over the layer representations (h0 included)."""
    return sum(layers) / len(layers)


def _batch_arrays(model, batch):
    us = np.array([b[0] for b in batch], dtype=int)
    vps = np.array([b[1] for b in batch], dtype=int)
    ks = {len(b[2]) for b in batch}
    if len(ks) != 1:
        raise ValueError(f"every interaction must carry the same negative count, got {sorted(ks)}")
    k = ks.pop()
    if k < 1:
        raise ValueError("need at least one negative per interaction")
    negs = np.array([b[2] for b in batch], dtype=int)
    return us, vps, negs, k


def _loss_terms(fused, n_users, us, vps, negs, gamma, k):
    eu = fused[us]
    ev = fused[n_users + vps]
    en = fused[n_users + negs]            # (B, k, d)
    neg_sum = en.sum(axis=1)              # (B, d)
    s_neg = np.einsum("bd,bd->b", eu, neg_sum)
    s_pos = k * np.einsum("bd,bd->b", eu, ev)
    z = expit(s_neg) - expit(s_pos) + gamma
    return eu, ev, en, neg_sum, s_neg, s_pos, z


def hinge_loss(model: EmbeddingModel, batch, gamma: float) -> float:
    """Ranking loss of a batch of (user, positive, [k negatives]) triples.

    Each interaction contributes max(0, sigmoid(sum of negative scores)
    - sigmoid(k * positive score) + gamma); the batch loss is the sum of
    contributions times 1/k.
    """
    us, vps, negs, k = _batch_arrays(model, batch)
    *_, z = _loss_terms(model.fused, model.n_users, us, vps, negs, gamma, k)
    return float(np.maximum(z, 0.0).sum() / k)


def hinge_loss_and_gradient(model: EmbeddingModel, batch, gamma: float,
                            fused: np.ndarray | None = None):
    """Batch loss plus the exact gradient w.r.t. the base embeddings.

    With s- = sum of the k negative scores and s+ = k * positive score, an
    active interaction (z > 0) contributes, per unit 1/k:
        d/d e*_u   = sigmoid'(s-) * sum(e*_neg) - k * sigmoid'(s+) * e*_pos
        d/d e*_pos = -k * sigmoid'(s+) * e*_u
        d/d e*_neg = sigmoid'(s-) * e*_u        (each negative)
    and the fused-space gradient is pulled back through the propagation mean.
    """
    us, vps, negs, k = _batch_arrays(model, batch)
    if fused is None:
        fused = model.fused
    n_users = model.n_users
    eu, ev, en, neg_sum, s_neg, s_pos, z = _loss_terms(
        fused, n_users, us, vps, negs, gamma, k)
    active = z > 0
    sn = expit(s_neg)
    sp_ = expit(s_pos)
    a = np.where(active, sn * (1.0 - sn), 0.0) / k
    b = np.where(active, sp_ * (1.0 - sp_), 0.0)  # k/k cancels for the pair terms

    grad = np.zeros_like(fused)
    np.add.at(grad, us, a[:, None] * neg_sum - b[:, None] * ev)
    np.add.at(grad, n_users + vps, -b[:, None] * eu)
    neg_contrib = np.broadcast_to((a[:, None] * eu)[:, None, :], en.shape)
    np.add.at(grad, (n_users + negs).ravel(),
              neg_contrib.reshape(-1, fused.shape[1]))
    loss = float(np.maximum(z, 0.0).sum() / k)
    return loss, model.propagation_pullback(grad)


def train(g: InteractionGraph, split: DatasetSplit, config: TrainConfig,
          sampler: NegativeSampler | None = None):
    """Minibatch SGD over the training interactions.

    Negatives are drawn per interaction by the configured sampler; the fused
    cache is recomputed per batch (exact gradients) or per epoch (cheaper,
    slightly stale propagation). Deterministic for a fixed config.
    Returns the trained model and the per-epoch mean batch loss.
    """
    train_graph = restrict_clicks(g, split.train)
    if sampler is None:
        sampler = build_negative_sampler(g, split, config.sampler)
    seed_seq = np.random.SeedSequence(config.seed)
    init_seed, order_seq, sample_seq = seed_seq.spawn(3)
    model = EmbeddingModel(train_graph, dim=config.dim, layers=config.layers,
                           seed=init_seed)
    order_rng = np.random.default_rng(order_seq)
    sample_rng = np.random.default_rng(sample_seq)

    edges = sorted(split.train)
    if not edges:
        raise ValueError("training split is empty")
    k = config.sampler.k
    curve = []
    fused = model.refresh()
    for _ in range(config.epochs):
        perm = order_rng.permutation(len(edges))
        if config.refresh == "epoch":
            fused = model.refresh()
        batch_losses = []
        for start in range(0, len(edges), config.batch_size):
            if config.refresh == "batch":
                fused = model.refresh()
            idx = perm[start:start + config.batch_size]
            batch = []
            for t in idx:
                u, v = edges[t]
                negatives = sampler.draw(
                    u, k, sample_rng,
                    fused_score=lambda vv, uu=u: float(
                        fused[uu] @ fused[model.item_node(vv)]))
                batch.append((u, v, negatives))
            loss, grad = hinge_loss_and_gradient(model, batch, config.gamma,
                                                 fused=fused)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss}")
            model.base -= config.lr * grad
            model.mark_stale()
            batch_losses.append(loss)
        curve.append(float(np.mean(batch_losses)))
    model.refresh()
    return model, curve


def recommend_topk(model: EmbeddingModel, u: int, K: int, exclude=()) -> list[int]:
    """K highest-scoring items for u, skipping excluded (training) items;
    ties break toward the smaller item id."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not (0 <= u < model.n_users):
        raise ValueError(f"unknown user {u}")
    fused = model.fused
    scores = fused[model.n_users:] @ fused[u]
    items = np.arange(model.n_items)
    if exclude:
        mask = np.ones(model.n_items, dtype=bool)
        mask[list(exclude)] = False
        items, scores = items[mask], scores[mask]
    order = np.lexsort((items, -scores))
    return items[order[:K]].tolist()


def save_checkpoint(model: EmbeddingModel, path, id_map_ref: str = "") -> None:
    """Matrix dump with a small header (node counts, dim, layers, id map)."""
    np.savez(path,
             user_emb=model.user_emb, item_emb=model.item_emb,
             header=np.array([model.n_users, model.n_items, model.dim,
                              model.layers], dtype=int),
             id_map_ref=np.array(id_map_ref))


def load_checkpoint(path, g: InteractionGraph) -> EmbeddingModel:
    data = np.load(path, allow_pickle=False)
    n_users, n_items, dim, layers = (int(x) for x in data["header"])
    model = EmbeddingModel(g, dim=dim, layers=layers, seed=0)
    if (n_users, n_items) != (g.n_users, g.n_items):
        raise ValueError(
            f"checkpoint is for {n_users} users / {n_items} items, "
            f"graph has {g.n_users} / {g.n_items}")
    model.base = np.vstack([data["user_emb"], data["item_emb"]])
    model.mark_stale()
    return model
