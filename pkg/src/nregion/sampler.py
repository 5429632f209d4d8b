"""Region-aware positive/negative sample pools and negative-sampling strategies.

Pool roles follow the region partition: the nearest region is positive-only,
the distant region is negative with full mass, and intermediate items split
their unit mass between a positive-assistive share (the squared normalized
weight against the user's clicked items) and a negative share (one minus
that). Core negatives picked by subset selection get their negative mass
raised to 1.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .graph import InteractionGraph, DatasetSplit
from .regions import RegionPartition, build_partition, DEFAULT_KHOP
from .similarity import WeightMatrix, build_weight_matrix

SAMPLER_KINDS = ("ns4ar", "uniform_rns", "dns_hard", "exposure_argmax")


@dataclass
class SamplerConfig:
    kind: str = "ns4ar"
    k: int = 4
    n: int = 4
    dns_pool: int = 16
    seed: int = 0
    core_quota: float = 0.5
    restrict_regions: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.kind == "dns_hard" and self.dns_pool < 2:
            raise ValueError(f"dns_pool must be >= 2 for dns_hard, got {self.dns_pool}")
        if not 0.0 <= self.core_quota <= 1.0:
            raise ValueError(f"core_quota must be in [0, 1], got {self.core_quota}")


class Pool(NamedTuple):
    items: np.ndarray
    mass: np.ndarray
    regions: np.ndarray


_EMPTY_POOL = Pool(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0, dtype=int))


@dataclass
class SampleSets:
    """Per-user positive and negative pools plus the core-negative lists."""

    n: int
    positive: dict[int, Pool] = field(default_factory=dict)
    negative: dict[int, Pool] = field(default_factory=dict)
    core: dict[int, np.ndarray] = field(default_factory=dict)

    def negative_pool(self, u: int) -> Pool:
        if u not in self.negative:
            raise KeyError(f"user {u} has no sample pools (absent from partition)")
        return self.negative[u]

    def positive_pool(self, u: int) -> Pool:
        if u not in self.positive:
            raise KeyError(f"user {u} has no sample pools (absent from partition)")
        return self.positive[u]


def build_sets(g: InteractionGraph, partition: RegionPartition,
               weights: WeightMatrix, selection: dict[int, list[int]],
               exclude: dict[int, set[int]] | None = None) -> SampleSets:
    """Assemble the per-user pools from the partition, weights and core picks.

    ``exclude`` removes items (held-out positives) from negative pools only.
    With a single region there is no structure to exploit: every non-clicked
    item is a unit-mass negative and the clicked items are the positives.
    """
    n = partition.n
    sets = SampleSets(n=n)
    exclude = exclude or {}
    for u in partition.users():
        clicked = set(g.user_items(u))
        banned = exclude.get(u, set())
        region_map = partition.region_of[u]
        core_in = set(selection.get(u, ()))
        pos_items, pos_mass, pos_reg = [], [], []
        neg_items, neg_mass, neg_reg = [], [], []
        for item in sorted(region_map):
            r = region_map[item]
            if n == 1:
                if item in clicked:
                    pos_items.append(item); pos_mass.append(1.0); pos_reg.append(r)
                elif item not in banned:
                    neg_items.append(item); neg_mass.append(1.0); neg_reg.append(r)
                continue
            if r == 1:
                pos_items.append(item); pos_mass.append(1.0); pos_reg.append(r)
            elif r == n:
                if item not in banned:
                    neg_items.append(item); neg_mass.append(1.0); neg_reg.append(r)
            else:
                wsq = max((weights.normalized_sq(item, c) for c in clicked), default=0.0)
                pos_items.append(item); pos_mass.append(wsq); pos_reg.append(r)
                if item not in banned:
                    mass = 1.0 - wsq
                    if item in core_in:
                        mass = max(mass, 1.0)
                    neg_items.append(item); neg_mass.append(mass); neg_reg.append(r)
        sets.positive[u] = Pool(np.array(pos_items, dtype=int), np.array(pos_mass),
                                np.array(pos_reg, dtype=int))
        sets.negative[u] = Pool(np.array(neg_items, dtype=int), np.array(neg_mass),
                                np.array(neg_reg, dtype=int))
        neg_set = set(neg_items)
        sets.core[u] = np.array(sorted(i for i in core_in if i in neg_set), dtype=int)
    return sets


def _weighted_no_replace(items: np.ndarray, mass: np.ndarray, k: int, rng) -> np.ndarray:
    p = mass / mass.sum()
    return rng.choice(items, size=k, replace=False, p=p, shuffle=False)


def sample_negatives(sets: SampleSets, u: int, k: int, rng,
                     core_quota: float = 0.5, flags: list | None = None) -> np.ndarray:
    """Draw k negatives for u without replacement, proportional to mass.

    Core negatives are guaranteed at least ``min(int(k * core_quota), |core|)``
    of the k slots. A pool with fewer than k positive-mass items falls back
    to sampling with replacement and records u in ``flags``.
    """
    pool = sets.negative_pool(u)
    alive = pool.mass > 0
    items, mass = pool.items[alive], pool.mass[alive]
    if items.size == 0:
        raise ValueError(f"user {u}: negative pool is empty")
    if items.size < k:
        if flags is not None:
            flags.append(u)
        p = mass / mass.sum()
        return rng.choice(items, size=k, replace=True, p=p)
    core = sets.core.get(u, np.zeros(0, dtype=int))
    core_mask = np.isin(items, core)
    quota = min(int(k * core_quota), int(core_mask.sum()))
    drawn = []
    if quota > 0:
        drawn.append(_weighted_no_replace(items[core_mask], mass[core_mask], quota, rng))
        rest_mask = ~core_mask
    else:
        rest_mask = np.ones(items.size, dtype=bool)
    remaining = k - quota
    if remaining > 0:
        rest_items, rest_mass = items[rest_mask], mass[rest_mask]
        if rest_items.size < remaining or rest_mass.sum() == 0:
            # quota consumed too much of the pool; redraw across everything
            if flags is not None:
                flags.append(u)
            return rng.choice(items, size=k, replace=True, p=mass / mass.sum())
        drawn.append(_weighted_no_replace(rest_items, rest_mass, remaining, rng))
    return np.concatenate(drawn)


def exposure_argmax(u: int, exposed: dict[int, tuple[int, ...]],
                    sets: SampleSets, model) -> int:
    """Most confidently rejectable exposed item for u.

    Scores each exposed-not-clicked candidate v with sigmoid(c(v) * <e_u, e_v>)
    where c(v) is v's exposure count when v also belongs to the negative set
    and 1 otherwise; ties break toward the smaller item id.
    """
    m_u = exposed.get(u, ())
    if not m_u:
        raise ValueError(f"user {u} has no exposed-not-clicked items")
    pool = sets.negative_pool(u)
    in_negative = set(pool.items[pool.mass > 0].tolist())
    counts = Counter(m_u)
    best_item, best_score = None, -np.inf
    for v in sorted(set(m_u)):
        c = counts[v] if v in in_negative else 1
        score = float(expit(c * model.score(u, v)))
        if score > best_score:
            best_item, best_score = v, score
    return best_item


def baseline_uniform(eligible: np.ndarray, k: int, rng, flags=None, user=None) -> np.ndarray:
    """k uniform draws from the eligible items, without replacement when possible."""
    if eligible.size == 0:
        raise ValueError(f"user {user}: no eligible negatives")
    if eligible.size < k:
        if flags is not None:
            flags.append(user)
        return rng.choice(eligible, size=k, replace=True)
    return rng.choice(eligible, size=k, replace=False, shuffle=False)


def baseline_dns(eligible: np.ndarray, k: int, dns_pool: int, score_of, rng,
                 flags=None, user=None) -> np.ndarray:
    """Dynamic hard-negative draw: score dns_pool uniform candidates with the
    current model and keep the k highest."""
    pool = baseline_uniform(eligible, max(dns_pool, k), rng, flags=flags, user=user)
    scores = np.asarray([score_of(int(v)) for v in pool])
    order = np.lexsort((pool, -scores))
    return pool[order[:k]]


def rng_stream(seed: int, worker: int = 0) -> np.random.Generator:
    """Independent RNG stream for (seed, worker); workers never collide."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(worker,)))


class NegativeSampler:
    """Dispatches per-interaction negative draws for the configured strategy.

    ``fused`` (the current node embedding table) must be supplied by the
    caller for the model-dependent strategies so that training controls how
    stale the scores are.
    """

    def __init__(self, config: SamplerConfig, g: InteractionGraph,
                 split: DatasetSplit, sets: SampleSets | None = None,
                 partition: RegionPartition | None = None):
        self.config = config
        self.sets = sets
        self.partition = partition
        self.flags: list[int] = []
        self._exposed = g.exposed_not_clicked()
        train_by_user = split.train_items(g)
        heldout = split.heldout_items(g)
        self._train_clicks = train_by_user
        all_items = np.arange(g.n_items)
        self._eligible: dict[int, np.ndarray] = {}
        self._restricted: dict[int, np.ndarray] = {}
        for u in range(g.n_users):
            # baselines are the literature's RNS/DNS: anything the user has
            # not clicked in training is fair game (false negatives included);
            # only the region-aware pools shield held-out positives
            clicked = train_by_user[u]
            if clicked:
                mask = np.ones(g.n_items, dtype=bool)
                mask[list(clicked)] = False
                pool = all_items[mask]
            else:
                pool = all_items
            self._eligible[u] = pool
            if config.restrict_regions is not None:
                if partition is None:
                    raise ValueError("region-restricted sampling needs a partition")
                allowed = set(partition.items_in_region(u, config.restrict_regions))
                self._restricted[u] = np.array(
                    sorted(allowed - clicked - heldout[u]), dtype=int)

    def restricted_pool_size(self) -> int:
        """Total restricted-pool size across users (0 means the region set is
        globally empty and the configuration should be skipped)."""
        return sum(p.size for p in self._restricted.values())

    def draw(self, u: int, k: int, rng, fused_score=None) -> np.ndarray:
        cfg = self.config
        if cfg.restrict_regions is not None:
            pool = self._restricted[u]
            if pool.size == 0:
                # user exhausted the restricted regions; widen rather than fail
                self.flags.append(u)
                pool = self._eligible[u]
            items = baseline_uniform(pool, k, rng, self.flags, u)
        elif cfg.kind == "ns4ar":
            items = sample_negatives(self.sets, u, k, rng, cfg.core_quota, self.flags)
        elif cfg.kind == "uniform_rns":
            items = baseline_uniform(self._eligible[u], k, rng, self.flags, u)
        elif cfg.kind == "dns_hard":
            items = baseline_dns(self._eligible[u], k, cfg.dns_pool, fused_score, rng,
                                 self.flags, u)
        else:  # exposure_argmax
            items = self._exposure_topk(u, k, rng, fused_score)
        train = self._train_clicks[u]
        if train.intersection(items.tolist()):
            raise AssertionError(f"sampled a training click for user {u}")
        return items

    def _exposure_topk(self, u: int, k: int, rng, fused_score) -> np.ndarray:
        candidates = sorted(set(self._exposed.get(u, ())))
        if not candidates:
            return baseline_uniform(self._eligible[u], k, rng, self.flags, u)
        arr = np.array(candidates, dtype=int)
        scores = np.asarray([fused_score(int(v)) for v in arr])
        order = np.lexsort((arr, -scores))
        chosen = arr[order[:k]]
        if chosen.size < k:
            extra = baseline_uniform(
                np.setdiff1d(self._eligible[u], chosen), k - chosen.size, rng,
                self.flags, u)
            chosen = np.concatenate([chosen, extra])
        return chosen


def build_negative_sampler(g: InteractionGraph, split: DatasetSplit,
                           config: SamplerConfig, khop: int = DEFAULT_KHOP,
                           train_graph: InteractionGraph | None = None,
                           partition: RegionPartition | None = None,
                           weights: WeightMatrix | None = None,
                           selection: dict[int, list[int]] | None = None,
                           m: int | None = None) -> NegativeSampler:
    """Construct a sampler, building any pipeline stage not supplied."""
    from .graph import restrict_clicks
    from .subset import select_from_regions

    needs_partition = config.kind == "ns4ar" or config.restrict_regions is not None
    if train_graph is None:
        train_graph = restrict_clicks(g, split.train)
    if needs_partition and partition is None:
        partition = build_partition(train_graph, n=config.n, khop=khop)
    sets = None
    if config.kind == "ns4ar":
        if weights is None:
            weights = build_weight_matrix(train_graph)
        if selection is None:
            m = m if m is not None else 5 * config.k
            exposed = train_graph.exposed_not_clicked()
            selection = {
                u: select_from_regions(train_graph, u, partition.region_of[u],
                                       weights, exposed, n=partition.n, m=m)
                for u in partition.users()
            }
        sets = build_sets(train_graph, partition, weights, selection,
                          exclude=split.heldout_items(g))
    return NegativeSampler(config, g, split, sets=sets, partition=partition)


def restricted(config: SamplerConfig, regions) -> SamplerConfig:
    """Copy of the config that draws uniformly from the given regions only."""
    return replace(config, restrict_regions=tuple(sorted(regions)))
