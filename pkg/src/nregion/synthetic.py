"""Planted-community bipartite dataset generator for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import InteractionGraph

# exposures lean heavily toward a user's own community
CROSS_EXPOSURE_FACTOR = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    users: int = 200
    items: int = 500
    communities: int = 20
    p_intra: float = 0.15
    p_cross: float = 0.002
    exposure_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.users < 1 or self.items < 1:
            raise ValueError("users and items must be positive")
        if self.communities < 1:
            raise ValueError("communities must be >= 1")
        for name in ("p_intra", "p_cross", "exposure_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


def generate_synthetic(spec: SyntheticSpec) -> InteractionGraph:
    """Draw a planted-community click/exposure graph.

    Users and items get communities round-robin (so community sizes are
    deterministic). Click edges appear with p_intra inside a community and
    p_cross across. Exposure edges are drawn on unclicked pairs,
    preferentially toward the user's own community and toward popular items
    (mimicking exposure bias: what a deployed ranker shows), at
    exposure_rate inside the community and a tenth of that across.
    """
    rng = np.random.default_rng(spec.seed)
    user_comm = np.arange(spec.users) % spec.communities
    item_comm = np.arange(spec.items) % spec.communities
    same = user_comm[:, None] == item_comm[None, :]
    click_p = np.where(same, spec.p_intra, spec.p_cross)
    clicks = rng.random((spec.users, spec.items)) < click_p
    popularity = clicks.sum(axis=0).astype(float)
    if popularity.max() > 0:
        popularity = popularity / popularity.max()
    exposure_p = np.where(same, spec.exposure_rate,
                          spec.exposure_rate * CROSS_EXPOSURE_FACTOR)
    exposure_p = exposure_p * popularity[None, :]
    exposures = (rng.random((spec.users, spec.items)) < exposure_p) & ~clicks
    click_edges = {(int(u), int(i)) for u, i in zip(*np.nonzero(clicks))}
    exposure_edges = {(int(u), int(i)) for u, i in zip(*np.nonzero(exposures))}
    return InteractionGraph(spec.users, spec.items, click_edges, exposure_edges)


def expected_click_count(spec: SyntheticSpec) -> tuple[float, float]:
    """Mean and standard deviation of the click-edge count under the spec."""
    user_comm = np.arange(spec.users) % spec.communities
    item_comm = np.arange(spec.items) % spec.communities
    n_same = int((user_comm[:, None] == item_comm[None, :]).sum())
    n_cross = spec.users * spec.items - n_same
    mean = n_same * spec.p_intra + n_cross * spec.p_cross
    var = (n_same * spec.p_intra * (1 - spec.p_intra)
           + n_cross * spec.p_cross * (1 - spec.p_cross))
    return mean, float(np.sqrt(var))
