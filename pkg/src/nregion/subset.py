"""Stagewise selection of core negative candidates, scored by BIC and gated
by a two-sided Fisher exact test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import InteractionGraph
from .regions import ShellArray, assign_regions
from .similarity import WeightMatrix

SIGNIFICANCE_LEVEL = 0.05
DEFAULT_STEP = 0.01
DEFAULT_MAX_ITER = 10_000

FEATURE_NAMES = ("region", "weight_mass", "click_degree", "exposure_count")


def bic_score(rss: float, n_obs: int, n_params: int) -> float:
    """n_obs * ln(rss / n_obs) + n_params * ln(n_obs); lower is better.

    rss is floored at machine epsilon so a perfect fit stays finite.
    """
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}")
    if rss < 0:
        raise ValueError(f"rss must be non-negative, got {rss}")
    rss = max(rss, np.finfo(float).eps)
    return n_obs * math.log(rss / n_obs) + n_params * math.log(n_obs)


def _ln_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_exact(table) -> float:
    """Two-sided Fisher exact p-value of a 2x2 contingency table.

    Enumerates every table with the observed margins and sums the
    probabilities of those no more likely than the observed one. Degenerate
    margins (an all-zero row or column) carry no information and give 1.
    """
    (a, b), (c, d) = table
    for v in (a, b, c, d):
        if v < 0 or int(v) != v:
            raise ValueError(f"counts must be non-negative integers, got {table}")
    a, b, c, d = int(a), int(b), int(c), int(d)
    r1, r2 = a + b, c + d
    c1, c2 = a + c, b + d
    n = r1 + r2
    if r1 == 0 or r2 == 0 or c1 == 0 or c2 == 0:
        return 1.0
    denom = _ln_comb(n, c1)
    lo, hi = max(0, c1 - r2), min(r1, c1)
    ln_obs = _ln_comb(r1, a) + _ln_comb(r2, c1 - a) - denom
    # small relative slack keeps ties (equal-probability tables) included
    cutoff = ln_obs + 1e-12
    total = 0.0
    for x in range(lo, hi + 1):
        ln_p = _ln_comb(r1, x) + _ln_comb(r2, c1 - x) - denom
        if ln_p <= cutoff:
            total += math.exp(ln_p)
    return min(total, 1.0)


@dataclass(frozen=True)
class CandidateTable:
    """Feature rows for one user's intermediate-region candidates.

    Columns: region index, summed normalized-squared weight to the user's
    clicked items, item click degree, exposure count w.r.t. the user. The
    target marks candidates the user was exposed to but did not click.
    """

    items: np.ndarray
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.features.shape != (len(self.items), len(self.feature_names)):
            raise ValueError("feature matrix shape mismatch")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if not np.all((self.target == 0) | (self.target == 1)):
            raise ValueError("target must be binary")


@dataclass
class SelectionResult:
    selected: list[int]
    coefficients: np.ndarray
    trace: list[tuple[int, float, float]]  # (feature, bic, residual norm)
    fisher_p: float
    significant: bool
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _empty_result(n_features: int) -> SelectionResult:
    return SelectionResult(selected=[], coefficients=np.zeros(n_features),
                           trace=[], fisher_p=1.0, significant=False)


def stagewise_select(table: CandidateTable, step: float = DEFAULT_STEP,
                     residual_threshold: float | None = None,
                     m: int = 1, max_iter: int = DEFAULT_MAX_ITER) -> SelectionResult:
    """Forward stagewise fit of the candidate features to the target.

    Coefficients start at zero and the residual at the target. Each round
    refits every feature alone against the current residual, keeps the one
    with the best (lowest) BIC, and nudges its coefficient by
    step * sign(correlation). Stops at the residual threshold, when no move
    can shrink the residual, or at max_iter. Candidates are ranked by
    fitted score (ties by ascending item id) and the top m returned; a
    Fisher test on selected/unselected vs target gates significance.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    x = np.asarray(table.features, dtype=float)
    y = np.asarray(table.target, dtype=float)
    n_obs, n_features = x.shape
    if n_obs == 0:
        return _empty_result(n_features)
    col_sq = (x * x).sum(axis=0)
    usable = col_sq > 0
    if not usable.any():
        return _empty_result(n_features)
    if residual_threshold is None:
        residual_threshold = 1e-3 * math.sqrt(n_obs)

    coef = np.zeros(n_features)
    resid = y.copy()
    trace: list[tuple[int, float, float]] = []
    for _ in range(max_iter):
        resid_sq = float(resid @ resid)
        if math.sqrt(resid_sq) <= residual_threshold:
            break
        corr = x.T @ resid
        # single-parameter refit: rss_j = ||r||^2 - corr_j^2 / ||x_j||^2
        rss = np.full(n_features, np.inf)
        rss[usable] = resid_sq - corr[usable] ** 2 / col_sq[usable]
        rss = np.maximum(rss, 0.0)
        active = np.count_nonzero(coef)
        best_j, best_bic = -1, math.inf
        for j in range(n_features):
            if not usable[j]:
                continue
            n_params = active if coef[j] != 0 else active + 1
            b = bic_score(rss[j], n_obs, n_params)
            if b < best_bic:
                best_j, best_bic = j, b
        if best_j < 0 or corr[best_j] == 0:
            break
        delta = step * math.copysign(1.0, corr[best_j])
        new_resid = resid - delta * x[:, best_j]
        new_norm = float(np.linalg.norm(new_resid))
        if new_norm >= math.sqrt(resid_sq):
            break
        coef[best_j] += delta
        resid = new_resid
        trace.append((best_j, best_bic, new_norm))

    scores = x @ coef
    order = np.lexsort((table.items, -scores))
    selected = [int(table.items[idx]) for idx in order[:m]]
    sel_mask = np.zeros(n_obs, dtype=bool)
    sel_mask[order[:m]] = True
    contingency = [
        [int(table.target[sel_mask].sum()), int((~table.target[sel_mask].astype(bool)).sum())],
        [int(table.target[~sel_mask].sum()), int((~table.target[~sel_mask].astype(bool)).sum())],
    ]
    p = fisher_exact(contingency)
    return SelectionResult(selected=selected, coefficients=coef, trace=trace,
                           fisher_p=p, significant=p < SIGNIFICANCE_LEVEL,
                           scores=scores)


def build_candidate_table(g: InteractionGraph, u: int, region_of: dict[int, int],
                          weights: WeightMatrix, exposed: dict,
                          n: int) -> CandidateTable:
    """Assemble the per-user candidate rows from the intermediate regions
    (region indices 2..n-1)."""
    candidates = sorted(i for i, r in region_of.items() if 2 <= r <= n - 1)
    clicked = g.user_items(u)
    exposed_set = set(exposed.get(u, ()))
    rows = []
    target = []
    for i in candidates:
        mass = sum(weights.normalized_sq(i, c) for c in clicked)
        is_exposed = 1 if i in exposed_set else 0
        rows.append((region_of[i], mass, g.degree_item(i), is_exposed))
        target.append(is_exposed)
    features = np.array(rows, dtype=float).reshape(len(candidates), len(FEATURE_NAMES))
    return CandidateTable(items=np.array(candidates, dtype=int),
                          features=features,
                          target=np.array(target, dtype=int))


def select_from_regions(g: InteractionGraph, u: int, region_of: dict[int, int],
                        weights: WeightMatrix, exposed: dict,
                        n: int, m: int,
                        step: float = DEFAULT_STEP,
                        max_iter: int = DEFAULT_MAX_ITER) -> list[int]:
    """Core-negative pick for a user whose region map is already known."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    table = build_candidate_table(g, u, region_of, weights, exposed, n)
    if len(table.items) == 0:
        return []
    result = stagewise_select(table, step=step, m=m, max_iter=max_iter)
    return result.selected


def select_core_negatives(g: InteractionGraph, shells: ShellArray,
                          weights: WeightMatrix, exposed: dict,
                          n: int, m: int,
                          step: float = DEFAULT_STEP,
                          max_iter: int = DEFAULT_MAX_ITER) -> list[int]:
    """Pick the user's core negative items from the intermediate regions."""
    region_of = assign_regions(shells, n, shells.reached_items())
    return select_from_regions(g, shells.user, region_of, weights, exposed,
                               n, m, step=step, max_iter=max_iter)


def write_selection(table: CandidateTable, result: SelectionResult, path) -> None:
    """Dump (item, score, region) rows plus the iteration trace."""
    region_col = table.features[:, 0].astype(int)
    score_of = {int(i): float(s) for i, s in zip(table.items, result.scores)}
    region_by_item = {int(i): int(r) for i, r in zip(table.items, region_col)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# selected items\n")
        for item in result.selected:
            fh.write(f"{item}\t{score_of[item]!r}\t{region_by_item[item]}\n")
        fh.write(f"# fisher_p={result.fisher_p!r}\tsignificant={result.significant}\n")
        fh.write("# trace: feature\tbic\tresidual_norm\n")
        for feature, bic, norm in result.trace:
            fh.write(f"{table.feature_names[feature]}\t{bic!r}\t{norm!r}\n")
