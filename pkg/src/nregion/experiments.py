"""Trend experiments over seed grids: sampler comparison, region-count sweep
and single-region ablation."""

from __future__ import annotations

from dataclasses import replace

from .graph import InteractionGraph
from .metrics import MetricValues, MetricsReport, evaluate
from .pipeline import ExperimentConfig, prepare, train_state, train_eval
from .sampler import restricted


def _runs(g: InteractionGraph, config: ExperimentConfig, seeds) -> list[MetricValues]:
    return [train_eval(g, config.with_seed(s)) for s in seeds]


def compare_samplers(g: InteractionGraph, config: ExperimentConfig,
                     kinds=("ns4ar", "uniform_rns"), seeds=None) -> list[MetricsReport]:
    """Train and evaluate each sampler kind over the seed grid."""
    seeds = tuple(seeds) if seeds is not None else config.seed_grid()
    reports = []
    for kind in kinds:
        cfg = replace(config, train=replace(
            config.train, sampler=replace(config.train.sampler, kind=kind)))
        values = _runs(g, cfg, seeds)
        reports.append(MetricsReport.from_runs(kind, config.eval.K, seeds, values))
    return reports


def sweep_n(g: InteractionGraph, config: ExperimentConfig, n_values,
            seeds=None) -> list[MetricsReport]:
    """Full train+evaluate per region count, ordered by n."""
    if not n_values:
        raise ValueError("n_values must be nonempty")
    seeds = tuple(seeds) if seeds is not None else config.seed_grid()
    reports = []
    for n in sorted(n_values):
        cfg = replace(config, regions=replace(config.regions, n=int(n)))
        values = _runs(g, cfg, seeds)
        reports.append(MetricsReport.from_runs(f"n={n}", config.eval.K, seeds, values))
    return reports


def _ablation_run(g: InteractionGraph, config: ExperimentConfig,
                  regions: tuple[int, ...], seed: int) -> MetricValues | None:
    """One region-restricted training run; None if the region set holds no
    candidate items at all for this seed's split."""
    cfg = config.with_seed(seed)
    cfg = replace(cfg, train=replace(
        cfg.train, sampler=restricted(cfg.train.sampler, regions)))
    state = prepare(g, cfg)
    if state.sampler.restricted_pool_size() == 0:
        return None
    model, _ = train_state(state, cfg)
    return evaluate(model, state.split, g, K=cfg.eval.K)


def region_ablation(g: InteractionGraph, config: ExperimentConfig, n: int,
                    K: int = 20, seeds=None, combos=()):
    """Per-region sampling ablation at region count n.

    Trains once per region (negatives drawn uniformly from that region only)
    plus once per extra region combination, over the seed grid. Returns the
    list of reports and the labels of configurations that were skipped
    because their region pool was globally empty.
    """
    seeds = tuple(seeds) if seeds is not None else config.seed_grid()
    base = replace(config,
                   regions=replace(config.regions, n=int(n)),
                   eval=replace(config.eval, K=K))
    targets = [((r,), f"region={r}") for r in range(1, n + 1)]
    targets += [(tuple(sorted(c)), "regions=" + "+".join(str(r) for r in sorted(c)))
                for c in combos]
    reports: list[MetricsReport] = []
    skipped: list[str] = []
    for regions, label in targets:
        values = []
        empty = False
        for s in seeds:
            v = _ablation_run(g, base, regions, s)
            if v is None:
                empty = True
                break
            values.append(v)
        if empty:
            skipped.append(label)
            continue
        reports.append(MetricsReport.from_runs(label, K, seeds, values))
    return reports, skipped


REPORT_COLUMNS = ("label", "K", "seeds", "recall_mean", "recall_std",
                  "ndcg_mean", "ndcg_std", "hr_mean", "hr_std")


def write_report_csv(reports: list[MetricsReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for rep in reports:
            fields = (rep.label, str(rep.K),
                      ";".join(str(s) for s in rep.seeds),
                      repr(rep.mean.recall), repr(rep.std.recall),
                      repr(rep.mean.ndcg), repr(rep.std.ndcg),
                      repr(rep.mean.hr), repr(rep.std.hr))
            fh.write(",".join(fields) + "\n")


def format_report_table(reports: list[MetricsReport], title: str = "") -> str:
    lines = []
    if title:
        lines.append(title)
    width = max((len(r.label) for r in reports), default=5)
    header = f"{'config':<{width}}  {'Recall':>14}  {'NDCG':>14}  {'HR':>14}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in reports:
        lines.append(
            f"{r.label:<{width}}  "
            f"{r.mean.recall:7.2f}+/-{r.std.recall:<5.2f}  "
            f"{r.mean.ndcg:7.2f}+/-{r.std.ndcg:<5.2f}  "
            f"{r.mean.hr:7.2f}+/-{r.std.hr:<5.2f}")
    return "\n".join(lines)
