"""Command-line experiment driver.

Subcommands run the whole pipeline (``run``) or a single stage against the
cached artifacts of an output directory (``partition``, ``weights``,
``train``, ``eval``, ``ablate``, ``sweep-n``). Any flag overrides the
matching config-file key.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .pipeline import (ExperimentConfig, ConfigError, MissingArtifactError,
                       StageError, ArtifactStore, load_config, run_pipeline,
                       stage_partition, stage_weights, stage_train, stage_eval,
                       materialize_graph, read_partition)
from .experiments import (compare_samplers, sweep_n, region_ablation,
                          write_report_csv, format_report_table)
from .sampler import SAMPLER_KINDS


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (.ini style, or a manifest .json)")
    p.add_argument("--seed", type=int, help="reseed split/sampler/training at once")
    p.add_argument("--n", help="region count (integer or 'auto')")
    p.add_argument("--khop", type=int, help="traversal depth")
    p.add_argument("--k", type=int, help="negatives per positive interaction")
    p.add_argument("--gamma", type=float, help="hinge margin")
    p.add_argument("--sampler", choices=SAMPLER_KINDS, help="negative sampling strategy")
    p.add_argument("--out", help="artifact directory")


def _apply_flags(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.n is not None:
        n = args.n if args.n == "auto" else int(args.n)
        config = replace(config, regions=replace(config.regions, n=n))
    if args.khop is not None:
        config = replace(config, regions=replace(config.regions, khop=args.khop))
    sampler = config.train.sampler
    if args.k is not None:
        sampler = replace(sampler, k=args.k)
    if args.sampler is not None:
        sampler = replace(sampler, kind=args.sampler)
    train_cfg = replace(config.train, sampler=sampler)
    if args.gamma is not None:
        train_cfg = replace(train_cfg, gamma=args.gamma)
    config = replace(config, train=train_cfg)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    return config


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    return _apply_flags(load_config(args.config), args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nregion",
                                     description="region-aware negative sampling experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "full pipeline: load, partition, weights, select, train, eval"),
        ("partition", "compute and cache the region partition"),
        ("weights", "compute and cache the item-item weight matrix"),
        ("train", "train from cached partition and weights"),
        ("eval", "evaluate a cached checkpoint"),
        ("ablate", "per-region sampling ablation"),
        ("sweep-n", "train and evaluate across region counts"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _common_flags(p)
        if name == "ablate":
            p.add_argument("--combine", action="append", default=[],
                           help="extra region combination, e.g. 4,5 (repeatable)")
            p.add_argument("--seeds", help="comma-separated seed grid")
        if name == "sweep-n":
            p.add_argument("values", help="comma-separated region counts, e.g. 1,10,100")
            p.add_argument("--seeds", help="comma-separated seed grid")
    return parser


def _seed_list(arg, config) -> tuple[int, ...]:
    if arg:
        return tuple(int(s) for s in arg.split(","))
    return config.seed_grid()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.command == "run":
            result = run_pipeline(config)
            print(f"recall@{config.eval.K}={result.metrics.recall:.2f} "
                  f"ndcg@{config.eval.K}={result.metrics.ndcg:.2f} "
                  f"hr@{config.eval.K}={result.metrics.hr:.2f}")
            print(f"artifacts in {config.out_dir}")
        elif args.command == "partition":
            path = stage_partition(config)
            print(f"wrote {path}")
        elif args.command == "weights":
            path = stage_weights(config)
            print(f"wrote {path}")
        elif args.command == "train":
            path = stage_train(config)
            print(f"wrote {path}")
        elif args.command == "eval":
            values = stage_eval(config)
            print(f"recall@{config.eval.K}={values.recall:.2f} "
                  f"ndcg@{config.eval.K}={values.ndcg:.2f} "
                  f"hr@{config.eval.K}={values.hr:.2f}")
        elif args.command == "ablate":
            store = ArtifactStore(config.out_dir)
            n = read_partition(store.require("partition")).n
            combos = [tuple(int(r) for r in c.split(",")) for c in args.combine]
            g = materialize_graph(config).graph
            reports, skipped = region_ablation(
                g, config, n=n, K=config.eval.K,
                seeds=_seed_list(args.seeds, config), combos=combos)
            write_report_csv(reports, store.root / "ablation.csv")
            print(format_report_table(reports, title=f"region ablation (n={n})"))
            for label in skipped:
                print(f"skipped {label}: empty region pool")
        else:  # sweep-n
            store = ArtifactStore(config.out_dir)
            values = [int(v) for v in args.values.split(",")]
            g = materialize_graph(config).graph
            reports = sweep_n(g, config, values,
                              seeds=_seed_list(args.seeds, config))
            write_report_csv(reports, store.root / "sweep_n.csv")
            print(format_report_table(reports, title="region-count sweep"))
    except (ConfigError, MissingArtifactError, StageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
