"""End-to-end experiment pipeline: config parsing, stage orchestration and
artifact emission (partition/weights dumps, checkpoint, loss and metric CSVs,
and a reproducibility manifest)."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

from .graph import (InteractionGraph, DatasetSplit, LoadResult, load_interactions,
                    export_interactions, save_id_map, split_dataset, restrict_clicks)
from .regions import (RegionPartition, ShellArray, user_shells, assign_regions,
                      write_partition, read_partition, DEFAULT_KHOP)
from .similarity import (WeightMatrix, build_weight_matrix, write_weights,
                         write_normalized_sq, read_weight_files)
from .subset import select_from_regions
from .sampler import SamplerConfig, NegativeSampler, SampleSets, build_sets
from .model import (TrainConfig, EmbeddingModel, train, save_checkpoint,
                    load_checkpoint)
from .metrics import MetricValues, evaluate
from .synthetic import SyntheticSpec, generate_synthetic


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"stage {stage}: {error}")
        self.stage = stage


class MissingArtifactError(FileNotFoundError):
    """A stage needs a cached upstream artifact that does not exist."""

    def __init__(self, name: str, path: Path):
        super().__init__(f"missing {name} artifact: {path}")
        self.artifact = name
        self.path = Path(path)


@dataclass
class DatasetConfig:
    path: str | None = None
    delimiter: str = "tab"


@dataclass
class SplitConfig:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0


@dataclass
class RegionConfig:
    khop: int = DEFAULT_KHOP
    n: int | str = 4  # "auto" picks min(khop, max shell count + 1)

    def __post_init__(self):
        if self.khop < 1:
            raise ConfigError(f"khop must be >= 1, got {self.khop}")
        if self.n != "auto" and (not isinstance(self.n, int) or self.n < 1):
            raise ConfigError(f"n must be a positive integer or 'auto', got {self.n!r}")


@dataclass
class EvalConfig:
    K: int = 20
    seeds: tuple[int, ...] = ()  # seed grid for ablate/sweep; empty = split seed


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    synthetic: SyntheticSpec | None = None
    split: SplitConfig = field(default_factory=SplitConfig)
    regions: RegionConfig = field(default_factory=RegionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/out"
    core_m: int | None = None  # candidates kept by subset selection; default 5k

    @property
    def sampler(self) -> SamplerConfig:
        return self.train.sampler

    def validate(self) -> "ExperimentConfig":
        if self.dataset.path is None and self.synthetic is None:
            raise ConfigError("config needs a dataset path or a synthetic spec")
        if self.dataset.path is not None and self.synthetic is not None:
            raise ConfigError("config has both a dataset path and a synthetic spec")
        return self

    def seed_grid(self) -> tuple[int, ...]:
        return self.eval.seeds or (self.split.seed,)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Reseed every stochastic stage (split, sampling, training) at once;
        a synthetic dataset keeps its own seed so grids stay paired."""
        return replace(
            self,
            split=replace(self.split, seed=seed),
            train=replace(self.train, seed=seed,
                          sampler=replace(self.train.sampler, seed=seed)),
        )

    def to_dict(self) -> dict:
        out = {
            "dataset": asdict(self.dataset),
            "split": {"ratios": list(self.split.ratios), "seed": self.split.seed},
            "regions": {"khop": self.regions.khop, "n": self.regions.n},
            "sampler": asdict(self.train.sampler),
            "train": {k: v for k, v in asdict(self.train).items() if k != "sampler"},
            "eval": {"K": self.eval.K, "seeds": list(self.eval.seeds)},
            "output": {"dir": self.out_dir},
        }
        if self.core_m is not None:
            out["sampler"]["m"] = self.core_m
        if self.synthetic is not None:
            out["synthetic"] = asdict(self.synthetic)
        rr = out["sampler"].pop("restrict_regions", None)
        if rr:
            out["sampler"]["restrict_regions"] = list(rr)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        cfg = cls()
        if "dataset" in data:
            cfg.dataset = DatasetConfig(**data.pop("dataset"))
        if "synthetic" in data:
            cfg.synthetic = SyntheticSpec(**data.pop("synthetic"))
        if "split" in data:
            raw = data.pop("split")
            cfg.split = SplitConfig(ratios=tuple(raw.get("ratios", (0.8, 0.1, 0.1))),
                                    seed=raw.get("seed", 0))
        if "regions" in data:
            cfg.regions = RegionConfig(**data.pop("regions"))
        sampler_raw = dict(data.pop("sampler", {}))
        core_m = sampler_raw.pop("m", None)
        if "restrict_regions" in sampler_raw and sampler_raw["restrict_regions"] is not None:
            sampler_raw["restrict_regions"] = tuple(sampler_raw["restrict_regions"])
        train_raw = dict(data.pop("train", {}))
        cfg.train = TrainConfig(sampler=SamplerConfig(**sampler_raw), **train_raw)
        cfg.core_m = core_m
        if "eval" in data:
            raw = data.pop("eval")
            cfg.eval = EvalConfig(K=raw.get("K", 20), seeds=tuple(raw.get("seeds", ())))
        if "output" in data:
            cfg.out_dir = data.pop("output").get("dir", cfg.out_dir)
        if data:
            raise ConfigError(f"unknown config sections: {sorted(data)}")
        return cfg.validate()


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = tuple(float(x) for x in text.split(","))
    if len(parts) != 3:
        raise ConfigError(f"ratios need three values, got {text!r}")
    return parts


def _parse_n(text: str):
    return text if text == "auto" else int(text)


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


_SCHEMA: dict[str, dict] = {
    "dataset": {"path": str, "delimiter": str},
    "synthetic": {"users": int, "items": int, "communities": int,
                  "p_intra": float, "p_cross": float, "exposure_rate": float,
                  "seed": int},
    "split": {"ratios": _parse_ratios, "seed": int},
    "regions": {"khop": int, "n": _parse_n},
    "sampler": {"kind": str, "k": int, "dns_pool": int, "seed": int,
                "core_quota": float, "m": int},
    "train": {"gamma": float, "lr": float, "epochs": int, "batch_size": int,
              "seed": int, "dim": int, "layers": int, "refresh": str},
    "eval": {"K": int, "seeds": _parse_seeds},
    "output": {"dir": str},
}


def load_config(path) -> ExperimentConfig:
    """Read an experiment config from sectioned key=value text, or from the
    ``config`` block of a previously written manifest (.json)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return ExperimentConfig.from_dict(data.get("config", data))
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (e.g. eval K)
    parser.read(path, encoding="utf-8")
    raw: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            convert = schema[key]
            try:
                raw[section][key] = convert(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# artifacts


ARTIFACTS = {
    "interactions": "interactions.tsv",
    "user_ids": "users.idmap",
    "item_ids": "items.idmap",
    "partition": "partition.tsv",
    "weights": "weights.tsv",
    "weights_nsq": "weights_nsq.tsv",
    "core": "core_negatives.tsv",
    "checkpoint": "checkpoint.npz",
    "loss": "loss.csv",
    "metrics": "metrics.csv",
    "manifest": "manifest.json",
}


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / ARTIFACTS[name]

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(name, p)
        return p


def git_blob_sha1(path) -> str:
    """Content hash the way git hashes a blob."""
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# stages


def materialize_graph(config: ExperimentConfig) -> LoadResult:
    config.validate()
    if config.dataset.path is not None:
        return load_interactions(config.dataset.path, config.dataset.delimiter)
    g = generate_synthetic(config.synthetic)
    return LoadResult(graph=g,
                      user_ids=tuple(str(u) for u in range(g.n_users)),
                      item_ids=tuple(str(i) for i in range(g.n_items)))


def resolve_region_count(config: ExperimentConfig, shells_by_user: dict) -> int:
    if config.regions.n != "auto":
        return int(config.regions.n)
    max_shells = max((len(s.shells) for s in shells_by_user.values()), default=0)
    return max(1, min(config.regions.khop, max_shells + 1))


@dataclass
class PipelineState:
    """Everything the training stage needs, in memory."""

    graph: InteractionGraph
    split: DatasetSplit
    train_graph: InteractionGraph
    n: int
    partition: RegionPartition
    weights: WeightMatrix
    selection: dict[int, list[int]]
    sets: SampleSets | None
    sampler: NegativeSampler
    shells: dict[int, ShellArray] | None = None


def prepare(g: InteractionGraph, config: ExperimentConfig) -> PipelineState:
    """Split the data and build partition, weights, core picks and pools."""
    split = split_dataset(g, config.split.ratios, config.split.seed)
    train_graph = restrict_clicks(g, split.train)
    khop = config.regions.khop
    shells_by_user = {u: user_shells(train_graph, u, khop)
                      for u in range(train_graph.n_users)}
    n = resolve_region_count(config, shells_by_user)
    universe = range(g.n_items)
    region_of = {u: assign_regions(shells_by_user[u], n, universe)
                 for u in range(train_graph.n_users)}
    partition = RegionPartition(n=n, region_of=region_of, khop=khop)
    weights = build_weight_matrix(train_graph)
    sampler_cfg = replace(config.sampler, n=n)
    state_sets = None
    selection: dict[int, list[int]] = {}
    if sampler_cfg.kind == "ns4ar":
        m = config.core_m if config.core_m is not None else 5 * sampler_cfg.k
        exposed = train_graph.exposed_not_clicked()
        selection = {u: select_from_regions(train_graph, u, region_of[u],
                                            weights, exposed, n=n, m=m)
                     for u in partition.users()}
        state_sets = build_sets(train_graph, partition, weights, selection,
                                exclude=split.heldout_items(g))
    sampler = NegativeSampler(sampler_cfg, g, split, sets=state_sets,
                              partition=partition)
    return PipelineState(graph=g, split=split, train_graph=train_graph, n=n,
                         partition=partition, weights=weights,
                         selection=selection, sets=state_sets, sampler=sampler,
                         shells=shells_by_user)


def train_state(state: PipelineState, config: ExperimentConfig):
    cfg = replace(config.train, sampler=state.sampler.config)
    return train(state.graph, state.split, cfg, sampler=state.sampler)


def train_eval(g: InteractionGraph, config: ExperimentConfig) -> MetricValues:
    """Light in-memory run: prepare, train and evaluate, no artifacts."""
    state = prepare(g, config)
    model, _ = train_state(state, config)
    return evaluate(model, state.split, g, K=config.eval.K)


def _write_core(selection: dict[int, list[int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in sorted(selection):
            for item in selection[u]:
                fh.write(f"{u}\t{item}\n")


def _write_loss(curve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(curve, start=1):
            fh.write(f"{epoch},{loss!r}\n")


METRIC_COLUMNS = ("sampler", "n", "khop", "k", "gamma", "seed", "K",
                  "recall", "ndcg", "hr")


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_row(config: ExperimentConfig, n: int, values: MetricValues) -> dict:
    return {
        "sampler": config.sampler.kind,
        "n": n,
        "khop": config.regions.khop,
        "k": config.sampler.k,
        "gamma": config.train.gamma,
        "seed": config.split.seed,
        "K": config.eval.K,
        "recall": values.recall,
        "ndcg": values.ndcg,
        "hr": values.hr,
    }


@dataclass
class PipelineResult:
    metrics: MetricValues
    artifacts: dict[str, Path]
    manifest: dict


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def write_graph_artifacts(store: ArtifactStore, loaded: LoadResult) -> None:
    export_interactions(loaded.graph, store.path("interactions"),
                        loaded.user_ids, loaded.item_ids)
    save_id_map(store.path("user_ids"), loaded.user_ids)
    save_id_map(store.path("item_ids"), loaded.item_ids)


def build_manifest(config: ExperimentConfig, store: ArtifactStore,
                   results: dict | None = None) -> dict:
    manifest = {
        "config": config.to_dict(),
        "inputs": {"interactions": git_blob_sha1(store.path("interactions"))},
    }
    if results is not None:
        manifest["results"] = results
    return manifest


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_pipeline(config: ExperimentConfig, out_dir=None) -> PipelineResult:
    """Cold end-to-end run; every stage failure is re-raised naming the stage."""
    store = ArtifactStore(out_dir if out_dir is not None else config.out_dir)
    with _stage("load"):
        loaded = materialize_graph(config)
        write_graph_artifacts(store, loaded)
    with _stage("prepare"):
        state = prepare(loaded.graph, config)
        write_partition(state.partition, store.path("partition"))
        write_weights(state.weights, store.path("weights"))
        write_normalized_sq(state.weights, store.path("weights_nsq"))
        _write_core(state.selection, store.path("core"))
    with _stage("train"):
        model, curve = train_state(state, config)
        save_checkpoint(model, store.path("checkpoint"),
                        id_map_ref=ARTIFACTS["item_ids"])
        _write_loss(curve, store.path("loss"))
    with _stage("eval"):
        values = evaluate(model, state.split, loaded.graph, K=config.eval.K)
        write_metrics_csv([metrics_row(config, state.n, values)],
                          store.path("metrics"))
    with _stage("manifest"):
        manifest = build_manifest(config, store, results=values.as_dict())
        write_manifest(manifest, store.path("manifest"))
    artifacts = {name: store.path(name) for name in ARTIFACTS}
    return PipelineResult(metrics=values, artifacts=artifacts, manifest=manifest)


# ---------------------------------------------------------------------------
# staged subcommands (reuse cached artifacts)


def stage_partition(config: ExperimentConfig, out_dir=None) -> Path:
    store = ArtifactStore(out_dir if out_dir is not None else config.out_dir)
    loaded = materialize_graph(config)
    write_graph_artifacts(store, loaded)
    split = split_dataset(loaded.graph, config.split.ratios, config.split.seed)
    train_graph = restrict_clicks(loaded.graph, split.train)
    khop = config.regions.khop
    shells = {u: user_shells(train_graph, u, khop)
              for u in range(train_graph.n_users)}
    n = resolve_region_count(config, shells)
    region_of = {u: assign_regions(shells[u], n, range(loaded.graph.n_items))
                 for u in range(train_graph.n_users)}
    partition = RegionPartition(n=n, region_of=region_of, khop=khop)
    write_partition(partition, store.path("partition"))
    return store.path("partition")


def stage_weights(config: ExperimentConfig, out_dir=None) -> Path:
    store = ArtifactStore(out_dir if out_dir is not None else config.out_dir)
    loaded = materialize_graph(config)
    write_graph_artifacts(store, loaded)
    split = split_dataset(loaded.graph, config.split.ratios, config.split.seed)
    train_graph = restrict_clicks(loaded.graph, split.train)
    weights = build_weight_matrix(train_graph)
    write_weights(weights, store.path("weights"))
    write_normalized_sq(weights, store.path("weights_nsq"))
    return store.path("weights")


def _state_from_cache(config: ExperimentConfig, store: ArtifactStore) -> PipelineState:
    loaded = materialize_graph(config)
    g = loaded.graph
    split = split_dataset(g, config.split.ratios, config.split.seed)
    train_graph = restrict_clicks(g, split.train)
    partition = read_partition(store.require("partition"))
    weights = read_weight_files(store.require("weights"), store.require("weights_nsq"))
    n = partition.n
    sampler_cfg = replace(config.sampler, n=n)
    selection: dict[int, list[int]] = {}
    sets = None
    if sampler_cfg.kind == "ns4ar":
        m = config.core_m if config.core_m is not None else 5 * sampler_cfg.k
        exposed = train_graph.exposed_not_clicked()
        selection = {u: select_from_regions(train_graph, u, partition.region_of[u],
                                            weights, exposed, n=n, m=m)
                     for u in partition.users()}
        sets = build_sets(train_graph, partition, weights, selection,
                          exclude=split.heldout_items(g))
    sampler = NegativeSampler(sampler_cfg, g, split, sets=sets, partition=partition)
    return PipelineState(graph=g, split=split, train_graph=train_graph, n=n,
                         partition=partition, weights=weights,
                         selection=selection, sets=sets, sampler=sampler)


def stage_train(config: ExperimentConfig, out_dir=None) -> Path:
    store = ArtifactStore(out_dir if out_dir is not None else config.out_dir)
    state = _state_from_cache(config, store)
    _write_core(state.selection, store.path("core"))
    model, curve = train_state(state, config)
    save_checkpoint(model, store.path("checkpoint"), id_map_ref=ARTIFACTS["item_ids"])
    _write_loss(curve, store.path("loss"))
    return store.path("checkpoint")


def stage_eval(config: ExperimentConfig, out_dir=None) -> MetricValues:
    store = ArtifactStore(out_dir if out_dir is not None else config.out_dir)
    loaded = materialize_graph(config)
    split = split_dataset(loaded.graph, config.split.ratios, config.split.seed)
    train_graph = restrict_clicks(loaded.graph, split.train)
    checkpoint = store.require("checkpoint")
    model = load_checkpoint(checkpoint, train_graph)
    values = evaluate(model, split, loaded.graph, K=config.eval.K)
    n = config.regions.n
    if store.path("partition").exists():
        n = read_partition(store.path("partition")).n
    elif n == "auto":
        n = 0  # unknown without the partition cache
    write_metrics_csv([metrics_row(config, n, values)], store.path("metrics"))
    write_graph_artifacts(store, loaded)
    manifest = build_manifest(config, store, results=values.as_dict())
    write_manifest(manifest, store.path("manifest"))
    return values
