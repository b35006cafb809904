"""Experiment runner: ``run``, ``sweep-ratio``, ``inspect`` and ``gen-data``.

Configuration files are INI-style key/value files (schema version 1)::

    [experiment]
    version = 1
    seeds = 0,1,2,3,4
    split = 0.625,0.167,0.208      ; train, val, test fractions

    [dataset]
    source = synthetic             ; synthetic | tudataset | file
    trajectories_per_class = 240   ; synthetic: point_count, hole_count,
    noise_std = 0.05               ;   trajectories_per_class, noise_std,
                                   ;   seed, hole_radius
                                   ; tudataset: path, name   file: path

    [model]
    hidden = 16
    layers = 2
    order_down = 1
    order_up = 1
    strategy = septopk             ; none random max topk selfatt septopk
    ratio = 0.7
    aggregation = mean             ; mean | max
    nonlinearity = relu
    mlp_hidden = 32                ; comma list, empty for a linear head
    score_order = 1

    [train]
    epochs = 150
    patience = 25
    lr = 0.001
    batch_size = 8

Every key is optional except ``[experiment] version`` and
``[dataset] source``. Exit codes: 0 success, 1 configuration error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .datasets import (
    SyntheticFlowConfig,
    generate_synthetic_flow,
    lift_and_featurize,
    load_dataset,
    load_tudataset,
    save_dataset,
    split,
)
from .errors import ConfigError, ScnpError, UnreadableFile
from .model import JkModel, JkModelConfig, is_checkpoint, load_model, save_model
from .pooling import Aggregation, Strategy
from .conv import Nonlinearity
from .training import TrainConfig, evaluate, train

log = logging.getLogger("scnp")

SCHEMA_VERSION = 1

_SYNTHETIC_KEYS = {f.name: f.type for f in fields(SyntheticFlowConfig)}
_MODEL_KEYS = {
    "hidden": int,
    "layers": int,
    "order_down": int,
    "order_up": int,
    "strategy": Strategy,
    "ratio": float,
    "aggregation": Aggregation,
    "nonlinearity": Nonlinearity,
    "mlp_hidden": "int_list",
    "score_order": int,
}
_TRAIN_KEYS = {
    "epochs": int,
    "patience": int,
    "lr": float,
    "batch_size": int,
    "beta1": float,
    "beta2": float,
    "eps": float,
}


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    split: tuple[float, float, float] = (0.625, 0.167, 0.208)
    out: str | None = None
    version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "dataset": dict(self.dataset),
            "model": {k: (v.value if hasattr(v, "value") else v) for k, v in self.model.items()},
            "train": asdict(self.train),
            "seeds": list(self.seeds),
            "split": list(self.split),
        }


def _convert(section: str, key: str, raw: str, kind):
    name = f"{section}.{key}"
    try:
        if kind == "int_list":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if isinstance(kind, type) and issubclass(kind, str) and kind is not str:
            return kind(raw.strip().lower())
        return raw.strip()
    except ValueError:
        raise ConfigError(name, f"invalid value {raw!r}") from None


def _float_list(name, raw, n=None):
    try:
        out = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {raw!r}") from None
    if n is not None and len(out) != n:
        raise ConfigError(name, f"expected {n} values, got {len(out)}")
    return out


def _int_list(name, raw):
    try:
        out = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated integers, got {raw!r}") from None
    if not out:
        raise ConfigError(name, "must not be empty")
    return out


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    known = {"experiment", "dataset", "model", "train"}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(section, "unknown section")

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    if "version" not in exp:
        raise ConfigError("experiment.version", "missing")
    version = _convert("experiment", "version", exp["version"], int)
    if version != SCHEMA_VERSION:
        raise ConfigError("experiment.version", f"unsupported schema version {version}")
    for key in exp:
        if key not in {"version", "seeds", "split", "out"}:
            raise ConfigError(f"experiment.{key}", "unknown key")
    seeds = _int_list("experiment.seeds", exp["seeds"]) if "seeds" in exp else [0, 1, 2, 3, 4]
    fractions = tuple(_float_list("experiment.split", exp["split"], 3)) if "split" in exp else (0.625, 0.167, 0.208)
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigError("experiment.split", "fractions must be non-negative and sum to 1")

    if not cp.has_section("dataset") or "source" not in cp["dataset"]:
        raise ConfigError("dataset.source", "missing")
    ds = cp["dataset"]
    source = ds["source"].strip().lower()
    allowed = {
        "synthetic": set(_SYNTHETIC_KEYS),
        "tudataset": {"path", "name"},
        "file": {"path"},
    }
    if source not in allowed:
        raise ConfigError("dataset.source", f"unknown source {source!r}; expected one of {sorted(allowed)}")
    dataset = {"source": source}
    for key in ds:
        if key == "source":
            continue
        if key not in allowed[source]:
            raise ConfigError(f"dataset.{key}", f"not valid for source {source!r}")
        kind = _SYNTHETIC_KEYS.get(key, str) if source == "synthetic" else str
        dataset[key] = _convert("dataset", key, ds[key], kind)
    if source == "synthetic":
        try:
            dataset = {"source": source, **asdict(SyntheticFlowConfig(**{k: v for k, v in dataset.items() if k != "source"}))}
        except ValueError as exc:
            raise ConfigError("dataset", str(exc)) from None
    for key in sorted(allowed[source]):
        if key not in dataset:
            raise ConfigError(f"dataset.{key}", "missing")

    model = {}
    if cp.has_section("model"):
        for key, raw in cp["model"].items():
            if key not in _MODEL_KEYS:
                raise ConfigError(f"model.{key}", "unknown key")
            model[key] = _convert("model", key, raw, _MODEL_KEYS[key])
    train_kw = {}
    if cp.has_section("train"):
        for key, raw in cp["train"].items():
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"train.{key}", "unknown key")
            train_kw[key] = _convert("train", key, raw, _TRAIN_KEYS[key])
    try:
        train_cfg = TrainConfig(**train_kw)
    except ValueError as exc:
        raise ConfigError("train", str(exc)) from None
    if "ratio" in model and not 0.0 < model["ratio"] <= 1.0:
        raise ConfigError("model.ratio", "must lie in (0, 1]")
    return ExperimentConfig(dataset, model, train_cfg, seeds, fractions, exp.get("out"), version)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from None
    return parse_config(text)


def build_dataset(source_cfg: dict):
    source = source_cfg["source"]
    if source == "synthetic":
        kw = {k: v for k, v in source_cfg.items() if k != "source"}
        try:
            cfg = SyntheticFlowConfig(**kw)
        except ValueError as exc:
            raise ConfigError("dataset", str(exc)) from None
        return generate_synthetic_flow(cfg)
    if source == "tudataset":
        return [lift_and_featurize(g) for g in load_tudataset(source_cfg["path"], source_cfg["name"])]
    return load_dataset(source_cfg["path"])


def model_config_for(cfg: ExperimentConfig, dataset) -> JkModelConfig:
    m = dict(cfg.model)
    kw = {
        "in_channels": dataset[0].X.shape[1],
        "num_classes": max(s.label for s in dataset) + 1,
    }
    renames = {"layers": "num_layers"}
    for key, value in m.items():
        kw[renames.get(key, key)] = value
    try:
        return JkModelConfig(**kw)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(cfg: ExperimentConfig, out_dir=None, dataset=None) -> dict:
    """Train and test once per seed; write ``results.json`` and per-seed histories."""
    out = Path(out_dir or cfg.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg.dataset) if dataset is None else dataset
    mcfg = model_config_for(cfg, dataset)
    accs, best_epochs, epochs_run = [], [], []
    for seed in cfg.seeds:
        tr, va, te = split(dataset, cfg.split, seed=seed)
        model = JkModel.init(mcfg, seed=seed)
        best, hist = train(model, tr, va, replace(cfg.train, seed=seed))
        acc = evaluate(best, te, rng=np.random.default_rng([seed, 3]))
        log.info("seed %d: test accuracy %.4f after %d epochs", seed, acc, len(hist))
        accs.append(acc)
        best_epochs.append(hist.best_epoch + 1)
        epochs_run.append(len(hist))
        hist.to_csv(out / f"history_seed{seed}.csv")
        save_model(best, out / f"model_seed{seed}.ckpt")
    results = {
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "test_accuracy": accs,
        "mean": float(np.mean(accs)),
        "std": float(np.std(accs)),
        "best_epoch": best_epochs,
        "epochs_run": epochs_run,
    }
    results["config"]["model"] = mcfg.to_dict()
    _atomic_write(out / "results.json", json.dumps(results, indent=2, sort_keys=True) + "\n")
    return results


def sweep_ratio(cfg: ExperimentConfig, ratios, strategies, out_dir=None) -> list[dict]:
    """Multi-seed pipeline for every (strategy, ratio) cell; writes ``sweep.csv``."""
    out = Path(out_dir or cfg.out or "results")
    for r in ratios:
        if not 0.0 < r <= 1.0:
            raise ConfigError("--ratio", f"ratio {r} outside (0, 1]")
    dataset = build_dataset(cfg.dataset)
    rows = []
    for strategy in strategies:
        for r in ratios:
            cell = replace(cfg, model={**cfg.model, "strategy": Strategy(strategy), "ratio": r})
            res = run_experiment(cell, out / f"{Strategy(strategy).value}_r{r:g}", dataset)
            rows.append({"ratio": r, "strategy": Strategy(strategy).value, "mean_acc": res["mean"], "std_acc": res["std"]})
    lines = ["ratio,strategy,mean_acc,std_acc"]
    lines += [f"{row['ratio']:g},{row['strategy']},{row['mean_acc']!r},{row['std_acc']!r}" for row in rows]
    _atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")
    return rows


def inspect_path(path) -> str:
    """Human-readable summary of a dataset file or model checkpoint."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableFile(f"{path} is not a readable file")
    if is_checkpoint(path):
        model = load_model(path)
        counts = model.layer_parameter_counts()
        lines = [f"checkpoint {path.name}: strategy={model.config.strategy.value} ratio={model.config.ratio:g}"]
        lines += [f"  {group}: {n} parameters" for group, n in counts.items()]
        lines.append(f"  total: {sum(counts.values())} parameters")
        return "\n".join(lines)
    samples = load_dataset(path)
    if len(samples) == 1:
        c = samples[0].complex
        return f"V={c.vertex_count} E={c.num_edges} T={c.num_triangles}"
    stats = {
        k: np.array([getattr(s.complex, a) for s in samples])
        for k, a in (("V", "vertex_count"), ("E", "num_edges"), ("T", "num_triangles"))
    }
    lines = [f"{len(samples)} samples, {samples[0].X.shape[1]} signal channels"]
    for k, v in stats.items():
        lines.append(f"  {k}: min={v.min()} mean={v.mean():.1f} max={v.max()}")
    labels, counts = np.unique([s.label for s in samples], return_counts=True)
    lines.append("  classes: " + ", ".join(f"{l}={c}" for l, c in zip(labels, counts)))
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scnp", description="Simplicial convolutional networks with pooling")
    sub = p.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="train and evaluate over every seed")
    sweep = sub.add_parser("sweep-ratio", help="accuracy versus pooling ratio")
    for sp_ in (run, sweep):
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--out")
        sp_.add_argument("--seeds", help="comma-separated seeds overriding the config")
    run.add_argument("--strategy")
    run.add_argument("--ratio", type=float)
    sweep.add_argument("--strategy", default="topk,septopk,max", help="comma-separated strategies")
    sweep.add_argument("--ratio", default="0.3,0.5,0.7", help="comma-separated ratios")
    insp = sub.add_parser("inspect", help="summarize a dataset file or checkpoint")
    insp.add_argument("path")
    gen = sub.add_parser("gen-data", help="write the configured dataset to a file")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _strategy(raw: str) -> Strategy:
    try:
        return Strategy(raw.strip().lower())
    except ValueError:
        raise ConfigError("--strategy", f"unknown strategy {raw!r}") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verb == "inspect":
            print(inspect_path(args.path))
            return 0
        cfg = load_config(args.config)
        if getattr(args, "seeds", None):
            cfg = replace(cfg, seeds=_int_list("--seeds", args.seeds))
        if args.verb == "gen-data":
            save_dataset(build_dataset(cfg.dataset), args.out)
            return 0
        if args.verb == "run":
            model = dict(cfg.model)
            if args.strategy:
                model["strategy"] = _strategy(args.strategy)
            if args.ratio is not None:
                if not 0.0 < args.ratio <= 1.0:
                    raise ConfigError("--ratio", f"ratio {args.ratio} outside (0, 1]")
                model["ratio"] = args.ratio
            res = run_experiment(replace(cfg, model=model), args.out)
            print(f"test accuracy {100 * res['mean']:.2f} ± {100 * res['std']:.2f} over {len(res['seeds'])} seeds")
            return 0
        ratios = _float_list("--ratio", args.ratio)
        strategies = [_strategy(s) for s in args.strategy.split(",") if s.strip()]
        for row in sweep_ratio(cfg, ratios, strategies, args.out):
            print(f"{row['strategy']:>8} r={row['ratio']:g}: {100 * row['mean_acc']:.2f} ± {100 * row['std_acc']:.2f}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ScnpError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
