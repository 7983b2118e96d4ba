"""Strict JSON experiment configuration.

A config document has sections ``generator``, ``model``, ``train``,
``objective``, ``eval``, plus optional ``data`` (pre-generated EARF paths)
and ``sweep``. Unknown keys are rejected anywhere; omitted values take the
documented defaults (loss weights fall back to the bounded/unbounded
policy). ``effective_dict`` round-trips: parsing the echoed document yields
an identical experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import ANTICIPATION, EARLY, GeneratorConfig, default_config
from .errors import ConfigError
from .losses import parse_kind
from .objective import ObjectiveSpec, default_lambda
from .trainer import TrainConfig


@dataclass
class EvalConfig:
    observation_fractions: list = field(default_factory=lambda: [0.1, 0.2, 0.25, 0.5, 1.0])
    top_k: int = 5


@dataclass
class SweepConfig:
    kinds: list = field(default_factory=lambda: ["Baseline", "JVS", "Cosine"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])


@dataclass
class ExperimentConfig:
    generator: GeneratorConfig
    hidden_dim: int
    train: TrainConfig
    objective: ObjectiveSpec
    eval: EvalConfig
    sweep: SweepConfig
    data_paths: dict | None
    output_dir: str
    n_train: int
    n_test: int

    @property
    def feature_dim(self):
        return self.generator.feature_dim

    @property
    def num_classes(self):
        return self.generator.num_classes


def _take(section: dict, name: str, allowed: dict):
    """Pop known keys with defaults; reject anything unknown."""
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{name}': {', '.join(sorted(unknown))}"
        )
    return {key: section.get(key, default) for key, default in allowed.items()}


def _expect_mapping(doc, name):
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be an object")
    return value


def parse_losses(entries, mode_unused=None):
    """[{kind, lambda?}] or ["JVS", ...] -> [(LossKind, weight)]."""
    losses = []
    for entry in entries:
        if isinstance(entry, str):
            entry = {"kind": entry}
        if not isinstance(entry, dict):
            raise ConfigError(f"loss entry must be a name or object, got {entry!r}")
        spec = _take(entry, "objective.losses[]", {"kind": None, "lambda": None})
        if spec["kind"] is None:
            raise ConfigError("loss entry is missing 'kind'")
        try:
            kind = parse_kind(spec["kind"])
        except ValueError as e:
            raise ConfigError(str(e)) from e
        lam = spec["lambda"]
        losses.append((kind, default_lambda(kind) if lam is None else float(lam)))
    return losses


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"generator", "model", "train", "objective", "eval", "data",
             "sweep", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    gen_raw = _expect_mapping(doc, "generator")
    mode = gen_raw.get("mode", EARLY)
    if mode not in (EARLY, ANTICIPATION):
        raise ConfigError(f"generator.mode must be 'early' or 'anticipation', got {mode!r}")
    gen_defaults = default_config(mode)
    gen = _take(gen_raw, "generator", {
        "mode": mode,
        "classes": gen_defaults.num_classes,
        "feature_dim": gen_defaults.feature_dim,
        "length": gen_defaults.length,
        "phases": gen_defaults.phases,
        "alpha": gen_defaults.alpha,
        "sigma": gen_defaults.sigma,
        "transition_peak": gen_defaults.transition_peak,
        "clip_length": gen_defaults.clip_length,
        "gap": gen_defaults.gap,
        "seed": 0,
        "n_train": 4000,
        "n_test": 1000,
    })
    try:
        generator = GeneratorConfig(
            mode=gen["mode"], num_classes=int(gen["classes"]),
            feature_dim=int(gen["feature_dim"]), length=int(gen["length"]),
            phases=int(gen["phases"]), alpha=float(gen["alpha"]),
            sigma=float(gen["sigma"]),
            transition_peak=float(gen["transition_peak"]),
            clip_length=int(gen["clip_length"]), gap=int(gen["gap"]),
            seed=int(gen["seed"]),
        ).validate()
    except Exception as e:
        raise ConfigError(f"generator: {e}") from e

    model_raw = _take(_expect_mapping(doc, "model"), "model", {
        "hidden_dim": 64,
        "feature_dim": generator.feature_dim,
        "classes": generator.num_classes,
    })
    if int(model_raw["feature_dim"]) != generator.feature_dim:
        raise ConfigError("model.feature_dim disagrees with generator.feature_dim")
    if int(model_raw["classes"]) != generator.num_classes:
        raise ConfigError("model.classes disagrees with generator.classes")

    train_raw = _take(_expect_mapping(doc, "train"), "train", {
        "learning_rate": 0.001,
        "batch_size": 64,
        "epochs": 50,
        "seed": 0,
        "observation_fraction": 0.25,
        "cap_threshold": 250,
        "frame_cap": 50,
        "top_k": 5,
    })
    try:
        train = TrainConfig(
            learning_rate=float(train_raw["learning_rate"]),
            batch_size=int(train_raw["batch_size"]),
            epochs=int(train_raw["epochs"]),
            seed=int(train_raw["seed"]),
            observation_fraction=float(train_raw["observation_fraction"]),
            cap_threshold=int(train_raw["cap_threshold"]),
            frame_cap=int(train_raw["frame_cap"]),
            top_k=int(train_raw["top_k"]),
        ).validate()
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"train: {e}") from e

    obj_raw = _take(_expect_mapping(doc, "objective"), "objective", {
        "mode": generator.mode,
        "losses": [],
        "transition_head": True,
        "reduction": "mean",
        "mean_divisor": None,
    })
    if obj_raw["mode"] != generator.mode:
        raise ConfigError("objective.mode disagrees with generator.mode")
    try:
        spec = ObjectiveSpec(
            mode=obj_raw["mode"],
            losses=parse_losses(obj_raw["losses"]),
            include_transition_head=bool(obj_raw["transition_head"]),
            reduction=obj_raw["reduction"],
            mean_divisor=(None if obj_raw["mean_divisor"] is None
                          else int(obj_raw["mean_divisor"])),
        )
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"objective: {e}") from e

    eval_raw = _take(_expect_mapping(doc, "eval"), "eval", {
        "observation_fractions": [0.1, 0.2, 0.25, 0.5, 1.0],
        "top_k": 5,
    })
    fractions = [float(p) for p in eval_raw["observation_fractions"]]
    if any(not 0.0 < p <= 1.0 for p in fractions):
        raise ConfigError("eval.observation_fractions must lie in (0, 1]")
    evalcfg = EvalConfig(fractions, int(eval_raw["top_k"]))

    sweep_raw = _take(_expect_mapping(doc, "sweep"), "sweep", {
        "kinds": ["Baseline", "JVS", "Cosine"],
        "seeds": [0, 1, 2, 3, 4],
    })
    sweep = SweepConfig([str(k) for k in sweep_raw["kinds"]],
                        [int(s) for s in sweep_raw["seeds"]])

    data_paths = None
    if "data" in doc:
        raw = _take(_expect_mapping(doc, "data"), "data", {"train": None, "test": None})
        if raw["train"] is None or raw["test"] is None:
            raise ConfigError("data section needs both 'train' and 'test' paths")
        data_paths = {"train": str(raw["train"]), "test": str(raw["test"])}

    output_dir = doc.get("output_dir", "runs/experiment")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a string")

    return ExperimentConfig(
        generator=generator, hidden_dim=int(model_raw["hidden_dim"]),
        train=train, objective=spec, eval=evalcfg, sweep=sweep,
        data_paths=data_paths, output_dir=output_dir,
        n_train=int(gen["n_train"]), n_test=int(gen["n_test"]),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return parse_config(doc)


def effective_dict(cfg: ExperimentConfig) -> dict:
    """Fully defaulted document that reproduces this experiment."""
    g = cfg.generator
    doc = {
        "generator": {
            "mode": g.mode, "classes": g.num_classes,
            "feature_dim": g.feature_dim, "length": g.length,
            "phases": g.phases, "alpha": g.alpha, "sigma": g.sigma,
            "transition_peak": g.transition_peak,
            "clip_length": g.clip_length, "gap": g.gap, "seed": g.seed,
            "n_train": cfg.n_train, "n_test": cfg.n_test,
        },
        "model": {
            "hidden_dim": cfg.hidden_dim,
            "feature_dim": g.feature_dim,
            "classes": g.num_classes,
        },
        "train": {
            "learning_rate": cfg.train.learning_rate,
            "batch_size": cfg.train.batch_size,
            "epochs": cfg.train.epochs,
            "seed": cfg.train.seed,
            "observation_fraction": cfg.train.observation_fraction,
            "cap_threshold": cfg.train.cap_threshold,
            "frame_cap": cfg.train.frame_cap,
            "top_k": cfg.train.top_k,
        },
        "objective": {
            "mode": cfg.objective.mode,
            "losses": [
                {"kind": kind.value, "lambda": lam}
                for kind, lam in cfg.objective.losses
            ],
            "transition_head": cfg.objective.include_transition_head,
            "reduction": cfg.objective.reduction,
            "mean_divisor": cfg.objective.mean_divisor,
        },
        "eval": {
            "observation_fractions": cfg.eval.observation_fractions,
            "top_k": cfg.eval.top_k,
        },
        "sweep": {"kinds": cfg.sweep.kinds, "seeds": cfg.sweep.seeds},
        "output_dir": cfg.output_dir,
    }
    if cfg.data_paths is not None:
        doc["data"] = dict(cfg.data_paths)
    return doc
