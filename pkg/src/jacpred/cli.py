"""Command-line front door.

Subcommands: ``gen-data`` (write EARF datasets), ``train`` (one training
run), ``eval`` (re-evaluate a checkpoint), ``sweep`` (compare loss kinds
over shared seeds), ``losscheck`` (numeric property audit). Every report
path writes machine-readable CSV/JSON plus a rendered PNG figure; the only
timestamps live in ``run.log``, so identical inputs produce identical
output bytes.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as datamod
from . import plots
from .audit import run_loss_audit
from .config import ExperimentConfig, effective_dict, load_config, parse_losses
from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    JacpredError,
    NumericGuardError,
    TrainingAbortedError,
)
from .model import init_model, load_checkpoint, save_checkpoint
from .objective import ObjectiveSpec
from .trainer import evaluate_anticipation, evaluate_early, history_to_csv, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _echo_config(cfg: ExperimentConfig, out_dir: Path):
    doc = effective_dict(cfg)
    doc["output_dir"] = str(out_dir)
    _write_json(out_dir / "config.echo.json", doc)


def _open_log(out_dir: Path):
    handle = open(out_dir / "run.log", "a")

    def log(message):
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        handle.write(f"[{stamp}] {message}\n")
        handle.flush()

    return handle, log


def _load_splits(cfg: ExperimentConfig):
    """(train, test) datasets from config paths or the generator."""
    if cfg.data_paths is not None:
        train_set = datamod.load_dataset(cfg.data_paths["train"])
        test_set = datamod.load_dataset(cfg.data_paths["test"])
        for ds in (train_set, test_set):
            if ds.mode != cfg.generator.mode:
                raise ConfigError(
                    f"dataset mode {ds.mode!r} disagrees with config mode "
                    f"{cfg.generator.mode!r}"
                )
        return train_set, test_set
    if cfg.generator.mode == datamod.EARLY:
        return datamod.gen_early_dataset(cfg.generator, cfg.n_train, cfg.n_test)
    return datamod.gen_anticipation_dataset(cfg.generator, cfg.n_train, cfg.n_test)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.generator.mode == datamod.EARLY:
        train_set, test_set = datamod.gen_early_dataset(
            cfg.generator, cfg.n_train, cfg.n_test
        )
    else:
        train_set, test_set = datamod.gen_anticipation_dataset(
            cfg.generator, cfg.n_train, cfg.n_test
        )
    datamod.save_dataset(train_set, out_dir / "train.earf")
    datamod.save_dataset(test_set, out_dir / "test.earf")
    means = datamod.class_phase_means(cfg.generator)
    summary = {
        "mode": cfg.generator.mode,
        "classes": cfg.generator.num_classes,
        "feature_dim": cfg.generator.feature_dim,
        "n_train": len(train_set.records),
        "n_test": len(test_set.records),
        "oracle_accuracy_full": datamod.oracle_accuracy(
            test_set, cfg.generator, 1.0, means
        ),
        "oracle_accuracy_quarter": datamod.oracle_accuracy(
            test_set, cfg.generator, 0.25, means
        ),
    }
    if cfg.generator.mode == datamod.ANTICIPATION:
        pmat = datamod.transition_matrix(cfg.generator)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.where(pmat > 0, pmat * np.log(pmat), 0.0).sum(axis=1)
        summary["transition_row_entropy_mean"] = float(ent.mean())
    _write_json(out_dir / "summary.json", summary)
    _echo_config(cfg, out_dir)
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_OK


def _final_metrics(history):
    if not history:
        return {"train_loss": None, "top1": None, "topk": None,
                "saturation_events_total": 0}
    last = history[-1]
    return {
        "train_loss": last.train_loss,
        "top1": last.eval_top1,
        "topk": last.eval_topk,
        "saturation_events_total": int(sum(r.saturation_events for r in history)),
    }


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "figures").mkdir(exist_ok=True)
    handle, log = _open_log(out_dir)
    try:
        train_set, test_set = _load_splits(cfg)
        model = init_model(cfg.feature_dim, cfg.hidden_dim, cfg.num_classes,
                           seed=cfg.train.seed)
        log(f"training starts: mode={cfg.objective.mode} "
            f"losses={[k.value for k, _ in cfg.objective.losses]} "
            f"seed={cfg.train.seed}")
        model, history = train(train_set, test_set, model, cfg.train,
                               cfg.objective, log=log)
        log("training done")
    finally:
        handle.close()
    (out_dir / "history.csv").write_text(history_to_csv(history))
    save_checkpoint(model, out_dir / "checkpoint.jdmp")
    _write_json(out_dir / "metrics.json", _final_metrics(history))
    plots.training_curves_figure(history, out_dir / "figures" / "training_curves.png",
                                 top_k=cfg.train.top_k)
    _echo_config(cfg, out_dir)
    final = _final_metrics(history)
    print(f"final: loss={final['train_loss']} top1={final['top1']} "
          f"top{cfg.train.top_k}={final['topk']}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(checkpoint)
    _, test_set = _load_splits(cfg)
    report = {"checkpoint": str(checkpoint)}
    if cfg.generator.mode == datamod.EARLY:
        per_p = {}
        for p in cfg.eval.observation_fractions:
            m = evaluate_early(model, test_set, p, cfg.train.cap_threshold,
                               cfg.train.frame_cap, cfg.eval.top_k)
            per_p[str(p)] = {
                "top1": m.top1, "topk": m.topk, "k": m.k,
                "frames_consumed": m.frames_consumed,
            }
            print(f"p={p}: top1={m.top1:.4f} top{m.k}={m.topk:.4f}")
        report["early"] = per_p
    else:
        heads = {}
        for head in ("fused", "transition", "future"):
            m = evaluate_anticipation(model, test_set, cfg.eval.top_k, head)
            heads[head] = {"top1": m.top1, "topk": m.topk, "k": m.k}
            print(f"{head}: top1={m.top1:.4f} top{m.k}={m.topk:.4f}")
        report["anticipation"] = heads
    _write_json(out_dir / "metrics.json", report)
    return EXIT_OK


_FAMILY_ORDER = ["baseline", "vector", "cross-correlation", "covariance", "combined"]
_FAMILY_TITLES = {
    "vector": "Vector similarity measures",
    "cross-correlation": "Cross-correlation measures",
    "covariance": "Covariance measures",
    "combined": "Combined losses",
}


def sweep_entry(label: str):
    """Map a sweep kind label to (canonical label, family, loss list)."""
    if label.strip().lower() == "baseline":
        return "Baseline", "baseline", []
    parts = [part for part in label.split("+") if part.strip()]
    losses = parse_losses([{"kind": part.strip()} for part in parts])
    canonical = "+".join(kind.value for kind, _ in losses)
    family = losses[0][0].family if len(losses) == 1 else "combined"
    return canonical, family, losses


def cmd_sweep(cfg: ExperimentConfig, kinds: list, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "figures").mkdir(exist_ok=True)
    handle, log = _open_log(out_dir)
    try:
        train_set, test_set = _load_splits(cfg)
        entries = [sweep_entry(label) for label in kinds]
        entries.sort(key=lambda e: _FAMILY_ORDER.index(e[1]))
        rows = []
        for label, family, losses in entries:
            spec = ObjectiveSpec(
                mode=cfg.objective.mode, losses=losses,
                include_transition_head=cfg.objective.include_transition_head,
                reduction=cfg.objective.reduction,
                mean_divisor=cfg.objective.mean_divisor,
            )
            top1s, topks, final_losses = [], [], []
            for seed in cfg.sweep.seeds:
                run_cfg = replace(cfg.train, seed=int(seed))
                model = init_model(cfg.feature_dim, cfg.hidden_dim,
                                   cfg.num_classes, seed=int(seed))
                log(f"sweep run: kind={label} seed={seed}")
                _, history = train(train_set, test_set, model, run_cfg, spec)
                top1s.append(history[-1].eval_top1)
                topks.append(history[-1].eval_topk)
                final_losses.append(history[-1].train_loss)
            rows.append({
                "kind": label,
                "family": family,
                "seeds": len(cfg.sweep.seeds),
                "top1_mean": statistics.fmean(top1s),
                "top1_std": statistics.stdev(top1s) if len(top1s) > 1 else 0.0,
                "topk_mean": statistics.fmean(topks),
                "topk_std": statistics.stdev(topks) if len(topks) > 1 else 0.0,
                "train_loss_mean": statistics.fmean(final_losses),
            })
    finally:
        handle.close()
    _write_sweep_outputs(cfg, rows, out_dir)
    _echo_config(cfg, out_dir)
    print((out_dir / "sweep.txt").read_text(), end="")
    return EXIT_OK


def _write_sweep_outputs(cfg, rows, out_dir: Path):
    header = ["family", "kind", "seeds", "top1_mean", "top1_std",
              "topk_mean", "topk_std", "train_loss_mean"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(r[h]) for h in header))
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")

    k = cfg.train.top_k
    width = max(len(r["kind"]) for r in rows) + 2
    text = [f"Loss sweep over {len(cfg.sweep.seeds)} seed(s), "
            f"mode={cfg.objective.mode}",
            f"{'kind':<{width}}{'top1':<18}top{k}"]
    current_family = None
    for r in rows:
        if r["family"] != current_family:
            current_family = r["family"]
            title = _FAMILY_TITLES.get(current_family)
            if title:
                text.append(f"-- {title} --")
        top1 = f"{r['top1_mean']:.4f} ± {r['top1_std']:.4f}"
        topk = f"{r['topk_mean']:.4f} ± {r['topk_std']:.4f}"
        text.append(f"{r['kind']:<{width}}{top1:<18}{topk}")
    (out_dir / "sweep.txt").write_text("\n".join(text) + "\n")
    plots.sweep_figure(rows, out_dir / "figures" / "sweep_top1.png", metric="top1")


def cmd_losscheck(out_dir: Path, seed: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_loss_audit(seed=seed)
    _write_json(out_dir / "losscheck.json", report)
    plots.similarity_response_figure(out_dir / "losscheck.png", seed=seed)
    for check in report["checks"]:
        state = "pass" if check["passed"] else "FAIL"
        print(f"{state}  {check['name']}: measured={check['measured']:.3e} "
              f"threshold={check['threshold']:.3e}")
    if not report["all_passed"]:
        print("losscheck: FAILURES present", file=sys.stderr)
        return EXIT_NUMERIC
    print("losscheck: all checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="jacpred",
        description="Early action prediction / anticipation experiments "
                    "with Jaccard similarity losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    common(sub.add_parser("gen-data", help="generate EARF datasets"))
    common(sub.add_parser("train", help="train one model"))
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_sweep = sub.add_parser("sweep", help="compare loss kinds over seeds")
    common(p_sweep)
    p_sweep.add_argument("--kinds", default=None,
                         help="comma list, e.g. Baseline,JVS,JVS+JCC+JFIP")
    p_check = sub.add_parser("losscheck", help="run the loss property audit")
    p_check.add_argument("--out", default="losscheck", help="output directory")
    p_check.add_argument("--seed", type=int, default=0)
    return parser


def _dispatch(args) -> int:
    if args.command == "losscheck":
        return cmd_losscheck(Path(args.out), args.seed)
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.command == "gen-data":
            cfg = replace(cfg, generator=replace(cfg.generator, seed=args.seed))
        else:
            cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    out_dir = Path(args.out) if args.out else Path(cfg.output_dir)
    if args.command == "gen-data":
        return cmd_gen_data(cfg, out_dir)
    if args.command == "train":
        return cmd_train(cfg, out_dir)
    if args.command == "eval":
        return cmd_eval(cfg, Path(args.checkpoint), out_dir)
    if args.command == "sweep":
        kinds = (
            [k.strip() for k in args.kinds.split(",") if k.strip()]
            if args.kinds else list(cfg.sweep.kinds)
        )
        if not kinds:
            raise ConfigError("sweep needs at least one kind")
        return cmd_sweep(cfg, kinds, out_dir)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericGuardError, TrainingAbortedError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as e:
        print(f"file format error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except JacpredError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
