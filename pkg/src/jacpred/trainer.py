"""Adam training loop with the early-prediction and anticipation protocols.

Shuffling derives from the config seed through a named substream, separate
from parameter initialization, so evaluation cadence or extra consumers of
randomness cannot perturb the training trajectory. Repeated runs with the
same config and seed reproduce metrics bitwise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as datamod
from .autodiff import Tape, backward
from .errors import ContractError, TrainingAbortedError
from .model import (
    Model,
    bind_params,
    classify,
    fuse_scores,
    project,
    summarize_batch,
    transition_predict,
)
from .objective import (
    EARLY,
    AnticipationBatch,
    EarlyBatch,
    ObjectiveSpec,
    anticipation_objective,
    early_objective,
)

_SHUFFLE_STREAM = 0x5F17E


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    observation_fraction: float = 0.25  # early-mode training/eval prefix
    cap_threshold: int = 250            # sequences longer than this are capped
    frame_cap: int = 50                 # max observed frames once capped
    top_k: int = 5

    def validate(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if not 0.0 < self.observation_fraction <= 1.0:
            raise ContractError("observation_fraction must lie in (0, 1]")
        if self.top_k < 1:
            raise ContractError("top_k must be >= 1")
        return self


@dataclass
class Metrics:
    top1: float
    topk: float
    k: int
    count: int
    frames_consumed: int = 0


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    eval_top1: float
    eval_topk: float
    saturation_events: int


def history_to_csv(history) -> str:
    out = io.StringIO()
    out.write("epoch,train_loss,eval_top1,eval_topk,saturation_events\n")
    for row in history:
        out.write(
            f"{row.epoch},{row.train_loss!r},{row.eval_top1!r},"
            f"{row.eval_topk!r},{row.saturation_events}\n"
        )
    return out.getvalue()


def observed_length(total: int, fraction: float, cap_threshold: int = 250,
                    frame_cap: int = 50) -> int:
    """Frames observed from a length-``total`` sequence at a fraction.

    ceil(fraction * total), additionally capped at ``frame_cap`` when the
    sequence exceeds ``cap_threshold`` frames.
    """
    length = math.ceil(fraction * total)
    if total > cap_threshold:
        length = min(length, frame_cap)
    return max(1, min(length, total))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new_params, state)."""
    state.t += 1
    t = state.t
    new_params = {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingAbortedError(
                f"non-finite gradient for {name} at adam step {t}"
            )
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        new_params[name] = p - lr * mhat / (np.sqrt(vhat) + eps)
    return new_params, state


# ---------------------------------------------------------------------------
# batch assembly
# ---------------------------------------------------------------------------

def _group_by(lengths):
    groups = {}
    for i, length in enumerate(lengths):
        groups.setdefault(length, []).append(i)
    return groups


def _early_batch(records, cfg: TrainConfig) -> EarlyBatch:
    totals = {r.frames.shape[0] for r in records}
    if len(totals) != 1:
        raise ContractError(
            "batched early training requires equal sequence lengths in a batch"
        )
    total = totals.pop()
    obs = observed_length(total, cfg.observation_fraction,
                          cfg.cap_threshold, cfg.frame_cap)
    observed = np.stack([r.frames[:obs] for r in records])
    full = np.stack([r.frames for r in records])
    labels = np.array([r.label for r in records], dtype=np.intp)
    return EarlyBatch(observed, full, labels)


def _anticipation_batch(records) -> AnticipationBatch:
    observed = np.stack([r.observed for r in records])
    future = np.stack([r.future for r in records])
    y_o = np.array([r.label_observed for r in records], dtype=np.intp)
    y_f = np.array([r.label_future for r in records], dtype=np.intp)
    return AnticipationBatch(observed, future, y_o, y_f)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(train_set: datamod.Dataset, test_set: datamod.Dataset, model: Model,
          cfg: TrainConfig, spec: ObjectiveSpec, log=None):
    """Run the full loop; returns (trained model, per-epoch history)."""
    cfg.validate()
    if spec.mode != train_set.mode:
        raise ContractError("dataset mode does not match objective mode")
    needs_pairs = any(kind.family != "vector" for kind, _ in spec.losses)
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(cfg.seed), _SHUFFLE_STREAM]))
    )
    model = model.copy()
    state = AdamState()
    history = []
    n = len(train_set.records)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        loss_count = 0
        saturation = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2 and needs_pairs:
                continue  # matrix-family statistics need >= 2 rows
            records = [train_set.records[i] for i in idx]
            tape = Tape()
            bound = bind_params(tape, model)
            if spec.mode == EARLY:
                loss = early_objective(_early_batch(records, cfg), bound, spec)
            else:
                loss = anticipation_objective(_anticipation_batch(records), bound, spec)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingAbortedError(
                    f"non-finite loss {loss_value} at epoch {epoch}"
                )
            backward(tape, loss)
            grads = {
                name: (node.grad if node.grad is not None
                       else np.zeros_like(node.value))
                for name, node in bound.items()
            }
            model.params, state = adam_step(model.params, grads, state,
                                            cfg.learning_rate)
            loss_sum += loss_value * len(idx)
            loss_count += len(idx)
            saturation += tape.saturation_events
        if spec.mode == EARLY:
            metrics = evaluate_early(model, test_set, cfg.observation_fraction,
                                     cfg.cap_threshold, cfg.frame_cap, cfg.top_k)
        else:
            metrics = evaluate_anticipation(model, test_set, cfg.top_k)
        row = EpochStats(epoch, loss_sum / max(loss_count, 1),
                         metrics.top1, metrics.topk, saturation)
        history.append(row)
        if log is not None:
            log(f"epoch {row.epoch}: loss={row.train_loss:.6f} "
                f"top1={row.eval_top1:.4f} top{cfg.top_k}={row.eval_topk:.4f} "
                f"saturated={row.saturation_events}")
    return model, history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _topk_hits(logits, labels, k):
    k = min(k, logits.shape[1])
    part = np.argpartition(-logits, k - 1, axis=1)[:, :k]
    return (part == labels[:, None]).any(axis=1)


def evaluate_early(model: Model, test_set: datamod.Dataset, fraction: float,
                   cap_threshold: int = 250, frame_cap: int = 50,
                   k: int = 5) -> Metrics:
    """Accuracy of classify(summarize(prefix)) at one observation fraction."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError("fraction must lie in (0, 1]")
    records = test_set.records
    lengths = [
        observed_length(r.frames.shape[0], fraction, cap_threshold, frame_cap)
        for r in records
    ]
    top1 = np.zeros(len(records), dtype=bool)
    topk = np.zeros(len(records), dtype=bool)
    for length, idx in _group_by(lengths).items():
        batch = np.stack([records[i].frames[:length] for i in idx])
        steps = [np.ascontiguousarray(batch[:, t, :]) for t in range(length)]
        logits = classify(model.params, summarize_batch(model.params, steps))
        labels = np.array([records[i].label for i in idx], dtype=np.intp)
        top1[idx] = logits.argmax(axis=1) == labels
        topk[idx] = _topk_hits(logits, labels, k)
    return Metrics(float(top1.mean()), float(topk.mean()), k, len(records),
                   frames_consumed=int(sum(lengths)))


def evaluate_anticipation(model: Model, test_set: datamod.Dataset, k: int = 5,
                          head: str = "fused") -> Metrics:
    """Top-1/top-k accuracy of the future-action prediction.

    ``head`` selects the score path: 'fused' sums the transition head and the
    projected-embedding head, 'transition' and 'future' use one alone.
    Future frames are never read.
    """
    if head not in ("fused", "transition", "future"):
        raise ContractError(f"unknown head {head!r}")
    records = test_set.records
    observed = np.stack([r.observed for r in records])
    labels = np.array([r.label_future for r in records], dtype=np.intp)
    steps = [np.ascontiguousarray(observed[:, t, :]) for t in range(observed.shape[1])]
    z_t = summarize_batch(model.params, steps)
    scores_of = transition_predict(model.params, classify(model.params, z_t))
    scores_f = classify(model.params, project(model.params, z_t))
    if head == "fused":
        scores = fuse_scores(scores_of, scores_f)
    elif head == "transition":
        scores = scores_of
    else:
        scores = scores_f
    top1 = scores.argmax(axis=1) == labels
    topk = _topk_hits(scores, labels, k)
    frames = observed.shape[0] * observed.shape[1]
    return Metrics(float(top1.mean()), float(topk.mean()), k, len(records),
                   frames_consumed=int(frames))
