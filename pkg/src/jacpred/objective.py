"""Training objectives for both prediction protocols.

Early prediction: cross-entropy on the observed-prefix embedding plus
weighted similarity terms that pull the prefix embedding toward a linear
projection of the full-sequence embedding.

Anticipation: cross-entropy on the observed clip, on the projected future
embedding (same classifier), optionally on the transition head, plus
similarity terms between the projected embedding and the real future clip's
embedding. Future frames are consumed only inside this training objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import softmax_cross_entropy
from .errors import ContractError, DegenerateBatchError
from .losses import LossKind, loss_term
from .model import classify, project, summarize_batch, transition_predict

EARLY = "early"
ANTICIPATION = "anticipation"


def default_lambda(kind: LossKind) -> float:
    """Similarity-term weight: 1.0 for bounded kinds, 0.001 for unbounded."""
    return 1.0 if kind.bounded else 0.001


@dataclass
class ObjectiveSpec:
    mode: str = EARLY
    losses: list = field(default_factory=list)  # [(LossKind, lambda)]
    include_transition_head: bool = True
    reduction: str = "mean"
    mean_divisor: int | None = None

    def __post_init__(self):
        if self.mode not in (EARLY, ANTICIPATION):
            raise ContractError(f"unknown objective mode {self.mode!r}")
        if self.reduction not in ("mean", "sum"):
            raise ContractError(f"unknown reduction {self.reduction!r}")
        self.losses = [
            (kind, default_lambda(kind) if lam is None else float(lam))
            for kind, lam in self.losses
        ]
        for kind, lam in self.losses:
            if lam < 0:
                raise ContractError(f"lambda for {kind.value} must be >= 0, got {lam}")


@dataclass
class EarlyBatch:
    observed: np.ndarray  # (n, L, d) prefix frames
    full: np.ndarray      # (n, T, d) complete sequences
    labels: np.ndarray    # (n,) int


@dataclass
class AnticipationBatch:
    observed: np.ndarray        # (n, L, d) observed clips
    future: np.ndarray          # (n, L, d) future clips (training only)
    labels_observed: np.ndarray
    labels_future: np.ndarray


def _steps(clip_batch):
    return [np.ascontiguousarray(clip_batch[:, t, :]) for t in range(clip_batch.shape[1])]


def _check_batch_size(spec: ObjectiveSpec, n: int):
    if n < 1:
        raise ContractError("empty batch")
    if n < 2 and any(kind.family != "vector" for kind, _ in spec.losses):
        raise DegenerateBatchError(
            "matrix-family similarity terms need a batch of at least 2"
        )


def _similarity_terms(spec, total, z_proj, z_ref):
    for kind, lam in spec.losses:
        total = total + lam * loss_term(
            kind, z_proj, z_ref, spec.reduction, spec.mean_divisor
        )
    return total


def early_objective(batch: EarlyBatch, params, spec: ObjectiveSpec):
    """Mean CE of classify(z_t) plus weighted similarity of (z_h, z_t).

    z_t summarizes the observed prefix, z_h is the projected full-sequence
    embedding. With an empty loss list the result is exactly the CE node.
    """
    if spec.mode != EARLY:
        raise ContractError("early_objective needs an early-mode spec")
    _check_batch_size(spec, batch.observed.shape[0])
    z_t = summarize_batch(params, _steps(batch.observed))
    ce = softmax_cross_entropy(classify(params, z_t), batch.labels)
    if not spec.losses:
        return ce
    z_full = summarize_batch(params, _steps(batch.full))
    z_h = project(params, z_full)
    return _similarity_terms(spec, ce, z_h, z_t)


def anticipation_objective(batch: AnticipationBatch, params, spec: ObjectiveSpec):
    """Multi-task anticipation loss.

    CE(y_o, classify(z_t)) + CE(y_f, transition(classify(z_t))) (optional)
    + CE(y_f, classify(z_h)) + weighted similarity of (z_h, summarize(future)),
    where z_h = project(z_t) and the classifier is shared between heads.
    """
    if spec.mode != ANTICIPATION:
        raise ContractError("anticipation_objective needs an anticipation-mode spec")
    _check_batch_size(spec, batch.observed.shape[0])
    z_t = summarize_batch(params, _steps(batch.observed))
    logits_o = classify(params, z_t)
    total = softmax_cross_entropy(logits_o, batch.labels_observed)
    if spec.include_transition_head:
        logits_of = transition_predict(params, logits_o)
        total = total + softmax_cross_entropy(logits_of, batch.labels_future)
    z_h = project(params, z_t)
    total = total + softmax_cross_entropy(classify(params, z_h), batch.labels_future)
    if not spec.losses:
        return total
    z_future = summarize_batch(params, _steps(batch.future))
    return _similarity_terms(spec, total, z_h, z_future)
