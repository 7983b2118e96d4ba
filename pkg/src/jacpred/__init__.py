"""Early action prediction and anticipation with Jaccard similarity losses.

A self-contained differentiable stack: float64 tensor kernels, a
reverse-mode autodiff tape, batch statistics, ten similarity loss terms, a
GRU sequence summarizer with prediction heads, an Adam trainer with both
evaluation protocols, a synthetic benchmark with a Bayes oracle, and a CLI
for dataset generation, training, evaluation, loss audits and sweeps.
"""

from .losses import LossKind, jcc_loss, jfip, jvs, parse_kind
from .model import Model, init_model, load_checkpoint, save_checkpoint
from .objective import ObjectiveSpec, default_lambda
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "LossKind",
    "Model",
    "ObjectiveSpec",
    "TrainConfig",
    "default_lambda",
    "init_model",
    "jcc_loss",
    "jfip",
    "jvs",
    "load_checkpoint",
    "parse_kind",
    "save_checkpoint",
    "train",
]
