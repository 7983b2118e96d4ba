"""Synthetic action-sequence benchmark and the EARF binary dataset format.

Sequences are built from per-class phase means: each class walks through M
phases of unit-norm mean vectors, and every frame is its phase mean plus
isotropic Gaussian noise. Classes come in pairs that share the first M/2
phase means up to a perturbation scaled by ``alpha``, so short prefixes are
only weakly discriminative while full sequences separate classes well -
exactly the regime where transferring information from the future helps.

Anticipation data pairs an observed clip (class drawn uniformly) with a
future clip whose class follows a row-stochastic transition matrix: the
dominant successor gets probability ``transition_peak``, the rest uniform.

Every record is a pure function of (seed, split, index) through a
counter-based (Philox) generator, so parallel generation matches serial
generation bitwise. The exact Gaussian class posterior is available as a
Bayes oracle for difficulty calibration and sanity gates.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractError, FormatError

EARLY = "early"
ANTICIPATION = "anticipation"

FILE_MAGIC = b"EARF"
FILE_VERSION = 1
_MODE_CODES = {EARLY: 0, ANTICIPATION: 1}
_SPLIT_CODES = {"train": 1, "test": 2}
_MEANS_STREAM = 0xC1A55


@dataclass
class GeneratorConfig:
    mode: str = EARLY
    num_classes: int = 8          # anticipation default is 20, see default_config
    feature_dim: int = 16
    length: int = 40              # frames per full sequence
    phases: int = 4
    alpha: float = 0.3            # early-phase separability within a class pair
    sigma: float = 0.5            # per-dimension frame noise
    transition_peak: float = 0.6  # probability of the dominant successor
    clip_length: int = 8          # frames per anticipation clip
    gap: int = 4                  # frames between observed and future clips
    seed: int = 0

    def validate(self):
        if self.mode not in _MODE_CODES:
            raise ContractError(f"unknown generator mode {self.mode!r}")
        if self.num_classes < 2:
            raise ContractError("num_classes must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError("alpha must lie in [0, 1]")
        if self.sigma <= 0.0:
            raise ContractError("sigma must be positive")
        if not (1.0 / self.num_classes) < self.transition_peak <= 1.0:
            raise ContractError("transition_peak must lie in (1/num_classes, 1]")
        if min(self.length, self.clip_length, self.phases, self.feature_dim) < 1:
            raise ContractError("length, clip_length, phases, feature_dim must be >= 1")
        if self.gap < 0:
            raise ContractError("gap must be >= 0")
        return self


def default_config(mode: str, **overrides) -> GeneratorConfig:
    cfg = GeneratorConfig(mode=mode)
    if mode == ANTICIPATION:
        cfg = replace(cfg, num_classes=20)
    return replace(cfg, **overrides).validate()


@dataclass
class EarlySequence:
    frames: np.ndarray  # (T, d)
    label: int


@dataclass
class AnticipationPair:
    observed: np.ndarray  # (L, d)
    future: np.ndarray    # (L, d)
    label_observed: int
    label_future: int
    gap: int


@dataclass
class Dataset:
    mode: str
    num_classes: int
    feature_dim: int
    records: list

    def __len__(self):
        return len(self.records)


def _stream(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def phase_schedule(length: int, phases: int) -> np.ndarray:
    """Phase index of each frame position; phases divide the clip evenly."""
    t = np.arange(length)
    return np.minimum(t * phases // length, phases - 1)


def class_phase_means(cfg: GeneratorConfig) -> np.ndarray:
    """Unit-norm (num_classes, phases, feature_dim) mean vectors.

    Classes 2p and 2p+1 share the pair-p base direction in the first
    phases//2 phases; alpha scales the class-specific component there.
    Later phases are fully class-specific.
    """
    rng = _stream(cfg.seed, _MEANS_STREAM)
    cl, m, d = cfg.num_classes, cfg.phases, cfg.feature_dim
    shared = m // 2
    means = np.zeros((cl, m, d))
    npairs = (cl + 1) // 2
    for pair in range(npairs):
        bases = _unit_rows(rng.standard_normal((shared, d)))
        for member in range(2):
            c = 2 * pair + member
            if c >= cl:
                break
            deltas = _unit_rows(rng.standard_normal((shared, d)))
            for ph in range(shared):
                means[c, ph] = _unit_rows(bases[ph] + cfg.alpha * deltas[ph])
            for ph in range(shared, m):
                means[c, ph] = _unit_rows(rng.standard_normal(d))
    return means


def _unit_rows(v):
    norms = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    return v / norms


def transition_matrix(cfg: GeneratorConfig) -> np.ndarray:
    """Row-stochastic P(y_f | y_o): successor (c+1) mod Cl gets the peak."""
    cl, rho = cfg.num_classes, cfg.transition_peak
    p = np.full((cl, cl), (1.0 - rho) / (cl - 1))
    for c in range(cl):
        p[c, (c + 1) % cl] = rho
    return p


def _make_early_record(cfg, means, schedule, split, index) -> EarlySequence:
    rng = _stream(cfg.seed, _SPLIT_CODES[split], index)
    label = int(rng.integers(cfg.num_classes))
    noise = rng.standard_normal((cfg.length, cfg.feature_dim)) * cfg.sigma
    return EarlySequence(means[label, schedule] + noise, label)


def _make_anticipation_record(cfg, means, schedule, pmat, split, index) -> AnticipationPair:
    rng = _stream(cfg.seed, _SPLIT_CODES[split], index)
    y_o = int(rng.integers(cfg.num_classes))
    y_f = int(rng.choice(cfg.num_classes, p=pmat[y_o]))
    shape = (cfg.clip_length, cfg.feature_dim)
    observed = means[y_o, schedule] + rng.standard_normal(shape) * cfg.sigma
    future = means[y_f, schedule] + rng.standard_normal(shape) * cfg.sigma
    return AnticipationPair(observed, future, y_o, y_f, cfg.gap)


def gen_early_dataset(cfg: GeneratorConfig, n_train: int, n_test: int):
    """Generate (train, test) early-prediction datasets."""
    cfg.validate()
    if cfg.mode != EARLY:
        raise ContractError("gen_early_dataset needs an early-mode config")
    means = class_phase_means(cfg)
    schedule = phase_schedule(cfg.length, cfg.phases)
    splits = []
    for split, n in (("train", n_train), ("test", n_test)):
        records = [_make_early_record(cfg, means, schedule, split, i) for i in range(n)]
        splits.append(Dataset(EARLY, cfg.num_classes, cfg.feature_dim, records))
    return tuple(splits)


def gen_anticipation_dataset(cfg: GeneratorConfig, n_train: int, n_test: int):
    """Generate (train, test) anticipation datasets."""
    cfg.validate()
    if cfg.mode != ANTICIPATION:
        raise ContractError("gen_anticipation_dataset needs an anticipation-mode config")
    means = class_phase_means(cfg)
    schedule = phase_schedule(cfg.clip_length, cfg.phases)
    pmat = transition_matrix(cfg)
    splits = []
    for split, n in (("train", n_train), ("test", n_test)):
        records = [
            _make_anticipation_record(cfg, means, schedule, pmat, split, i)
            for i in range(n)
        ]
        splits.append(Dataset(ANTICIPATION, cfg.num_classes, cfg.feature_dim, records))
    return tuple(splits)


# ---------------------------------------------------------------------------
# Bayes oracle
# ---------------------------------------------------------------------------

def bayes_posterior(prefix, cfg: GeneratorConfig, means: Optional[np.ndarray] = None):
    """Exact class posterior of a frame prefix under the generator.

    Uniform prior; an empty prefix returns the uniform posterior. The phase
    schedule is the one used at generation time (full-sequence schedule in
    early mode, clip schedule in anticipation mode).
    """
    if means is None:
        means = class_phase_means(cfg)
    prefix = np.asarray(prefix, dtype=np.float64).reshape(-1, cfg.feature_dim)
    if prefix.shape[0] == 0:
        return np.full(cfg.num_classes, 1.0 / cfg.num_classes)
    return _batch_posteriors(prefix[None], cfg, means)[0]


def _batch_posteriors(batch, cfg, means):
    """Posteriors for (n, L, d) prefixes sharing one prefix length."""
    _, length, _ = batch.shape
    base = cfg.length if cfg.mode == EARLY else cfg.clip_length
    schedule = phase_schedule(base, cfg.phases)[:length]
    mu = means[:, schedule, :]  # (Cl, L, d)
    # expand -sum_t ||x_t - mu_t||^2 and drop the class-independent ||x||^2
    cross = np.einsum("nld,cld->nc", batch, mu)
    mm = np.einsum("cld,cld->c", mu, mu)
    loglik = (2.0 * cross - mm[None, :]) / (2.0 * cfg.sigma**2)
    loglik -= loglik.max(axis=1, keepdims=True)
    post = np.exp(loglik)
    post /= post.sum(axis=1, keepdims=True)
    return post


def oracle_accuracy(dataset: Dataset, cfg: GeneratorConfig, fraction: float = 1.0,
                    means: Optional[np.ndarray] = None) -> float:
    """Bayes-oracle accuracy on a dataset at an observation fraction.

    For anticipation records the oracle classifies the observed clip
    against its observed label.
    """
    if means is None:
        means = class_phase_means(cfg)
    if cfg.mode == EARLY:
        length = max(1, math.ceil(fraction * cfg.length))
        frames = np.stack([r.frames[:length] for r in dataset.records])
        labels = np.array([r.label for r in dataset.records])
    else:
        length = max(1, math.ceil(fraction * cfg.clip_length))
        frames = np.stack([r.observed[:length] for r in dataset.records])
        labels = np.array([r.label_observed for r in dataset.records])
    post = _batch_posteriors(frames, cfg, means)
    return float((post.argmax(axis=1) == labels).mean())


# ---------------------------------------------------------------------------
# EARF container
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, path):
    """Write one record list as an EARF file (all integers little-endian)."""
    mode_code = _MODE_CODES[dataset.mode]
    with open(path, "wb") as f:
        f.write(FILE_MAGIC)
        f.write(struct.pack("<IIIIQ", FILE_VERSION, mode_code,
                            dataset.num_classes, dataset.feature_dim,
                            len(dataset.records)))
        for rec in dataset.records:
            if dataset.mode == EARLY:
                frames = np.ascontiguousarray(rec.frames, dtype="<f8")
                f.write(struct.pack("<II", frames.shape[0], rec.label))
            else:
                frames = np.ascontiguousarray(
                    np.concatenate([rec.observed, rec.future]), dtype="<f8"
                )
                f.write(struct.pack("<IIII", frames.shape[0], rec.label_observed,
                                    rec.label_future, rec.gap))
            f.write(frames.tobytes())


def _need(f, n, offset, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated dataset file while reading {what}", offset)
    return buf


def load_dataset(path) -> Dataset:
    """Read an EARF file; raises FormatError with a byte offset on damage."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FILE_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {FILE_MAGIC!r}", 0)
        offset = 4
        header = _need(f, 24, offset, "header")
        version, mode_code, num_classes, feature_dim, count = struct.unpack(
            "<IIIIQ", header
        )
        offset += 24
        if version != FILE_VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        if mode_code not in (0, 1):
            raise FormatError(f"unknown mode code {mode_code}", 8)
        mode = EARLY if mode_code == 0 else ANTICIPATION
        records = []
        for i in range(count):
            (t,) = struct.unpack("<I", _need(f, 4, offset, f"record {i} length"))
            offset += 4
            if t < 1:
                raise FormatError(f"record {i} has zero frames", offset - 4)
            if mode == EARLY:
                (label,) = struct.unpack("<I", _need(f, 4, offset, f"record {i} label"))
                offset += 4
                payload = _need(f, 8 * t * feature_dim, offset, f"record {i} frames")
                offset += 8 * t * feature_dim
                frames = np.frombuffer(payload, dtype="<f8").reshape(t, feature_dim)
                records.append(EarlySequence(frames.copy(), int(label)))
            else:
                y_o, y_f, gap = struct.unpack(
                    "<III", _need(f, 12, offset, f"record {i} labels")
                )
                offset += 12
                if t % 2:
                    raise FormatError(
                        f"anticipation record {i} frame count {t} is odd", offset - 16
                    )
                payload = _need(f, 8 * t * feature_dim, offset, f"record {i} frames")
                offset += 8 * t * feature_dim
                frames = np.frombuffer(payload, dtype="<f8").reshape(t, feature_dim)
                half = t // 2
                records.append(AnticipationPair(frames[:half].copy(),
                                                frames[half:].copy(),
                                                int(y_o), int(y_f), int(gap)))
        if f.read(1):
            raise FormatError("trailing bytes after final record", offset)
    return Dataset(mode, num_classes, feature_dim, records)
