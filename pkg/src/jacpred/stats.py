"""Batch second-order statistics: cross-correlation, covariance, mean norm.

All functions accept either float64 ndarrays or autodiff Nodes; the
expectation over a batch is realized as the 1/n batch mean (population
convention, no Bessel correction).
"""

from __future__ import annotations

from .autodiff import Node, value_of
from .errors import DegenerateBatchError, ShapeError


def _shape2(x, name):
    v = value_of(x)
    if v.ndim != 2:
        raise ShapeError(f"{name} expects a 2-d batch matrix, got shape {v.shape}")
    return v.shape


def cross_correlation(a, b):
    """(1/n) * A^T B for two n*h batches of row embeddings."""
    sa = _shape2(a, "cross_correlation")
    sb = _shape2(b, "cross_correlation")
    if sa != sb:
        raise ShapeError(f"cross_correlation shapes differ: {sa} vs {sb}")
    n = sa[0]
    return (a.T @ b) * (1.0 / n)


def covariance(z):
    """Population covariance (1/n)(Z - mean)^T (Z - mean) of an n*h batch."""
    n, _ = _shape2(z, "covariance")
    if n < 2:
        raise DegenerateBatchError(f"covariance needs n >= 2 rows, got {n}")
    centered = z - z.mean(axis=0)
    return (centered.T @ centered) * (1.0 / n)


def mean_norm(c, divisor=None):
    """Mean of all matrix entries.

    ``divisor`` overrides the default entry count p*q (kept for comparing
    against a fixed 1/n^2 batch-size convention); the value is then
    sum(C) / divisor.
    """
    shape = _shape2(c, "mean_norm")
    d = shape[0] * shape[1] if divisor is None else int(divisor)
    if d <= 0:
        raise ShapeError(f"mean_norm divisor must be positive, got {d}")
    return c.sum() * (1.0 / d)
