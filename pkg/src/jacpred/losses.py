"""The ten similarity loss terms, each returned in to-be-minimized form.

Vector-family terms (Corr, Cosine, L2, JVS) act on a pair of embeddings,
cross-correlation terms (CC, JCC) on a pair of n*h batch matrices, and
covariance terms (FN, BD, FIP, JFIP) on a pair of h*h covariance matrices.
Every function accepts autodiff Nodes (for training) or plain ndarrays and
already folds the exp(-similarity) transform into the bounded similarity
rows, so an objective composes terms uniformly as lambda * value.

Degenerate inputs are epsilon-regularized rather than rejected: near-zero
denominators in JVS / JCC / JFIP keep their documented limits, and a cosine
on a near-zero vector yields similarity 0 (loss exp(0) = 1) while counting
a degenerate event on the tape.
"""

from __future__ import annotations

import enum

import numpy as np

from .autodiff import (
    EPS,
    Node,
    div,
    dot,
    exp,
    frobenius_inner,
    inverse,
    l2_norm,
    sqrt,
    trace,
    value_of,
)
from .errors import ShapeError
from .stats import covariance, cross_correlation, mean_norm

# Ridge added to both covariance matrices before BD inversion; batch
# covariances with n < h are singular by construction without it.
BD_RIDGE = 1e-4


class LossKind(enum.Enum):
    CORR = "Corr"
    COSINE = "Cosine"
    L2 = "L2"
    JVS = "JVS"
    CC = "CC"
    JCC = "JCC"
    FN = "FN"
    BD = "BD"
    FIP = "FIP"
    JFIP = "JFIP"

    @property
    def family(self) -> str:
        if self in (LossKind.CORR, LossKind.COSINE, LossKind.L2, LossKind.JVS):
            return "vector"
        if self in (LossKind.CC, LossKind.JCC):
            return "cross-correlation"
        return "covariance"

    @property
    def bounded(self) -> bool:
        return self in (LossKind.COSINE, LossKind.JVS, LossKind.JCC, LossKind.JFIP)


def parse_kind(name: str) -> LossKind:
    for kind in LossKind:
        if kind.value.lower() == name.strip().lower():
            return kind
    raise ValueError(f"unknown loss kind {name!r}; expected one of "
                     + ", ".join(k.value for k in LossKind))


def _flag_degenerate(x, count=1):
    if isinstance(x, Node):
        x.tape.degenerate_events += count


def _regularize_scalar_denominator(den):
    """Add EPS when a nonnegative scalar denominator is below EPS."""
    if float(value_of(den)) < EPS:
        return den + EPS
    return den


def jvs(z_h, z_t):
    """Jaccard vector similarity 2 a.b / (a.a + b.b), in [-1, 1]."""
    num = 2.0 * dot(z_h, z_t)
    den = _regularize_scalar_denominator(dot(z_h, z_h) + dot(z_t, z_t))
    return num / den


def cosine_similarity(z_h, z_t):
    """Cosine of the angle between two vectors; 0 for degenerate inputs."""
    den = l2_norm(z_h) * l2_norm(z_t)
    if float(value_of(den)) < EPS:
        _flag_degenerate(den)
        return den * 0.0
    return dot(z_h, z_t) / den


def jfip(c_h, c_t):
    """Jaccard Frobenius inner product of two covariance matrices.

    2<A,B>_F / (<A,A>_F + <B,B>_F); lies in [0, 1] for PSD inputs.
    """
    sa, sb = value_of(c_h).shape, value_of(c_t).shape
    if sa != sb or len(sa) != 2 or sa[0] != sa[1]:
        raise ShapeError(f"jfip expects equal square matrices, got {sa} and {sb}")
    num = 2.0 * frobenius_inner(c_h, c_t)
    den = _regularize_scalar_denominator(
        frobenius_inner(c_h, c_h) + frobenius_inner(c_t, c_t)
    )
    return num / den


def vector_loss(kind: LossKind, z_h, z_t):
    """One vector-family loss row for a single pair of embeddings."""
    if kind is LossKind.CORR:
        return exp(-dot(z_h, z_t))
    if kind is LossKind.COSINE:
        return exp(-cosine_similarity(z_h, z_t))
    if kind is LossKind.L2:
        return exp(l2_norm(z_h - z_t))
    if kind is LossKind.JVS:
        return exp(-jvs(z_h, z_t))
    raise ValueError(f"{kind} is not a vector-family loss")


def vector_loss_rows(kind: LossKind, z_h, z_t):
    """Batched vector-family losses, one value per row of two n*h matrices.

    Equivalent to mapping :func:`vector_loss` over rows but built from a
    constant number of graph ops.
    """
    shape = value_of(z_h).shape
    if shape != value_of(z_t).shape or len(shape) != 2:
        raise ShapeError("vector_loss_rows expects two equal n*h matrices")
    r = (z_h * z_t).sum(axis=1)
    if kind is LossKind.CORR:
        return exp(-r)
    if kind is LossKind.L2:
        d = z_h - z_t
        return exp(sqrt((d * d).sum(axis=1)))
    aa = (z_h * z_h).sum(axis=1)
    bb = (z_t * z_t).sum(axis=1)
    if kind is LossKind.COSINE:
        den = sqrt(aa) * sqrt(bb)
        live = (value_of(den) >= EPS).astype(np.float64)
        ndeg = int(live.size - live.sum())
        if ndeg:
            _flag_degenerate(den, ndeg)
        # degenerate rows are forced to similarity 0 -> loss exp(0) = 1
        return exp(-(div(r, den, regularized=True) * live))
    if kind is LossKind.JVS:
        den = aa + bb
        small = value_of(den) < EPS
        if small.any():
            den = den + small * EPS
        return exp(-(2.0 * div(r, den)))
    raise ValueError(f"{kind} is not a vector-family loss")


def cc_loss(z_t, z, mean_divisor=None):
    """Cross-correlation loss: entry mean of exp(-E[Z_t^T Z])."""
    return mean_norm(exp(-cross_correlation(z_t, z)), mean_divisor)


def jcc_loss(z_h, z_t, mean_divisor=None):
    """Jaccard cross-correlation loss.

    Entry mean of exp(-2 E[Z_h^T Z_t] / (E[Z_h^T Z_h] + E[Z_t^T Z_t])) with
    the division taken elementwise and near-zero denominator entries
    replaced by sign * EPS.
    """
    num = 2.0 * cross_correlation(z_h, z_t)
    den = cross_correlation(z_h, z_h) + cross_correlation(z_t, z_t)
    return mean_norm(exp(-div(num, den, regularized=True)), mean_divisor)


def covariance_loss(kind: LossKind, c_t, c_z):
    """One covariance-family loss for a pair of h*h covariance matrices."""
    shape = value_of(c_t).shape
    if shape != value_of(c_z).shape or len(shape) != 2 or shape[0] != shape[1]:
        raise ShapeError("covariance_loss expects two equal square matrices")
    if kind is LossKind.FN:
        return exp(l2_norm(c_t - c_z))
    if kind is LossKind.FIP:
        return exp(-frobenius_inner(c_z, c_t))
    if kind is LossKind.JFIP:
        return exp(-jfip(c_z, c_t))
    if kind is LossKind.BD:
        d = shape[0]
        ridge = BD_RIDGE * np.eye(d)
        ct = c_t + ridge
        cz = c_z + ridge
        # symmetrized trace form as printed, with minimum value d at C_t == C_z
        return trace(ct @ inverse(cz)) + trace(cz @ inverse(ct)) - float(d)
    raise ValueError(f"{kind} is not a covariance-family loss")


def loss_term(kind: LossKind, z_h, z_t, reduction="mean", mean_divisor=None):
    """Batch-level value of any loss kind from two n*h embedding matrices.

    Vector-family rows are reduced by ``reduction`` ('mean' or 'sum');
    matrix-family kinds consume the stacked batch matrices directly.
    ``z_h`` holds the projected branch, ``z_t`` the observed branch.
    """
    if kind.family == "vector":
        rows = vector_loss_rows(kind, z_h, z_t)
        if reduction == "mean":
            return rows.mean()
        if reduction == "sum":
            return rows.sum()
        raise ValueError(f"unknown reduction {reduction!r}")
    if kind is LossKind.CC:
        return cc_loss(z_t, z_h, mean_divisor)
    if kind is LossKind.JCC:
        return jcc_loss(z_h, z_t, mean_divisor)
    return covariance_loss(kind, covariance(z_t), covariance(z_h))
