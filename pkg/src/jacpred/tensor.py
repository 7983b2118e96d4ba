"""Dense float64 tensor kernels.

Tensors are plain C-contiguous ``numpy.ndarray`` objects with dtype float64;
``astensor`` is the single entry point that enforces this. All kernels are
pure functions and never mutate their inputs, so values can be shared freely
across threads. Row-major layout is relied on by the binary file formats in
:mod:`jacpred.data` and :mod:`jacpred.model`.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, SingularMatrixError

# Pivots below PIVOT_RTOL times the largest row magnitude of the input are
# treated as exact zeros during LU factorization.
PIVOT_RTOL = 1e-12


def astensor(x) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float64 ndarray."""
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of an m*k and a k*n matrix."""
    a, b = astensor(a), astensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    return a @ b


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product of two equal-length vectors."""
    a, b = astensor(a), astensor(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    if a.shape[0] < 1:
        raise ShapeError("dot requires vectors of length >= 1")
    return float(np.dot(a, b))


def frobenius_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of elementwise products of two same-shape matrices."""
    a, b = astensor(a), astensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"frobenius_inner shapes differ: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def l2_norm(a: np.ndarray) -> float:
    """Euclidean norm of a vector (or of any array, flattened)."""
    return float(np.sqrt(np.sum(astensor(a) ** 2)))


def frobenius_norm(a: np.ndarray) -> float:
    """Frobenius norm of a matrix; identical to the flattened L2 norm."""
    return l2_norm(a)


def trace(a: np.ndarray) -> float:
    """Sum of the diagonal of a square matrix."""
    a = astensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace expects a square matrix, got {a.shape}")
    return float(np.trace(a))


def lu_factor(a: np.ndarray):
    """Partial-pivot LU factorization PA = LU.

    Returns ``(lu, perm)`` where ``lu`` stores L (unit diagonal, below) and U
    (on and above the diagonal) and ``perm`` maps factored rows to input rows.
    Raises :class:`SingularMatrixError` when a pivot falls below
    ``PIVOT_RTOL`` times the largest row magnitude of the input.
    """
    a = astensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"lu_factor expects a square matrix, got {a.shape}")
    n = a.shape[0]
    scale = np.abs(a).max(initial=0.0)
    tol = PIVOT_RTOL * (scale if scale > 0.0 else 1.0)
    lu = a.copy()
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < tol:
            raise SingularMatrixError(
                f"pivot {abs(lu[p, k]):.3e} below threshold {tol:.3e} at column {k}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b columns given the LU factorization of A."""
    n = lu.shape[0]
    x = astensor(b)[perm].copy()
    if x.ndim == 1:
        x = x[:, None]
        squeeze = True
    else:
        squeeze = False
    for k in range(n):  # forward: L y = Pb
        x[k + 1:] -= np.outer(lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):  # backward: U x = y
        x[k] /= lu[k, k]
        if k:
            x[:k] -= np.outer(lu[:k, k], x[k])
    return x[:, 0] if squeeze else x


def inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a square matrix via partial-pivot LU.

    Raises :class:`SingularMatrixError` for numerically singular inputs.
    """
    a = astensor(a)
    lu, perm = lu_factor(a)
    return lu_solve(lu, perm, np.eye(a.shape[0]))
