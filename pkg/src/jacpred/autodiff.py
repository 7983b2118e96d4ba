"""Reverse-mode automatic differentiation over a dynamically built tape.

A :class:`Tape` records :class:`Node` objects in creation order, which is by
construction a topological order of the computation graph. ``backward``
sweeps the tape once in reverse and adds the resulting adjoints into each
node's persistent ``grad`` accumulator, so differentiating the same graph
twice doubles leaf gradients and ``zero_grads`` + ``backward`` is idempotent.

The module-level op functions (``exp``, ``tanh``, ``div``, ...) accept either
Nodes or plain float64 ndarrays and fall back to the matching numpy kernel
for the latter. Model and statistics code is written against this duck-typed
surface, so the same forward code serves both training (graph) and
evaluation (pure numeric) paths.
"""

from __future__ import annotations

import numpy as np

from . import tensor
from .errors import ContractError, NumericGuardError, ShapeError

# Exponent clamp: exp saturates at exp(30) so unbounded loss rows stay finite.
EXP_CLAMP = 30.0
# Division guard threshold shared with the loss regularizers.
EPS = 1e-12


class Tape:
    """Ordered record of graph nodes plus numeric-event counters."""

    def __init__(self):
        self.nodes = []
        self.saturation_events = 0  # exp inputs clamped to EXP_CLAMP
        self.degenerate_events = 0  # degenerate similarity inputs (see losses)

    def leaf(self, value) -> "Node":
        """Create a differentiable input node."""
        return Node(self, tensor.astensor(value))

    def constant(self, value) -> "Node":
        """Create a node whose gradient is never consumed.

        Constants still get a gradient accumulator; callers just ignore it.
        """
        return Node(self, tensor.astensor(value))


class Node:
    """One value in the computation graph."""

    __slots__ = ("tape", "value", "grad", "parents", "_backward", "_idx")

    # keep numpy from absorbing Nodes into object arrays; binary ops defer
    # to the reflected Node methods instead
    __array_ufunc__ = None

    def __init__(self, tape, value, parents=(), backward=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward = backward
        self._idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() on non-scalar node of shape {self.shape}")
        return float(self.value)

    def sum(self, axis=None):
        return _sum(self, axis)

    def mean(self, axis=None):
        return _mean(self, axis)

    def __repr__(self):
        return f"Node(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, _neg_operand(self.tape, other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _lift(tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ContractError("operands belong to different tapes")
        return x
    return tape.constant(x)


def _neg_operand(tape, x):
    return neg(x) if isinstance(x, Node) else -np.asarray(x, dtype=np.float64)


def _as_scalar(x):
    """Return x as a python float if it is scalar-like, else None."""
    if isinstance(x, (int, float, np.integer, np.floating)):
        return float(x)
    if isinstance(x, np.ndarray) and x.ndim == 0:
        return float(x)
    return None


def _node(a: Node, value, parents, backward) -> Node:
    return Node(a.tape, value, parents, backward)


def _acc(adj, node, g):
    cur = adj[node._idx]
    adj[node._idx] = g if cur is None else cur + g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def _broadcast_ok(sa, sb):
    """Shapes usable by add/sub: equal, or matrix plus row vector."""
    if sa == sb:
        return True
    return (len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]) or (
        len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]
    )


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0)  # row-vector operand of a matrix op


def add(a, b):
    if not isinstance(a, Node) and not isinstance(b, Node):
        return np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64)
    if not isinstance(a, Node):
        a, b = b, a
    c = None if isinstance(b, Node) else _as_scalar(b)
    if c is not None:
        val = a.value + c

        def back(adj, g):
            _acc(adj, a, g)

        return _node(a, val, (a,), back)
    b = _lift(a.tape, b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add shapes incompatible: {a.shape} vs {b.shape}")
    val = a.value + b.value

    def back(adj, g):
        _acc(adj, a, _unbroadcast(g, a.value.shape))
        _acc(adj, b, _unbroadcast(g, b.value.shape))

    return _node(a, val, (a, b), back)


def neg(a):
    if not isinstance(a, Node):
        return -np.asarray(a, dtype=np.float64)

    def back(adj, g):
        _acc(adj, a, -g)

    return _node(a, -a.value, (a,), back)


def sub(a, b):
    if isinstance(a, Node):
        return a - b
    if isinstance(b, Node):
        return add(neg(b), a)
    return np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)


def mul(a, b):
    if not isinstance(a, Node) and not isinstance(b, Node):
        return np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64)
    if not isinstance(a, Node):
        a, b = b, a
    c = None if isinstance(b, Node) else _as_scalar(b)
    if c is not None:

        def back(adj, g):
            _acc(adj, a, g * c)

        return _node(a, a.value * c, (a,), back)
    b = _lift(a.tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    val = a.value * b.value

    def back(adj, g):
        _acc(adj, a, g * b.value)
        _acc(adj, b, g * a.value)

    return _node(a, val, (a, b), back)


def _guard_denominator(value, regularized, context):
    small = np.abs(value) < EPS
    if not small.any():
        return value
    if not regularized:
        raise NumericGuardError(
            f"{context}: |denominator| < {EPS} without regularization"
        )
    signs = np.where(value < 0.0, -1.0, 1.0)  # sign(0) treated as +
    return np.where(small, signs * EPS, value)


def div(a, b, regularized=False):
    """Elementwise division with a small-denominator guard.

    Without ``regularized`` any |denominator| < EPS raises; with it, such
    entries are replaced by sign*EPS (sign of 0 taken as +) and treated as
    constants by the backward rule.
    """
    if not isinstance(a, Node) and not isinstance(b, Node):
        b = _guard_denominator(np.asarray(b, dtype=np.float64), regularized, "div")
        return np.asarray(a, dtype=np.float64) / b
    c = None if isinstance(b, Node) else _as_scalar(b)
    if c is not None:
        if abs(c) < EPS:
            if not regularized:
                raise NumericGuardError(f"div: |denominator| {c!r} < {EPS}")
            c = EPS if c >= 0 else -EPS
        return mul(a, 1.0 / c)
    if not isinstance(a, Node):
        a = _lift(b.tape, a)
    b = _lift(a.tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"div shapes differ: {a.shape} vs {b.shape}")
    small = np.abs(b.value) < EPS
    beff = _guard_denominator(b.value, regularized, "div")
    val = a.value / beff
    live = ~small  # clamped entries are constants: no gradient flows to b there

    def back(adj, g):
        _acc(adj, a, g / beff)
        _acc(adj, b, np.where(live, -g * a.value / (beff * beff), 0.0))

    return _node(a, val, (a, b), back)


def matmul(a, b):
    if not isinstance(a, Node) and not isinstance(b, Node):
        return np.asarray(a) @ np.asarray(b)
    if not isinstance(a, Node):
        a = _lift(b.tape, a)
    b = _lift(a.tape, b)
    av, bv = a.value, b.value
    if av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"matmul shapes {av.shape} @ {bv.shape}")
        val = av @ bv

        def back(adj, g):
            _acc(adj, a, g @ bv.T)
            _acc(adj, b, np.outer(av, g))

        return _node(a, val, (a, b), back)
    if av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul shapes {av.shape} @ {bv.shape}")
        val = av @ bv

        def back(adj, g):
            _acc(adj, a, np.outer(g, bv))
            _acc(adj, b, av.T @ g)

        return _node(a, val, (a, b), back)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shapes {av.shape} @ {bv.shape}")
    val = av @ bv

    def back(adj, g):
        _acc(adj, a, g @ bv.T)
        _acc(adj, b, av.T @ g)

    return _node(a, val, (a, b), back)


def transpose(a):
    if not isinstance(a, Node):
        return np.asarray(a).T
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")

    def back(adj, g):
        _acc(adj, a, g.T)

    return _node(a, a.value.T.copy(), (a,), back)


def dot(a, b):
    if not isinstance(a, Node) and not isinstance(b, Node):
        return tensor.dot(a, b)
    if not isinstance(a, Node):
        a = _lift(b.tape, a)
    b = _lift(a.tape, b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot expects equal-length vectors, got {a.shape}, {b.shape}")
    val = np.asarray(np.dot(a.value, b.value))

    def back(adj, g):
        _acc(adj, a, g * b.value)
        _acc(adj, b, g * a.value)

    return _node(a, val, (a, b), back)


def _sum(a, axis=None):
    if not isinstance(a, Node):
        return np.asarray(a).sum(axis=axis)
    val = np.asarray(a.value.sum(axis=axis))
    shape = a.value.shape

    def back(adj, g):
        if axis is None:
            _acc(adj, a, np.broadcast_to(g, shape).astype(np.float64, copy=True))
        else:
            _acc(adj, a, np.repeat(np.expand_dims(g, axis), shape[axis], axis=axis))

    return _node(a, val, (a,), back)


def _mean(a, axis=None):
    if not isinstance(a, Node):
        return np.asarray(a).mean(axis=axis)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(_sum(a, axis), 1.0 / n)


def exp(x):
    """Elementwise exp with the input clamped to EXP_CLAMP.

    Clamped entries are counted on the tape as saturation events and get
    zero gradient (the clamp is a flat region).
    """
    if not isinstance(x, Node):
        return np.exp(np.minimum(np.asarray(x, dtype=np.float64), EXP_CLAMP))
    sat = x.value > EXP_CLAMP
    nsat = int(sat.sum())
    if nsat:
        x.tape.saturation_events += nsat
    val = np.exp(np.minimum(x.value, EXP_CLAMP))
    live = ~sat

    def back(adj, g):
        _acc(adj, x, g * val * live)

    return _node(x, val, (x,), back)


def tanh(x):
    if not isinstance(x, Node):
        return np.tanh(x)
    val = np.tanh(x.value)

    def back(adj, g):
        _acc(adj, x, g * (1.0 - val * val))

    return _node(x, val, (x,), back)


def _sigmoid_np(v):
    # stable in both tails
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    if not isinstance(x, Node):
        return _sigmoid_np(np.asarray(x, dtype=np.float64))
    val = _sigmoid_np(x.value)

    def back(adj, g):
        _acc(adj, x, g * val * (1.0 - val))

    return _node(x, val, (x,), back)


def square(x):
    if not isinstance(x, Node):
        return np.asarray(x, dtype=np.float64) ** 2
    val = x.value * x.value

    def back(adj, g):
        _acc(adj, x, 2.0 * g * x.value)

    return _node(x, val, (x,), back)


def sqrt(x):
    if not isinstance(x, Node):
        return np.sqrt(x)
    val = np.sqrt(x.value)
    safe = np.where(val > 0.0, val, np.inf)  # d/dx sqrt at 0 taken as 0

    def back(adj, g):
        _acc(adj, x, g / (2.0 * safe))

    return _node(x, val, (x,), back)


def l2_norm(x):
    """Euclidean norm of the flattened input; Frobenius norm for matrices."""
    if not isinstance(x, Node):
        return tensor.l2_norm(x)
    val = np.asarray(np.sqrt(np.sum(x.value * x.value)))
    nrm = float(val)

    def back(adj, g):
        if nrm > 0.0:
            _acc(adj, x, g * x.value / nrm)
        else:
            _acc(adj, x, np.zeros_like(x.value))

    return _node(x, val, (x,), back)


def frobenius_inner(a, b):
    if not isinstance(a, Node) and not isinstance(b, Node):
        return tensor.frobenius_inner(a, b)
    if not isinstance(a, Node):
        a = _lift(b.tape, a)
    b = _lift(a.tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"frobenius_inner shapes differ: {a.shape} vs {b.shape}")
    val = np.asarray(np.sum(a.value * b.value))

    def back(adj, g):
        _acc(adj, a, g * b.value)
        _acc(adj, b, g * a.value)

    return _node(a, val, (a, b), back)


def trace(a):
    if not isinstance(a, Node):
        return tensor.trace(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace expects a square matrix, got {a.shape}")
    val = np.asarray(np.trace(a.value))
    eye = np.eye(a.shape[0])

    def back(adj, g):
        _acc(adj, a, g * eye)

    return _node(a, val, (a,), back)


def inverse(a):
    if not isinstance(a, Node):
        return tensor.inverse(a)
    val = tensor.inverse(a.value)

    def back(adj, g):
        _acc(adj, a, -val.T @ g @ val.T)

    return _node(a, val, (a,), back)


def concat_rows(rows):
    """Stack equal-length vectors into a matrix, one per row."""
    if not rows:
        raise ShapeError("concat_rows needs at least one row")
    if not any(isinstance(r, Node) for r in rows):
        return np.stack([np.asarray(r, dtype=np.float64) for r in rows])
    tape = next(r.tape for r in rows if isinstance(r, Node))
    nodes = [_lift(tape, r) for r in rows]
    if any(n.ndim != 1 or n.shape != nodes[0].shape for n in nodes):
        raise ShapeError("concat_rows expects equal-length vectors")
    val = np.stack([n.value for n in nodes])

    def back(adj, g):
        for i, n in enumerate(nodes):
            _acc(adj, n, g[i])

    return Node(tape, val, tuple(nodes), back)


def _ce_forward(logits, labels):
    if logits.ndim == 1:
        logits = logits[None, :]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if logits.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"softmax_cross_entropy: {logits.shape[0]} rows vs {labels.shape[0]} labels"
        )
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[1]:
        raise ContractError("softmax_cross_entropy: label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    zsum = ez.sum(axis=1)
    probs = ez / zsum[:, None]
    ce = np.log(zsum) - shifted[np.arange(labels.shape[0]), labels]
    return float(ce.mean()), probs, labels


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels under softmax(logits).

    Fused log-sum-exp with max subtraction, so large logits cannot overflow.
    ``logits`` is a (n, C) matrix (a single (C,) vector is treated as n=1)
    and ``labels`` an int or int vector of length n.
    """
    if not isinstance(logits, Node):
        val, _, _ = _ce_forward(np.asarray(logits, dtype=np.float64), labels)
        return val
    vec = logits.ndim == 1
    val, probs, lab = _ce_forward(logits.value, labels)
    n = probs.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), lab] = 1.0
    dlogits = (probs - onehot) / n

    def back(adj, g):
        d = g * dlogits
        _acc(adj, logits, d[0] if vec else d)

    return _node(logits, np.asarray(val), (logits,), back)


# ---------------------------------------------------------------------------
# backward sweep and gradient checking
# ---------------------------------------------------------------------------

def backward(tape: Tape, output: Node):
    """Propagate d(output)/d(node) into every node's ``grad`` accumulator.

    ``output`` must be a scalar node on ``tape``. Adjoints are computed in a
    fresh buffer and then added to the persistent accumulators, so calling
    backward twice doubles the gradients of an unchanged graph.
    """
    if not isinstance(output, Node) or output.tape is not tape:
        raise ContractError("backward: output is not a node of this tape")
    if output.value.size != 1:
        raise ContractError(f"backward: output must be scalar, got shape {output.shape}")
    adj = [None] * len(tape.nodes)
    adj[output._idx] = np.ones_like(output.value)
    for node in reversed(tape.nodes):
        g = adj[node._idx]
        if g is None or node._backward is None:
            continue
        node._backward(adj, g)
    for node in tape.nodes:
        g = adj[node._idx]
        if g is None:
            continue
        # out-of-place accumulation: adjoint buffers may be shared or viewed
        node.grad = g if node.grad is None else node.grad + g


def zero_grads(tape: Tape):
    for node in tape.nodes:
        node.grad = None


def value_of(x) -> np.ndarray:
    """Numeric value of a Node or array-like."""
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def grad_check(f, args, h=1e-6):
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps len(args) nodes (or raw arrays) to a scalar; ``args`` are the
    float64 evaluation points. Relative error for each coordinate is
    |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    if h <= 0:
        raise ContractError("grad_check: h must be positive")
    args = [tensor.astensor(a) for a in args]

    def eval_value(xs):
        t = Tape()
        out = f(*[t.leaf(x) for x in xs])
        v = float(value_of(out))
        if not np.isfinite(v):
            raise NumericGuardError("grad_check: non-finite forward value")
        return v

    t = Tape()
    leaves = [t.leaf(a) for a in args]
    out = f(*leaves)
    if not np.isfinite(float(value_of(out))):
        raise NumericGuardError("grad_check: non-finite forward value")
    backward(t, out)
    grads = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        for leaf in leaves
    ]
    worst = 0.0
    for ai in range(len(args)):
        flat_ad = grads[ai].ravel()
        for j in range(args[ai].size):
            plus = [a.copy() for a in args]
            minus = [a.copy() for a in args]
            plus[ai].ravel()[j] += h
            minus[ai].ravel()[j] -= h
            g_fd = (eval_value(plus) - eval_value(minus)) / (2.0 * h)
            g_ad = flat_ad[j]
            rel = abs(g_ad - g_fd) / max(1e-8, abs(g_ad) + abs(g_fd))
            worst = max(worst, rel)
    return worst
