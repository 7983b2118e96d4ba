"""Sequence summarizer and prediction heads.

The summarizer is a single-layer GRU over per-frame feature vectors; its
final hidden state is the embedding of a clip. Heads are affine maps: a
square projection between embedding spaces, a shared linear classifier, and
a class-score transition map used by the anticipation protocol. All forward
functions take a parameter mapping whose values are either ndarrays (pure
evaluation) or autodiff Nodes (training), and inputs shaped per sample
(vectors / T*d frames) or per batch (n*d step matrices).

Row-vector convention throughout: y = x @ W + b.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import sigmoid, tanh
from .errors import ContractError, FormatError

CHECKPOINT_MAGIC = b"JDMP"
CHECKPOINT_VERSION = 1

_INIT_STREAM = 0x1A17  # substream tag for parameter initialization


def param_shapes(feature_dim: int, hidden_dim: int, num_classes: int) -> dict:
    """Canonical name -> shape map for one model."""
    d, h, c = feature_dim, hidden_dim, num_classes
    return {
        "gru.w_update": (d, h),
        "gru.u_update": (h, h),
        "gru.b_update": (h,),
        "gru.w_reset": (d, h),
        "gru.u_reset": (h, h),
        "gru.b_reset": (h,),
        "gru.w_cand": (d, h),
        "gru.u_cand": (h, h),
        "gru.b_cand": (h,),
        "proj.w": (h, h),
        "proj.b": (h,),
        "cls.w": (h, c),
        "cls.b": (c,),
        "trans.w": (c, c),
        "trans.b": (c,),
    }


@dataclass
class Model:
    feature_dim: int
    hidden_dim: int
    num_classes: int
    params: dict = field(default_factory=dict)

    def copy(self) -> "Model":
        return Model(
            self.feature_dim,
            self.hidden_dim,
            self.num_classes,
            {k: v.copy() for k, v in self.params.items()},
        )


def init_model(feature_dim, hidden_dim, num_classes, seed=0) -> Model:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    fan_in is the input dimension of the matrix a tensor belongs to (biases
    use their layer's fan_in).
    """
    if num_classes < 2:
        raise ContractError(f"num_classes must be >= 2, got {num_classes}")
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), _INIT_STREAM]))
    )
    params = {}
    for name, shape in param_shapes(feature_dim, hidden_dim, num_classes).items():
        fan_in = shape[0] if len(shape) == 2 else _bias_fan_in(
            name, feature_dim, hidden_dim, num_classes
        )
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return Model(feature_dim, hidden_dim, num_classes, params)


def _bias_fan_in(name, d, h, c):
    if name.startswith("gru.") or name == "proj.b":
        return h
    if name == "cls.b":
        return h
    return c  # trans.b


def gru_step(params, x, h):
    """One GRU update; ``x`` is a frame (or n*d step batch), ``h`` the state.

    h_new = (1 - u) * h + u * cand with u the sigmoid update gate.
    """
    u = sigmoid(x @ params["gru.w_update"] + h @ params["gru.u_update"] + params["gru.b_update"])
    r = sigmoid(x @ params["gru.w_reset"] + h @ params["gru.u_reset"] + params["gru.b_reset"])
    cand = tanh(x @ params["gru.w_cand"] + (r * h) @ params["gru.u_cand"] + params["gru.b_cand"])
    return (1.0 - u) * h + u * cand


def summarize(params, frames):
    """Embed a single frame sequence as the final GRU hidden state.

    ``frames`` is a T*d array or a list of per-frame vectors (which may be
    autodiff Nodes when gradients w.r.t. inputs are wanted).
    """
    if not isinstance(frames, (list, tuple)):
        frames = np.asarray(frames, dtype=np.float64)
    if len(frames) < 1:
        raise ContractError("summarize: sequence must contain at least one frame")
    hidden = np.zeros(_hidden_dim(params))
    for t in range(len(frames)):
        hidden = gru_step(params, frames[t], hidden)
    return hidden


def summarize_batch(params, steps):
    """Embed a batch given per-timestep n*d input matrices."""
    if not steps:
        raise ContractError("summarize_batch: need at least one timestep")
    n = steps[0].shape[0]
    hidden = np.zeros((n, _hidden_dim(params)))
    for x in steps:
        hidden = gru_step(params, x, hidden)
    return hidden


def _hidden_dim(params):
    w = params["gru.u_update"]
    return w.shape[0]


def project(params, z):
    """Map an embedding (or batch of embeddings) through the linear head."""
    return z @ params["proj.w"] + params["proj.b"]


def classify(params, z):
    """Class logits for an embedding or batch of embeddings."""
    return z @ params["cls.w"] + params["cls.b"]


def transition_predict(params, scores):
    """Future-action logits from observed-action logits."""
    return scores @ params["trans.w"] + params["trans.b"]


def fuse_scores(a, b):
    """Combine two score vectors by elementwise sum."""
    return a + b


def bind_params(tape, model: Model) -> dict:
    """Leaf nodes for every parameter, in canonical order."""
    return {name: tape.leaf(value) for name, value in model.params.items()}


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path):
    """Write parameters as JDMP: magic, u32 version, then per-tensor records
    of (u32 name length, name, u32 rank, u64 extents, float64 payload),
    all little-endian."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name in sorted(model.params):
            arr = np.ascontiguousarray(model.params[name], dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def _read_exact(f, n, offset, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}", offset)
    return buf


def load_checkpoint(path) -> Model:
    params = {}
    with open(path, "rb") as f:
        offset = 0
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(
                f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", 0
            )
        offset += 4
        (version,) = struct.unpack("<I", _read_exact(f, 4, offset, "version"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", offset)
        offset += 4
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError("truncated checkpoint while reading name length", offset)
            (nlen,) = struct.unpack("<I", head)
            offset += 4
            name = _read_exact(f, nlen, offset, "name").decode("utf-8")
            offset += nlen
            (rank,) = struct.unpack("<I", _read_exact(f, 4, offset, "rank"))
            offset += 4
            shape = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, offset, "extents"))
            offset += 8 * rank
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(f, 8 * count, offset, f"payload of {name}")
            offset += 8 * count
            params[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    try:
        d, h = params["gru.w_update"].shape
        c = params["cls.w"].shape[1]
    except KeyError as e:
        raise FormatError(f"checkpoint missing tensor {e}") from e
    expected = param_shapes(d, h, c)
    if set(expected) != set(params) or any(
        params[k].shape != expected[k] for k in expected
    ):
        raise FormatError("checkpoint tensors do not form a complete model")
    return Model(d, h, c, params)
