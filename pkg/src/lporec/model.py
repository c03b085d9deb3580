"""SASRec-style policy: item/position embeddings, causal self-attention blocks,
and a dot-product scoring head tied to the item embedding table."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import EmptyHistory, HistoryTooLong, InvalidDims

MASK_FILL = -1e9


@dataclass(frozen=True)
class ModelDims:
    num_items: int
    d: int = 64
    heads: int = 4
    blocks: int = 1
    L_max: int = 10
    d_ff: int | None = None

    def __post_init__(self):
        if self.d < 1 or self.heads < 1 or self.d % self.heads:
            raise InvalidDims(f"d={self.d} must be a positive multiple of heads={self.heads}")
        if self.blocks < 1 or self.L_max < 1 or self.num_items < 1:
            raise InvalidDims("blocks, L_max and num_items must be >= 1")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d)

    @property
    def pad_id(self):
        return self.num_items


@dataclass
class ModelParams:
    dims: ModelDims
    arrays: dict = field(repr=False)
    seed: int = 0

    def leaves(self):
        """Tensor leaves sharing memory with ``arrays`` (in-place updates are visible)."""
        return {k: Tensor(v, requires_grad=True) for k, v in self.arrays.items()}

    def constants(self):
        return {k: Tensor(v) for k, v in self.arrays.items()}

    def copy(self):
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()}, self.seed)

    def astype(self, dtype):
        return ModelParams(self.dims, {k: v.astype(dtype) for k, v in self.arrays.items()}, self.seed)

    def zero_padding_row(self):
        self.arrays["item_emb"][self.dims.pad_id] = 0.0

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.dims == other.dims and self.arrays.keys() == other.arrays.keys()
                and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()))


def param_shapes(dims):
    d, f = dims.d, dims.d_ff
    shapes = {"item_emb": (dims.num_items + 1, d), "pos_emb": (dims.L_max, d)}
    for b in range(dims.blocks):
        p = f"blocks.{b}."
        shapes.update({
            p + "wq": (d, d), p + "wk": (d, d), p + "wv": (d, d), p + "wo": (d, d),
            p + "ln1_gain": (d,), p + "ln1_bias": (d,),
            p + "w1": (d, f), p + "b1": (f,), p + "w2": (f, d), p + "b2": (d,),
            p + "ln2_gain": (d,), p + "ln2_bias": (d,),
        })
    return shapes


def init_params(dims, seed=0, dtype=np.float64):
    """Uniform(-1/sqrt(d), 1/sqrt(d)) weights, unit gains, zero biases and padding row."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dims.d)
    arrays = {}
    for name, shape in param_shapes(dims).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_gain"):
            arrays[name] = np.ones(shape, dtype=dtype)
        elif leaf.endswith("_bias") or leaf in ("b1", "b2"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    params = ModelParams(dims, arrays, seed)
    params.zero_padding_row()
    return params


def pad_histories(histories, dims):
    """Left-pad each history to ``L_max`` with the padding id -> int array (B, L_max)."""
    out = np.full((len(histories), dims.L_max), dims.pad_id, dtype=np.int64)
    for i, h in enumerate(histories):
        if len(h) == 0:
            raise EmptyHistory(f"history {i} is empty")
        if len(h) > dims.L_max:
            raise HistoryTooLong(f"history {i} has {len(h)} items > L_max={dims.L_max}")
        out[i, dims.L_max - len(h):] = h
    return out


def _attention(x, P, prefix, dims, key_pad, training, rng, dropout_p, last_only):
    B, L, d = x.shape
    h, dh = dims.heads, d // dims.heads
    xq = ag.index_select(x, np.array([L - 1]), axis=1) if last_only else x
    Lq = xq.shape[1]

    def split(t, n):
        return ag.transpose(ag.reshape(t, (B, n, h, dh)), (0, 2, 1, 3))

    q = split(xq @ P[prefix + "wq"], Lq)
    k = split(x @ P[prefix + "wk"], L)
    v = split(x @ P[prefix + "wv"], L)
    logits = ag.scale(q @ ag.transpose(k), 1.0 / np.sqrt(dh))
    causal = np.triu(np.ones((L, L), dtype=bool), k=1)[L - Lq:]
    mask = causal[None, None, :, :] | key_pad[:, None, None, :]
    att = ag.softmax_rows(ag.mask_fill(logits, mask, MASK_FILL))
    out = ag.reshape(ag.transpose(att @ v, (0, 2, 1, 3)), (B, Lq, d))
    return xq, ag.dropout(out @ P[prefix + "wo"], dropout_p, rng, training)


def encode_ids(P, ids, dims, training=False, rng=None, dropout_p=0.0):
    """Hidden state at the last position for padded id windows (B, L_max) -> (B, d).

    The final block only computes the last query row; nothing downstream reads
    the other positions.
    """
    B, L = ids.shape
    key_pad = ids == dims.pad_id
    dtype = P["item_emb"].dtype
    x = ag.embedding_lookup(P["item_emb"], ids) + P["pos_emb"]
    x = x * Tensor((~key_pad)[:, :, None].astype(dtype))
    for b in range(dims.blocks):
        p = f"blocks.{b}."
        last = b == dims.blocks - 1
        x, att = _attention(x, P, p, dims, key_pad, training, rng, dropout_p, last)
        x = ag.layer_norm(x + att, P[p + "ln1_gain"], P[p + "ln1_bias"])
        hidden = ag.relu(x @ P[p + "w1"] + P[p + "b1"])
        ff = ag.dropout(hidden @ P[p + "w2"] + P[p + "b2"], dropout_p, rng, training)
        x = ag.layer_norm(x + ff, P[p + "ln2_gain"], P[p + "ln2_bias"])
    return ag.reshape(x, (B, x.shape[-1]))


def encode(params, history, train_mode=False, rng=None, dropout_p=0.0, leaves=None):
    """Sequence representation ``h_S`` (a length-d Tensor) for one history.

    ``leaves`` substitutes differentiable Tensors for ``params.arrays``.
    """
    dims = params.dims
    P = leaves if leaves is not None else params.constants()
    ids = pad_histories([list(history)], dims)
    return ag.reshape(encode_ids(P, ids, dims, train_mode, rng, dropout_p), (dims.d,))


def score_all(P, h, num_items=None):
    """Dot-product scores against every real item: (B, d) -> (B, num_items).

    ``P`` is ModelParams or a name -> Tensor mapping (then ``num_items`` is required).
    """
    if isinstance(P, ModelParams):
        num_items = P.dims.num_items
        P = P.constants()
    items = ag.index_select(P["item_emb"], np.arange(num_items), axis=0)
    if h.ndim == 1:
        return ag.reshape(ag.reshape(h, (1, -1)) @ ag.transpose(items), (num_items,))
    return h @ ag.transpose(items)


def score_histories(params, histories, batch_size=512):
    """Eval-mode score matrix (len(histories), num_items) as a plain array."""
    dims = params.dims
    P = params.constants()
    out = np.empty((len(histories), dims.num_items), dtype=params.arrays["item_emb"].dtype)
    with ag.no_grad():
        for start in range(0, len(histories), batch_size):
            ids = pad_histories(histories[start:start + batch_size], dims)
            h = encode_ids(P, ids, dims)
            out[start:start + len(ids)] = score_all(P, h, dims.num_items).value
    return out


def save_checkpoint(params, path, extra=None):
    meta = {"dims": asdict(params.dims), "seed": params.seed, "extra": extra or {}}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **params.arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    return ModelParams(ModelDims(**meta["dims"]), arrays, meta["seed"])
