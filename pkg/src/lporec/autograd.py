"""Dense-tensor expression graph with reverse-mode differentiation.

Graphs are built eagerly: every op computes and caches its value when it is
called, and records a closure that maps the output gradient back to its
inputs. ``backward`` walks the graph in reverse topological order.

    >>> x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    >>> y = reduce_sum(x * x)
    >>> backward(y)[x]
    array([2., 4.])
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import NonFinite, NotScalar, ShapeMismatch

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build values only; no parents or backward closures are recorded."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(), backward_fn=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        raise TypeError("use index_select for gathering from a Tensor")


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(value, op, parents, backward_fn):
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(value, True, op, parents, backward_fn)
    return Tensor(value, False, op)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.value + b.value, "add", (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _node(a.value * b.value, "mul", (a, b), bw)


def scale(a, c):
    c = float(c)
    return _node(a.value * a.value.dtype.type(c), "scale", (a,), lambda g: (g * c,))


def relu(a):
    out = np.maximum(a.value, 0)
    return _node(out, "relu", (a,), lambda g: (g * (out > 0),))


def exp(a):
    out = np.exp(a.value)
    return _node(out, "exp", (a,), lambda g: (g * out,))


def log(a):
    x = a.value
    return _node(np.log(x), "log", (a,), lambda g: (g / x,))


def sigmoid(a):
    x = a.value
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return _node(out, "sigmoid", (a,), lambda g: (g * out * (1 - out),))


def mask_fill(a, mask, fill):
    """Replace entries where ``mask`` is true by the constant ``fill``."""
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(mask.shape, a.shape)
    except ValueError:
        raise ShapeMismatch(f"mask_fill: mask {mask.shape} vs value {a.shape}") from None
    out = np.where(mask, a.dtype.type(fill), a.value)
    return _node(out, "mask_fill", (a,), lambda g: (_unbroadcast(np.where(mask, 0, g), a.shape),))


def dropout(a, p, rng, training):
    """Inverted dropout. Identity when not training or ``p == 0``."""
    if not training or p == 0.0:
        return a
    keep = rng.random(a.shape) >= p
    factor = a.dtype.type(1.0 / (1.0 - p))
    m = keep * factor
    return _node(a.value * m, "dropout", (a,), lambda g: (g * m,))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch(f"matmul: batch dims {a.shape} @ {b.shape}") from None

    if b.ndim == 2:
        # stacked rows times one matrix: fold the leading dims into a single GEMM
        a2 = a.value.reshape(-1, a.shape[-1])
        out = (a2 @ b.value).reshape(a.shape[:-1] + (b.shape[1],))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.value.T).reshape(a.shape), a2.T @ g2

        return _node(out, "matmul", (a, b), bw)

    def bw(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.value @ b.value, "matmul", (a, b), bw)


def transpose(a, axes=None):
    """Swap the last two axes, or apply an explicit permutation."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.value, axes), "transpose", (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape):
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {old} -> {shape}") from None
    return _node(out, "reshape", (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, "concat", tensors, bw)


def reduce_sum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    out = a.value.sum(axis=axis, keepdims=keepdims)
    return _node(np.asarray(out, dtype=a.dtype), "reduce_sum", (a,), bw)


# ---------------------------------------------------------------- gathers


def _scatter_add_rows(n, ids, rows):
    """``out[ids[i]] += rows[i]`` for an ``(n, ...)`` output; sort-and-reduce, not ``np.add.at``."""
    out = np.zeros((n,) + rows.shape[1:], dtype=rows.dtype)
    if ids.size == 0:
        return out
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    uniq, start = np.unique(sorted_ids, return_index=True)
    out[uniq] = np.add.reduceat(rows[order], start, axis=0)
    return out


def embedding_lookup(table, ids):
    """Rows of a 2-D ``table`` selected by an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding_lookup: id out of range for table {table.shape}")
    n, d = table.shape

    def bw(g):
        return (_scatter_add_rows(n, ids.reshape(-1), g.reshape(-1, d)),)

    return _node(table.value[ids], "embedding_lookup", (table,), bw)


def index_select(a, index, axis=-1):
    """Gather along ``axis``.

    A 1-D ``index`` selects the same positions for every slice (``np.take``);
    an ``index`` with ``a.ndim`` dimensions gathers per slice
    (``np.take_along_axis``).
    """
    index = np.asarray(index, dtype=np.int64)
    axis = axis % a.ndim
    shape = a.shape
    if index.ndim == 1:
        out = np.take(a.value, index, axis=axis)

        def bw(g):
            rows = _scatter_add_rows(shape[axis], index, np.moveaxis(g, axis, 0))
            return (np.ascontiguousarray(np.moveaxis(rows, 0, axis)),)

    elif index.ndim == a.ndim:
        try:
            out = np.take_along_axis(a.value, index, axis=axis)
        except (ValueError, IndexError) as exc:
            raise ShapeMismatch(f"index_select: {exc}") from None

        def bw(g):
            full = np.zeros(shape, dtype=g.dtype)
            grids = list(np.ix_(*[np.arange(n) for n in index.shape]))
            grids[axis] = index
            np.add.at(full, tuple(np.broadcast_arrays(*grids)), g)
            return (full,)

    else:
        raise ShapeMismatch(f"index_select: index {index.shape} for value {shape}")
    return _node(out, "index_select", (a,), bw)


# ---------------------------------------------------------------- normalisers


def softmax_rows(a):
    x = a.value
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _node(out, "softmax_rows", (a,), bw)


def logsumexp(a, axis=-1):
    """``log(sum(exp(a)))`` along ``axis`` with a detached max shift."""
    shift = Tensor(np.max(a.value, axis=axis, keepdims=True))
    body = log(reduce_sum(exp(a - shift), axis=axis))
    return body + Tensor(np.squeeze(shift.value, axis=axis))


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    d = x.shape[-1]

    def bw(g):
        gx_hat = g * gain.value
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        gg = _unbroadcast(g * xhat, gain.shape)
        gb = _unbroadcast(g, bias.shape)
        return gx, gg, gb

    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm: gain/bias must be ({d},)")
    return _node(xhat * gain.value + bias.value, "layer_norm", (x, gain, bias), bw)


# ---------------------------------------------------------------- driver


def forward(root):
    """Return the cached value of ``root`` (values are computed on construction)."""
    return root.value


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into ``leaf.grad``; return ``{leaf: grad}``."""
    if root.ndim != 0:
        raise NotScalar(f"backward needs a 0-d root, got shape {root.shape}")
    order = _topo(root)
    for node in order:
        node.grad = None
    root.grad = np.ones((), dtype=root.dtype)
    leaves = {}
    for node in reversed(order):
        g = node.grad
        if g is None:
            g = np.zeros(node.shape, dtype=node.dtype)
            node.grad = g
        if not node.parents:
            leaves[node] = g
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    return leaves


def finite_diff_check(f, params, epsilon=1e-6, max_coords=None, rng=None):
    """Max relative error between backward gradients and central differences.

    ``f`` takes no arguments and rebuilds a scalar Tensor from ``params``
    (leaf Tensors whose ``value`` arrays are perturbed in place). With
    ``max_coords`` set, a random coordinate sample per parameter is checked.
    """
    out = f()
    if not np.isfinite(out.value):
        raise NonFinite("objective is not finite at the base point")
    grads = backward(out)
    worst = 0.0
    for p in params:
        analytic = grads.get(p)
        analytic = np.zeros(p.shape) if analytic is None else np.array(analytic, dtype=np.float64)
        if not p.value.flags.c_contiguous:
            p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, max_coords, replace=False)
        an = analytic.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(f().value)
            flat[i] = orig - epsilon
            lo = float(f().value)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NonFinite(f"non-finite probe at coordinate {i} of {p}")
            numeric = (hi - lo) / (2 * epsilon)
            worst = max(worst, abs(an[i] - numeric) / max(1.0, abs(numeric)))
    return worst
