"""Minimal reverse-mode autodiff over numpy arrays.

Ops are module-level functions that accept either plain ndarrays (no tape,
straight numpy) or :class:`Tensor` (tape recording).  Forward code written
against this API therefore runs in a fast inference mode and a gradient
mode without duplication.

Only the op set needed by the encoders and losses is provided; shapes are
checked strictly (no silent broadcasting beyond scalar-times-array).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Array node on the tape.

    `grad` is populated by :meth:`backward`; `parents` holds (tensor, vjp)
    pairs where vjp maps the output gradient to that parent's contribution.
    """

    __slots__ = ("data", "grad", "parents", "_requires")

    def __init__(self, data, requires_grad=False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._requires = bool(requires_grad) or any(p._requires for p, _ in parents)

    @property
    def requires_grad(self):
        return self._requires

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def backward(self):
        if self.data.shape != ():
            raise ValueError("backward() only on scalar outputs")
        order = _topo_order(self)
        for t in order:
            t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            g = t.grad
            for parent, vjp in t.parents:
                if parent._requires:
                    parent.grad += vjp(g)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self._requires})"


def _topo_order(root):
    order, discovered = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in discovered:
            continue
        discovered.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if parent._requires and id(parent) not in discovered:
                stack.append((parent, False))
    return order


def is_tensor(x):
    return isinstance(x, Tensor)


def value(x):
    """Underlying ndarray of a Tensor, or the array itself."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def constant(x):
    return Tensor(x, requires_grad=False)


def leaf(x):
    return Tensor(np.array(x, dtype=np.float64, copy=True), requires_grad=True)


def _binary(a, b, fwd, vjp_a, vjp_b):
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        ta = a if isinstance(a, Tensor) else constant(a)
        tb = b if isinstance(b, Tensor) else constant(b)
        out = fwd(ta.data, tb.data)
        return Tensor(out, parents=(
            (ta, lambda g, x=ta.data, y=tb.data: vjp_a(g, x, y)),
            (tb, lambda g, x=ta.data, y=tb.data: vjp_b(g, x, y)),
        ))
    return fwd(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def _check_same_shape(x, y):
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")


def add(a, b):
    def fwd(x, y):
        _check_same_shape(x, y)
        return x + y
    return _binary(a, b, fwd, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    def fwd(x, y):
        _check_same_shape(x, y)
        return x - y
    return _binary(a, b, fwd, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    def fwd(x, y):
        _check_same_shape(x, y)
        return x * y
    return _binary(a, b, fwd, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scale(x, c):
    c = float(c)
    if isinstance(x, Tensor):
        return Tensor(x.data * c, parents=((x, lambda g: g * c),))
    return np.asarray(x, dtype=np.float64) * c


def matmul(a, b):
    def fwd(x, y):
        return x @ y

    def vjp_a(g, x, y):
        if x.ndim == 2 and y.ndim == 1:
            return np.outer(g, y)
        if x.ndim == 1 and y.ndim == 2:
            return g @ y.T
        if x.ndim == 2 and y.ndim == 2:
            return g @ y.T
        raise ValueError(f"unsupported matmul shapes {x.shape} @ {y.shape}")

    def vjp_b(g, x, y):
        if x.ndim == 2 and y.ndim == 1:
            return x.T @ g
        if x.ndim == 1 and y.ndim == 2:
            return np.outer(x, g)
        if x.ndim == 2 and y.ndim == 2:
            return x.T @ g
        raise ValueError(f"unsupported matmul shapes {x.shape} @ {y.shape}")

    return _binary(a, b, fwd, vjp_a, vjp_b)


def dot(a, b):
    def fwd(x, y):
        _check_same_shape(x, y)
        return np.asarray(x @ y)
    return _binary(a, b, fwd, lambda g, x, y: g * y, lambda g, x, y: g * x)


def sum_(x):
    if isinstance(x, Tensor):
        return Tensor(np.asarray(np.sum(x.data)),
                      parents=((x, lambda g, s=x.data.shape: np.full(s, g)),))
    return np.asarray(np.sum(x))


def mean_rows(x):
    """Mean over axis 0 of a 2-D array -> 1-D."""
    if isinstance(x, Tensor):
        n = x.data.shape[0]
        return Tensor(x.data.mean(axis=0),
                      parents=((x, lambda g, n=n: np.tile(g / n, (n, 1))),))
    return np.asarray(x).mean(axis=0)


def tanh(x):
    if isinstance(x, Tensor):
        y = np.tanh(x.data)
        return Tensor(y, parents=((x, lambda g, y=y: g * (1.0 - y * y)),))
    return np.tanh(x)


def gather_rows(table, ids):
    """Select rows of a 2-D table; gradient scatters back with repeats summed."""
    ids = np.asarray(ids, dtype=np.intp)
    if isinstance(table, Tensor):
        def vjp(g, ids=ids, shape=table.data.shape):
            out = np.zeros(shape)
            np.add.at(out, ids, g)
            return out
        return Tensor(table.data[ids], parents=((table, vjp),))
    return np.asarray(table)[ids]


def transpose(x):
    if isinstance(x, Tensor):
        return Tensor(x.data.T, parents=((x, lambda g: g.T),))
    return np.asarray(x, dtype=np.float64).T


def add_rowvec(m, v):
    """Add a length-d vector to every row of a (B, d) matrix."""
    def fwd(x, y):
        if x.ndim != 2 or y.ndim != 1 or x.shape[1] != y.shape[0]:
            raise ValueError(f"shape mismatch: {x.shape} + row {y.shape}")
        return x + y
    return _binary(a=m, b=v, fwd=fwd,
                   vjp_a=lambda g, x, y: g,
                   vjp_b=lambda g, x, y: g.sum(axis=0))


def take_row(m, i):
    """Row i of a 2-D array as a vector; gradient scatters back."""
    i = int(i)
    if isinstance(m, Tensor):
        def vjp(g, i=i, shape=m.data.shape):
            out = np.zeros(shape)
            out[i] = g
            return out
        return Tensor(m.data[i], parents=((m, vjp),))
    return np.asarray(m)[i]


def stack_rows(rows):
    """Stack 1-D vectors into a 2-D matrix (rows may mix Tensor/ndarray)."""
    if any(isinstance(r, Tensor) for r in rows):
        ts = [r if isinstance(r, Tensor) else constant(r) for r in rows]
        data = np.stack([t.data for t in ts])
        parents = tuple((t, lambda g, i=i: g[i]) for i, t in enumerate(ts))
        return Tensor(data, parents=parents)
    return np.stack([np.asarray(r, dtype=np.float64) for r in rows])


def vstack(parts):
    """Concatenate matrices and row vectors along the first axis.

    Each part is a (r, d) matrix or a (d,) vector treated as one row; the
    gradient slices back to each part's original shape."""
    if any(isinstance(p, Tensor) for p in parts):
        ts = [p if isinstance(p, Tensor) else constant(p) for p in parts]
        blocks = [np.atleast_2d(t.data) for t in ts]
        rows = [b.shape[0] for b in blocks]
        offs = np.cumsum([0] + rows)
        data = np.concatenate(blocks)
        parents = tuple(
            (t, lambda g, a=offs[i], b=offs[i + 1], s=ts[i].data.shape:
                g[a:b].reshape(s))
            for i, t in enumerate(ts)
        )
        return Tensor(data, parents=tuple(parents))
    return np.concatenate(
        [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in parts])


def concat1d(parts):
    """Concatenate 0-d and 1-d pieces into one vector."""
    if any(isinstance(p, Tensor) for p in parts):
        ts = [p if isinstance(p, Tensor) else constant(p) for p in parts]
        sizes = [np.atleast_1d(t.data).shape[0] for t in ts]
        offs = np.cumsum([0] + sizes)
        data = np.concatenate([np.atleast_1d(t.data) for t in ts])
        parents = tuple(
            (t, lambda g, a=offs[i], b=offs[i + 1], s=ts[i].data.shape:
                g[a:b].reshape(s))
            for i, t in enumerate(ts)
        )
        return Tensor(data, parents=parents)
    return np.concatenate(
        [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in parts])


def softmax(x):
    def _fwd(v):
        z = v - np.max(v)
        e = np.exp(z)
        return e / np.sum(e)
    if isinstance(x, Tensor):
        a = _fwd(x.data)
        return Tensor(a, parents=((x, lambda g, a=a: a * (g - np.dot(g, a))),))
    return _fwd(np.asarray(x, dtype=np.float64))


def log_softmax(x):
    def _fwd(v):
        z = v - np.max(v)
        return z - np.log(np.sum(np.exp(z)))
    if isinstance(x, Tensor):
        y = _fwd(x.data)
        sm = np.exp(y)
        return Tensor(y, parents=((x, lambda g, sm=sm: g - sm * np.sum(g)),))
    return _fwd(np.asarray(x, dtype=np.float64))


NORM_GUARD = 1e-8


def l2_normalize(x, dim_basis=None):
    """x / ||x||, with degenerate inputs mapped to the first basis vector.

    A pre-normalization norm below NORM_GUARD returns e1 (constant, zero
    gradient) so downstream cosine similarities stay defined.
    """
    v = value(x)
    r = float(np.linalg.norm(v))
    if r < NORM_GUARD:
        e1 = np.zeros(v.shape[0] if dim_basis is None else dim_basis)
        e1[0] = 1.0
        if isinstance(x, Tensor):
            # keep x on the tape so its .grad reads as explicit zeros
            return Tensor(e1, parents=((x, lambda g: np.zeros_like(v)),))
        return e1
    if isinstance(x, Tensor):
        y = v / r

        def vjp(g, y=y, r=r):
            return (g - y * np.dot(g, y)) / r
        return Tensor(y, parents=((x, vjp),))
    return v / r


def l2_normalize_rows(x, dim_basis=None):
    """Row-wise l2_normalize of a (B, d) matrix.

    Degenerate rows follow the same contract as the vector form: they map
    to the first basis vector and contribute zero gradient.
    """
    v = value(x)
    if v.ndim != 2:
        raise ValueError(f"need a 2-D input, got shape {v.shape}")
    r = np.linalg.norm(v, axis=1)
    bad = r < NORM_GUARD
    safe_r = np.where(bad, 1.0, r)
    y = v / safe_r[:, None]
    if np.any(bad):
        y = y.copy()
        y[bad] = 0.0
        y[bad, 0] = 1.0
    if isinstance(x, Tensor):
        def vjp(g, y=y, r=safe_r, bad=bad):
            out = (g - y * np.sum(g * y, axis=1, keepdims=True)) / r[:, None]
            if np.any(bad):
                out[bad] = 0.0
            return out
        return Tensor(y, parents=((x, vjp),))
    return y


def accumulate(terms):
    """Sum of scalar terms (Tensors and/or floats); () shape preserved."""
    total = None
    for t in terms:
        total = t if total is None else add(total, _as_scalar(t, total))
    if total is None:
        raise ValueError("accumulate() of no terms")
    return total


def _as_scalar(t, like):
    if isinstance(t, Tensor) or isinstance(like, Tensor):
        return t if isinstance(t, Tensor) else constant(np.asarray(float(t)))
    return t


def scalar(v):
    """Plain scalar constant usable in accumulate chains."""
    return constant(np.asarray(float(v)))
