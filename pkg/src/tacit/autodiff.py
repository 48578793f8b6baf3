"""Minimal reverse-mode automatic differentiation on dense float64 numpy arrays.

Just enough machinery for the agent networks in this package: affine layers,
elementwise nonlinearities, softmax, products, concat/split, reductions and
(batched) matrix products.  Values are wrapped in :class:`DiffValue` nodes;
calling :func:`backward` on a scalar loss fills every reachable node's ``grad``
with the partial derivative of the loss.
"""

import itertools
import struct

import numpy as np

_node_ids = itertools.count()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class NumericsError(RuntimeError):
    """Raised when a non-finite value shows up where it must not."""


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


class DiffValue:
    """A node in the computation graph: value plus accumulated gradient."""

    __slots__ = ("data", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = _as_array(data)
        self.grad = np.zeros_like(self.data)
        self.node_id = next(_node_ids)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"DiffValue(shape={self.data.shape}, id={self.node_id})"

    # convenience arithmetic; constants are wrapped as leaf nodes
    def __add__(self, other):
        return add(self, other if isinstance(other, DiffValue) else DiffValue(other))

    def __sub__(self, other):
        return sub(self, other if isinstance(other, DiffValue) else DiffValue(other))

    def __mul__(self, other):
        if isinstance(other, DiffValue):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _check_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: operand shapes {a.data.shape} and {b.data.shape} differ")


def _broadcast(op, a, b, fn):
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(
            f"{op}: operand shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss):
    """Reverse-mode sweep from a scalar loss; accumulates into ``grad``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.node_id not in visited:
                stack.append((p, False))
    loss.grad = loss.grad + np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    out = DiffValue(_broadcast("add", a, b, np.add), (a, b))

    def bwd(g):
        a.grad += _unbroadcast(g, a.data.shape)
        b.grad += _unbroadcast(g, b.data.shape)

    out._backward = bwd
    return out


def sub(a, b):
    out = DiffValue(_broadcast("sub", a, b, np.subtract), (a, b))

    def bwd(g):
        a.grad += _unbroadcast(g, a.data.shape)
        b.grad -= _unbroadcast(g, b.data.shape)

    out._backward = bwd
    return out


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    out = DiffValue(_broadcast("mul", a, b, np.multiply), (a, b))

    def bwd(g):
        a.grad += _unbroadcast(g * b.data, a.data.shape)
        b.grad += _unbroadcast(g * a.data, b.data.shape)

    out._backward = bwd
    return out


def neg(a):
    out = DiffValue(-a.data, (a,))
    out._backward = lambda g: np.add(a.grad, -g, out=a.grad)
    return out


def scale(a, c):
    """Multiply by a python constant."""
    c = float(c)
    out = DiffValue(a.data * c, (a,))

    def bwd(g):
        a.grad += g * c

    out._backward = bwd
    return out


def add_const(a, c):
    out = DiffValue(a.data + float(c), (a,))

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def relu(a):
    out = DiffValue(np.maximum(a.data, 0.0), (a,))

    def bwd(g):
        a.grad += g * (a.data > 0.0)

    out._backward = bwd
    return out


def sigmoid(a):
    # expit via tanh avoids overflow warnings for very negative inputs
    s = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(a.data)))
    out = DiffValue(s, (a,))

    def bwd(g):
        a.grad += g * s * (1.0 - s)

    out._backward = bwd
    return out


def tanh(a):
    t = np.tanh(a.data)
    out = DiffValue(t, (a,))

    def bwd(g):
        a.grad += g * (1.0 - t * t)

    out._backward = bwd
    return out


def softplus(a):
    # log(1+e^x) with the large-x overflow guard
    v = np.logaddexp(0.0, a.data)
    out = DiffValue(v, (a,))
    s = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(a.data)))

    def bwd(g):
        a.grad += g * s

    out._backward = bwd
    return out


def exp(a):
    e = np.exp(a.data)
    out = DiffValue(e, (a,))

    def bwd(g):
        a.grad += g * e

    out._backward = bwd
    return out


def elu(a):
    em1 = np.expm1(a.data)
    v = np.where(a.data > 0.0, a.data, em1)
    out = DiffValue(v, (a,))

    def bwd(g):
        a.grad += g * np.where(a.data > 0.0, 1.0, em1 + 1.0)

    out._backward = bwd
    return out


def absval(a):
    out = DiffValue(np.abs(a.data), (a,))

    def bwd(g):
        a.grad += g * np.sign(a.data)

    out._backward = bwd
    return out


def square(a):
    out = DiffValue(a.data * a.data, (a,))

    def bwd(g):
        a.grad += g * 2.0 * a.data

    out._backward = bwd
    return out


def softmax(a):
    """Softmax over the last axis, computed with max-subtraction."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = DiffValue(s, (a,))

    def bwd(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        a.grad += s * (g - dot)

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, w):
    """``a @ w`` where w is a 2-D matrix; a may carry leading batch axes."""
    if a.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.data.shape} and {w.data.shape} differ")
    out = DiffValue(a.data @ w.data, (a, w))

    def bwd(g):
        a.grad += g @ w.data.T
        gw = np.swapaxes(a.data, -1, -2) @ g
        while gw.ndim > 2:
            gw = gw.sum(axis=0)
        w.grad += gw

    out._backward = bwd
    return out


def affine(x, w, b):
    """``x @ w + b`` with the bias broadcast over leading axes."""
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[-1]:
        raise ShapeError(
            f"affine: x {x.data.shape}, w {w.data.shape}, b {b.data.shape} do not conform"
        )
    out = DiffValue(x.data @ w.data + b.data, (x, w, b))

    def bwd(g):
        x.grad += g @ w.data.T
        gw = np.swapaxes(x.data, -1, -2) @ g
        while gw.ndim > 2:
            gw = gw.sum(axis=0)
        w.grad += gw
        b.grad += _unbroadcast(g, b.data.shape)

    out._backward = bwd
    return out


def bmatmul(a, b, transpose_b=False):
    """Batched matrix product of two stacked matrices."""
    bd = np.swapaxes(b.data, -1, -2) if transpose_b else b.data
    if a.data.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"bmatmul: inner dims {a.data.shape} and {b.data.shape} differ")
    out = DiffValue(a.data @ bd, (a, b))

    def bwd(g):
        a.grad += g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if transpose_b:
            gb = np.swapaxes(gb, -1, -2)
        b.grad += _unbroadcast(gb, b.data.shape)

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# shape ops


def concat(parts):
    """Concatenate along the last axis."""
    out = DiffValue(np.concatenate([p.data for p in parts], axis=-1), tuple(parts))
    sizes = [p.data.shape[-1] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.grad += g[..., lo:hi]

    out._backward = bwd
    return out


def split(a, sizes):
    """Split the last axis into chunks of the given sizes."""
    if sum(sizes) != a.data.shape[-1]:
        raise ShapeError(f"split: sizes {sizes} do not cover last axis of {a.data.shape}")
    outs = []
    lo = 0
    for size in sizes:
        lo_, hi = lo, lo + size
        part = DiffValue(a.data[..., lo_:hi], (a,))

        def bwd(g, lo_=lo_, hi=hi):
            a.grad[..., lo_:hi] += g

        part._backward = bwd
        outs.append(part)
        lo = hi
    return tuple(outs)


def reshape(a, shape):
    out = DiffValue(a.data.reshape(shape), (a,))

    def bwd(g):
        a.grad += g.reshape(a.data.shape)

    out._backward = bwd
    return out


def sum_all(a):
    out = DiffValue(a.data.sum(), (a,))

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def mean_all(a):
    n = a.data.size
    out = DiffValue(a.data.mean(), (a,))

    def bwd(g):
        a.grad += g / n

    out._backward = bwd
    return out


def sum_axis(a, axis, keepdims=False):
    out = DiffValue(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += g

    out._backward = bwd
    return out


def detach(a):
    """Cut the graph: same value, no gradient flow into `a`."""
    return DiffValue(a.data.copy())


def mse(a, b):
    """Mean squared error over all components."""
    _check_same_shape("mse", a, b)
    return mean_all(square(sub(a, b)))


# ---------------------------------------------------------------------------
# parameter collections


class ParamSet:
    """Named collection of learnable DiffValues with a step version counter."""

    def __init__(self):
        self._params = {}
        self.version = 0

    def add(self, name, data):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._params[name] = DiffValue(data)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def n_scalars(self):
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def clone(self):
        """Value-only deep copy sharing no storage (target network use)."""
        other = ParamSet()
        for name, p in self._params.items():
            other.add(name, p.data.copy())
        other.version = self.version
        return other

    def copy_from(self, source):
        """Hard-copy values from a ParamSet with identical names/shapes."""
        if self.names() != source.names():
            raise ValueError("parameter name sets differ")
        for name, p in self._params.items():
            src = source._params[name]
            if p.data.shape != src.data.shape:
                raise ShapeError(
                    f"copy_from: {name} shapes {p.data.shape} and {src.data.shape} differ"
                )
            p.data[...] = src.data

    def grad_norm(self):
        total = 0.0
        for p in self._params.values():
            total += float((p.grad * p.grad).sum())
        return total ** 0.5


def sgd_step(params, lr, clip=10.0):
    """In-place SGD update with optional global-norm clipping; zeroes grads.

    Returns the pre-clip gradient norm.
    """
    for name, p in params.items():
        if not np.isfinite(p.grad).all():
            raise NumericsError(f"non-finite gradient in parameter {name!r}")
    norm = params.grad_norm()
    factor = 1.0
    if clip is not None and norm > clip:
        factor = clip / norm
    for p in params.values():
        p.data -= lr * factor * p.grad
        p.zero_grad()
    params.version += 1
    return norm


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, count, then per-parameter records of
# (name length u32, name bytes, rank u32, dims u64..., float64-LE payload)

CHECKPOINT_MAGIC = b"TACITPRM"
CHECKPOINT_VERSION = 1


def save_params(path, params):
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.names())))
        for name, p in params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", p.data.ndim))
            for dim in p.data.shape:
                f.write(struct.pack("<Q", dim))
            f.write(p.data.astype("<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a parameter checkpoint: bad magic {magic!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        out = ParamSet()
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(rank))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
            out.add(name, data)
        return out
