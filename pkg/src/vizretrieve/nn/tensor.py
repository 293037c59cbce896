"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps a float64 ndarray plus a backward closure; calling
``backward()`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into every tensor that requires them.
The op set is exactly what the three networks in this package need:
dense and conv layers, pooling, pointwise nonlinearities, reductions,
row gather/scatter for graphs, and cosine machinery for the losses.

Everything runs in float64; embeddings are narrowed to float32 only when
they are written to disk.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch

Array = np.ndarray


def _as_array(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeMismatch("backward() starts from a scalar loss")
        # Iterative post-order walk; training graphs are shallow but wide.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    @property
    def T(self):
        return transpose(self)


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gdim, sdim) in enumerate(zip(grad.shape, shape)) if sdim == 1 and gdim != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a: Tensor, b: Tensor, out_data: Array, da, db) -> Tensor:
    requires = a.requires_grad or b.requires_grad
    out = Tensor(out_data, requires_grad=requires, _parents=(a, b) if requires else ())

    if requires:

        def backward(g: Array) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(da(g), a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(db(g), b.data.shape))

        out._backward = backward
    return out


def _unary(a: Tensor, out_data: Array, da) -> Tensor:
    out = Tensor(out_data, requires_grad=a.requires_grad, _parents=(a,) if a.requires_grad else ())
    if a.requires_grad:

        def backward(g: Array) -> None:
            a._accumulate(da(g))

        out._backward = backward
    return out


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.data.shape} vs {b.data.shape}") from exc
    return _binary(a, b, out, lambda g: g, lambda g: g)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.data.shape} vs {b.data.shape}") from exc
    return _binary(a, b, out, lambda g: g * b.data, lambda g: g * a.data)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data / b.data
    except ValueError as exc:
        raise ShapeMismatch(f"div: {a.data.shape} vs {b.data.shape}") from exc
    return _binary(
        a, b, out, lambda g: g / b.data, lambda g: -g * a.data / (b.data * b.data)
    )


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _unary(a, np.where(mask, a.data, 0.0), lambda g: g * mask)


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data)
    # d/dx log(1 + e^x) = sigmoid(x), written in its overflow-safe form
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _unary(a, out, lambda g: g * sig)


def log(a: Tensor) -> Tensor:
    return _unary(a, np.log(a.data), lambda g: g / a.data)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _unary(a, out, lambda g: g * out)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _unary(a, out, lambda g: g * 0.5 / out)


# -- reductions -------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def da(g: Array) -> Array:
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape).copy()

    return _unary(a, out, da)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def batch_mean(a: Tensor, axis: int = 0, keepdims: bool = True) -> Tensor:
    return mean_(a, axis=axis, keepdims=keepdims)


def batch_var(a: Tensor, axis: int = 0, keepdims: bool = True) -> Tensor:
    """Population variance along one axis, composed from primitives."""
    centered = add(a, mul(batch_mean(a, axis=axis, keepdims=True), -1.0))
    return mean_(mul(centered, centered), axis=axis, keepdims=keepdims)


# -- shape ops --------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old_shape = a.data.shape
    return _unary(a, a.data.reshape(shape), lambda g: g.reshape(old_shape))


def transpose(a: Tensor, axes=None) -> Tensor:
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _unary(
        a,
        np.transpose(a.data, axes),
        lambda g: np.transpose(g, inverse),
    )


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    requires = any(t.requires_grad for t in tensors)
    out = Tensor(data, requires_grad=requires, _parents=tuple(tensors) if requires else ())
    if requires:
        splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

        def backward(g: Array) -> None:
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)

        out._backward = backward
    return out


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch("matmul expects 2-d operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data
    return _binary(a, b, out, lambda g: g @ b.data.T, lambda g: a.data.T @ g)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Select rows by index; backward scatter-adds into the source rows."""
    idx = np.asarray(index, dtype=np.int64)
    n = x.data.shape[0]
    return _unary(x, x.data[idx], lambda g: kernels.segment_sum(g, idx, n))


def segment_sum(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of x into ``num_segments`` buckets given per-row bucket ids."""
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape[0] != x.data.shape[0]:
        raise ShapeMismatch("segment ids must align with rows")
    out = kernels.segment_sum(x.data, seg, num_segments)
    return _unary(x, out, lambda g: np.ascontiguousarray(g[seg]))


def l2_normalize(x: Tensor, axis: int = 1, eps: float = 1e-12) -> Tensor:
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + eps * eps)
    y = x.data / norm

    def da(g: Array) -> Array:
        inner = (y * g).sum(axis=axis, keepdims=True)
        return (g - y * inner) / norm

    return _unary(x, y, da)


def cosine_similarity(a: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    """Row-wise cosine similarity, built from l2_normalize."""
    return sum_(mul(l2_normalize(a, axis=axis), l2_normalize(b, axis=axis)), axis=axis)


def stop_gradient(x: Tensor) -> Tensor:
    """Identity on values; the backward pass never crosses this node."""
    return Tensor(x.data.copy(), requires_grad=False)


# -- convolution and pooling ------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d expects NCHW input and FCHW weights")
    n, c, h, wd = x.data.shape
    f, cw, kh, kw = w.data.shape
    if cw != c:
        raise ShapeMismatch(f"conv2d channels: input {c}, weight {cw}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    oh = kernels.conv_out_size(h, kh, stride, pad)
    ow = kernels.conv_out_size(wd, kw, stride, pad)
    cols = kernels.im2col(xp, kh, kw, stride)
    w2 = w.data.reshape(f, c * kh * kw)
    y = np.matmul(w2, cols)
    if b is not None:
        y = y + b.data.reshape(1, f, 1)
    out_data = y.reshape(n, f, oh, ow)

    parents = tuple(t for t in (x, w, b) if t is not None and t.requires_grad)
    out = Tensor(out_data, requires_grad=bool(parents), _parents=parents)
    if parents:

        def backward(g: Array) -> None:
            gl = g.reshape(n, f, oh * ow)
            if w.requires_grad:
                dw = np.matmul(gl, cols.transpose(0, 2, 1)).sum(axis=0)
                w._accumulate(dw.reshape(w.data.shape))
            if b is not None and b.requires_grad:
                b._accumulate(gl.sum(axis=(0, 2)))
            if x.requires_grad:
                dcols = np.matmul(w2.T, gl)
                dxp = kernels.col2im(dcols, n, c, hp, wp, kh, kw, stride)
                x._accumulate(dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp)

        out._backward = backward
    return out


def maxpool2d(x: Tensor, pool: int = 2) -> Tensor:
    """Non-overlapping max pooling (stride equals the window)."""
    n, c, h, w = x.data.shape
    out_data, arg = kernels.pool_max(x.data, pool)
    return _unary(
        x, out_data, lambda g: kernels.pool_max_backward(g, arg, pool, h, w)
    )


def avgpool2d(x: Tensor, pool: int = 2) -> Tensor:
    n, c, h, w = x.data.shape
    oh, ow = h // pool, w // pool
    tiles = x.data[:, :, : oh * pool, : ow * pool].reshape(n, c, oh, pool, ow, pool)
    out_data = tiles.mean(axis=(3, 5))

    def da(g: Array) -> Array:
        dx = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, pool, axis=2), pool, axis=3) / (pool * pool)
        dx[:, :, : oh * pool, : ow * pool] = spread
        return dx

    return _unary(x, out_data, da)
