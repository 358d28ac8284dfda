"""Array-valued reverse-mode automatic differentiation on a recorded tape.

Operations executed while a :class:`Tape` is active, and whose inputs require
gradients, append a node ``(output, inputs, backward_fn)`` to the tape.
``Tape.backward`` replays the nodes in reverse order, accumulating gradients
into ``Tensor.grad``. Outside a tape nothing is recorded, which is what
inference uses.
"""

from __future__ import annotations

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # shape ops -------------------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def take(self, index, axis=0):
        return take(self, index, axis)

    def flip(self, axis):
        return flip(self, axis)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Tape:
    """Records differentiable operations for one forward pass."""

    def __init__(self):
        self.nodes: list = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, out: Tensor, grad=None):
        """Back-propagate from ``out`` (a scalar unless ``grad`` is given)."""
        if grad is None:
            if out.size != 1:
                raise ValueError("backward from a non-scalar needs an explicit grad")
            grad = np.ones_like(out.data)
        out.grad = np.asarray(grad, dtype=np.float64).reshape(out.shape).copy()
        for node_out, inputs, fn in reversed(self.nodes):
            g = node_out.grad
            if g is None:
                continue
            grads = fn(g)
            for t, gi in zip(inputs, grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(gi, dtype=np.float64).reshape(t.shape)
                else:
                    t.grad = t.grad + gi


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data, inputs, backward) -> Tensor:
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append((out, inputs, backward))
    return out


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise binary ------------------------------------------------------------

def add(a, b):
    a_, b_ = _data(a), _data(b)
    return _record(a_ + b_, (a, b), lambda g: (unbroadcast(g, a_.shape), unbroadcast(g, b_.shape)))


def sub(a, b):
    a_, b_ = _data(a), _data(b)
    return _record(a_ - b_, (a, b), lambda g: (unbroadcast(g, a_.shape), unbroadcast(-g, b_.shape)))


def mul(a, b):
    a_, b_ = _data(a), _data(b)
    return _record(a_ * b_, (a, b),
                   lambda g: (unbroadcast(g * b_, a_.shape), unbroadcast(g * a_, b_.shape)))


def div(a, b):
    a_, b_ = _data(a), _data(b)
    return _record(a_ / b_, (a, b),
                   lambda g: (unbroadcast(g / b_, a_.shape), unbroadcast(-g * a_ / (b_ * b_), b_.shape)))


def matmul(a, b):
    a_, b_ = _data(a), _data(b)

    def back(g):
        ga = g @ np.swapaxes(b_, -1, -2)
        if b_.ndim == 2:
            gb = a_.reshape(-1, a_.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = unbroadcast(np.swapaxes(a_, -1, -2) @ g, b_.shape)
        return unbroadcast(ga, a_.shape), gb

    return _record(a_ @ b_, (a, b), back)


# reductions and shape ------------------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x_ = _data(x)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x_.shape),)

    return _record(x_.sum(axis=axis, keepdims=keepdims), (x,), back)


def mean(x, axis=None, keepdims=False):
    x_ = _data(x)
    n = x_.size if axis is None else np.prod([x_.shape[a] for a in np.atleast_1d(axis)])
    return sum_(x, axis, keepdims) * (1.0 / n)


def reshape(x, shape):
    x_ = _data(x)
    return _record(x_.reshape(shape), (x,), lambda g: (g.reshape(x_.shape),))


def transpose(x, axes=None):
    x_ = _data(x)
    axes = tuple(range(x_.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _record(x_.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def take(x, index, axis=0):
    x_ = _data(x)
    index = np.asarray(index, dtype=np.int64)
    axis = axis % x_.ndim

    def back(g):
        gx = np.zeros_like(x_)
        gm = np.moveaxis(gx, axis, 0)
        np.add.at(gm, index, np.moveaxis(g, axis, 0))
        return (gx,)

    return _record(np.take(x_, index, axis=axis), (x,), back)


def flip(x, axis):
    x_ = _data(x)
    return _record(np.flip(x_, axis).copy(), (x,), lambda g: (np.flip(g, axis),))


def getitem(x, idx):
    x_ = _data(x)

    def back(g):
        gx = np.zeros_like(x_)
        gx[idx] += g
        return (gx,)

    return _record(x_[idx].copy(), (x,), back)


def concat(xs, axis=-1):
    arrays = [_data(x) for x in xs]
    axis = axis % arrays[0].ndim
    sizes = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _record(np.concatenate(arrays, axis=axis), tuple(xs), back)


def stack(xs, axis=0):
    arrays = [_data(x) for x in xs]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _record(np.stack(arrays, axis=axis), tuple(xs), back)
