"""Reverse-mode autodiff over dense float64 arrays.

Every op returns a new :class:`Tensor` holding its parents and a closure that
pushes the output gradient back to them. :meth:`Tensor.backward` runs the
closures in reverse topological order, summing contributions for tensors
used more than once.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgumentError, ShapeError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), op=""):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Populate ``.grad`` on every tensor that requires it.

        Only scalar outputs may be differentiated without an explicit seed.
        Interior gradients are released afterwards; leaves keep theirs.
        """
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError(
                    f"backward() needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.broadcast_to(grad, self.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None
                node._backward = None
                node._parents = ()

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return total(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, op):
    return Tensor(data, any(p.requires_grad for p in parents), parents, op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data + b.data, (a, b), "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out._backward = backward
    return out


def residual_add(a, b):
    """Elementwise sum of two same-shape activations."""
    if a.shape != b.shape:
        raise ShapeError(f"residual_add expects equal shapes, got {a.shape} and {b.shape}")
    return add(a, b)


def neg(a):
    out = _result(-a.data, (a,), "neg")
    out._backward = lambda g: a._accumulate(-g)
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _result(a.data * b.data, (a, b), "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = backward
    return out


def power(a, exponent):
    if isinstance(exponent, Tensor):
        raise InvalidArgumentError("only constant exponents are supported")
    out = _result(a.data ** exponent, (a,), f"pow{exponent}")
    out._backward = lambda g: a._accumulate(g * exponent * a.data ** (exponent - 1))
    return out


def total(a):
    out = _result(a.data.sum(), (a,), "sum")
    out._backward = lambda g: a._accumulate(np.broadcast_to(g, a.shape))
    return out


def mean(a):
    n = a.data.size
    out = _result(a.data.mean(), (a,), "mean")
    out._backward = lambda g: a._accumulate(np.broadcast_to(g / n, a.shape))
    return out


def reshape(a, shape):
    out = _result(a.data.reshape(shape), (a,), "reshape")
    out._backward = lambda g: a._accumulate(g.reshape(a.shape))
    return out


def take(a, index):
    out = _result(a.data[index], (a,), "index")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accumulate(full)

    out._backward = backward
    return out


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out._backward = backward
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} are incompatible")
    out = _result(a.data @ b.data, (a, b), "matmul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out._backward = backward
    return out


def relu(a):
    mask = a.data > 0
    out = _result(np.where(mask, a.data, 0.0), (a,), "relu")
    out._backward = lambda g: a._accumulate(g * mask)
    return out


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` for ``x`` of shape (batch, features)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear expects (batch, {weight.shape[1]}), got {x.shape}")
    parents = (x, weight) if bias is None else (x, weight, bias)
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    out = _result(data, parents, "linear")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    out._backward = backward
    return out


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation of (B, C, L) input with (O, C, K) kernels, zero padded."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv1d expects input (B, {weight.shape[1]}, L), got {x.shape}")
    if stride < 1:
        raise InvalidArgumentError("conv1d stride must be >= 1")
    B, C, L = x.shape
    O, _, K = weight.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    Lp = xp.shape[2]
    if Lp < K:
        raise ShapeError(f"conv1d input length {L} (+{2 * padding} padding) shorter than kernel {K}")
    Lout = (Lp - K) // stride + 1
    win = sliding_window_view(xp, K, axis=2)[:, :, : (Lout - 1) * stride + 1: stride, :]
    cols = win.transpose(0, 2, 1, 3).reshape(B * Lout, C * K)
    wmat = weight.data.reshape(O, C * K)
    y = cols @ wmat.T
    if bias is not None:
        y += bias.data
    data = np.ascontiguousarray(y.reshape(B, Lout, O).transpose(0, 2, 1))
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _result(data, parents, "conv1d")

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(B * Lout, O)
        if weight.requires_grad:
            weight._accumulate((g2.T @ cols).reshape(O, C, K))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(B, Lout, C, K)
            dxp = np.zeros((B, C, Lp))
            span = (Lout - 1) * stride + 1
            for k in range(K):
                dxp[:, :, k:k + span:stride] += dcols[:, :, :, k].transpose(0, 2, 1)
            x._accumulate(dxp[:, :, padding:padding + L])

    out._backward = backward
    return out


def batch_norm1d(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel normalisation of (B, C, L) or (B, C) input.

    In training mode batch statistics (population variance) are used and the
    running buffers are updated in place; in eval mode the buffers are used
    and the op is a fixed affine map.
    """
    if x.ndim not in (2, 3) or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batch_norm1d expects (B, {gamma.shape[0]}, ...), got {x.shape}")
    axes = (0, 2) if x.ndim == 3 else (0,)
    shape = (1, -1, 1) if x.ndim == 3 else (1, -1)
    if training:
        n = x.data.size // x.shape[1]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shape)) * inv_std.reshape(shape)
    data = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    out = _result(data, (x, gamma, beta), "batchnorm1d")

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if training:
                m = dxhat.mean(axis=axes, keepdims=True)
                mx = (dxhat * xhat).mean(axis=axes, keepdims=True)
                x._accumulate((dxhat - m - xhat * mx) * inv_std.reshape(shape))
            else:
                x._accumulate(dxhat * inv_std.reshape(shape))

    out._backward = backward
    return out


def max_pool1d(x, kernel_size, stride=None, padding=0):
    stride = kernel_size if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"max_pool1d expects (B, C, L), got {x.shape}")
    B, C, L = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)), constant_values=-np.inf) if padding else x.data
    Lp = xp.shape[2]
    if Lp < kernel_size:
        raise ShapeError(f"max_pool1d input length {L} shorter than kernel {kernel_size}")
    Lout = (Lp - kernel_size) // stride + 1
    win = sliding_window_view(xp, kernel_size, axis=2)[:, :, : (Lout - 1) * stride + 1: stride, :]
    arg = win.argmax(axis=3)
    data = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    out = _result(data, (x,), "maxpool1d")

    def backward(g):
        dxp = np.zeros((B, C, Lp))
        span = (Lout - 1) * stride + 1
        for k in range(kernel_size):
            dxp[:, :, k:k + span:stride] += g * (arg == k)
        x._accumulate(dxp[:, :, padding:padding + L])

    out._backward = backward
    return out


def global_avg_pool(x):
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects (B, C, L), got {x.shape}")
    L = x.shape[2]
    out = _result(x.data.mean(axis=2), (x,), "global_avg_pool")
    out._backward = lambda g: x._accumulate(np.broadcast_to(g[:, :, None] / L, x.shape))
    return out


def mse_loss(pred, target):
    """Mean squared error over every element."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return mean(diff * diff)
