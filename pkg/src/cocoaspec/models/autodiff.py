"""A small reverse-mode automatic differentiation engine over numpy.

Each op builds a :class:`Tensor` holding its value, the tensors it came
from, and a closure that scatters the output gradient back to them.
Calling backward() on a scalar tensor walks the graph once in reverse
topological order. Only the ops the network layers need are provided.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ValidationError


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward")

    def __init__(self, data, parents: tuple["Tensor", ...] = (), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every upstream tensor."""
        if self.data.size != 1:
            raise ValidationError("backward() starts from a scalar tensor")
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
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, (a, b))

    def backward(g: np.ndarray) -> None:
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    out._backward = backward
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1-d bias, broadcast over the leading axes of x."""
    if bias.data.ndim != 1:
        raise DimensionError("bias must be 1-d")
    out = Tensor(x.data + bias.data, (x, bias))
    axes = tuple(range(x.data.ndim - 1))

    def backward(g: np.ndarray) -> None:
        x.grad += g
        bias.grad += g.sum(axis=axes)

    out._backward = backward
    return out


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias to a (batch, channels, length) tensor."""
    if x.data.ndim != 3 or bias.data.ndim != 1:
        raise DimensionError("add_channel_bias expects 3-d input and 1-d bias")
    out = Tensor(x.data + bias.data[None, :, None], (x, bias))

    def backward(g: np.ndarray) -> None:
        x.grad += g
        bias.grad += g.sum(axis=(0, 2))

    out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def backward(g: np.ndarray) -> None:
        x.grad += g * (x.data > 0.0)

    out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    value = np.tanh(x.data)
    out = Tensor(value, (x,))

    def backward(g: np.ndarray) -> None:
        x.grad += g * (1.0 - value**2)

    out._backward = backward
    return out


def conv1d(x: Tensor, weight: Tensor, stride: int = 1) -> Tensor:
    """Valid cross-correlation of (batch, in_ch, length) with
    (out_ch, in_ch, kernel)."""
    if x.data.ndim != 3 or weight.data.ndim != 3:
        raise DimensionError("conv1d expects 3-d input and weights")
    if stride < 1:
        raise ValidationError("stride must be at least 1")
    _, in_ch, length = x.data.shape
    out_ch, w_in_ch, kernel = weight.data.shape
    if in_ch != w_in_ch:
        raise DimensionError("input channels do not match the kernel")
    if kernel > length:
        raise DimensionError("kernel is longer than the input")
    windows = sliding_window_view(x.data, kernel, axis=2)[:, :, ::stride, :]
    out = Tensor(np.einsum("bilk,oik->bol", windows, weight.data), (x, weight))
    n_out = out.data.shape[2]

    def backward(g: np.ndarray) -> None:
        weight.grad += np.einsum("bol,bilk->oik", g, windows)
        for t in range(n_out):
            start = t * stride
            x.grad[:, :, start : start + kernel] += np.einsum(
                "bo,oik->bik", g[:, :, t], weight.data
            )

    out._backward = backward
    return out


def avg_pool1d(x: Tensor, width: int) -> Tensor:
    """Non-overlapping mean pooling along the last axis; a tail shorter
    than the window is dropped."""
    if x.data.ndim != 3:
        raise DimensionError("avg_pool1d expects 3-d input")
    if width < 1:
        raise ValidationError("pool width must be at least 1")
    batch, channels, length = x.data.shape
    n_out = length // width
    if n_out == 0:
        raise DimensionError("input is shorter than the pooling window")
    trimmed = x.data[:, :, : n_out * width]
    out = Tensor(trimmed.reshape(batch, channels, n_out, width).mean(axis=3), (x,))

    def backward(g: np.ndarray) -> None:
        spread = np.repeat(g, width, axis=2) / width
        x.grad[:, :, : n_out * width] += spread

    out._backward = backward
    return out


def flatten(x: Tensor) -> Tensor:
    batch = x.data.shape[0]
    out = Tensor(x.data.reshape(batch, -1), (x,))

    def backward(g: np.ndarray) -> None:
        x.grad += g.reshape(x.data.shape)

    out._backward = backward
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape), (x,))

    def backward(g: np.ndarray) -> None:
        x.grad += g.reshape(x.data.shape)

    out._backward = backward
    return out


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise DimensionError(
            f"prediction shape {pred.data.shape} does not match target {target.shape}"
        )
    diff = pred.data - target
    out = Tensor(np.mean(diff**2), (pred,))

    def backward(g: np.ndarray) -> None:
        pred.grad += g * (2.0 / diff.size) * diff

    out._backward = backward
    return out
