"""Reverse-mode automatic differentiation on top of numpy.

Only the operations needed by the functional and convolutional networks in
this package are provided. Every op takes and returns :class:`Tensor` and
records a closure that maps the output gradient to the input gradients.
Activations are laid out channels-last: ``(batch, steps, channels)``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeError

_GRAD_ENABLED = True

# Upper bound on the im2col buffer, in elements, before the batch is chunked.
_IM2COL_BUDGET = 1 << 23


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An n-dimensional array that can take part in a differentiable graph.

    ``grad`` accumulates across calls to :meth:`backward`; call
    :meth:`zero_grad` (or let the optimizer do it) between updates.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Propagate ``grad`` (default 1 for scalars) to every leaf in the graph."""
        if not self.requires_grad:
            raise RuntimeError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other, self.dtype), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return multiply(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return total(self)

    def mean(self):
        return scale(total(self), 1.0 / self.size)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# --------------------------------------------------------------------------
# elementwise and structural ops
# --------------------------------------------------------------------------

def add(a, b) -> Tensor:
    """Elementwise sum of two equally shaped tensors."""
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def residual_add(a: Tensor, b: Tensor) -> Tensor:
    """Skip-connection sum; identical shapes are required."""
    return add(a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = a.dtype.type(factor)
    return _node(a.data * factor, (a,), lambda g: (g * factor,))


def multiply(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.shape != b.shape:
        raise ShapeError(f"multiply: shapes {a.shape} and {b.shape} differ")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def total(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def flatten(a: Tensor) -> Tensor:
    """Collapse every axis after the batch axis."""
    return reshape(a, (a.shape[0], -1))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Broadcast-add a vector along the last axis."""
    if bias.ndim != 1 or bias.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias of shape {bias.shape} does not match last axis of {x.shape}")
    axes = tuple(range(x.ndim - 1))
    return _node(x.data + bias.data, (x, bias), lambda g: (g, g.sum(axis=axes)))


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum without implicit output or repeated indices.

    Every index of an operand must appear in the output or in the other
    operand, which keeps both gradients expressible as einsums.
    """
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    lhs, out_s = subscripts.replace(" ", "").split("->")
    a_s, b_s = lhs.split(",")
    for mine, other in ((a_s, b_s), (b_s, a_s)):
        if len(set(mine)) != len(mine):
            raise ValueError(f"repeated index in operand '{mine}'")
        missing = set(mine) - set(out_s) - set(other)
        if missing:
            raise ValueError(f"indices {sorted(missing)} are summed within one operand only")
    data = np.einsum(subscripts, a.data, b.data, optimize=True)

    def backward(g):
        ga = np.einsum(f"{out_s},{b_s}->{a_s}", g, b.data, optimize=True) if a.requires_grad else None
        gb = np.einsum(f"{out_s},{a_s}->{b_s}", g, a.data, optimize=True) if b.requires_grad else None
        return ga, gb

    return _node(data, (a, b), backward)


# --------------------------------------------------------------------------
# network primitives
# --------------------------------------------------------------------------

def dense(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weights + bias`` over the last axis of ``x``."""
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"dense: input features {x.shape[-1]} do not match weights {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match {weights.shape[1]} outputs")
    n_in, n_out = weights.shape
    out = x.data @ weights.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, n_out)
        gx = (g @ weights.data.T) if x.requires_grad else None
        gw = x.data.reshape(-1, n_in).T @ g2 if weights.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weights) if bias is None else (x, weights, bias)
    return _node(out, parents, backward)


def same_padding(steps: int, kernel_size: int, stride: int = 1) -> tuple[int, int]:
    """Leading/trailing pad so that ``steps_out == ceil(steps / stride)``.

    An odd total is resolved by padding one extra sample on the trailing side.
    """
    steps_out = -(-steps // stride)
    total_pad = max((steps_out - 1) * stride + kernel_size - steps, 0)
    lead = total_pad // 2
    return lead, total_pad - lead


def _correlate_valid(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    # xp: (B, Tp, Ci), w: (K, Ci, Co) -> (B, Tout, Co)
    k, ci, co = w.shape
    batch = xp.shape[0]
    t_out = (xp.shape[1] - k) // stride + 1
    out = np.empty((batch, t_out, co), dtype=np.result_type(xp, w))
    if k == 1:
        np.matmul(xp[:, : (t_out - 1) * stride + 1 : stride], w[0], out=out)
        return out
    wk = w.transpose(1, 0, 2)  # (Ci, K, Co) to match window layout
    chunk = max(1, _IM2COL_BUDGET // max(1, t_out * ci * k))
    for start in range(0, batch, chunk):
        win = sliding_window_view(xp[start:start + chunk], k, axis=1)[:, ::stride]
        out[start:start + chunk] = np.tensordot(win, wk, axes=([2, 3], [0, 1]))
    return out


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           padding: str = "same", stride: int = 1) -> Tensor:
    """1-D cross-correlation over the steps axis of ``(batch, steps, ch_in)``.

    ``kernel`` has shape ``(k, ch_in, ch_out)``.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects (batch, steps, channels), got {x.shape}")
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d kernel must be (k, ch_in, ch_out), got {kernel.shape}")
    batch, steps, ch_in = x.shape
    k, k_in, ch_out = kernel.shape
    if k_in != ch_in:
        raise ShapeError(f"conv1d: kernel expects {k_in} input channels, input has {ch_in}")
    if bias is not None and bias.shape != (ch_out,):
        raise ShapeError(f"conv1d: bias {bias.shape} does not match {ch_out} filters")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if padding == "same":
        lead, trail = same_padding(steps, k, stride)
    elif padding == "valid":
        if k > steps:
            raise ShapeError(f"conv1d: kernel size {k} exceeds {steps} steps with valid padding")
        lead = trail = 0
    else:
        raise ValueError(f"unknown padding '{padding}'")

    xp = np.pad(x.data, ((0, 0), (lead, trail), (0, 0))) if lead or trail else x.data
    out = _correlate_valid(xp, kernel.data, stride)
    t_out = out.shape[1]
    if bias is not None:
        out += bias.data

    def backward(g):
        gx = gk = gb = None
        if x.requires_grad:
            if stride == 1:
                flipped = kernel.data[::-1].transpose(0, 2, 1)
                gp = np.pad(g, ((0, 0), (k - 1, k - 1), (0, 0)))
                gxp = _correlate_valid(gp, np.ascontiguousarray(flipped), 1)
            else:
                gxp = np.zeros_like(xp)
                span = (t_out - 1) * stride + 1
                for tap in range(k):
                    gxp[:, tap:tap + span:stride] += g @ kernel.data[tap].T
            gx = gxp[:, lead:lead + steps]
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            span = (t_out - 1) * stride + 1
            g2 = g.reshape(-1, ch_out)
            for tap in range(k):
                gk[tap] = xp[:, tap:tap + span:stride].reshape(-1, ch_in).T @ g2
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 1))
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _node(out, parents, backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.99, eps: float = 1e-3) -> Tensor:
    """Per-channel normalization over every axis but the last.

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch_stat``.
    """
    if eps <= 0:
        raise ValueError("batch_norm eps must be positive")
    ch = x.shape[-1]
    if gamma.shape != (ch,) or beta.shape != (ch,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({ch},)")
    axes = tuple(range(x.ndim - 1))
    n = x.size // ch
    if training:
        if n < 2:
            raise ShapeError("batch_norm in training mode needs at least 2 values per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var * (n / (n - 1))
    else:
        mean = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean) * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            if training:
                s1 = dxhat.sum(axis=axes)
                s2 = (dxhat * xhat).sum(axis=axes)
                gx = (inv_std / n) * (n * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * inv_std
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        return gx, gg, gb

    return _node(out, (x, gamma, beta), backward)


def avg_pool1d(x: Tensor, pool_size: int, stride: int | None = None) -> Tensor:
    """Windowed mean over the steps axis (no padding)."""
    stride = pool_size if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"avg_pool1d expects (batch, steps, channels), got {x.shape}")
    steps = x.shape[1]
    if pool_size > steps:
        raise ShapeError(f"avg_pool1d: pool size {pool_size} exceeds {steps} steps")
    win = sliding_window_view(x.data, pool_size, axis=1)[:, ::stride]
    out = win.mean(axis=-1)
    t_out = out.shape[1]
    span = (t_out - 1) * stride + 1

    def backward(g):
        gx = np.zeros_like(x.data)
        share = g / pool_size
        for offset in range(pool_size):
            gx[:, offset:offset + span:stride] += share
        return (gx,)

    return _node(out, (x,), backward)


def global_avg_pool1d(x: Tensor) -> Tensor:
    """Mean over the steps axis: ``(batch, steps, ch) -> (batch, ch)``."""
    steps = x.shape[1]
    return _node(x.data.mean(axis=1), (x,),
                 lambda g: (np.repeat(g[:, None, :] / steps, steps, axis=1),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def elu(x: Tensor) -> Tensor:
    """ELU with alpha = 1."""
    pos = x.data > 0
    neg_exp = np.exp(np.minimum(x.data, 0))
    out = np.where(pos, x.data, neg_exp - 1).astype(x.dtype)
    slope = np.where(pos, 1.0, neg_exp).astype(x.dtype)
    return _node(out, (x,), lambda g: (g * slope,))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "elu":
        return elu(x)
    if kind in ("linear", None):
        return x
    raise ValueError(f"unknown activation '{kind}'")


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all entries."""
    target_arr = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if pred.shape != target_arr.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target_arr.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss on an empty batch")
    diff = pred.data - target_arr
    n = diff.size
    value = np.asarray((diff * diff).sum() / n, dtype=pred.dtype)
    return _node(value, (pred,), lambda g: (g * (2.0 / n) * diff,))
