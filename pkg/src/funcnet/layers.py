"""Layer modules, including the basis-expansion (functional) layers.

A :class:`Module` owns :class:`Parameter` tensors and child modules and
knows its output shape without running data through it. Functional layers
store basis coefficients as their weights; the kernel or weight function
is materialized from a fixed basis matrix on every forward pass, so the
coefficients receive gradients through an ordinary einsum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .basis import BasisSpec, evaluate_basis
from .exceptions import ShapeError
from .tensor import Tensor

ACTIVATIONS = ("relu", "elu", "linear")


class Parameter(Tensor):
    """A trainable leaf tensor with a registry name."""

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32, gain: float = 1.0) -> np.ndarray:
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _basis_gain(basis: np.ndarray) -> float:
    # Coefficients are drawn so the materialized weights have Glorot variance.
    return float(1.0 / np.sqrt(np.mean(np.sum(basis * basis, axis=1))))


class Module:
    training = True

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:  # pragma: no cover - abstract
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{key}", value
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for key, child in self.children():
            yield from child.named_modules(f"{prefix}{key}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def count_params(self) -> int:
        return sum(p.size for p in self.parameters() if p.trainable)

    def buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, child in self.children():
            yield from child.buffers(f"{prefix}{key}.")

    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)


class Sequential(Module):
    """Ordered container; children are addressed by their given names."""

    def __init__(self, layers: list[tuple[str, Module]]):
        self._order = []
        for name, layer in layers:
            if name in vars(self):
                raise ValueError(f"duplicate layer name '{name}'")
            setattr(self, name, layer)
            self._order.append(name)

    def children(self):
        for name in self._order:
            yield name, getattr(self, name)

    def forward(self, x):
        for _, layer in self.children():
            x = layer(x)
        return x

    def output_shape(self, shape):
        for _, layer in self.children():
            shape = layer.output_shape(shape)
        return shape

    def trace_shapes(self, shape) -> list[tuple[str, tuple]]:
        rows = []
        for name, layer in self.children():
            shape = layer.output_shape(shape)
            rows.append((name, shape))
        return rows


def _check_channels(shape, expected: int, who: str):
    if shape[-1] != expected:
        raise ShapeError(f"{who}: expected {expected} input channels, got {shape[-1]}")


class Conv1D(Module):
    def __init__(self, ch_in, filters, kernel_size, padding="same", stride=1,
                 activation="linear", rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ch_in, self.filters, self.kernel_size = ch_in, filters, kernel_size
        self.padding, self.stride, self.activation = padding, stride, activation
        self.kernel = Parameter(glorot_uniform(rng, (kernel_size, ch_in, filters),
                                               kernel_size * ch_in, kernel_size * filters, dtype))
        self.bias = Parameter(np.zeros(filters, dtype=dtype))

    def forward(self, x):
        y = T.conv1d(x, self.kernel, self.bias, self.padding, self.stride)
        return T.activation(y, self.activation)

    def output_shape(self, shape):
        _check_channels(shape, self.ch_in, "Conv1D")
        b, steps, _ = shape
        if self.padding == "same":
            out = -(-steps // self.stride)
        else:
            if self.kernel_size > steps:
                raise ShapeError(f"Conv1D: kernel {self.kernel_size} longer than {steps} steps")
            out = (steps - self.kernel_size) // self.stride + 1
        return (b, out, self.filters)


class SpatialFilter(Conv1D):
    """Kernel-size-1 convolution mixing electrodes at each time point."""

    def __init__(self, ch_in, filters, rng=None, dtype=np.float32):
        super().__init__(ch_in, filters, 1, rng=rng, dtype=dtype)


class Dense(Module):
    def __init__(self, n_in, neurons, activation="linear", rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.neurons, self.activation = n_in, neurons, activation
        self.weights = Parameter(glorot_uniform(rng, (n_in, neurons), n_in, neurons, dtype))
        self.bias = Parameter(np.zeros(neurons, dtype=dtype))

    def forward(self, x):
        return T.activation(T.dense(x, self.weights, self.bias), self.activation)

    def output_shape(self, shape):
        _check_channels(shape, self.n_in, "Dense")
        return (*shape[:-1], self.neurons)


class BatchNorm(Module):
    def __init__(self, channels, momentum=0.99, eps=1e-3, dtype=np.float32):
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)

    def buffers(self, prefix=""):
        yield f"{prefix}running_mean", self.running_mean
        yield f"{prefix}running_var", self.running_var

    def output_shape(self, shape):
        _check_channels(shape, self.channels, "BatchNorm")
        return shape


class Activation(Module):
    def __init__(self, kind):
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{kind}'")
        self.kind = kind

    def forward(self, x):
        return T.activation(x, self.kind)


class AvgPool1D(Module):
    def __init__(self, pool_size=2, stride=2):
        self.pool_size, self.stride = pool_size, stride

    def forward(self, x):
        return T.avg_pool1d(x, self.pool_size, self.stride)

    def output_shape(self, shape):
        b, steps, ch = shape
        if self.pool_size > steps:
            raise ShapeError(f"AvgPool1D: pool {self.pool_size} longer than {steps} steps")
        return (b, (steps - self.pool_size) // self.stride + 1, ch)


class GlobalAvgPool1D(Module):
    def forward(self, x):
        return T.global_avg_pool1d(x)

    def output_shape(self, shape):
        return (shape[0], shape[2])


class Flatten(Module):
    def forward(self, x):
        return T.flatten(x)

    def output_shape(self, shape):
        return (shape[0], int(np.prod(shape[1:])))


# --------------------------------------------------------------------------
# functional layers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FuncConv1DSpec:
    filters: int
    resolution: int
    n_functions: int
    basis_type: str = "fourier"
    padding: str = "same"


@dataclass(frozen=True)
class FuncDenseSpec:
    neurons: int
    n_functions: int
    basis_type: str = "legendre"
    pooling: bool = False
    activation: str = "linear"


@dataclass(frozen=True)
class SpatialFilterSpec:
    filters: int


def parameter_count(spec, ch_in: int) -> int:
    """Trainable parameters of a layer spec fed with ``ch_in`` channels."""
    if isinstance(spec, FuncConv1DSpec):
        return ch_in * spec.filters * spec.n_functions + spec.filters
    if isinstance(spec, FuncDenseSpec):
        return ch_in * spec.neurons * spec.n_functions + spec.neurons
    if isinstance(spec, SpatialFilterSpec):
        return ch_in * spec.filters + spec.filters
    raise TypeError(f"no parameter formula for {type(spec).__name__}")


def func_conv1d_forward(x: Tensor, spec: FuncConv1DSpec, coeffs: Tensor, bias: Tensor) -> Tensor:
    """Materialize ``K = B @ coeffs`` on ``spec.resolution`` taps and convolve."""
    basis = evaluate_basis(BasisSpec(spec.basis_type, spec.n_functions), spec.resolution)
    if coeffs.shape[0] != spec.n_functions:
        raise ShapeError(f"coeffs lead axis {coeffs.shape[0]} != n_functions {spec.n_functions}")
    kernel = T.einsum("sj,jio->sio", basis.astype(coeffs.dtype), coeffs)
    return T.conv1d(x, kernel, bias, spec.padding, 1)


def func_dense_forward(x: Tensor, spec: FuncDenseSpec, coeffs: Tensor, bias: Tensor) -> Tensor:
    """Functional dense layer over ``(batch, steps, ch_in)``.

    Without pooling the weight function acts pointwise in time. With pooling
    the time integral is the uniform Riemann mean over the window, computed
    by projecting the input onto the basis first (same result, fewer flops).
    """
    if x.ndim != 3:
        raise ShapeError(f"FuncDense expects (batch, steps, channels), got {x.shape}")
    batch, steps, ch_in = x.shape
    if coeffs.shape[:2] != (spec.n_functions, ch_in):
        raise ShapeError(f"coeffs {coeffs.shape} do not match ({spec.n_functions}, {ch_in}, N)")
    if spec.pooling and steps < 2:
        raise ShapeError("FuncDense pooling needs at least 2 steps")
    basis = evaluate_basis(BasisSpec(spec.basis_type, spec.n_functions), steps).astype(x.dtype)
    if spec.pooling:
        projected = T.einsum("btc,tj->bjc", x, basis / steps)
        flat = T.reshape(projected, (batch, spec.n_functions * ch_in))
        weights = T.reshape(coeffs, (spec.n_functions * ch_in, spec.neurons))
        y = T.dense(flat, weights, bias)
    else:
        weight_fn = T.einsum("tj,jcn->tcn", basis, coeffs)
        y = T.add_bias(T.einsum("btc,tcn->btn", x, weight_fn), bias)
    return T.activation(y, spec.activation)


class FuncConv1D(Module):
    def __init__(self, ch_in, spec: FuncConv1DSpec, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        if spec.resolution < 1 or spec.n_functions < 1:
            raise ValueError("resolution and n_functions must be positive")
        self.ch_in, self.spec = ch_in, spec
        basis = evaluate_basis(BasisSpec(spec.basis_type, spec.n_functions), spec.resolution)
        self.coeffs = Parameter(glorot_uniform(
            rng, (spec.n_functions, ch_in, spec.filters),
            spec.resolution * ch_in, spec.resolution * spec.filters, dtype, gain=_basis_gain(basis)))
        self.bias = Parameter(np.zeros(spec.filters, dtype=dtype))

    def forward(self, x):
        return func_conv1d_forward(x, self.spec, self.coeffs, self.bias)

    def output_shape(self, shape):
        _check_channels(shape, self.ch_in, "FuncConv1D")
        b, steps, _ = shape
        if self.spec.padding == "valid":
            if self.spec.resolution > steps:
                raise ShapeError(f"FuncConv1D: resolution {self.spec.resolution} exceeds {steps} steps")
            steps = steps - self.spec.resolution + 1
        return (b, steps, self.spec.filters)


class FuncDense(Module):
    def __init__(self, ch_in, spec: FuncDenseSpec, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ch_in, self.spec = ch_in, spec
        # The basis depends on the window length; initialize against a reference grid.
        basis = evaluate_basis(BasisSpec(spec.basis_type, spec.n_functions), 64)
        self.coeffs = Parameter(glorot_uniform(
            rng, (spec.n_functions, ch_in, spec.neurons), ch_in, spec.neurons, dtype,
            gain=_basis_gain(basis)))
        self.bias = Parameter(np.zeros(spec.neurons, dtype=dtype))

    def forward(self, x):
        return func_dense_forward(x, self.spec, self.coeffs, self.bias)

    def output_shape(self, shape):
        _check_channels(shape, self.ch_in, "FuncDense")
        b, steps, _ = shape
        if self.spec.pooling:
            return (b, self.spec.neurons)
        return (b, steps, self.spec.neurons)


class ResidualBlock(Module):
    """``post(main(x) + shortcut(x))`` followed by an optional pooling layer."""

    def __init__(self, main: Sequential, shortcut: Module | None, activation: str,
                 pool: Module | None = None):
        self.main = main
        if shortcut is not None:
            self.shortcut = shortcut
        self.act = Activation(activation)
        if pool is not None:
            self.pool = pool

    def forward(self, x):
        skip = self.shortcut(x) if hasattr(self, "shortcut") else x
        y = self.act(T.residual_add(self.main(x), skip))
        return self.pool(y) if hasattr(self, "pool") else y

    def output_shape(self, shape):
        out = self.main.output_shape(shape)
        skip = self.shortcut.output_shape(shape) if hasattr(self, "shortcut") else shape
        if out != skip:
            raise ShapeError(f"residual branches disagree: {out} vs {skip}")
        return self.pool.output_shape(out) if hasattr(self, "pool") else out
