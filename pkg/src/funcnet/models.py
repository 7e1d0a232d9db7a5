"""Declarative model descriptions, builders and parameter accounting.

A :class:`ModelSpec` is an ordered list of :class:`LayerSpec` entries and is
all that is needed to rebuild a model; the builders below produce the stem,
residual blocks, the three functional architectures, their conventional
control twins and the spatial-filter CNN.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ShapeError
from .layers import (Activation, AvgPool1D, BatchNorm, Conv1D, Dense, Flatten, FuncConv1D,
                     FuncConv1DSpec, FuncDense, FuncDenseSpec, GlobalAvgPool1D, Module,
                     ResidualBlock, Sequential, SpatialFilter)
from .tensor import Tensor, no_grad

STEM_RESOLUTION = 128


@dataclass
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    name: str | None = None


@dataclass
class ModelSpec:
    name: str
    input_channels: int
    window_size: int
    layers: list[LayerSpec]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        try:
            layers = [LayerSpec(**entry) for entry in data["layers"]]
            return cls(data["name"], int(data["input_channels"]), int(data["window_size"]), layers)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model spec: {exc}") from exc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class BlockSpec:
    filters: int
    functional: bool = False
    kernel_size: int = 9
    resolution: int = 24
    n_functions: int = 6
    basis_type: str = "legendre"
    inner_kernel_size: int = 1
    activation: str = "elu"
    # "projection": 1x1 conv on every shortcut; "auto": identity when widths match.
    shortcut: str = "projection"
    pool: tuple[int, int] | None = None


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def build_stem(input_channels: int, window_size: int = 512, rng=None, dtype=np.float32) -> Sequential:
    """Spatial filter, batch norm, ReLU, Fourier functional conv and 2x pooling."""
    if input_channels < 1:
        raise ConfigError("input_channels must be >= 1")
    if window_size < STEM_RESOLUTION:
        raise ConfigError(f"window_size {window_size} is shorter than the stem resolution {STEM_RESOLUTION}")
    rng = rng if rng is not None else np.random.default_rng(0)
    return Sequential([
        ("spatial_filter", SpatialFilter(input_channels, 16, rng=rng, dtype=dtype)),
        ("bn", BatchNorm(16, dtype=dtype)),
        ("relu", Activation("relu")),
        ("funcconv", FuncConv1D(16, FuncConv1DSpec(64, STEM_RESOLUTION, 9, "fourier", "same"),
                                rng=rng, dtype=dtype)),
        ("pool", AvgPool1D(2, 2)),
    ])


def build_block(spec: BlockSpec, ch_in: int, rng=None, dtype=np.float32) -> ResidualBlock:
    rng = rng if rng is not None else np.random.default_rng(0)
    co = spec.filters
    if spec.functional:
        first = FuncConv1D(ch_in, FuncConv1DSpec(co, spec.resolution, spec.n_functions,
                                                 spec.basis_type, "same"), rng=rng, dtype=dtype)
    else:
        first = Conv1D(ch_in, co, spec.kernel_size, "same", rng=rng, dtype=dtype)
    main = Sequential([
        ("conv1", first),
        ("bn1", BatchNorm(co, dtype=dtype)),
        ("act1", Activation(spec.activation)),
        ("conv2", Conv1D(co, co, spec.inner_kernel_size, "same", rng=rng, dtype=dtype)),
        ("bn2", BatchNorm(co, dtype=dtype)),
    ])
    if spec.shortcut == "projection" or (spec.shortcut == "auto" and ch_in != co):
        shortcut = Conv1D(ch_in, co, 1, "same", rng=rng, dtype=dtype)
    elif spec.shortcut == "auto":
        shortcut = None
    else:
        raise ConfigError(f"unknown shortcut rule '{spec.shortcut}'")
    pool = AvgPool1D(*spec.pool) if spec.pool else None
    return ResidualBlock(main, shortcut, spec.activation, pool)


class Model(Sequential):
    """A built network plus the spec it came from."""

    def __init__(self, spec: ModelSpec, layers, seed: int, dtype):
        super().__init__(layers)
        self.spec = spec
        self.seed = seed
        self.dtype = np.dtype(dtype)

    @property
    def input_shape(self) -> tuple:
        return (None, self.spec.window_size, self.spec.input_channels)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        was_training = self.training
        self.eval()
        out = []
        with no_grad():
            for start in range(0, len(x), batch_size):
                chunk = Tensor(np.asarray(x[start:start + batch_size], dtype=self.dtype))
                out.append(self(chunk).data)
        self.train(was_training)
        return np.concatenate(out, axis=0) if out else np.empty((0, 2), dtype=self.dtype)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({f"buffer:{name}": arr.copy() for name, arr in self.buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        bufs = dict(self.buffers())
        for key, value in state.items():
            if key.startswith("buffer:"):
                target = bufs[key[len("buffer:"):]]
            else:
                target = params[key].data
            if target.shape != value.shape:
                raise ShapeError(f"state entry {key}: {value.shape} != {target.shape}")
            target[...] = value

    def save(self, path) -> None:
        meta = json.dumps({"spec": self.spec.to_dict(), "seed": self.seed, "dtype": self.dtype.name})
        np.savez(path, __meta__=np.array(meta), **self.state_dict())

    @classmethod
    def load(cls, path) -> "Model":
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["__meta__"]))
            model = build_model(ModelSpec.from_dict(meta["spec"]), meta["seed"], meta["dtype"])
            model.load_state_dict({k: archive[k] for k in archive.files if k != "__meta__"})
        return model


def _build_layer(ls: LayerSpec, shape: tuple, window_size: int, rng, dtype) -> Module:
    p = dict(ls.params)
    ch = shape[-1]
    kind = ls.kind
    if kind == "stem":
        return build_stem(ch, window_size, rng, dtype)
    if kind == "spatial_filter":
        return SpatialFilter(ch, p["filters"], rng=rng, dtype=dtype)
    if kind == "conv1d":
        return Conv1D(ch, p["filters"], p["kernel_size"], p.get("padding", "same"), 1,
                      p.get("activation", "linear"), rng=rng, dtype=dtype)
    if kind == "batchnorm":
        return BatchNorm(ch, dtype=dtype)
    if kind == "activation":
        return Activation(p["kind"])
    if kind == "avgpool":
        return AvgPool1D(p.get("pool_size", 2), p.get("stride", 2))
    if kind == "func_conv1d":
        return FuncConv1D(ch, FuncConv1DSpec(**p), rng=rng, dtype=dtype)
    if kind == "res_block":
        q = dict(p)
        if q.get("pool") is not None:
            q["pool"] = tuple(q["pool"])
        return build_block(BlockSpec(**q), ch, rng, dtype)
    if kind == "func_dense":
        return FuncDense(ch, FuncDenseSpec(**p), rng=rng, dtype=dtype)
    if kind == "dense":
        return Dense(ch, p["neurons"], p.get("activation", "linear"), rng=rng, dtype=dtype)
    if kind == "flatten":
        return Flatten()
    if kind == "global_avgpool":
        return GlobalAvgPool1D()
    raise ConfigError(f"unknown layer kind '{kind}'")


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Instantiate ``spec`` with weights drawn from a generator seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    shape = (1, spec.window_size, spec.input_channels)
    layers, counters = [], {}
    for ls in spec.layers:
        counters[ls.kind] = counters.get(ls.kind, 0) + 1
        name = ls.name or (ls.kind if ls.kind == "stem" else f"{ls.kind}{counters[ls.kind]}")
        layer = _build_layer(ls, shape, spec.window_size, rng, dtype)
        shape = layer.output_shape(shape)
        layers.append((name, layer))
    if shape[1:] != (2,):
        raise ConfigError(f"model '{spec.name}' must end in 2 outputs, got shape {shape}")
    return Model(spec, layers, seed, dtype)


# --------------------------------------------------------------------------
# architectures
# --------------------------------------------------------------------------

def _func_block(filters: int, **kw) -> LayerSpec:
    return LayerSpec("res_block", {"filters": filters, "functional": True, **kw})


def _std_block(filters: int, **kw) -> LayerSpec:
    return LayerSpec("res_block", {"filters": filters, "functional": False, **kw})


def _pool() -> LayerSpec:
    return LayerSpec("avgpool", {"pool_size": 2, "stride": 2})


def _check_window(window_size: int) -> None:
    if window_size < STEM_RESOLUTION:
        raise ConfigError(f"window_size must be >= {STEM_RESOLUTION}, got {window_size}")


def fully_functional_spec(window_size: int = 512, input_channels: int = 4) -> ModelSpec:
    _check_window(window_size)
    return ModelSpec("fully_functional", input_channels, window_size, [
        LayerSpec("stem"),
        *[_func_block(f) for f in (64, 96, 144, 216)],
        LayerSpec("func_dense", {"neurons": 256, "n_functions": 12, "basis_type": "legendre",
                                 "pooling": False, "activation": "elu"}),
        LayerSpec("func_dense", {"neurons": 2, "n_functions": 12, "basis_type": "legendre",
                                 "pooling": True, "activation": "linear"}),
    ])


def func_body_spec(window_size: int = 512, input_channels: int = 4) -> ModelSpec:
    _check_window(window_size)
    return ModelSpec("func_body", input_channels, window_size, [
        LayerSpec("stem"),
        _func_block(64), _func_block(64), _pool(),
        _func_block(112), _func_block(112), _pool(),
        LayerSpec("flatten"),
        LayerSpec("dense", {"neurons": 64, "activation": "elu"}),
        LayerSpec("dense", {"neurons": 2, "activation": "linear"}),
    ])


def min_functional_spec(window_size: int = 512, input_channels: int = 4) -> ModelSpec:
    _check_window(window_size)
    return ModelSpec("min_functional", input_channels, window_size, [
        LayerSpec("stem"),
        _std_block(64), _std_block(64), _pool(),
        _std_block(112), _std_block(112), _pool(),
        LayerSpec("func_dense", {"neurons": 512, "n_functions": 12, "basis_type": "legendre",
                                 "pooling": True, "activation": "elu"}),
        LayerSpec("dense", {"neurons": 512, "activation": "elu"}),
        LayerSpec("dense", {"neurons": 2, "activation": "linear"}),
    ])


def control_spec(variant: str, window_size: int = 512, input_channels: int = 4) -> ModelSpec:
    """Conventional twin of a functional architecture (``fully``, ``body`` or ``minimal``)."""
    _check_window(window_size)
    if variant == "fully":
        layers = [
            LayerSpec("stem"),
            *[_std_block(f) for f in (64, 96, 144, 216)],
            LayerSpec("conv1d", {"filters": 256, "kernel_size": 12, "padding": "same", "activation": "elu"}),
            LayerSpec("conv1d", {"filters": 2, "kernel_size": 12, "padding": "same", "activation": "linear"}),
            LayerSpec("global_avgpool"),
        ]
        name = "fully_functional_control"
    elif variant == "body":
        layers = func_body_spec(window_size, input_channels).layers
        for ls in layers:
            if ls.kind == "res_block":
                ls.params["functional"] = False
        name = "func_body_control"
    elif variant == "minimal":
        layers = min_functional_spec(window_size, input_channels).layers
        at = next(i for i, ls in enumerate(layers) if ls.kind == "func_dense")
        layers[at:at + 1] = [
            LayerSpec("conv1d", {"filters": 512, "kernel_size": 12, "padding": "same", "activation": "linear"}),
            LayerSpec("global_avgpool"),
            LayerSpec("activation", {"kind": "elu"}),
        ]
        name = "min_functional_control"
    else:
        raise ConfigError(f"unknown control variant '{variant}'")
    return ModelSpec(name, input_channels, window_size, layers)


def spatial_filter_cnn_spec(n_spatial: int = 16, n_1: int = 32, n_2: int = 64,
                            spatial_filtering: bool = True, equally_sized: bool = True,
                            input_channels: int = 4, window_size: int = 512) -> ModelSpec:
    if min(n_spatial, n_1, n_2) < 1:
        raise ConfigError("filter counts must be >= 1")
    inner = 9 if equally_sized else 1
    layers = []
    if spatial_filtering:
        layers += [LayerSpec("spatial_filter", {"filters": n_spatial}, name="spatial_filter"),
                   LayerSpec("batchnorm", name="spatial_bn"),
                   LayerSpec("activation", {"kind": "relu"}, name="spatial_relu")]
    for i, filters in enumerate((n_1, n_2), start=1):
        layers.append(LayerSpec("res_block", {
            "filters": filters, "functional": False, "kernel_size": 9, "inner_kernel_size": inner,
            "activation": "relu", "shortcut": "projection", "pool": [2, 2]}, name=f"block{i}"))
    layers += [LayerSpec("flatten", name="flatten"),
               LayerSpec("dense", {"neurons": 256, "activation": "relu"}, name="dense"),
               LayerSpec("dense", {"neurons": 2, "activation": "linear"}, name="output")]
    return ModelSpec("spatial_filter_cnn", input_channels, window_size, layers)


MODEL_SPECS = {
    "fully_functional": fully_functional_spec,
    "func_body": func_body_spec,
    "min_functional": min_functional_spec,
    "fully_functional_control": lambda w=512, c=4: control_spec("fully", w, c),
    "func_body_control": lambda w=512, c=4: control_spec("body", w, c),
    "min_functional_control": lambda w=512, c=4: control_spec("minimal", w, c),
    "spatial_filter_cnn": lambda w=512, c=4: spatial_filter_cnn_spec(input_channels=c, window_size=w),
}

# Functional architecture -> conventional twin.
CONTROL_OF = {
    "fully_functional": "fully_functional_control",
    "func_body": "func_body_control",
    "min_functional": "min_functional_control",
}

# Trainable totals stated alongside the published architecture tables.
REPORTED_TOTALS = {
    "fully_functional": 1_150_488,
    "func_body": 1_157_394,
    "min_functional": 1_275_570,
}


def model_spec(name: str, window_size: int = 512, input_channels: int = 4) -> ModelSpec:
    try:
        factory = MODEL_SPECS[name]
    except KeyError:
        raise ConfigError(f"unknown model '{name}'; choose from {sorted(MODEL_SPECS)}") from None
    return factory(window_size, input_channels)


def build_fully_functional(window_size=512, input_channels=4, seed=0, dtype=np.float32) -> Model:
    return build_model(fully_functional_spec(window_size, input_channels), seed, dtype)


def build_func_body(window_size=512, input_channels=4, seed=0, dtype=np.float32) -> Model:
    return build_model(func_body_spec(window_size, input_channels), seed, dtype)


def build_min_functional(window_size=512, input_channels=4, seed=0, dtype=np.float32) -> Model:
    return build_model(min_functional_spec(window_size, input_channels), seed, dtype)


def build_control(variant: str, window_size=512, input_channels=4, seed=0, dtype=np.float32) -> Model:
    return build_model(control_spec(variant, window_size, input_channels), seed, dtype)


def build_spatial_filter_cnn(n_spatial=16, n_1=32, n_2=64, spatial_filtering=True, equally_sized=True,
                             input_channels=4, window_size=512, seed=0, dtype=np.float32) -> Model:
    spec = spatial_filter_cnn_spec(n_spatial, n_1, n_2, spatial_filtering, equally_sized,
                                   input_channels, window_size)
    return build_model(spec, seed, dtype)


# --------------------------------------------------------------------------
# auditing
# --------------------------------------------------------------------------

@dataclass
class ParameterReport:
    model: str
    total: int
    rows: list[tuple[str, str, int]]

    def format_table(self) -> str:
        width = max((len(r[0]) for r in self.rows), default=10)
        lines = [f"{'layer':<{width}}  {'type':<16} {'params':>10}"]
        lines += [f"{path:<{width}}  {kind:<16} {count:>10,}" for path, kind, count in self.rows]
        lines.append(f"{'total':<{width}}  {'':<16} {self.total:>10,}")
        return "\n".join(lines)


def count_parameters(model: Module, name: str | None = None) -> ParameterReport:
    """Trainable parameter total with a per-layer breakdown (running stats excluded)."""
    rows = []
    for path, module in model.named_modules():
        own = sum(p.size for p in vars(module).values()
                  if isinstance(p, Tensor) and getattr(p, "trainable", False))
        if own:
            rows.append((path, type(module).__name__, own))
    total = sum(r[2] for r in rows)
    label = name or getattr(getattr(model, "spec", None), "name", type(model).__name__)
    return ParameterReport(label, total, rows)


def shape_trace(model: Sequential, batch_size: int | None = None) -> list[tuple[str, tuple]]:
    """Output shape after each top-level layer, descending into plain sequences (e.g. the stem)."""
    spec = model.spec
    shape = (batch_size, spec.window_size, spec.input_channels)
    rows = [("input", shape)]

    def walk(seq: Sequential, shape, prefix):
        for name, layer in seq.children():
            if type(layer) is Sequential:
                shape = walk(layer, shape, f"{prefix}{name}.")
            else:
                shape = layer.output_shape(shape)
            rows.append((f"{prefix}{name}", shape))
        return shape

    walk(model, shape, "")
    return rows
