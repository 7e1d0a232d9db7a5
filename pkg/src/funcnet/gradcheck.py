"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4
    failure: str | None = None

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.failure is None and self.worst < self.tolerance


def grad_check(build: Callable[[], Tensor], inputs: Mapping[str, Tensor],
               step: float = 1e-3, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare backward() against central differences for every entry of ``inputs``.

    ``build`` must recompute the scalar loss from the current values of the
    tensors in ``inputs``. Relative error uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    report = GradCheckReport(tolerance=tolerance)
    for t in inputs.values():
        if t.dtype != np.float64:
            report.failure = "grad_check requires float64 tensors"
            return report
        t.grad = None
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)

    loss = build()
    if not np.all(np.isfinite(loss.data)):
        report.failure = "non-finite loss in forward pass"
        return report
    loss.backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy()
                for name, t in inputs.items()}

    with no_grad():
        for name, t in inputs.items():
            flat = t.data.reshape(-1)
            numeric = np.empty_like(flat)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                f_plus = float(build().data)
                flat[i] = saved - step
                f_minus = float(build().data)
                flat[i] = saved
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    report.failure = f"non-finite loss while perturbing {name}[{i}]"
                    return report
                numeric[i] = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name].reshape(-1)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
            report.max_rel_error[name] = float(np.max(np.abs(a - numeric) / denom))
    for t in inputs.values():
        t.grad = None
    return report


def _mse_to_random(out: Tensor, rng) -> Tensor:
    from .tensor import mse_loss
    target = rng.normal(size=out.shape)
    return mse_loss(out, target)


def layer_suite(seed: int = 0, step: float = 1e-3, tolerance: float = 1e-4) -> dict[str, GradCheckReport]:
    """Gradient checks for every differentiable primitive and functional layer (float64)."""
    from . import tensor as T
    from .layers import FuncConv1DSpec, FuncDenseSpec, func_conv1d_forward, func_dense_forward

    rng = np.random.default_rng(seed)

    def leaf(*shape, away_from_zero=False):
        data = rng.normal(size=shape)
        if away_from_zero:
            data = np.sign(data) * (np.abs(data) + 0.05)
        return Tensor(data, requires_grad=True)

    cases = {}

    x, w, b = leaf(4, 5), leaf(5, 3), leaf(3)
    target = rng.normal(size=(4, 3))
    cases["dense"] = (lambda: T.mse_loss(T.dense(x, w, b), target), {"x": x, "w": w, "b": b})

    for k, pad, stride in ((3, "same", 1), (4, "same", 1), (3, "valid", 2)):
        xc, kc, bc = leaf(2, 9, 3), leaf(k, 3, 2), leaf(2)
        tgt = rng.normal(size=T.conv1d(xc, kc, bc, pad, stride).shape)
        cases[f"conv1d_k{k}_{pad}_s{stride}"] = (
            (lambda xc=xc, kc=kc, bc=bc, pad=pad, stride=stride, tgt=tgt:
             T.mse_loss(T.conv1d(xc, kc, bc, pad, stride), tgt)),
            {"x": xc, "kernel": kc, "bias": bc})

    xb, g, bb = leaf(3, 5, 4), leaf(4), leaf(4)
    rm, rv = np.zeros(4), np.ones(4)
    tb = rng.normal(size=(3, 5, 4))
    cases["batch_norm_train"] = (lambda: T.mse_loss(T.batch_norm(xb, g, bb, rm, rv, True), tb),
                                 {"x": xb, "gamma": g, "beta": bb})

    xp = leaf(2, 8, 3)
    tp = rng.normal(size=(2, 4, 3))
    cases["avg_pool1d"] = (lambda: T.mse_loss(T.avg_pool1d(xp, 2, 2), tp), {"x": xp})

    for kind in ("elu", "relu"):
        xa = leaf(3, 4, 2, away_from_zero=True)
        ta = rng.normal(size=(3, 4, 2))
        cases[kind] = ((lambda xa=xa, ta=ta, kind=kind: T.mse_loss(T.activation(xa, kind), ta)), {"x": xa})

    xr, yr = leaf(2, 3, 2), leaf(2, 3, 2)
    tr = rng.normal(size=(2, 3, 2))
    cases["residual_add"] = (lambda: T.mse_loss(T.residual_add(xr, yr), tr), {"a": xr, "b": yr})

    pm = leaf(5, 2)
    tm = rng.normal(size=(5, 2))
    cases["mse"] = (lambda: T.mse_loss(pm, tm), {"pred": pm})

    for basis in ("fourier", "legendre"):
        spec = FuncConv1DSpec(2, 5, 4, basis, "same")
        xf, cf, bf = leaf(2, 16, 3), leaf(4, 3, 2), leaf(2)
        tf = rng.normal(size=(2, 16, 2))
        cases[f"func_conv1d_{basis}"] = (
            (lambda spec=spec, xf=xf, cf=cf, bf=bf, tf=tf: T.mse_loss(func_conv1d_forward(xf, spec, cf, bf), tf)),
            {"x": xf, "coeffs": cf, "bias": bf})

    for pooling in (False, True):
        spec = FuncDenseSpec(3, 4, "legendre", pooling, "elu")
        xd, cd, bd = leaf(2, 7, 3), leaf(4, 3, 3), leaf(3)
        td = rng.normal(size=(2, 3) if pooling else (2, 7, 3))
        cases[f"func_dense_{'pool' if pooling else 'pointwise'}"] = (
            (lambda spec=spec, xd=xd, cd=cd, bd=bd, td=td: T.mse_loss(func_dense_forward(xd, spec, cd, bd), td)),
            {"x": xd, "coeffs": cd, "bias": bd})

    return {name: grad_check(build, inputs, step, tolerance) for name, (build, inputs) in cases.items()}
