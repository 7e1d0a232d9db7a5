"""Fourier and Legendre basis families sampled on uniform grids over [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import legvander

BASIS_TYPES = ("fourier", "legendre")


@dataclass(frozen=True)
class BasisSpec:
    basis_type: str
    n_functions: int
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.basis_type not in BASIS_TYPES:
            raise ValueError(f"basis_type must be one of {BASIS_TYPES}, got '{self.basis_type}'")
        if int(self.n_functions) < 1:
            raise ValueError("n_functions must be >= 1")
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError("basis domain must be a non-degenerate interval")


def uniform_grid(grid_size: int, domain: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """``grid_size`` equispaced points covering ``domain``; a single point sits at the midpoint."""
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    lo, hi = domain
    if grid_size == 1:
        return np.array([(lo + hi) / 2.0])
    return lo + (hi - lo) * (np.arange(grid_size) / (grid_size - 1))


def fourier_matrix(t: np.ndarray, n_functions: int, period: float = 1.0) -> np.ndarray:
    """Columns ``1, sin(2πkt), cos(2πkt), ...`` truncated to ``n_functions``."""
    out = np.empty((t.size, n_functions))
    out[:, 0] = 1.0
    for col in range(1, n_functions):
        k = (col + 1) // 2
        arg = 2.0 * np.pi * k * t / period
        out[:, col] = np.sin(arg) if col % 2 == 1 else np.cos(arg)
    return out


def legendre_matrix(x: np.ndarray, n_functions: int) -> np.ndarray:
    """Unnormalized Legendre polynomials P_0..P_{J-1} at points x in [-1, 1]."""
    return legvander(np.asarray(x, dtype=np.float64), n_functions - 1)


@lru_cache(maxsize=128)
def _evaluate(basis_type: str, n_functions: int, domain: tuple[float, float], grid_size: int) -> np.ndarray:
    t = uniform_grid(grid_size, domain)
    lo, hi = domain
    if basis_type == "fourier":
        mat = fourier_matrix(t - lo, n_functions, period=hi - lo)
    else:
        mat = legendre_matrix(2.0 * (t - lo) / (hi - lo) - 1.0, n_functions)
    mat.setflags(write=False)
    return mat


def evaluate_basis(spec: BasisSpec, grid_size: int) -> np.ndarray:
    """Return the ``(grid_size, n_functions)`` matrix of basis values (read-only, cached)."""
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    return _evaluate(spec.basis_type, int(spec.n_functions), tuple(spec.domain), int(grid_size))
