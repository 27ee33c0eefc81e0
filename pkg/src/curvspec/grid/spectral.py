"""Fourier differentiation on a uniform periodic lattice in two dimensions.

Two families of operators live here. Collocated derivatives (``d1``, ``d2``,
``laplacian0``) act node to node and are used for pointwise identity checks.
Staggered derivatives (``stagger_grad`` and its transpose) map nodes to the
half-shifted cell faces and back; the weak-form stiffness is assembled from
them as a flux form, which keeps the discrete operator exactly symmetric and
keeps the Nyquist mode out of the kernel on even grids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..types import ResolutionError


@dataclass(frozen=True)
class PeriodicGrid:
    shape: tuple = (64, 64)
    periods: tuple = (2 * math.pi, 2 * math.pi)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        periods = tuple(float(p) for p in self.periods)
        if len(shape) != 2 or len(periods) != 2:
            raise ValueError("the grid backend is two-dimensional")
        if min(shape) < 4:
            raise ValueError(f"resolution {shape} is too coarse")
        if min(periods) <= 0:
            raise ValueError("periods must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "periods", periods)

    @property
    def spacing(self) -> tuple:
        return tuple(p / s for p, s in zip(self.periods, self.shape))

    @property
    def cell_area(self) -> float:
        hx, hy = self.spacing
        return hx * hy

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def coords(self) -> tuple:
        """Sample sites as ``(X, Y)`` arrays with ``indexing='ij'``."""
        axes = [np.arange(s) * h for s, h in zip(self.shape, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        n, period = self.shape[axis], self.periods[axis]
        k = 2 * math.pi * np.fft.fftfreq(n, d=period / n)
        shape = [1, 1]
        shape[axis] = n
        return k.reshape(shape)

    def first_derivative_symbol(self, axis: int) -> np.ndarray:
        k = self.wavenumbers(axis)
        sym = 1j * k
        n = self.shape[axis]
        if n % 2 == 0:
            idx = [slice(None), slice(None)]
            idx[axis] = n // 2
            sym = sym.copy()
            sym[tuple(idx)] = 0.0
        return sym

    def stagger_symbol(self, axis: int) -> np.ndarray:
        k = self.wavenumbers(axis)
        return 1j * k * np.exp(0.5j * k * self.spacing[axis])


def _apply(f: np.ndarray, symbol: np.ndarray, axis: int) -> np.ndarray:
    return np.fft.ifft(np.fft.fft(f, axis=axis) * symbol, axis=axis).real


def d1(grid: PeriodicGrid, f: np.ndarray, axis: int) -> np.ndarray:
    return _apply(f, grid.first_derivative_symbol(axis), axis)


def d2(grid: PeriodicGrid, f: np.ndarray, axis: int) -> np.ndarray:
    k = grid.wavenumbers(axis)
    return _apply(f, -(k * k), axis)


def dxy(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    return d1(grid, d1(grid, f, 0), 1)


def gradient0(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    """Chart gradient ``(f_x, f_y)`` stacked on the first axis."""
    return np.stack([d1(grid, f, 0), d1(grid, f, 1)])


def laplacian0(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    kx, ky = grid.wavenumbers(0), grid.wavenumbers(1)
    return np.fft.ifft2(np.fft.fft2(f) * -(kx * kx + ky * ky)).real


def hessian0(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    fxy = dxy(grid, f)
    return np.array([[d2(grid, f, 0), fxy], [fxy, d2(grid, f, 1)]])


def stagger_grad(grid: PeriodicGrid, f: np.ndarray, axis: int) -> np.ndarray:
    """Derivative along ``axis`` sampled at faces shifted by half a cell."""
    return _apply(f, grid.stagger_symbol(axis), axis)


def stagger_grad_transpose(grid: PeriodicGrid, q: np.ndarray, axis: int) -> np.ndarray:
    """Exact transpose of :func:`stagger_grad` (a negative face-to-node derivative)."""
    return _apply(q, np.conj(grid.stagger_symbol(axis)), axis)


def shift_half(grid: PeriodicGrid, f: np.ndarray, axis: int) -> np.ndarray:
    """Trigonometric interpolation of ``f`` onto the half-shifted faces."""
    k = grid.wavenumbers(axis)
    return _apply(f, np.exp(0.5j * k * grid.spacing[axis]), axis)


def stagger_matrix(grid: PeriodicGrid, axis: int) -> np.ndarray:
    """Dense matrix of :func:`stagger_grad` acting on row-major flattened fields."""
    n = grid.size
    eye = np.eye(n).reshape((n,) + grid.shape)
    cols = np.fft.ifft(
        np.fft.fft(eye, axis=axis + 1) * np.expand_dims(grid.stagger_symbol(axis), 0),
        axis=axis + 1,
    ).real
    return cols.reshape(n, n).T


def spectral_tail(grid: PeriodicGrid, f: np.ndarray) -> float:
    """Largest Fourier amplitude beyond two thirds of Nyquist, relative to the largest overall."""
    F = np.abs(np.fft.fft2(f))
    peak = F.max()
    if peak == 0:
        return 0.0
    kx = np.abs(np.fft.fftfreq(grid.shape[0]) * grid.shape[0])[:, None]
    ky = np.abs(np.fft.fftfreq(grid.shape[1]) * grid.shape[1])[None, :]
    high = (kx > grid.shape[0] / 3) | (ky > grid.shape[1] / 3)
    return float(F[high].max() / peak) if high.any() else 0.0


def check_resolved(grid: PeriodicGrid, f: np.ndarray, name: str = "field", tol: float = 1e-9) -> None:
    f = np.asarray(f)
    if f.shape != grid.shape:
        raise ValueError(f"{name} has shape {f.shape}, grid is {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ResolutionError(f"{name} has non-finite samples")
    tail = spectral_tail(grid, f)
    if tail > tol:
        raise ResolutionError(
            f"{name} is not band-limited on a {grid.shape} grid "
            f"(relative amplitude {tail:.2e} above 2/3 Nyquist)"
        )


def field_to_json(grid: PeriodicGrid, values: np.ndarray) -> str:
    return json.dumps(
        {
            "resolution": list(grid.shape),
            "periods": list(grid.periods),
            "values": np.asarray(values, dtype=float).ravel().tolist(),
        }
    )


def field_from_json(text: str) -> tuple:
    data = json.loads(text)
    unknown = set(data) - {"resolution", "periods", "values"}
    if unknown:
        raise ValueError(f"unknown keys in scalar field container: {sorted(unknown)}")
    grid = PeriodicGrid(tuple(data["resolution"]), tuple(data.get("periods", (2 * math.pi,) * 2)))
    values = np.asarray(data["values"], dtype=float)
    if values.size != grid.size:
        raise ValueError(f"expected {grid.size} values, got {values.size}")
    return grid, values.reshape(grid.shape)


def random_band_limited(grid: PeriodicGrid, rng: np.random.Generator, kmax: int = 4, amplitude: float = 1.0) -> np.ndarray:
    """Random real trigonometric polynomial with ``|k_x|, |k_y| <= kmax`` and sup norm ``amplitude``.

    Modes are drawn as independent normal coefficients in the period's
    natural wavenumbers, so the field is exactly representable on any grid
    with more than ``2 kmax + 1`` points per axis.
    """
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    if min(grid.shape) <= 2 * kmax + 1:
        raise ValueError(f"grid {grid.shape} cannot resolve modes up to {kmax}")
    X, Y = grid.coords()
    ax = 2 * np.pi / grid.periods[0]
    ay = 2 * np.pi / grid.periods[1]
    f = np.zeros(grid.shape)
    for kx in range(-kmax, kmax + 1):
        for ky in range(0, kmax + 1):
            if ky == 0 and kx <= 0:
                continue
            a, b = rng.standard_normal(2)
            phase = kx * ax * X + ky * ay * Y
            f += a * np.cos(phase) + b * np.sin(phase)
    return amplitude * f / np.max(np.abs(f))
