"""Uniform 1D spacetime grids, sampled fields and finite-difference operators.

Every operator here is second order: central differences in the interior,
second-order one-sided stencils at the edges, trapezoid quadrature.
Fields are immutable snapshots; operators return new fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Raised when a grid or field is too coarse or malformed for an operation."""


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValueError("hbar and mass must be strictly positive")


@dataclass(frozen=True)
class SpacetimeGrid:
    """Uniform grid ``x_min..x_max`` (``nx`` nodes) crossed with ``t_min..t_max`` (``nt`` nodes)."""

    x_min: float
    x_max: float
    nx: int
    t_min: float
    t_max: float
    nt: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")
        if not self.t_max >= self.t_min:
            raise GridError("t_max must not precede t_min")
        if self.nx < 8:
            raise GridError(f"nx={self.nx}: at least 8 spatial nodes required")
        if self.nt < 4:
            raise GridError(f"nt={self.nt}: at least 4 time slices required")
        if self.nt > 1 and self.t_max == self.t_min:
            raise GridError("a multi-slice grid needs t_max > t_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.nt - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx) * self.dx

    @property
    def t(self) -> np.ndarray:
        return self.t_min + np.arange(self.nt) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt, self.nx)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, T)`` arrays of shape ``(nt, nx)``."""
        T, X = np.meshgrid(self.t, self.x, indexing="ij")
        return X, T


def _freeze(values, dtype, grid: SpacetimeGrid) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape != grid.shape:
        raise GridError(f"field shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError("field contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: SpacetimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values, float, self.grid))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: SpacetimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values, complex, self.grid))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


# -- array-level stencils ----------------------------------------------------
# These work along an arbitrary axis so the same code serves x and t.

def first_derivative(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    f = np.moveaxis(np.asarray(f), axis, -1)
    if f.shape[-1] < 3:
        raise GridError("first derivative needs at least 3 nodes along the axis")
    g = np.empty_like(f, dtype=np.result_type(f, float))
    g[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2.0 * h)
    g[..., 0] = (-3.0 * f[..., 0] + 4.0 * f[..., 1] - f[..., 2]) / (2.0 * h)
    g[..., -1] = (3.0 * f[..., -1] - 4.0 * f[..., -2] + f[..., -3]) / (2.0 * h)
    return np.moveaxis(g, -1, axis)


def second_derivative(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    f = np.moveaxis(np.asarray(f), axis, -1)
    if f.shape[-1] < 4:
        raise GridError("second derivative needs at least 4 nodes along the axis")
    g = np.empty_like(f, dtype=np.result_type(f, float))
    h2 = h * h
    g[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h2
    # four-point one-sided, second order
    g[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / h2
    g[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / h2
    return np.moveaxis(g, -1, axis)


def cumulative_trapezoid(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Trapezoid running integral, zero at index 0 along ``axis``."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, -1)
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * h * (f[..., 1:] + f[..., :-1]), axis=-1)
    return np.moveaxis(out, -1, axis)


def trapezoid(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    return np.trapezoid(f, dx=h, axis=axis)


# -- field-level operators ---------------------------------------------------

def d_dx(f: ScalarField) -> ScalarField:
    return f.with_values(first_derivative(f.values, f.grid.dx, axis=1))


def d2_dx2(f: ScalarField) -> ScalarField:
    return f.with_values(second_derivative(f.values, f.grid.dx, axis=1))


def d_dt(f: ScalarField) -> ScalarField:
    if f.grid.nt < 3:
        raise GridError("insufficient time resolution: d_dt needs nt >= 3")
    return f.with_values(first_derivative(f.values, f.grid.dt, axis=0))


def cumulative_integral_x(f: ScalarField, anchor_index) -> ScalarField:
    """Per-slice trapezoid integral of ``f`` along x, zero at ``anchor_index``.

    ``anchor_index`` is a single node index or one index per time slice.
    Left of the anchor the result is the negated right-to-left integral.
    """
    nt, nx = f.grid.shape
    anchor = np.broadcast_to(np.asarray(anchor_index, dtype=int), (nt,))
    if np.any(anchor < 0) or np.any(anchor >= nx):
        raise GridError("anchor_index outside the spatial grid")
    running = cumulative_trapezoid(f.values, f.grid.dx, axis=1)
    return f.with_values(running - running[np.arange(nt), anchor][:, None])


def cumulative_integral_t(series, dt: float) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 2:
        raise GridError("time integral needs at least 2 samples")
    return cumulative_trapezoid(series, dt, axis=0)


def integrate_x(f: ScalarField) -> np.ndarray:
    """Full-domain trapezoid integral per time slice."""
    return trapezoid(f.values, f.grid.dx, axis=1)
