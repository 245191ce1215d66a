"""Closed-form Gaussian states used as inputs and ground truth.

Three families are provided:

* a freely spreading Gaussian packet (``FreeGaussianSpec``),
* harmonic-oscillator coherent states (``CoherentStateSpec``),
* a fixed-center Gaussian whose width oscillates (``BreathingGaussianSpec``),
  which has no consistent phase in a harmonic trap.

All phases use the convention that the spatially constant part vanishes at
``t = 0``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid

TAIL_FRACTION = 1e-12


class GridCoverageWarning(UserWarning):
    """The grid edges carry non-negligible density."""


@dataclass(frozen=True)
class FreeGaussianSpec:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    mean_p: float = 0.0
    sigma_p: float = 1.0 / np.sqrt(2.0)

    def __post_init__(self):
        if not self.sigma_p > 0:
            raise ValueError("sigma_p must be positive")

    def diffusion(self, t):
        """Variance of the position distribution, hbar^2/(4 dp^2) + (dp/m)^2 t^2."""
        c = self.constants
        return c.hbar**2 / (4.0 * self.sigma_p**2) + (self.sigma_p / c.mass) ** 2 * np.asarray(t) ** 2


@dataclass(frozen=True)
class CoherentStateSpec:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    omega: float = 1.0
    b: float = 1.0
    sign: int = 1

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def a(self) -> float:
        c = self.constants
        return self.sign * np.sqrt(c.mass * self.omega / c.hbar)

    def center(self, t):
        # a = -sqrt(m w / hbar) mirrors the orbit
        return -self.sign * self.b * np.cos(self.omega * np.asarray(t))


@dataclass(frozen=True)
class BreathingGaussianSpec:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    omega: float = 1.0
    center: float = 0.0
    width: float = 1.0
    eps: float = 0.3

    def __post_init__(self):
        if not abs(self.eps) < 1:
            raise ValueError("|eps| must be below 1")
        if not self.width > 0:
            raise ValueError("width must be positive")

    def scale(self, t):
        return 1.0 + self.eps * np.sin(self.omega * np.asarray(t))


def _check_coverage(P: np.ndarray, label: str) -> None:
    peak = P.max(axis=1)
    edge = np.maximum(P[:, 0], P[:, -1])
    if np.any(edge > TAIL_FRACTION * peak):
        warnings.warn(
            f"{label}: density at the grid edge exceeds {TAIL_FRACTION:g} of the peak; widen the grid",
            GridCoverageWarning,
            stacklevel=3,
        )


# -- free particle ------------------------------------------------------------

def free_density(spec: FreeGaussianSpec, grid: SpacetimeGrid) -> ScalarField:
    X, T = grid.mesh()
    D = spec.diffusion(T)
    drift = spec.mean_p / spec.constants.mass * T
    P = np.exp(-((X - drift) ** 2) / (2.0 * D)) / np.sqrt(2.0 * np.pi * D)
    _check_coverage(P, "free_density")
    return ScalarField(grid, P)


def free_gauge(spec: FreeGaussianSpec, t) -> np.ndarray:
    """Spatially constant part of the free-packet phase, zero at ``t = 0``."""
    hbar, m = spec.constants.hbar, spec.constants.mass
    t = np.asarray(t, dtype=float)
    dp2 = spec.sigma_p**2
    return (
        -(hbar**2) * spec.mean_p**2 / (8.0 * m * dp2) * t / spec.diffusion(t)
        - 0.5 * hbar * np.arctan(2.0 * dp2 * t / (hbar * m))
    )


def free_phase(spec: FreeGaussianSpec, grid: SpacetimeGrid) -> ScalarField:
    hbar, m = spec.constants.hbar, spec.constants.mass
    X, T = grid.mesh()
    dp2 = spec.sigma_p**2
    S = (hbar**2 * spec.mean_p / (2.0 * dp2) * X + dp2 / m * X**2 * T) / (2.0 * spec.diffusion(T))
    return ScalarField(grid, S + free_gauge(spec, T))


def free_momentum(spec: FreeGaussianSpec, grid: SpacetimeGrid) -> ScalarField:
    hbar, m = spec.constants.hbar, spec.constants.mass
    X, T = grid.mesh()
    dp2 = spec.sigma_p**2
    p = (hbar**2 * spec.mean_p / (4.0 * dp2) + dp2 / m * X * T) / spec.diffusion(T)
    return ScalarField(grid, p)


def free_wavefunction(spec: FreeGaussianSpec, grid: SpacetimeGrid) -> ComplexField:
    P = free_density(spec, grid).values
    S = free_phase(spec, grid).values
    return ComplexField(grid, np.sqrt(P) * np.exp(1j * S / spec.constants.hbar))


def free_bohm_potential(spec: FreeGaussianSpec, grid: SpacetimeGrid) -> ScalarField:
    """Closed-form quantum potential of the free packet (V = 0)."""
    hbar, m = spec.constants.hbar, spec.constants.mass
    X, T = grid.mesh()
    D = spec.diffusion(T)
    xi = X - spec.mean_p / m * T
    return ScalarField(grid, hbar**2 / (4.0 * m * D) * (1.0 - xi**2 / (2.0 * D)))


# -- coherent states ----------------------------------------------------------

def coherent_density(spec: CoherentStateSpec, grid: SpacetimeGrid) -> ScalarField:
    X, T = grid.mesh()
    a = spec.a
    P = abs(a) / np.sqrt(np.pi) * np.exp(-(a**2) * (X - spec.center(T)) ** 2)
    _check_coverage(P, "coherent_density")
    return ScalarField(grid, P)


def coherent_momentum(spec: CoherentStateSpec, grid: SpacetimeGrid) -> ScalarField:
    m, w = spec.constants.mass, spec.omega
    _, T = grid.mesh()
    return ScalarField(grid, spec.sign * m * w * spec.b * np.sin(w * T))


def coherent_gauge(spec: CoherentStateSpec, t) -> np.ndarray:
    hbar, m, w = spec.constants.hbar, spec.constants.mass, spec.omega
    t = np.asarray(t, dtype=float)
    return 0.25 * m * w * spec.b**2 * np.sin(2.0 * w * t) - 0.5 * hbar * w * t


def coherent_phase(spec: CoherentStateSpec, grid: SpacetimeGrid) -> ScalarField:
    X, T = grid.mesh()
    return ScalarField(grid, coherent_momentum(spec, grid).values * X + coherent_gauge(spec, T))


def coherent_wavefunction(spec: CoherentStateSpec, grid: SpacetimeGrid) -> ComplexField:
    P = coherent_density(spec, grid).values
    S = coherent_phase(spec, grid).values
    return ComplexField(grid, np.sqrt(P) * np.exp(1j * S / spec.constants.hbar))


def coherent_quantum_potential(spec: CoherentStateSpec, grid: SpacetimeGrid) -> ScalarField:
    hbar, m = spec.constants.hbar, spec.constants.mass
    X, T = grid.mesh()
    a2 = spec.a**2
    return ScalarField(grid, hbar**2 * a2 / (2.0 * m) * (1.0 - a2 * (X - spec.center(T)) ** 2))


# -- breathing Gaussian -------------------------------------------------------

def breathing_density(spec: BreathingGaussianSpec, grid: SpacetimeGrid) -> ScalarField:
    X, T = grid.mesh()
    w = spec.width * spec.scale(T)
    P = np.exp(-(((X - spec.center) / w) ** 2)) / (np.sqrt(np.pi) * w)
    _check_coverage(P, "breathing_density")
    return ScalarField(grid, P)


# -- potentials ---------------------------------------------------------------

def harmonic_potential(grid: SpacetimeGrid, omega: float, constants: PhysicalConstants) -> ScalarField:
    X, _ = grid.mesh()
    return ScalarField(grid, 0.5 * constants.mass * omega**2 * X**2)


def zero_potential(grid: SpacetimeGrid) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape))
