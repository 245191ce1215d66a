"""Independent checks against the Schrodinger equation itself.

``propagate`` is a second-order Strang split-step Fourier integrator used to
manufacture synthetic density histories; ``schrodinger_residual`` measures
how well any sampled wavefunction satisfies
i hbar dpsi/dt = -hbar^2/(2m) d2psi/dx2 + V psi with grid-core stencils.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .grid import (
    ComplexField,
    PhysicalConstants,
    ScalarField,
    SpacetimeGrid,
    first_derivative,
    second_derivative,
    trapezoid,
)
from .retrieval import interior_mask, trusted_mask

PAD_FRACTION = 0.25
NORM_DRIFT_LIMIT = 1e-6

Potential = Union[ScalarField, Callable[[np.ndarray, float], np.ndarray]]


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    substeps_per_output: int = 8
    boundary: str = "periodic"
    absorber_width: float = 0.0

    def __post_init__(self):
        if self.substeps_per_output < 1:
            raise ValueError("substeps_per_output must be at least 1")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundaries are supported")
        if not 0.0 <= self.absorber_width <= 0.25:
            raise ValueError("absorber_width must lie in [0, 0.25]")


def density_of(psi: ComplexField) -> ScalarField:
    return ScalarField(psi.grid, np.abs(psi.values) ** 2)


def kinetic_phase(n: int, dx: float, h: float, c: PhysicalConstants) -> np.ndarray:
    """exp(-i hbar k^2 h / 2m) on the FFT frequency grid."""
    k = 2.0 * np.pi * np.fft.fftfreq(n, dx)
    return np.exp(-0.5j * c.hbar * k**2 * h / c.mass)


def split_step(psi: np.ndarray, V: np.ndarray, dx: float, h: float, c: PhysicalConstants) -> np.ndarray:
    """One Strang step of length ``h``: half kinetic, full potential, half kinetic."""
    half = kinetic_phase(psi.size, dx, 0.5 * h, c)
    psi = np.fft.ifft(half * np.fft.fft(psi))
    psi = psi * np.exp(-1j * V * h / c.hbar)
    return np.fft.ifft(half * np.fft.fft(psi))


def _absorber(n: int, width: float) -> np.ndarray:
    mask = np.ones(n)
    ramp = int(round(width * n))
    if ramp > 0:
        edge = np.sin(0.5 * np.pi * np.arange(ramp) / ramp) ** 2
        mask[:ramp] = edge
        mask[n - ramp:] = edge[::-1]
    return mask


def _potential_sampler(V: Potential, grid: SpacetimeGrid, x_ext: np.ndarray, npad: int):
    """Return V(t) on the padded grid: callables are evaluated directly, sampled
    fields are interpolated linearly in time and padded with edge values."""
    if callable(V):
        return lambda t: np.broadcast_to(np.asarray(V(x_ext, t), dtype=float), x_ext.shape)
    if V.grid != grid:
        raise ValueError("potential lives on a different grid")
    padded = np.pad(V.values, ((0, 0), (npad, npad)), mode="edge")
    if np.all(padded == padded[0]):
        return lambda t: padded[0]
    tt = grid.t

    def sample(t):
        j = int(np.clip(np.searchsorted(tt, t) - 1, 0, grid.nt - 2))
        w = (t - tt[j]) / grid.dt
        return (1.0 - w) * padded[j] + w * padded[j + 1]

    return sample


def propagate_with_norms(
    psi0: np.ndarray,
    V: Potential,
    grid: SpacetimeGrid,
    cfg: PropagatorConfig = PropagatorConfig(),
    c: PhysicalConstants = PhysicalConstants(),
) -> tuple[ComplexField, np.ndarray]:
    """Evolve ``psi0`` (values at ``t_min``) and return the field plus the norm
    of every stored slice on the padded domain."""
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (grid.nx,):
        raise ValueError(f"initial state must have {grid.nx} samples")
    norm0 = trapezoid(np.abs(psi0) ** 2, grid.dx)
    if abs(norm0 - 1.0) > 1e-6:
        raise ValueError(f"initial state norm {norm0:.8f} is not 1 within 1e-6")
    edge = max(abs(psi0[0]) ** 2, abs(psi0[-1]) ** 2)
    if cfg.absorber_width == 0 and edge > 1e-10 * np.max(np.abs(psi0) ** 2):
        warnings.warn("initial state is not negligible at the grid edge", stacklevel=2)

    npad = int(round(PAD_FRACTION * (grid.nx - 1)))
    n = grid.nx + 2 * npad
    dx = grid.dx
    x_ext = grid.x_min + (np.arange(n) - npad) * dx
    sample_V = _potential_sampler(V, grid, x_ext, npad)
    absorb = _absorber(n, cfg.absorber_width) if cfg.absorber_width > 0 else None

    h = grid.dt / cfg.substeps_per_output
    half = kinetic_phase(n, dx, 0.5 * h, c)
    psi = np.zeros(n, dtype=complex)
    psi[npad:npad + grid.nx] = psi0

    out = np.empty(grid.shape, dtype=complex)
    norms = np.empty(grid.nt)
    out[0] = psi0
    norms[0] = np.sum(np.abs(psi) ** 2) * dx
    for k in range(1, grid.nt):
        t0 = grid.t[k - 1]
        for j in range(cfg.substeps_per_output):
            Vm = sample_V(t0 + (j + 0.5) * h)
            psi = np.fft.ifft(half * np.fft.fft(psi))
            psi *= np.exp(-1j * Vm * h / c.hbar)
            psi = np.fft.ifft(half * np.fft.fft(psi))
            if absorb is not None:
                psi *= absorb
        out[k] = psi[npad:npad + grid.nx]
        norms[k] = np.sum(np.abs(psi) ** 2) * dx

    drift = np.max(np.abs(norms - norms[0]))
    if absorb is None and drift > NORM_DRIFT_LIMIT:
        raise PropagationError(f"norm drifted by {drift:.2e} without an absorber")
    return ComplexField(grid, out), norms


def propagate(
    psi0: np.ndarray,
    V: Potential,
    grid: SpacetimeGrid,
    cfg: PropagatorConfig = PropagatorConfig(),
    c: PhysicalConstants = PhysicalConstants(),
) -> ComplexField:
    return propagate_with_norms(psi0, V, grid, cfg, c)[0]


def energy(psi: np.ndarray, V: np.ndarray, dx: float, c: PhysicalConstants = PhysicalConstants()) -> float:
    """<psi|H|psi> with a spectral kinetic term (periodic grid assumed)."""
    k = 2.0 * np.pi * np.fft.fftfreq(psi.size, dx)
    phi = np.fft.fft(psi)
    kinetic = (c.hbar**2 / (2.0 * c.mass)) * np.sum(k**2 * np.abs(phi) ** 2) / psi.size * dx
    return float(kinetic + np.sum(V * np.abs(psi) ** 2) * dx)


def schrodinger_residual(
    psi: ComplexField,
    V: ScalarField,
    c: PhysicalConstants = PhysicalConstants(),
    density_floor: float = 1e-10,
) -> tuple[ScalarField, float]:
    """|i hbar dpsi/dt + hbar^2/(2m) d2psi/dx2 - V psi| and its relative L2 norm.

    The norm runs over the interior of the trusted region of |psi|^2 and is
    divided by the norm of the kinetic term hbar^2/(2m) d2psi/dx2.
    """
    if psi.grid.nt < 3:
        raise ValueError("insufficient time resolution: need at least 3 slices")
    if psi.grid != V.grid:
        raise ValueError("wavefunction and potential live on different grids")
    g = psi.grid
    kinetic = c.hbar**2 / (2.0 * c.mass) * second_derivative(psi.values, g.dx, axis=1)
    res = 1j * c.hbar * first_derivative(psi.values, g.dt, axis=0) + kinetic - V.values * psi.values
    P = density_of(psi)
    rows = interior_mask(trusted_mask(P, density_floor))
    denom = np.linalg.norm(kinetic[rows])
    rel = float(np.linalg.norm(res[rows]) / denom) if denom > 0 else 0.0
    return ScalarField(g, np.abs(res)), rel


def aligned_phase_error(psi: ComplexField, reference, hbar: float, mask: np.ndarray) -> float:
    """Max |S - S_ref| over ``mask`` after removing the best global constant.

    ``reference`` is a real phase field or a complex wavefunction field; the
    constant is the |psi|^2-weighted circular mean of the phase difference.
    """
    if isinstance(reference, ComplexField):
        d = np.angle(psi.values[mask]) - np.angle(reference.values[mask])
    else:
        d = np.angle(psi.values[mask]) - reference.values[mask] / hbar
    # differences of angles rather than angles of products keep identical inputs exact
    d = _wrap(d)
    w = np.abs(psi.values[mask]) ** 2
    diff = _wrap(d - np.angle(np.sum(w * np.exp(1j * d))))
    return float(hbar * np.max(np.abs(diff)))


def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi
