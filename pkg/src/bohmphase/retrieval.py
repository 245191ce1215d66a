"""Phase retrieval from a density history and a known potential.

Given P(x, t) and V(x, t) the pipeline

1. solves the continuity equation for the canonical momentum p = dS/dx,
2. builds the Bohm potential V_B = V + U from the density,
3. fixes the free coefficient Theta(t) of the homogeneous continuity
   solution with the x-differentiated Hamilton-Jacobi equation,
4. integrates p in x and fixes the remaining time-only gauge f(t) with the
   Hamilton-Jacobi equation itself,

and returns psi = sqrt(P) exp(i S / hbar) together with residual diagnostics.
All divisions by P happen only on the *trusted region*, the nodes where P is
at least ``density_floor`` times its per-slice maximum.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .grid import (
    ComplexField,
    GridError,
    PhysicalConstants,
    ScalarField,
    cumulative_integral_t,
    cumulative_integral_x,
    d2_dx2,
    d_dt,
    d_dx,
    first_derivative,
    integrate_x,
)

COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"
INCONCLUSIVE = "inconclusive"

THETA_MODES = ("zero_flux", "residual_fit")
INCOMPATIBLE_MARGIN = 5.0
MIN_MASS_COVERAGE = 0.5
NORMALIZATION_TOL = 1e-6
GAUSS_NEWTON_STEPS = 8

# momentum fields are plain scalar fields
MomentumField = ScalarField


class RetrievalError(ValueError):
    """The density cannot be processed (empty or disconnected trusted region, bad anchor)."""


class NormalizationWarning(UserWarning):
    pass


class ThetaFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RetrievalOptions:
    density_floor: float = 1e-10
    theta_mode: str = "zero_flux"
    reference_index: Optional[int] = None
    hj_tolerance: float = 1e-2
    edge_guard: float = 1e4

    def __post_init__(self):
        if not 0 < self.density_floor < 1:
            raise ValueError("density_floor must lie in (0, 1)")
        if self.theta_mode not in THETA_MODES:
            raise ValueError(f"theta_mode must be one of {THETA_MODES}")
        if not self.hj_tolerance > 0:
            raise ValueError("hj_tolerance must be positive")
        if not self.edge_guard >= 0:
            raise ValueError("edge_guard must be non-negative")


@dataclass(frozen=True, eq=False)
class ThetaProfile:
    values: np.ndarray
    residual: np.ndarray
    fallback: bool = False


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Time-only part of the phase, ``f(t_min) = 0``.

    ``spread`` is the per-slice standard deviation over trusted nodes of the
    Hamilton-Jacobi estimate of df/dt; ``scale`` is the per-slice RMS of the
    dominant Hamilton-Jacobi term, the yardstick for ``spread``.
    """

    t: np.ndarray
    values: np.ndarray
    spread: np.ndarray
    scale: np.ndarray
    anchor_index: int = 0


@dataclass(eq=False)
class RetrievalReport:
    theta: ThetaProfile
    gauge: GaugeFunction
    hj_residual_rel: float
    hjdiff_residual_rel: float
    mass_coverage: float
    schrodinger_residual_rel: Optional[float] = None
    verdict: str = INCONCLUSIVE
    phase: Optional[ScalarField] = field(default=None, repr=False)
    momentum: Optional[ScalarField] = field(default=None, repr=False)
    bohm_potential: Optional[ScalarField] = field(default=None, repr=False)

    @property
    def gauge_spread_rel(self) -> float:
        return float(np.max(self.gauge.spread / self.gauge.scale))


# -- trusted region -----------------------------------------------------------

def trusted_mask(P: ScalarField, density_floor: float = 1e-10, edge_guard: float = 0.0) -> np.ndarray:
    """Boolean ``(nt, nx)`` mask of trusted nodes; each slice must be one connected run.

    A node is trusted when P >= density_floor * (slice peak). With ``edge_guard``
    > 0 it must also exceed edge_guard * (density at either grid edge): the
    current through a grid edge is unknown, and its influence on the recovered
    momentum falls off like P(edge) / P(x).
    """
    vals = P.values
    peak = vals.max(axis=1, keepdims=True)
    if np.any(peak <= 0):
        raise RetrievalError("empty trusted region: a slice has no positive density")
    mask = vals >= density_floor * peak
    if edge_guard > 0:
        edge = np.maximum(vals[:, :1], vals[:, -1:])
        mask &= vals >= edge_guard * edge
    if not np.all(mask.any(axis=1)):
        raise RetrievalError("empty trusted region: grid too narrow for the density")
    # a connected run has exactly one rising edge
    rises = np.diff(mask.astype(np.int8), axis=1, prepend=0) == 1
    if np.any(rises.sum(axis=1) != 1):
        raise RetrievalError("trusted region is disconnected (density has interior zeros)")
    return mask


def working_mask(P: ScalarField, opts: RetrievalOptions) -> np.ndarray:
    """Trusted region used by the retrieval pipeline (density floor plus edge guard)."""
    return trusted_mask(P, opts.density_floor, opts.edge_guard)


def interior_mask(mask: np.ndarray, time_edges: int = 2) -> np.ndarray:
    """Trusted nodes away from the grid edges whose x and t neighbours are trusted too.

    Edge nodes in x and the first/last ``time_edges`` slices are excluded: by
    default two, because residuals there differentiate in time a momentum that
    was itself built with a one-sided time stencil (first-order accurate).
    """
    inner = mask.copy()
    inner[:, 1:-1] &= mask[:, :-2] & mask[:, 2:]
    inner[1:-1] &= mask[:-2] & mask[2:]
    inner[0] &= mask[1] & mask[2]
    inner[-1] &= mask[-2] & mask[-3]
    inner[:, [0, -1]] = False
    if time_edges:
        inner[:time_edges] = False
        inner[-time_edges:] = False
    return inner


def _edges(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    left = np.argmax(mask, axis=1)
    right = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
    return left, right


def _extend_outside(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace untrusted nodes by the nearest trusted value in the same slice."""
    left, right = _edges(mask)
    idx = np.clip(np.arange(mask.shape[1])[None, :], left[:, None], right[:, None])
    return np.take_along_axis(values, idx, axis=1)


def reference_indices(P: ScalarField, opts: RetrievalOptions) -> np.ndarray:
    if opts.reference_index is not None:
        if not 0 <= opts.reference_index < P.grid.nx:
            raise RetrievalError("reference_index outside the grid")
        return np.full(P.grid.nt, opts.reference_index, dtype=int)
    # argmax breaks ties toward the smaller index
    return np.argmax(P.values, axis=1)


def mass_coverage(P: ScalarField, mask: np.ndarray) -> float:
    total = integrate_x(P)
    inside = integrate_x(P.with_values(np.where(mask, P.values, 0.0)))
    return float(np.min(inside / total))


def _masked_rms(values: np.ndarray, mask: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values[mask] ** 2))) if mask.any() else 0.0


def _relative_norm(residual: np.ndarray, terms, mask: np.ndarray) -> float:
    dominant = np.max(np.abs(np.stack(terms)), axis=0)
    denom = np.linalg.norm(dominant[mask])
    num = np.linalg.norm(residual[mask])
    if denom == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / denom)


# -- pipeline stages ----------------------------------------------------------

def quantum_potential(P: ScalarField, c: PhysicalConstants, density_floor: float = 1e-10) -> ScalarField:
    """U = -hbar^2/(4m) [P''/P - (P')^2/(2 P^2)], extended flat outside the trusted region.

    Evaluated as -hbar^2/(4m) [(ln P)'' + ((ln P)')^2 / 2]; the stencils then act on a
    slowly varying function instead of on the exponentially decaying tails.
    """
    mask = trusted_mask(P, density_floor)
    logP = P.with_values(np.log(np.maximum(P.values, np.finfo(float).tiny)))
    g = d_dx(logP).values
    U = -(c.hbar**2) / (4.0 * c.mass) * (d2_dx2(logP).values + 0.5 * g**2)
    return P.with_values(_extend_outside(np.where(mask, U, 0.0), mask))


def bohm_potential(P: ScalarField, V: ScalarField, c: PhysicalConstants, density_floor: float = 1e-10) -> ScalarField:
    if P.grid != V.grid:
        raise GridError("density and potential live on different grids")
    return V + quantum_potential(P, c, density_floor)


def _march_bounds(P: np.ndarray, ref: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """Outermost nodes of the run around ``ref`` where P stays above ``floor`` * peak."""
    thr = np.maximum(floor * P.max(axis=1, keepdims=True), np.finfo(float).tiny)
    low = P < thr
    idx = np.arange(P.shape[1])[None, :]
    below_left = np.where(low & (idx < ref[:, None]), idx, -1).max(axis=1)
    below_right = np.where(low & (idx > ref[:, None]), idx, P.shape[1]).min(axis=1)
    return below_left + 1, below_right - 1


def continuity_particular(
    P: ScalarField,
    c: PhysicalConstants = PhysicalConstants(),
    opts: RetrievalOptions = RetrievalOptions(),
) -> MomentumField:
    """Zero-current solution of the continuity equation.

    Written for the logarithm of the density the equation is the linear ODE

        p' + (ln P)' p = -m d(ln P)/dt,

    whose coefficients stay smooth in the tails. It is marched with the
    implicit trapezoid rule from each far tail (P >= density_floor**2 * peak,
    starting from p = 0) toward the reference node; in that direction the
    homogeneous solution 1/P decays, so the unknown tail current dies out
    before the trusted region is reached. Analytically this is
    p = -(m/P) * integral dP/dt dx' with zero current at both far ends.
    """
    mask = working_mask(P, opts)
    ref = reference_indices(P, opts)
    start_left, start_right = _march_bounds(P.values, ref, opts.density_floor**2)

    logP = P.with_values(np.log(np.maximum(P.values, np.finfo(float).tiny)))
    slope = d_dx(logP).values
    source = -c.mass * d_dt(logP).values
    h = 0.5 * P.grid.dx
    nt, nx = P.grid.shape
    p = np.zeros((nt, nx))

    for i in range(1, nx):
        active = (i > start_left) & (i <= ref)
        if active.any():
            rhs = p[:, i - 1] * (1.0 - h * slope[:, i - 1]) + h * (source[:, i] + source[:, i - 1])
            p[:, i] = np.where(active, rhs / (1.0 + h * slope[:, i]), p[:, i])
    for i in range(nx - 2, -1, -1):
        active = (i < start_right) & (i > ref)
        if active.any():
            rhs = p[:, i + 1] * (1.0 + h * slope[:, i + 1]) - h * (source[:, i] + source[:, i + 1])
            p[:, i] = np.where(active, rhs / (1.0 - h * slope[:, i]), p[:, i])

    return P.with_values(_extend_outside(np.where(mask, p, 0.0), mask))


def homogeneous_mode(P: ScalarField, opts: RetrievalOptions = RetrievalOptions()) -> ScalarField:
    """Per-slice 1/P, scaled to 1 at the reference node."""
    mask = working_mask(P, opts)
    ref = reference_indices(P, opts)
    if not np.all(mask[np.arange(P.grid.nt), ref]):
        raise RetrievalError("reference node lies outside the trusted region")
    Pv = P.values
    ratio = Pv[np.arange(P.grid.nt), ref][:, None] / np.where(mask, Pv, 1.0)
    return P.with_values(_extend_outside(np.where(mask, ratio, 1.0), mask))


def hjdiff_residual(p: ScalarField, V_B: ScalarField, c: PhysicalConstants):
    """Residual of dp/dt + p dp/dx / m + dV_B/dx, and its three terms."""
    dpdt = d_dt(p).values
    adv = p.values * d_dx(p).values / c.mass
    force = d_dx(V_B).values
    return dpdt + adv + force, (dpdt, adv, force)


def _theta_operator(p0: np.ndarray, mode: np.ndarray, dx: float, dt: float, mass: float, rows: np.ndarray):
    """Sparse Jacobian of the x-differentiated HJ residual w.r.t. Theta, restricted to ``rows``.

    Perturbing p by Theta_k * mode_k changes the residual by
    d/dt(Theta mode) + Theta (p0 Dx(mode) + mode Dx(p0)) / m. The advection
    term is linearised with the discrete stencil itself: the continuum
    product rule Dx(p0 mode) is not exact on the grid and 1/P is steep.
    """
    nt, nx = mode.shape
    # time-derivative stencil as an explicit nt x nt matrix
    Dt = first_derivative(np.eye(nt), dt, axis=0)
    spatial = (p0 * first_derivative(mode, dx, axis=1) + mode * first_derivative(p0, dx, axis=1)) / mass
    row_index = -np.ones((nt, nx), dtype=int)
    row_index[rows] = np.arange(rows.sum())
    r, col, val = [], [], []
    for k in range(nt):
        # the central stencil has a zero diagonal; slice k still needs its own row
        for kk in np.union1d(np.flatnonzero(Dt[:, k]), [k]):
            sel = rows[kk]
            coef = Dt[kk, k] * mode[k, sel]
            if kk == k:
                coef = coef + spatial[k, sel]
            r.append(row_index[kk, sel])
            col.append(np.full(sel.sum(), k))
            val.append(coef)
    return sp.csc_matrix(
        (np.concatenate(val), (np.concatenate(r), np.concatenate(col))), shape=(rows.sum(), nt)
    )


def _solve_theta(A, rhs):
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
    if np.any(norms == 0):
        return None
    As = A @ sp.diags(1.0 / norms)
    M = (As.T @ As).toarray()
    b = As.T @ rhs
    sol, _, rank, sv = np.linalg.lstsq(M, b, rcond=None)
    if rank < M.shape[0] or sv[-1] < 1e-13 * sv[0]:
        return None
    return sol / norms


def fit_theta(
    p_part: MomentumField,
    mode: ScalarField,
    V_B: ScalarField,
    opts: RetrievalOptions,
    c: PhysicalConstants = PhysicalConstants(),
    mask: Optional[np.ndarray] = None,
) -> ThetaProfile:
    """Determine Theta(t) for p = p_part + Theta * mode.

    ``zero_flux`` fixes Theta = 0. ``residual_fit`` minimises the L2 norm of
    the x-differentiated HJ residual over all slices jointly with damped
    Gauss-Newton steps started from Theta = 0.
    """
    grid = p_part.grid
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    # every slice needs rows, otherwise its Theta is unobservable
    rows = interior_mask(mask, time_edges=0)
    theta = np.zeros(grid.nt)
    fallback = False

    if opts.theta_mode == "residual_fit":
        def evaluate(th):
            R, _ = hjdiff_residual(p_part.with_values(p_part.values + th[:, None] * mode.values), V_B, c)
            return R, np.linalg.norm(R[rows])

        R, best = evaluate(theta)
        for _ in range(GAUSS_NEWTON_STEPS):
            p = p_part.values + theta[:, None] * mode.values
            A = _theta_operator(p, mode.values, grid.dx, grid.dt, c.mass, rows)
            step = _solve_theta(A, -R[rows])
            if step is None:
                warnings.warn("singular Theta least-squares system; using Theta = 0", ThetaFitWarning, stacklevel=2)
                theta = np.zeros(grid.nt)
                fallback = True
                break
            # halve the step until the residual norm drops
            lam = 1.0
            while lam > 1e-3:
                trial = theta + lam * step
                R_trial, norm = evaluate(trial)
                if norm < best:
                    break
                lam *= 0.5
            else:
                break
            theta, R, best = trial, R_trial, norm
            if np.max(np.abs(lam * step)) <= 1e-8 * np.max(np.abs(theta)):
                break

    p = p_part.values + theta[:, None] * mode.values
    R, _ = hjdiff_residual(p_part.with_values(p), V_B, c)
    per_slice = np.array(
        [np.sqrt(np.mean(R[k, rows[k]] ** 2)) if rows[k].any() else 0.0 for k in range(grid.nt)]
    )
    return ThetaProfile(values=theta, residual=per_slice, fallback=fallback)


def phase_anchor(P: ScalarField, mask: np.ndarray) -> int:
    """Time-independent x-integration anchor: the node trusted in every slice with
    the largest time-averaged density."""
    always = mask.all(axis=0)
    if not always.any():
        raise RetrievalError("no spatial node is trusted in every time slice")
    mean_density = np.where(always, P.values.mean(axis=0), -np.inf)
    return int(np.argmax(mean_density))


def assemble_phase(
    p: MomentumField,
    V_B: ScalarField,
    P: ScalarField,
    opts: RetrievalOptions = RetrievalOptions(),
    c: PhysicalConstants = PhysicalConstants(),
) -> tuple[ScalarField, GaugeFunction]:
    """S = integral of p over x (fixed anchor) + f(t).

    df/dt is read off the Hamilton-Jacobi equation at the reference node; the
    spread of that estimate across trusted nodes is kept as a diagnostic.
    """
    grid = p.grid
    mask = working_mask(P, opts)
    ref = reference_indices(P, opts)
    k = np.arange(grid.nt)
    if not np.all(mask[k, ref]):
        raise RetrievalError("reference node lies outside the trusted region")
    anchor = phase_anchor(P, mask)

    W = cumulative_integral_x(p, anchor)
    kinetic = p.values**2 / (2.0 * c.mass)
    dWdt = d_dt(W).values
    rate = -(kinetic + V_B.values + dWdt)
    f = cumulative_integral_t(rate[k, ref], grid.dt)

    inner = interior_mask(mask)
    dominant = np.max(np.abs(np.stack([kinetic, V_B.values, dWdt])), axis=0)
    spread = np.array([rate[j, inner[j]].std() if inner[j].any() else 0.0 for j in k])
    scale = np.array([_masked_rms(dominant[j], inner[j]) for j in k])
    scale = np.where(scale > 0, scale, np.finfo(float).tiny)

    S = W.with_values(W.values + f[:, None])
    return S, GaugeFunction(t=grid.t, values=f, spread=spread, scale=scale, anchor_index=anchor)


def assemble_wavefunction(P: ScalarField, S: ScalarField, c: PhysicalConstants = PhysicalConstants()) -> ComplexField:
    if np.any(P.values < 0):
        raise ValueError("density must be non-negative")
    return ComplexField(P.grid, np.sqrt(P.values) * np.exp(1j * S.values / c.hbar))


def hj_residual(
    S: ScalarField,
    V_B: ScalarField,
    c: PhysicalConstants = PhysicalConstants(),
    mask: Optional[np.ndarray] = None,
) -> tuple[ScalarField, float]:
    """Pointwise dS/dt + (dS/dx)^2/2m + V_B and its relative L2 norm.

    The norm runs over the interior of ``mask`` (all nodes when omitted) and is
    divided by the L2 norm of the pointwise largest of the three terms.
    """
    dSdt = d_dt(S).values
    kinetic = d_dx(S).values ** 2 / (2.0 * c.mass)
    R = dSdt + kinetic + V_B.values
    rows = interior_mask(np.ones(S.grid.shape, bool) if mask is None else mask)
    return S.with_values(R), _relative_norm(R, (dSdt, kinetic, V_B.values), rows)


def compatibility_verdict(report: RetrievalReport, opts: RetrievalOptions = RetrievalOptions()) -> str:
    tol = opts.hj_tolerance
    if report.mass_coverage < MIN_MASS_COVERAGE:
        return INCONCLUSIVE
    if report.hj_residual_rel > INCOMPATIBLE_MARGIN * tol:
        return INCOMPATIBLE
    spread_ok = np.all(report.gauge.spread < tol * report.gauge.scale)
    if report.hj_residual_rel < tol and spread_ok:
        return COMPATIBLE
    return INCONCLUSIVE


def normalized(P: ScalarField) -> ScalarField:
    """Return P scaled to unit mass per slice, warning if that changed anything."""
    norms = integrate_x(P)
    if np.any(norms <= 0):
        raise RetrievalError("density has zero mass in some slice")
    if np.max(np.abs(norms - 1.0)) > NORMALIZATION_TOL:
        warnings.warn(
            f"density not unit-normalised (max deviation {np.max(np.abs(norms - 1.0)):.2e}); renormalising",
            NormalizationWarning,
            stacklevel=3,
        )
        return P.with_values(P.values / norms[:, None])
    return P


def momentum_scale(P: ScalarField, p: ScalarField, mask: np.ndarray, c: PhysicalConstants) -> np.ndarray:
    """Per-slice momentum yardstick: max |p| on trusted nodes plus hbar / (2 sigma_x)."""
    x = P.grid.x
    w = P.values / integrate_x(P)[:, None]
    mean = np.trapezoid(w * x, dx=P.grid.dx, axis=1)
    var = np.trapezoid(w * (x - mean[:, None]) ** 2, dx=P.grid.dx, axis=1)
    drift = np.max(np.abs(np.where(mask, p.values, 0.0)), axis=1)
    return drift + c.hbar / (2.0 * np.sqrt(var))


def retrieve(
    P: ScalarField,
    V: ScalarField,
    opts: RetrievalOptions = RetrievalOptions(),
    c: PhysicalConstants = PhysicalConstants(),
) -> tuple[ComplexField, RetrievalReport]:
    """Run the full pipeline and return ``(psi, report)``.

    The report also carries the recovered phase, momentum and Bohm potential.
    """
    if P.grid != V.grid:
        raise GridError("density and potential live on different grids")
    if P.grid.nt < 3:
        raise GridError("insufficient time resolution: need at least 3 slices")
    P = normalized(P)
    mask = working_mask(P, opts)

    p_part = continuity_particular(P, c, opts)
    mode = homogeneous_mode(P, opts)
    V_B = bohm_potential(P, V, c, opts.density_floor)
    theta = fit_theta(p_part, mode, V_B, opts, c, mask)
    p = p_part.with_values(p_part.values + theta.values[:, None] * mode.values)

    S, gauge = assemble_phase(p, V_B, P, opts, c)
    psi = assemble_wavefunction(P, S, c)
    _, hj_rel = hj_residual(S, V_B, c, mask)
    R5, terms5 = hjdiff_residual(p, V_B, c)
    hjdiff_rel = _relative_norm(R5, terms5, interior_mask(mask))

    report = RetrievalReport(
        theta=theta,
        gauge=gauge,
        hj_residual_rel=hj_rel,
        hjdiff_residual_rel=hjdiff_rel,
        mass_coverage=mass_coverage(P, mask),
        phase=S,
        momentum=p,
        bohm_potential=V_B,
    )
    report.verdict = compatibility_verdict(report, opts)
    return psi, report
