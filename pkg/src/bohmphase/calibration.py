"""Parameter calibration: choose density-family parameters for which a phase exists.

The score of a parameter vector is the relative Hamilton-Jacobi residual left
by :func:`bohmphase.retrieval.retrieve`. A compatible density scores at the
discretization level; an incompatible one scores O(1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .grid import GridError, PhysicalConstants, ScalarField, SpacetimeGrid, integrate_x
from .oracles import BreathingGaussianSpec, FreeGaussianSpec, breathing_density, free_density
from .retrieval import (
    MIN_MASS_COVERAGE,
    RetrievalError,
    RetrievalOptions,
    retrieve,
)

SENTINEL = 1e6
SIMPLEX_FTOL = 1e-8
MAX_ITER = 500
DEDUP_FRACTION = 1e-3
START_SEED = 20240611

Generator = Callable[[dict, SpacetimeGrid, PhysicalConstants], np.ndarray]


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DensityFamily:
    """A named density generator with box bounds on its parameters.

    ``generator(params, grid, c)`` receives a ``{name: value}`` dict and returns
    an ``(nt, nx)`` array; calling the family renormalizes it per slice.
    """

    name: str
    params: tuple[tuple[str, float, float], ...]
    generator: Generator = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.params))
        if not self.params:
            raise ValueError("a family needs at least one parameter")
        names = [n for n, _, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        for n, lo, hi in self.params:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"parameter {n!r}: bounds must be finite with lower < upper")

    @property
    def names(self) -> list[str]:
        return [n for n, _, _ in self.params]

    @property
    def bounds(self) -> np.ndarray:
        return np.array([(lo, hi) for _, lo, hi in self.params])

    def as_dict(self, values) -> dict:
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.shape != (len(self.params),):
            raise ValueError(f"{self.name}: expected {len(self.params)} parameters")
        return dict(zip(self.names, values.tolist()))

    def __call__(self, values, grid: SpacetimeGrid, c: PhysicalConstants = PhysicalConstants()) -> ScalarField:
        P = np.asarray(self.generator(self.as_dict(values), grid, c), dtype=float)
        P = ScalarField(grid, P)
        norms = integrate_x(P)
        if np.any(norms <= 0):
            raise GridError(f"{self.name}: generated density has an empty slice")
        return P.with_values(P.values / norms[:, None])


@dataclass
class Optimum:
    params: np.ndarray
    objective: float
    verdict: str
    converged: bool


@dataclass
class CalibrationResult:
    names: list[str]
    optima: list[Optimum]

    @property
    def best(self) -> np.ndarray:
        return self.optima[0].params

    @property
    def objective(self) -> float:
        return self.optima[0].objective

    @property
    def verdicts(self) -> list[str]:
        return [o.verdict for o in self.optima]


# -- built-in families --------------------------------------------------------

def coherent_width_family(
    omega: float = 1.0,
    b: float = 1.0,
    alpha_bounds=(0.2, 5.0),
    b_bounds=None,
    c: PhysicalConstants = PhysicalConstants(),
) -> DensityFamily:
    """Oscillating Gaussian with a free inverse width ``alpha``.

    Bounds on ``alpha`` are given in units of sqrt(m omega / hbar). With
    ``b_bounds`` the amplitude ``b`` is a second free parameter.
    """
    unit = np.sqrt(c.mass * omega / c.hbar)
    params = [("alpha", alpha_bounds[0] * unit, alpha_bounds[1] * unit)]
    if b_bounds is not None:
        params.append(("b", b_bounds[0], b_bounds[1]))

    def gen(p, grid, c):
        X, T = grid.mesh()
        alpha, amp = p["alpha"], p.get("b", b)
        return alpha / np.sqrt(np.pi) * np.exp(-(alpha**2) * (X + amp * np.cos(omega * T)) ** 2)

    return DensityFamily("coherent-width", tuple(params), gen)


def breathing_family(
    omega: float = 1.0,
    width: float = 1.0,
    center: float = 0.0,
    eps_bounds=(0.05, 0.8),
) -> DensityFamily:
    def gen(p, grid, c):
        spec = BreathingGaussianSpec(c, omega=omega, center=center, width=width, eps=p["eps"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return breathing_density(spec, grid).values

    return DensityFamily("breathing", (("eps", *eps_bounds),), gen)


def free_family(mean_p: float = 0.0, sigma_p_bounds=(0.3, 1.5)) -> DensityFamily:
    def gen(p, grid, c):
        spec = FreeGaussianSpec(c, mean_p=mean_p, sigma_p=p["sigma_p"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return free_density(spec, grid).values

    return DensityFamily("free", (("sigma_p", *sigma_p_bounds),), gen)


FAMILIES = {
    "coherent-width": coherent_width_family,
    "breathing": breathing_family,
    "free": free_family,
}


# -- objective and search -----------------------------------------------------

def evaluate(family, params, V, grid, opts=RetrievalOptions(), c=PhysicalConstants()):
    """Return ``(objective, verdict, degenerate)`` for one parameter vector."""
    opts = RetrievalOptions(**{**opts.__dict__, "theta_mode": "zero_flux"})
    try:
        P = family(params, grid, c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, report = retrieve(P, V, opts, c)
    except (RetrievalError, GridError):
        return SENTINEL, "inconclusive", True
    if report.mass_coverage < MIN_MASS_COVERAGE:
        return SENTINEL, "inconclusive", True
    return float(report.hj_residual_rel), report.verdict, False


def objective(family, params, V, grid, opts=RetrievalOptions(), c=PhysicalConstants()) -> float:
    """Relative HJ residual of ``family(params)`` under ``V``; ``SENTINEL`` when degenerate."""
    bounds = family.bounds
    x = np.atleast_1d(np.asarray(params, dtype=float))
    if np.any(x < bounds[:, 0]) or np.any(x > bounds[:, 1]):
        raise ValueError(f"{family.name}: parameters {x.tolist()} outside bounds")
    return evaluate(family, x, V, grid, opts, c)[0]


def start_points(bounds: np.ndarray, n: int, seed: int = START_SEED) -> np.ndarray:
    """Scrambled Halton points scaled into the box."""
    sample = qmc.Halton(d=len(bounds), scramble=True, seed=seed).random(n)
    return qmc.scale(sample, bounds[:, 0], bounds[:, 1])


def _dedupe(optima: list[Optimum], span: np.ndarray) -> list[Optimum]:
    optima = sorted(optima, key=lambda o: (o.objective, tuple(o.params)))
    kept: list[Optimum] = []
    for o in optima:
        if all(np.max(np.abs(o.params - k.params) / span) >= DEDUP_FRACTION for k in kept):
            kept.append(o)
    return kept


def calibrate(
    family: DensityFamily,
    V: ScalarField,
    grid: SpacetimeGrid,
    opts: RetrievalOptions = RetrievalOptions(),
    c: PhysicalConstants = PhysicalConstants(),
    n_multistart: int = 8,
) -> CalibrationResult:
    """Nelder-Mead from ``n_multistart`` quasi-random starts inside the bounds.

    Local searches stop when the simplex objective spread falls below 1e-8 or
    after 500 iterations. End points closer than 1e-3 of the bound range are
    merged; starts that end on the degenerate sentinel are dropped.
    """
    if n_multistart < 1:
        raise ValueError("n_multistart must be at least 1")
    bounds = family.bounds
    span = bounds[:, 1] - bounds[:, 0]

    def f(x):
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
        return evaluate(family, x, V, grid, opts, c)[0]

    found = []
    for x0 in start_points(bounds, n_multistart):
        # xatol=inf leaves the objective spread as the only stopping test
        res = minimize(
            f,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"fatol": SIMPLEX_FTOL, "xatol": np.inf, "maxiter": MAX_ITER},
        )
        x = np.clip(np.atleast_1d(res.x), bounds[:, 0], bounds[:, 1])
        value, verdict, degenerate = evaluate(family, x, V, grid, opts, c)
        if not degenerate:
            found.append(Optimum(x, value, verdict, bool(res.success)))
    if not found:
        raise CalibrationError(f"{family.name}: family incompatible on this grid")
    return CalibrationResult(family.names, _dedupe(found, span))


def scan_residual(
    family: DensityFamily,
    V: ScalarField,
    grid: SpacetimeGrid,
    axis: str,
    values: Sequence[float],
    opts: RetrievalOptions = RetrievalOptions(),
    c: PhysicalConstants = PhysicalConstants(),
    fixed: dict | None = None,
) -> list[tuple[float, float]]:
    """Objective along one parameter with the others held at ``fixed`` (default: box centre)."""
    if axis not in family.names:
        raise ValueError(f"{family.name} has no parameter {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("scan needs at least one value")
    base = {n: 0.5 * (lo + hi) for n, lo, hi in family.params}
    for key, val in (fixed or {}).items():
        if key not in base:
            raise ValueError(f"{family.name} has no parameter {key!r}")
        base[key] = float(val)
    out = []
    for v in values:
        base[axis] = float(v)
        x = np.array([base[n] for n in family.names])
        out.append((float(v), evaluate(family, x, V, grid, opts, c)[0]))
    return out
