import numpy as np
import pytest

from bohmphase.calibration import (
    SENTINEL,
    CalibrationError,
    DensityFamily,
    Optimum,
    _dedupe,
    breathing_family,
    calibrate,
    coherent_width_family,
    evaluate,
    objective,
    scan_residual,
    start_points,
)
from bohmphase.grid import PhysicalConstants, SpacetimeGrid, integrate_x
from bohmphase.oracles import harmonic_potential
from bohmphase.retrieval import COMPATIBLE, INCOMPATIBLE

C = PhysicalConstants()


@pytest.fixture(scope="module")
def trap(coarse_grid):
    return coarse_grid, harmonic_potential(coarse_grid, 1.0, C)


def test_family_validation():
    gen = lambda p, g, c: np.ones(g.shape)  # noqa: E731
    with pytest.raises(ValueError):
        DensityFamily("bad", (("a", 1.0, 1.0),), gen)
    with pytest.raises(ValueError):
        DensityFamily("bad", (("a", 0.0, np.inf),), gen)
    with pytest.raises(ValueError):
        DensityFamily("bad", (("a", 0.0, 1.0), ("a", 0.0, 1.0)), gen)
    with pytest.raises(ValueError):
        DensityFamily("bad", (), gen)


def test_family_output_is_normalised(coarse_grid):
    P = coherent_width_family()([0.3], coarse_grid, C)
    assert np.allclose(integrate_x(P), 1.0, atol=1e-12)


def test_objective_separates_right_and_wrong_width(trap):
    grid, V = trap
    fam = coherent_width_family()
    assert objective(fam, [1.0], V, grid) < 1e-2
    assert objective(fam, [2.0], V, grid) > 0.1
    with pytest.raises(ValueError):
        objective(fam, [6.0], V, grid)


def test_breathing_objective_large(trap):
    grid, V = trap
    fam = breathing_family()
    for eps in (0.2, 0.5):
        assert objective(fam, [eps], V, grid) > 0.1


def test_degenerate_density_hits_sentinel(trap):
    grid, V = trap
    value, verdict, degenerate = evaluate(coherent_width_family(), [0.2], V, grid)
    assert degenerate and value == SENTINEL


def test_objective_independent_of_parameter_labels(trap):
    grid, V = trap

    def gen(p, g, c):
        X, T = g.mesh()
        return np.exp(-(p["alpha"] ** 2) * (X + p["b"] * np.cos(T)) ** 2)

    ab = DensityFamily("ab", (("alpha", 0.5, 2.0), ("b", -2.0, 2.0)), gen)
    ba = DensityFamily("ba", (("b", -2.0, 2.0), ("alpha", 0.5, 2.0)), gen)
    assert objective(ab, [1.3, 0.5], V, grid) == objective(ba, [0.5, 1.3], V, grid)


def test_start_points_deterministic_and_inside():
    b = np.array([[0.2, 5.0], [-2.0, 2.0]])
    s1, s2 = start_points(b, 8), start_points(b, 8)
    assert np.array_equal(s1, s2)
    assert np.all((s1 >= b[:, 0]) & (s1 <= b[:, 1]))
    assert len(np.unique(s1[:, 0])) == 8


def test_dedupe_merges_close_points_and_sorts():
    span = np.array([4.8])
    raw = [
        Optimum(np.array([3.0]), 1.1, INCOMPATIBLE, True),
        Optimum(np.array([1.0]), 1e-4, COMPATIBLE, True),
        Optimum(np.array([1.001]), 2e-4, COMPATIBLE, True),
        Optimum(np.array([1.01]), 3e-4, COMPATIBLE, True),
    ]
    kept = _dedupe(raw, span)
    assert [o.params[0] for o in kept] == [1.0, 1.01, 3.0]


def test_calibrate_finds_unit_width(trap):
    grid, V = trap
    res = calibrate(coherent_width_family(), V, grid, n_multistart=3)
    assert res.best[0] == pytest.approx(1.0, rel=2e-2)
    assert res.verdicts[0] == COMPATIBLE
    assert [o.objective for o in res.optima] == sorted(o.objective for o in res.optima)


def test_calibrate_breathing_has_no_compatible_optimum(trap):
    grid, V = trap
    res = calibrate(breathing_family(), V, grid, n_multistart=2)
    assert res.objective > 1e-2
    assert all(v == INCOMPATIBLE for v in res.verdicts)


def test_calibrate_all_degenerate_raises(trap):
    grid, V = trap
    fam = coherent_width_family(alpha_bounds=(0.1, 0.3))
    with pytest.raises(CalibrationError, match="incompatible on this grid"):
        calibrate(fam, V, grid, n_multistart=2)
    with pytest.raises(ValueError):
        calibrate(fam, V, grid, n_multistart=0)


def test_scan_keeps_order_and_brackets_minimum(trap):
    grid, V = trap
    values = [1.2, 0.9, 1.0, 1.1]
    rows = scan_residual(coherent_width_family(), V, grid, "alpha", values)
    assert [v for v, _ in rows] == values
    objs = dict(rows)
    assert objs[1.0] < min(objs[0.9], objs[1.1])


def test_scan_of_inert_parameter_is_constant(trap):
    grid, V = trap

    def gen(p, g, c):
        X, T = g.mesh()
        return np.exp(-((X + np.cos(T)) ** 2))

    fam = DensityFamily("inert", (("k", 0.0, 1.0),), gen)
    objs = [o for _, o in scan_residual(fam, V, grid, "k", [0.0, 0.5, 1.0])]
    assert objs[0] == objs[1] == objs[2]


def test_breathing_eps_scan_monotone(trap):
    grid, V = trap
    rows = scan_residual(breathing_family(eps_bounds=(0.0, 0.8)), V, grid, "eps", [0.0, 0.1, 0.3])
    objs = [o for _, o in rows]
    assert objs[0] < 1e-6 < objs[1] < objs[2]


def test_scan_input_errors(trap):
    grid, V = trap
    fam = coherent_width_family()
    with pytest.raises(ValueError):
        scan_residual(fam, V, grid, "alpha", [])
    with pytest.raises(ValueError):
        scan_residual(fam, V, grid, "beta", [1.0])
    with pytest.raises(ValueError):
        scan_residual(fam, V, grid, "alpha", [1.0], fixed={"beta": 1.0})


def test_custom_constants_rescale_width():
    c = PhysicalConstants(hbar=1.0, mass=4.0)
    fam = coherent_width_family(omega=1.0, c=c)
    # bounds are in units of sqrt(m omega / hbar) = 2
    assert fam.bounds[0].tolist() == [0.4, 10.0]
    grid = SpacetimeGrid(-6.0, 6.0, 241, 0.0, 2 * np.pi, 241)
    V = harmonic_potential(grid, 1.0, c)
    assert objective(fam, [2.0], V, grid, c=c) < 1e-2
