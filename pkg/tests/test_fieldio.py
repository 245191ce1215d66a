import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bohmphase.fieldio import (
    ConfigError,
    FieldFile,
    FieldFormatError,
    RunConfig,
    parse_config,
    read_field,
    read_report,
    write_field,
    write_report,
)
from bohmphase.grid import ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid

GRID = SpacetimeGrid(-1.5, 2.25, 9, 0.0, 0.7, 4)
finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=30, deadline=None)
@given(values=arrays(np.float64, GRID.shape, elements=finite))
def test_real_round_trip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("f") / "real.field"
    write_field(path, FieldFile(ScalarField(GRID, values), PhysicalConstants(0.5, 3.0), "rho"))
    back = read_field(path)
    assert np.array_equal(back.field.values, values)
    assert back.grid == GRID and back.name == "rho" and back.kind == "real"
    assert back.constants == PhysicalConstants(0.5, 3.0)


@settings(max_examples=30, deadline=None)
@given(re=arrays(np.float64, GRID.shape, elements=finite), im=arrays(np.float64, GRID.shape, elements=finite))
def test_complex_round_trip_is_exact(tmp_path_factory, re, im):
    path = tmp_path_factory.mktemp("f") / "psi.field"
    write_field(path, FieldFile(ComplexField(GRID, re + 1j * im)))
    back = read_field(path)
    assert back.kind == "complex"
    assert np.array_equal(back.field.values.real, re) and np.array_equal(back.field.values.imag, im)


def test_odd_grid_values_survive(tmp_path):
    g = SpacetimeGrid(-0.1, 0.3, 8, 1.0 / 3.0, 2 * np.pi, 4)
    write_field(tmp_path / "a", FieldFile(ScalarField(g, np.full(g.shape, np.pi))))
    assert read_field(tmp_path / "a").grid == g


def test_writes_are_byte_identical(tmp_path):
    f = FieldFile(ScalarField(GRID, np.arange(36.0).reshape(GRID.shape) / 7.0))
    write_field(tmp_path / "a", f)
    write_field(tmp_path / "b", f)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def _lines(tmp_path):
    write_field(tmp_path / "ok", FieldFile(ScalarField(GRID, np.zeros(GRID.shape))))
    return (tmp_path / "ok").read_text().splitlines()


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda L: [ln for ln in L if not ln.startswith("nx=")], "missing"),
        (lambda L: ["format=2"] + L[1:], "version"),
        (lambda L: L[:1] + ["kind=quaternion"] + L[2:], "kind"),
        (lambda L: L[:-1], "rows"),
        (lambda L: L[:-1] + [L[-1] + " 0"], "values"),
        (lambda L: L[:-1] + [" ".join(["x"] * 9)], "numeric"),
        (lambda L: L[:-1] + [" ".join(["nan"] * 9)], "non-finite"),
    ],
)
def test_malformed_files_rejected(tmp_path, mutate, match):
    (tmp_path / "bad").write_text("\n".join(mutate(_lines(tmp_path))) + "\n")
    with pytest.raises(FieldFormatError, match=match):
        read_field(tmp_path / "bad")


def test_config_parsing():
    cfg = parse_config("# comment\nhj_tolerance = 0.05\ntheta_mode=residual_fit\nreference_index=none\nn_multistart=3\n")
    assert cfg.hj_tolerance == 0.05 and cfg.theta_mode == "residual_fit" and cfg.n_multistart == 3
    assert cfg.reference_index is None
    assert cfg.retrieval_options().hj_tolerance == 0.05
    assert cfg.updated(hj_tolerance=None, n_multistart=5).n_multistart == 5
    assert RunConfig().propagator_config().substeps_per_output == 8


@pytest.mark.parametrize("text,match", [("bogus=1", "bogus"), ("hj_tolerance", "key=value"), ("nx_multistart=2", "nx_multistart"), ("n_multistart=two", "n_multistart")])
def test_config_errors_name_the_key(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_report_round_trip(tmp_path):
    entries = {"verdict": "compatible", "hj_residual_rel": 1 / 3, "count": 4, "t": np.linspace(0, 1, 5), "theta": [0.0]}
    write_report(tmp_path / "r", entries)
    back = read_report(tmp_path / "r")
    assert back["verdict"] == "compatible"
    assert back["hj_residual_rel"] == 1 / 3
    assert back["count"] == 4.0
    assert np.array_equal(back["t"], np.linspace(0, 1, 5))
    assert np.array_equal(back["theta"], [0.0])
