"""Plain-text field files, run configuration and key=value reports.

A field file is a block of ``key=value`` header lines followed by ``nt`` rows
of ``nx`` decimals (``2*nx`` for complex fields, real and imaginary parts
alternating). Every float is written with 17 significant digits so a
write-then-read round trip is exact.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid

FORMAT_VERSION = 1
FLOAT_FMT = "%.17g"
HEADER_KEYS = ("format", "kind", "name", "x_min", "x_max", "nx", "t_min", "t_max", "nt", "hbar", "mass")


class FieldFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


@dataclass(eq=False)
class FieldFile:
    field: ScalarField | ComplexField
    constants: PhysicalConstants = dataclasses.field(default_factory=PhysicalConstants)
    name: str = "field"

    @property
    def kind(self) -> str:
        return "complex" if isinstance(self.field, ComplexField) else "real"

    @property
    def grid(self) -> SpacetimeGrid:
        return self.field.grid


def write_field(path, ff: FieldFile) -> None:
    g = ff.grid
    header = {
        "format": FORMAT_VERSION,
        "kind": ff.kind,
        "name": ff.name,
        "x_min": _fmt(g.x_min),
        "x_max": _fmt(g.x_max),
        "nx": g.nx,
        "t_min": _fmt(g.t_min),
        "t_max": _fmt(g.t_max),
        "nt": g.nt,
        "hbar": _fmt(ff.constants.hbar),
        "mass": _fmt(ff.constants.mass),
    }
    if ff.kind == "complex":
        v = ff.field.values
        rows = np.empty((g.nt, 2 * g.nx))
        rows[:, 0::2] = v.real
        rows[:, 1::2] = v.imag
    else:
        rows = ff.field.values
    with open(path, "w") as fh:
        for key in HEADER_KEYS:
            fh.write(f"{key}={header[key]}\n")
        for row in rows:
            fh.write(" ".join(_fmt(x) for x in row))
            fh.write("\n")


def read_field(path) -> FieldFile:
    lines = Path(path).read_text().splitlines()
    header = {}
    i = 0
    while i < len(lines) and "=" in lines[i]:
        key, _, value = lines[i].partition("=")
        header[key.strip()] = value.strip()
        i += 1
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise FieldFormatError(f"{path}: header is missing {', '.join(missing)}")
    if header["format"] != str(FORMAT_VERSION):
        raise FieldFormatError(f"{path}: unsupported format version {header['format']}")
    kind = header["kind"]
    if kind not in ("real", "complex"):
        raise FieldFormatError(f"{path}: kind must be real or complex, got {kind!r}")
    try:
        grid = SpacetimeGrid(
            float(header["x_min"]), float(header["x_max"]), int(header["nx"]),
            float(header["t_min"]), float(header["t_max"]), int(header["nt"]),
        )
        constants = PhysicalConstants(float(header["hbar"]), float(header["mass"]))
    except ValueError as exc:
        raise FieldFormatError(f"{path}: bad header: {exc}") from exc

    rows = [ln for ln in lines[i:] if ln.strip()]
    width = grid.nx * (2 if kind == "complex" else 1)
    if len(rows) != grid.nt:
        raise FieldFormatError(f"{path}: header says nt={grid.nt} but found {len(rows)} rows")
    cells = [row.split() for row in rows]
    if any(len(r) != width for r in cells):
        raise FieldFormatError(f"{path}: every row must hold {width} values")
    try:
        data = np.array(cells, dtype=float)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: payload is not numeric: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise FieldFormatError(f"{path}: payload contains non-finite values")
    if kind == "complex":
        fld = ComplexField(grid, data[:, 0::2] + 1j * data[:, 1::2])
    else:
        fld = ScalarField(grid, data)
    return FieldFile(fld, constants, header["name"])


# -- run configuration --------------------------------------------------------

@dataclass
class RunConfig:
    """Every tunable of a run. Values not set keep these defaults."""

    density_floor: float = 1e-10
    theta_mode: str = "zero_flux"
    reference_index: int | None = None
    hj_tolerance: float = 1e-2
    edge_guard: float = 1e4
    substeps_per_output: int = 8
    boundary: str = "periodic"
    absorber_width: float = 0.0
    n_multistart: int = 8
    phase_tolerance: float = 1e-2
    schrodinger_tolerance: float = 1e-2
    hbar: float = 1.0
    mass: float = 1.0

    def retrieval_options(self):
        from .retrieval import RetrievalOptions

        return RetrievalOptions(
            density_floor=self.density_floor,
            theta_mode=self.theta_mode,
            reference_index=self.reference_index,
            hj_tolerance=self.hj_tolerance,
            edge_guard=self.edge_guard,
        )

    def propagator_config(self):
        from .schrodinger import PropagatorConfig

        return PropagatorConfig(self.substeps_per_output, self.boundary, self.absorber_width)

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(self.hbar, self.mass)

    def updated(self, **overrides) -> "RunConfig":
        """Copy with the non-None ``overrides`` applied."""
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _convert(name: str, raw: str, default):
    if name == "reference_index":
        return None if raw.lower() in ("", "none") else int(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    defaults = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, _, raw = (s.strip() for s in line.partition("="))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _convert(key, raw, getattr(defaults, key))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {raw!r}") from exc
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(), str(path))


# -- reports ------------------------------------------------------------------

def _render(value) -> str:
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_fmt(float(x)) for x in np.ravel(value))
    if isinstance(value, (float, np.floating)):
        return _fmt(float(value))
    return str(value)


def write_report(path, entries: dict) -> None:
    """Write ``key=value`` lines in insertion order; arrays become space-separated decimals."""
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={_render(value)}\n")


def read_report(path) -> dict:
    """Parse a report; numeric values come back as floats or float arrays."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" not in line:
            continue
        key, _, raw = line.partition("=")
        parts = raw.split()
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            out[key] = raw
            continue
        if len(nums) == 1 and key not in ARRAY_KEYS:
            out[key] = nums[0]
        else:
            out[key] = np.array(nums)
    return out


ARRAY_KEYS = {"t", "theta", "gauge_f", "gauge_spread", "best", "values", "objectives"}
