"""Batch command line: generate, retrieve, verify, calibrate, scan, plotdata.

Data goes to files (or stdout for tables); diagnostics go to stderr.
Exit codes: 0 success / compatible, 1 a requested check failed,
2 usage or input error, 3 incompatible, 4 inconclusive.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import calibration as cal
from .fieldio import (
    FieldFile,
    RunConfig,
    load_config,
    read_field,
    read_report,
    write_field,
    write_report,
)
from .grid import ScalarField, SpacetimeGrid
from .oracles import (
    BreathingGaussianSpec,
    CoherentStateSpec,
    FreeGaussianSpec,
    breathing_density,
    coherent_density,
    coherent_phase,
    coherent_wavefunction,
    free_density,
    free_phase,
    free_wavefunction,
    harmonic_potential,
    zero_potential,
)
from .retrieval import COMPATIBLE, INCOMPATIBLE, retrieve, working_mask
from .schrodinger import PropagationError, aligned_phase_error, density_of, propagate, schrodinger_residual

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INCOMPATIBLE = 3
EXIT_INCONCLUSIVE = 4

VERDICT_EXIT = {COMPATIBLE: EXIT_OK, INCOMPATIBLE: EXIT_INCOMPATIBLE}


class UsageError(Exception):
    pass


def _axis_spec(text: str) -> tuple[float, float, int]:
    """Parse ``min:max:count``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected min:max:count, got {text!r}")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected min:max:count, got {text!r}") from None


def _assignment(text: str) -> tuple[str, str]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name, value


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run configuration; flags override it")

    spacetime = argparse.ArgumentParser(add_help=False)
    spacetime.add_argument("--grid", type=_axis_spec, required=True, metavar="XMIN:XMAX:NX")
    spacetime.add_argument("--time", type=_axis_spec, required=True, metavar="TMIN:TMAX:NT")

    potential = argparse.ArgumentParser(add_help=False)
    potential.add_argument("--potential", metavar="harmonic|free|FILE")
    potential.add_argument("--omega", type=float, default=1.0)

    parser = argparse.ArgumentParser(prog="bohmphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write oracle or propagated densities")
    gsub = gen.add_subparsers(dest="source", required=True)
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", required=True, help="output prefix")

    p = gsub.add_parser("coherent", parents=[common, spacetime, out])
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--sign", type=int, choices=(1, -1), default=1)

    p = gsub.add_parser("free", parents=[common, spacetime, out])
    p.add_argument("--mean-p", type=float, default=0.0)
    p.add_argument("--sigma-p", type=float, default=1.0 / np.sqrt(2.0))

    p = gsub.add_parser("breathing", parents=[common, spacetime, out])
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--center", type=float, default=0.0)

    p = gsub.add_parser("propagate", parents=[common, potential, out])
    p.add_argument("--initial", required=True, help="complex field file; its first slice is the initial state")
    p.add_argument("--time", type=_axis_spec, required=True, metavar="TMIN:TMAX:NT")
    p.add_argument("--substeps", type=int, help="split-step substeps per stored slice")

    p = sub.add_parser("retrieve", parents=[common, potential], help="recover phase and wavefunction")
    p.add_argument("--density", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--theta-mode", choices=("zero_flux", "residual_fit"))
    p.add_argument("--density-floor", type=float)
    p.add_argument("--hj-tolerance", type=float)
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the outputs")

    p = sub.add_parser("verify", parents=[common, potential], help="check a wavefunction file")
    p.add_argument("--psi", required=True)
    p.add_argument("--reference-phase", help="real phase file or complex wavefunction file")
    p.add_argument("--schrodinger", action="store_true", help="check the Schrodinger residual")
    p.add_argument("--phase-tolerance", type=float)
    p.add_argument("--schrodinger-tolerance", type=float)

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--family", required=True, choices=sorted(cal.FAMILIES))
    family.add_argument("--b", type=float, default=1.0, help="coherent-width amplitude")
    family.add_argument("--width", type=float, default=1.0, help="breathing width")
    family.add_argument("--center", type=float, default=0.0, help="breathing center")
    family.add_argument("--mean-p", type=float, default=0.0, help="free-family drift momentum")
    family.add_argument("--bounds", type=_assignment, action="append", default=[], metavar="NAME=LO:HI")

    p = sub.add_parser("calibrate", parents=[common, spacetime, potential, family], help="fit family parameters")
    p.add_argument("--n-multistart", type=int)
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("scan", parents=[common, spacetime, potential, family], help="objective along one parameter")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", type=_float_list, required=True, help="comma-separated parameter values")
    p.add_argument("--fixed", type=_assignment, action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--out", help="table path (default: stdout)")
    p.add_argument("--figure", help="PNG path for the scan plot")

    p = sub.add_parser("plotdata", help="gnuplot blocks (and figures) from field files or reports")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--figure-dir", help="directory for one PNG per input")
    return parser


# -- helpers ------------------------------------------------------------------

def _config(args) -> RunConfig:
    path = getattr(args, "config", None)
    return load_config(path) if path else RunConfig()


def _grid(args) -> SpacetimeGrid:
    (x0, x1, nx), (t0, t1, nt) = args.grid, args.time
    return SpacetimeGrid(x0, x1, nx, t0, t1, nt)


def _potential(spec, omega, grid, c) -> ScalarField:
    if spec is None:
        raise UsageError("a potential is required (--potential harmonic|free|FILE)")
    if spec == "harmonic":
        if not omega > 0:
            raise UsageError("--omega must be positive")
        return harmonic_potential(grid, omega, c)
    if spec == "free":
        return zero_potential(grid)
    ff = read_field(spec)
    if ff.kind != "real":
        raise UsageError(f"{spec}: potential file must be real")
    if ff.grid != grid:
        raise UsageError(f"{spec}: potential grid does not match the data grid")
    return ff.field


def _write_triplet(prefix, density, phase, psi, c, name) -> list[str]:
    written = []
    for suffix, fld in (("density", density), ("phase", phase), ("psi", psi)):
        if fld is None:
            continue
        path = f"{prefix}.{suffix}.field"
        write_field(path, FieldFile(fld, c, f"{name}-{suffix}"))
        written.append(path)
    return written


def _bounds_override(fam: cal.DensityFamily, items) -> cal.DensityFamily:
    if not items:
        return fam
    params = {n: (lo, hi) for n, lo, hi in fam.params}
    for name, text in items:
        if name not in params:
            raise UsageError(f"family {fam.name} has no parameter {name!r}")
        lo, sep, hi = text.partition(":")
        try:
            params[name] = (float(lo), float(hi))
        except ValueError:
            raise UsageError(f"bad bounds for {name}: {text!r}") from None
        if not sep:
            raise UsageError(f"bad bounds for {name}: {text!r}")
    return cal.DensityFamily(fam.name, tuple((n, *params[n]) for n in fam.names), fam.generator)


def _family(args, c) -> cal.DensityFamily:
    if args.family == "coherent-width":
        fam = cal.coherent_width_family(args.omega, b=args.b, c=c)
    elif args.family == "breathing":
        fam = cal.breathing_family(args.omega, width=args.width, center=args.center)
    else:
        fam = cal.free_family(mean_p=args.mean_p)
    return _bounds_override(fam, args.bounds)


# -- commands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _config(args)
    c = cfg.constants()
    if args.source == "propagate":
        init = read_field(args.initial)
        if init.kind != "complex":
            raise UsageError(f"{args.initial}: initial state must be a complex field")
        t0, t1, nt = args.time
        g0 = init.grid
        grid = SpacetimeGrid(g0.x_min, g0.x_max, g0.nx, t0, t1, nt)
        c = init.constants
        V = _potential(args.potential, args.omega, grid, c)
        pcfg = cfg.updated(substeps_per_output=args.substeps).propagator_config()
        psi = propagate(init.field.values[0], V, grid, pcfg, c)
        written = _write_triplet(args.out, density_of(psi), None, psi, c, "propagated")
    else:
        grid = _grid(args)
        if args.source == "coherent":
            spec = CoherentStateSpec(c, omega=args.omega, b=args.b, sign=args.sign)
            P, S, psi = coherent_density(spec, grid), coherent_phase(spec, grid), coherent_wavefunction(spec, grid)
        elif args.source == "free":
            spec = FreeGaussianSpec(c, mean_p=args.mean_p, sigma_p=args.sigma_p)
            P, S, psi = free_density(spec, grid), free_phase(spec, grid), free_wavefunction(spec, grid)
        else:
            spec = BreathingGaussianSpec(c, omega=args.omega, center=args.center, width=args.width, eps=args.eps)
            # no consistent phase exists, so only the density is written
            P, S, psi = breathing_density(spec, grid), None, None
        written = _write_triplet(args.out, P, S, psi, c, args.source)
    for path in written:
        print(path)
    return EXIT_OK


def _report_entries(report, psi_rel, cfg) -> dict:
    g = report.gauge
    return {
        "verdict": report.verdict,
        "hj_residual_rel": report.hj_residual_rel,
        "hjdiff_residual_rel": report.hjdiff_residual_rel,
        "schrodinger_residual_rel": psi_rel,
        "mass_coverage": report.mass_coverage,
        "hj_tolerance": cfg.hj_tolerance,
        "theta_mode": cfg.theta_mode,
        "theta_fallback": int(report.theta.fallback),
        "theta_max": float(np.max(np.abs(report.theta.values))),
        "gauge_spread_max": float(np.max(g.spread)),
        "gauge_spread_rel": report.gauge_spread_rel,
        "gauge_anchor_index": g.anchor_index,
        "t": g.t,
        "theta": report.theta.values,
        "gauge_f": g.values,
        "gauge_spread": g.spread,
    }


def cmd_retrieve(args) -> int:
    cfg = _config(args).updated(
        theta_mode=args.theta_mode, density_floor=args.density_floor, hj_tolerance=args.hj_tolerance
    )
    dens = read_field(args.density)
    if dens.kind != "real":
        raise UsageError(f"{args.density}: density file must be real")
    if dens.grid.nt < 3:
        raise UsageError(f"{args.density}: insufficient time resolution (nt={dens.grid.nt}, need at least 3)")
    c = dens.constants
    V = _potential(args.potential, args.omega, dens.grid, c)
    psi, report = retrieve(dens.field, V, cfg.retrieval_options(), c)
    _, psi_rel = schrodinger_residual(psi, V, c, cfg.density_floor)
    report.schrodinger_residual_rel = psi_rel

    written = _write_triplet(args.out, None, report.phase, psi, c, "retrieved")
    report_path = f"{args.out}.report"
    write_report(report_path, _report_entries(report, psi_rel, cfg))
    written.append(report_path)
    if args.figures:
        from .plotting import field_figure, report_figure

        field_figure(dens.grid, report.phase.values, f"{args.out}.phase.png", label="S", title="retrieved phase")
        g = report.gauge
        report_figure(g.t, report.theta.values, g.values, f"{args.out}.report.png", spread=g.spread)
        written += [f"{args.out}.phase.png", f"{args.out}.report.png"]
    for path in written:
        print(path)
    print(f"verdict={report.verdict} hj_residual_rel={report.hj_residual_rel:.3e}", file=sys.stderr)
    return VERDICT_EXIT.get(report.verdict, EXIT_INCONCLUSIVE)


def cmd_verify(args) -> int:
    cfg = _config(args).updated(
        phase_tolerance=args.phase_tolerance, schrodinger_tolerance=args.schrodinger_tolerance
    )
    if args.schrodinger and args.potential is None:
        raise UsageError("--schrodinger needs --potential")
    if not args.schrodinger and args.reference_phase is None:
        raise UsageError("nothing to verify: give --reference-phase and/or --schrodinger")
    ff = read_field(args.psi)
    if ff.kind != "complex":
        raise UsageError(f"{args.psi}: wavefunction file must be complex")
    psi, c = ff.field, ff.constants
    ok = True
    if args.reference_phase:
        ref = read_field(args.reference_phase)
        if ref.grid != psi.grid:
            raise UsageError("reference grid does not match the wavefunction grid")
        mask = working_mask(density_of(psi), cfg.retrieval_options())
        err = aligned_phase_error(psi, ref.field, c.hbar, mask)
        passed = err / c.hbar <= cfg.phase_tolerance
        ok &= passed
        print(f"aligned_phase_error={err:.17g}")
        print(f"phase_check={'pass' if passed else 'fail'}")
    if args.schrodinger:
        V = _potential(args.potential, args.omega, psi.grid, c)
        _, rel = schrodinger_residual(psi, V, c, cfg.density_floor)
        passed = rel <= cfg.schrodinger_tolerance
        ok &= passed
        print(f"schrodinger_residual_rel={rel:.17g}")
        print(f"schrodinger_check={'pass' if passed else 'fail'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_calibrate(args) -> int:
    cfg = _config(args).updated(n_multistart=args.n_multistart)
    c = cfg.constants()
    grid = _grid(args)
    V = _potential(args.potential, args.omega, grid, c)
    fam = _family(args, c)
    res = cal.calibrate(fam, V, grid, cfg.retrieval_options(), c, cfg.n_multistart)
    entries = {
        "family": fam.name,
        "parameters": " ".join(fam.names),
        "best": res.best,
        "objective": res.objective,
        "verdict": res.optima[0].verdict,
        "n_optima": len(res.optima),
    }
    for k, o in enumerate(res.optima):
        entries[f"optimum_{k}"] = o.params
        entries[f"objective_{k}"] = o.objective
        entries[f"verdict_{k}"] = o.verdict
    if args.out:
        write_report(args.out, entries)
    else:
        for key, value in entries.items():
            print(f"{key}={_fmt_value(value)}")
    return VERDICT_EXIT.get(res.optima[0].verdict, EXIT_INCONCLUSIVE)


def _fmt_value(value) -> str:
    if isinstance(value, np.ndarray):
        return " ".join("%.17g" % v for v in value)
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def cmd_scan(args) -> int:
    if not args.values:
        raise UsageError("--values is empty")
    cfg = _config(args)
    c = cfg.constants()
    grid = _grid(args)
    V = _potential(args.potential, args.omega, grid, c)
    fam = _family(args, c)
    if args.axis not in fam.names:
        raise UsageError(f"family {fam.name} has no parameter {args.axis!r}")
    try:
        fixed = {k: float(v) for k, v in args.fixed}
    except ValueError:
        raise UsageError("--fixed values must be numbers") from None
    rows = cal.scan_residual(fam, V, grid, args.axis, args.values, cfg.retrieval_options(), c, fixed)
    lines = [f"# {args.axis} objective"] + ["%.17g %.17g" % r for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figure:
        from .plotting import scan_figure

        v, obj = zip(*rows)
        scan_figure(v, obj, args.figure, axis=args.axis, tolerance=cfg.hj_tolerance)
    return EXIT_OK


def _blocks(label: str, x: np.ndarray, t: np.ndarray, values: np.ndarray) -> list[str]:
    out = []
    for k in range(len(t)):
        out.append(f"# {label} t={t[k]:.17g}")
        out += ["%.17g %.17g" % (xi, vi) for xi, vi in zip(x, values[k])]
        out += ["", ""]
    return out


def _table(label: str, t, values) -> list[str]:
    return [f"# t {label}"] + ["%.17g %.17g" % (ti, vi) for ti, vi in zip(t, values)] + ["", ""]


def cmd_plotdata(args) -> int:
    lines: list[str] = []
    if args.figure_dir:
        Path(args.figure_dir).mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        stem = Path(path).name
        if Path(path).read_text().startswith("format="):
            ff = read_field(path)
            g = ff.grid
            if ff.kind == "complex":
                v = ff.field.values
                lines += _blocks(f"{ff.name} modulus", g.x, g.t, np.abs(v))
                lines += _blocks(f"{ff.name} phase", g.x, g.t, np.angle(v))
                shown, label = np.abs(v) ** 2, "|psi|^2"
            else:
                lines += _blocks(ff.name, g.x, g.t, ff.field.values)
                shown, label = ff.field.values, ff.name
            if args.figure_dir:
                from .plotting import field_figure

                field_figure(g, shown, Path(args.figure_dir) / f"{stem}.png", label=label, title=ff.name)
        else:
            rep = read_report(path)
            if "t" not in rep or "gauge_f" not in rep:
                raise UsageError(f"{path}: neither a field file nor a retrieval report")
            t = np.atleast_1d(rep["t"])
            theta = np.atleast_1d(rep.get("theta", np.zeros_like(t)))
            lines += _table("theta", t, theta)
            lines += _table("f", t, np.atleast_1d(rep["gauge_f"]))
            if args.figure_dir:
                from .plotting import report_figure

                spread = rep.get("gauge_spread")
                report_figure(t, theta, np.atleast_1d(rep["gauge_f"]), Path(args.figure_dir) / f"{stem}.png",
                              spread=None if spread is None else np.atleast_1d(spread))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "retrieve": cmd_retrieve,
    "verify": cmd_verify,
    "calibrate": cmd_calibrate,
    "scan": cmd_scan,
    "plotdata": cmd_plotdata,
}


VALUE_FLAGS = ("--grid", "--time", "--values", "--bounds", "--fixed")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--grid -8:8:401`` into ``--grid=-8:8:401``; argparse would read
    the value as an option otherwise."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and len(argv[i + 1]) > 1:
            nxt = argv[i + 1]
            if nxt[1].isdigit() or nxt[1] == ".":
                out.append(f"{tok}={nxt}")
                i += 2
                continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = COMMANDS[args.command](args)
        except cal.CalibrationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_INCOMPATIBLE
        except PropagationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_CHECK_FAILED
        except (UsageError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_USAGE
    for msg in dict.fromkeys(str(w.message) for w in caught):
        print(f"warning: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
