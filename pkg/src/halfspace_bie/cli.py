"""Command line interface: ``halfspace-bie <subcommand> [--config FILE] [--field value ...]``.

Configuration is an INI file whose keys are ExperimentConfig field names
(sections only group them); every field can also be overridden with a
``--field-name value`` flag.  Each run writes a manifest.json next to its
CSV output.

Exit codes: 0 success, 1 other failures (including a failed selftest),
2 configuration or branch errors, 3 quadrature or resolution failures,
4 solver failures.
"""

import argparse
import configparser
import json
import logging
import math
import os
import platform
import sys
import time
import typing
from dataclasses import fields

import numpy as np
import scipy

from . import __version__
from .contour import discretize
from .errors import (
    BranchCutError,
    ConfigError,
    HalfspaceError,
    QuadratureError,
    ResolutionError,
    SolverError,
)
from .experiments import (
    ExperimentConfig,
    build_contour,
    build_incident,
    build_spec,
    derived_parameters,
    run,
    solve_problem,
)
from .kernels import incident_eval
from .solver import condition_estimate, decay_diagnostic

log = logging.getLogger("halfspace_bie")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_QUADRATURE, EXIT_SOLVER = 0, 1, 2, 3, 4
THREADS_ENV = "HALFSPACE_BIE_THREADS"

# INI keys that differ from the config field names
ALIASES = {
    "kind": "incident",
    "name": "experiment",
    "shape": "grid_shape",
    "points": "trace_points",
    "standoff": "trace_standoff",
}
# incident sources/amplitudes come as separate real and imaginary parts
SPLIT_COMPLEX = {"source_re", "source_im", "amplitude_re", "amplitude_im"}

SUBCOMMAND_EXPERIMENT = {
    "analytic-test": "analytic_test",
    "endpoint-sweep": "endpoint_sweep",
    "convergence": "convergence",
    "scatter": "scatter",
}

# per-subcommand defaults layered under the config file
SUBCOMMAND_DEFAULTS = {
    "scatter": dict(preset="paper-7.3", source=(0.1, 10.0), segment_panels=None, max_arclength=1.2,
                    x1_range=(-22.0, 22.0), x2_range=(-4.0, 12.0), grid_shape=(89, 33)),
    "convergence": dict(incident="plane_wave_reflected"),
}


# ---------------------------------------------------------------------------
# Value parsing
# ---------------------------------------------------------------------------
def _field_types():
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in fields(ExperimentConfig)}


def _strip_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _scalar(text, tp):
    if tp is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is complex:
        return complex(text.replace(" ", "").replace("i", "j"))
    return text.strip()


def parse_value(name, text):
    """Parse a config string into the type of ExperimentConfig.<name>."""
    tp, optional = _strip_optional(_field_types()[name])
    text = text.strip()
    if optional and text.lower() in ("", "none", "null"):
        return None
    try:
        if typing.get_origin(tp) is tuple:
            args = typing.get_args(tp)
            if typing.get_origin(args[0]) is tuple:  # tuple of points "x y; x y"
                inner = typing.get_args(args[0])
                return tuple(tuple(_scalar(v, t) for v, t in zip(chunk.replace(",", " ").split(), inner))
                             for chunk in text.split(";") if chunk.strip())
            items = [v for v in text.replace(",", " ").split() if v]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(_scalar(v, args[0]) for v in items)
            if len(items) != len(args):
                raise ConfigError(f"{name} needs {len(args)} values, got {text!r}")
            return tuple(_scalar(v, t) for v, t in zip(items, args))
        return _scalar(text, tp)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} = {text!r}: {exc}") from None


def _merge_split_complex(raw):
    """Combine source_re/source_im and amplitude_re/amplitude_im into complex values."""
    out = dict(raw)
    if "source_re" in raw or "source_im" in raw:
        re = [float(v) for v in raw.pop("source_re", "0 0").replace(",", " ").split()]
        im = [float(v) for v in raw.pop("source_im", "0 0").replace(",", " ").split()]
        if len(re) != 2 or len(im) != 2:
            raise ConfigError("source_re and source_im need two values each (x1 and x2)")
        out["source"] = (complex(re[0], im[0]), complex(re[1], im[1]))
    if "amplitude_re" in raw or "amplitude_im" in raw:
        out["amplitude"] = complex(float(raw.pop("amplitude_re", 0.0)), float(raw.pop("amplitude_im", 0.0)))
    for key in SPLIT_COMPLEX:
        out.pop(key, None)
    return out


def read_config_file(path):
    """Flat {field: value} from an INI file; unknown keys are errors."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    raw = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            raw[ALIASES.get(key, key)] = value
    merged = _merge_split_complex(raw)
    known = _field_types()
    values = {}
    for key, value in merged.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        values[key] = value if not isinstance(value, str) else parse_value(key, value)
    return values


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="halfspace-bie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "solve": "solve the integral equation and write the density",
        "analytic-test": "point source below the curve, compare with the exact field",
        "endpoint-sweep": "error at the probe as the contour endpoint varies",
        "convergence": "self-convergence of the reflected plane-wave problem",
        "scatter": "incident, scattered and total fields on a grid",
        "dump-contour": "write the discretized contour nodes",
        "selftest": "special-function and quadrature self checks",
    }
    for name, text in commands.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            p.add_argument("--boundary-data", choices=("scatter", "field"), default="scatter",
                           help="scatter: f = -u_in (sound-soft scattering); field: f = u_in")
        if name == "selftest":
            continue
        for f in fields(ExperimentConfig):
            if f.name == "experiment":
                continue
            p.add_argument("--" + f.name.replace("_", "-"), dest=f"set_{f.name}", metavar="VALUE")
    return parser


def config_from_args(args):
    values = {}
    if args.command in SUBCOMMAND_EXPERIMENT:
        values["experiment"] = SUBCOMMAND_EXPERIMENT[args.command]
    values.update(SUBCOMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        values.update(read_config_file(args.config))
        if args.command in SUBCOMMAND_EXPERIMENT:
            values["experiment"] = SUBCOMMAND_EXPERIMENT[args.command]
    for f in fields(ExperimentConfig):
        text = getattr(args, f"set_{f.name}", None)
        if text is not None:
            values[f.name] = parse_value(f.name, text)
    if values.get("output_dir") is None:
        values["output_dir"] = os.path.join("halfspace-runs", args.command)
    if "experiment" not in values:
        values["experiment"] = "scatter" if values.get("incident", "point_source") != "point_source" \
            or values.get("source", (0.1, -1.0))[1].real > 0 else "analytic_test"
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------
def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_manifest(config, command, report, seconds):
    manifest = dict(
        command=command,
        config=config.to_dict(),
        derived=derived_parameters(build_spec(config)),
        versions=dict(halfspace_bie=__version__, python=platform.python_version(),
                      numpy=np.__version__, scipy=scipy.__version__),
        threads=os.environ.get(THREADS_ENV),
        wall_seconds=seconds,
        report=report,
    )
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------
def cmd_solve(config, args):
    spec = build_spec(config)
    incident = build_incident(config, spec.k)
    dc = build_contour(config, spec)
    sign = -1.0 if args.boundary_data == "scatter" else 1.0
    system, density = solve_problem(dc, lambda a, b: sign * incident_eval(incident, a, b), config.tol,
                                    config.near_factor)
    os.makedirs(config.output_dir, exist_ok=True)
    density.dump_csv(os.path.join(config.output_dir, "density.csv"))
    return dict(n_nodes=dc.n_nodes, residual=density.residual, decay=decay_diagnostic(density),
                condition=condition_estimate(system), boundary_data=args.boundary_data,
                assembly_seconds=system.assembly_seconds, correction_pairs=system.n_corrections)


def cmd_dump_contour(config, args):
    dc = build_contour(config)
    os.makedirs(config.output_dir, exist_ok=True)
    dc.dump_csv(os.path.join(config.output_dir, "contour.csv"))
    return dict(n_nodes=dc.n_nodes, n_panels=dc.n_panels, max_resolution_tail=float(np.max(dc.resolution)))


def selftest_checks():
    """(name, passed, detail) for quick internal consistency checks."""
    from .contour import preset
    from .quadrature import adaptive_integrate, gauss_legendre
    from .solver import assemble
    from .specfun import ASYMPTOTIC_RADIUS, SERIES_RADIUS, erfc, hankel1, hankel2

    checks = []
    xs = np.linspace(-5, 5, 101)
    err = max(abs(erfc(x) - math.erfc(x)) / math.erfc(x) for x in xs)
    checks.append(("erfc vs math.erfc", err <= 1e-14, err))

    r, a = np.meshgrid(np.geomspace(0.1, 50, 20), np.linspace(0, 0.5 * math.pi, 10))
    z = (r * np.exp(1j * a)).ravel()
    w = 0.5j * (hankel1(1, z) * hankel2(0, z) - hankel1(0, z) * hankel2(1, z))
    err = float(np.max(np.abs(w / (2 / (math.pi * z)) - 1)))
    checks.append(("Hankel Wronskian", err <= 1e-12, err))

    worst = 0.0
    for radius, pair in ((SERIES_RADIUS, ("series", "quadrature")), (ASYMPTOTIC_RADIUS, ("quadrature", "asymptotic"))):
        z = radius * np.exp(1j * np.linspace(0, 0.5 * math.pi, 25))
        for order in (0, 1):
            worst = max(worst, float(np.max(np.abs(hankel1(order, z, regime=pair[0]) / hankel1(order, z, regime=pair[1]) - 1))))
    checks.append(("Hankel regime handoffs", worst <= 1e-12, worst))

    x, wq = gauss_legendre(16)
    err = max(abs(np.dot(wq, x ** d) - (0.0 if d % 2 else 2.0 / (d + 1))) for d in range(32))
    checks.append(("Gauss-Legendre exactness", err <= 1e-14, err))

    val = adaptive_integrate(np.log, 0.0, 1.0, tol=1e-14, singular=0.0)
    checks.append(("adaptive log integral", abs(val + 1) <= 1e-13, abs(val + 1)))

    spec = preset("flat")
    dc = discretize(spec, 64)
    dev = float(np.max(np.abs(assemble(dc, spec.k).matrix - np.eye(dc.n_nodes))))
    checks.append(("flat contour gives A = I", dev == 0.0, dev))
    return checks


def cmd_selftest(args):
    checks = selftest_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail:.3e})")
    return all(ok for _, ok, _ in checks)


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, BranchCutError)):
        return EXIT_CONFIG
    if isinstance(exc, (QuadratureError, ResolutionError)):
        return EXIT_QUADRATURE
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    return EXIT_OTHER


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest(args) else EXIT_OTHER
        config = config_from_args(args)
        start = time.perf_counter()
        if args.command == "solve":
            report = cmd_solve(config, args)
        elif args.command == "dump-contour":
            report = cmd_dump_contour(config, args)
        else:
            report = run(config)
        path = write_manifest(config, args.command, report, time.perf_counter() - start)
        print(json.dumps(_clean(_summary(report)), sort_keys=True))
        print(f"manifest: {path}")
        return EXIT_OK
    except HalfspaceError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exit_code_for(exc)


def _summary(report):
    skip = {"records", "correction", "derived", "probe_errors"}
    return {k: v for k, v in report.items() if k not in skip}


if __name__ == "__main__":
    sys.exit(main())
