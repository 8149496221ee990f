"""Experiment drivers: analytic test, endpoint sweep, self-convergence, scattering.

Each ``run_*`` function takes an ExperimentConfig, does the computation,
optionally writes CSV files into ``config.output_dir`` and returns a plain
report dict (JSON-serializable) that the CLI stores in the run manifest.
"""

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

import numpy as np

from .contour import (
    discretize,
    discretize_adaptive,
    gamma_eval,
    phi_i_alpha,
    preset,
    speed_and_normal,
)
from .errors import ConfigError
from .fieldeval import CONE, STRIP, eval_dlp, grid_points, incident_grid, scattered_field, total_field
from .kernels import IncidentField, incident_eval
from .solver import DEFAULT_TOL, NEAR_FACTOR, assemble, boundary_rhs, condition_estimate, decay_diagnostic, solve

log = logging.getLogger(__name__)

EXPERIMENTS = ("analytic_test", "endpoint_sweep", "convergence", "scatter")
PROBE = (-1.0, 2.0)
CONVERGENCE_FLOOR = 1e-12


@dataclass
class ExperimentConfig:
    """Everything a run needs; unset geometry fields fall back to the preset."""

    experiment: str = "analytic_test"
    preset: str = "paper-7.2"
    # geometry overrides
    k: Optional[float] = None
    L: Optional[float] = None
    delta: Optional[float] = None
    epsilon: Optional[float] = None
    alpha: Optional[float] = None
    L_trunc: Optional[float] = None
    # incident field; the analytic test always uses a point source
    incident: str = "point_source"
    source: Tuple[complex, complex] = (0.1, -1.0)
    angle_deg: float = -45.0
    amplitude: complex = 1.0
    # discretization: segment_panels, n_panels, or max_arclength (adaptive);
    # max_bend caps arc length times curvature on adaptive middle panels
    n_panels: Optional[int] = None
    segment_panels: Optional[Tuple[int, int, int]] = (10, 44, 10)
    max_arclength: Optional[float] = None
    max_bend: Optional[float] = 20.0
    max_tail: Optional[float] = 1e-8
    # sweeps
    n_sweep: Tuple[int, ...] = (576, 720, 864, 1008, 1152, 1296, 1440, 1584, 1728, 1872)
    n_reference: int = 2016
    eta_r: Tuple[float, ...] = (15.0, 17.5, 20.0)
    eta_i: Tuple[float, ...] = (0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8)
    tail_panel_length: float = 0.7
    # field grid
    x1_range: Tuple[float, float] = (-12.0, 12.0)
    x2_range: Tuple[float, float] = (-1.5, 8.0)
    grid_shape: Tuple[int, int] = (121, 96)
    mask: str = STRIP
    probes: Tuple[Tuple[float, float], ...] = (PROBE,)
    # accuracy
    tol: float = DEFAULT_TOL
    near_factor: float = NEAR_FACTOR
    # boundary-trace check (scatter)
    trace_points: int = 20
    trace_standoff: float = 1e-3
    output_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for name in ("k", "L", "delta", "L_trunc"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError(f"alpha must be positive (complexification slope), got {self.alpha}")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.experiment == "convergence":
            if len(self.n_sweep) == 0:
                raise ConfigError("n_sweep is empty")
            if any(n % 16 or n <= 0 for n in self.n_sweep + (self.n_reference,)):
                raise ConfigError("node counts must be positive multiples of 16")
            if self.n_reference <= max(self.n_sweep):
                raise ConfigError("n_reference must exceed every entry of n_sweep")
        if self.experiment == "endpoint_sweep":
            if len(self.eta_r) == 0 or len(self.eta_i) == 0:
                raise ConfigError("eta_r and eta_i sweeps must be nonempty")
            if any(v < 0 for v in self.eta_i):
                raise ConfigError("eta_i values must be nonnegative")
        if self.mask not in (STRIP, CONE):
            raise ConfigError(f"mask must be 'strip' or 'cone', got {self.mask!r}")
        if min(self.grid_shape) < 1:
            raise ConfigError("grid_shape entries must be positive")
        # the geometry itself is validated by ContourSpec
        build_spec(self)

    def to_dict(self):
        out = {}
        for f in fields(self):
            out[f.name] = _jsonable(getattr(self, f.name))
        return out

    def replace(self, **changes):
        return replace(self, **changes)


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------
def build_spec(config):
    overrides = {}
    for name in ("k", "L", "delta", "epsilon", "alpha"):
        value = getattr(config, name)
        if value is not None:
            overrides[name] = value
    if config.L_trunc is not None:
        overrides["L_trunc_override"] = config.L_trunc
    return preset(config.preset, **overrides)


def build_contour(config, spec=None):
    spec = spec or build_spec(config)
    if config.max_arclength is not None:
        return discretize_adaptive(spec, config.max_arclength, max_bend=config.max_bend, max_tail=config.max_tail)
    if config.n_panels is not None:
        return discretize(spec, config.n_panels, max_tail=config.max_tail)
    return discretize(spec, None, segment_panels=config.segment_panels, max_tail=config.max_tail)


def build_incident(config, k):
    if config.incident == "point_source":
        return IncidentField.point_source(k, config.source, config.amplitude)
    if config.incident == "plane_wave_reflected":
        return IncidentField.plane_wave_reflected(k, math.radians(config.angle_deg), config.amplitude)
    if config.incident == "gaussian_beam":
        return IncidentField.gaussian_beam(k)
    raise ConfigError(f"unknown incident kind {config.incident!r}")


def derived_parameters(spec):
    return dict(t0=spec.t0, L_trunc=spec.L_trunc, k=spec.k, L=spec.L, delta=spec.delta,
                epsilon=spec.epsilon, alpha=spec.alpha, profile=spec.profile.name)


def solve_problem(dc, data, tol=DEFAULT_TOL, near_factor=NEAR_FACTOR):
    """Assemble, factor and solve for boundary values data(x1, x2) = f."""
    system = assemble(dc, dc.spec.k, tol=tol, near_factor=near_factor)
    density = solve(system, boundary_rhs(dc, data))
    return system, density


def _output_path(config, name):
    if config.output_dir is None:
        return None
    os.makedirs(config.output_dir, exist_ok=True)
    return os.path.join(config.output_dir, name)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return f"{float(v):.17g}"


def _grid(config):
    n1, n2 = config.grid_shape
    return grid_points(config.x1_range, config.x2_range, n1, n2)


def fit_slope(x, y):
    """Least-squares slope of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# Analytic point-source test
# ---------------------------------------------------------------------------
def run_analytic_test(config):
    """Solve with data H0(k r(x, x0)) for a source below the curve and compare on a grid."""
    start = time.perf_counter()
    spec = build_spec(config)
    source = IncidentField.point_source(spec.k, config.source)
    if not source.source[1].imag == 0 or not source.source[1].real < np.min(gamma_eval(
            np.linspace(-spec.L, spec.L, 2001), spec).x2.real):
        raise ConfigError("the analytic test needs a real source strictly below the interface")
    dc = build_contour(config, spec)
    system, density = solve_problem(dc, lambda a, b: incident_eval(source, a, b), config.tol,
                                    config.near_factor)
    condition = condition_estimate(system)
    del system  # the matrix and its LU factors are not needed for the field
    solved = time.perf_counter()

    x1, x2, shape = _grid(config)
    grid = scattered_field(dc, density, x1, x2, config.mask, config.tol, shape)
    exact = np.full(len(x1), np.nan + 0j)
    exact[grid.mask] = incident_eval(source, x1[grid.mask], x2[grid.mask])
    rel = np.full(len(x1), np.nan)
    rel[grid.mask] = np.abs(grid.values[grid.mask] - exact[grid.mask]) / np.abs(exact[grid.mask])
    scored = grid.mask & ~grid.near_tail
    probes = _probe_errors(dc, density, source, config)
    done = time.perf_counter()

    path = _output_path(config, "analytic_field.csv")
    if path:
        rows = []
        for i in range(len(x1)):
            m = bool(grid.mask[i])
            u = grid.values[i]
            log_err = math.log10(max(rel[i], 1e-300)) if m else float("nan")
            rows.append((x1[i], x2[i], m, u.real, u.imag, abs(u), log_err, bool(grid.near_tail[i])))
        _write_rows(path, ["x", "y", "mask", "Re u", "Im u", "abs u", "log10_error", "flag_near_tail"], rows)
    return dict(
        experiment="analytic_test", n_nodes=dc.n_nodes, n_panels=dc.n_panels,
        derived=derived_parameters(spec),
        max_error=float(np.max(rel[scored])) if np.any(scored) else float("nan"),
        median_error=float(np.median(rel[scored])) if np.any(scored) else float("nan"),
        max_error_including_flagged=float(np.nanmax(rel)) if np.any(grid.mask) else float("nan"),
        n_scored=int(np.count_nonzero(scored)), n_flagged=int(np.count_nonzero(grid.mask & grid.near_tail)),
        probe_errors=probes, residual=density.residual, decay=decay_diagnostic(density),
        condition=condition,
        solve_seconds=solved - start, field_seconds=done - solved, wall_seconds=done - start,
        correction=grid.meta,
    )


def _probe_errors(dc, density, source, config):
    out = []
    for p in config.probes:
        u = eval_dlp(dc, density.values, [p[0]], [p[1]], dc.spec.k, tol=config.tol)[0]
        ex = incident_eval(source, [p[0]], [p[1]])[0]
        out.append(dict(x=p[0], y=p[1], error=float(abs(u - ex) / abs(ex))))
    return out


# ---------------------------------------------------------------------------
# Endpoint sweep
# ---------------------------------------------------------------------------
def endpoint_spec(base, eta_r, eta_i):
    """Contour whose right endpoint is x1(L_trunc) = eta_r + i eta_i.

    L_trunc = eta_r and the slope alpha = eta_i / phi_{i,1}(eta_r), so the
    imaginary part at the endpoint is exactly eta_i; eta_i = 0 gives the real
    truncated contour.
    """
    if not eta_r > base.L:
        raise ConfigError(f"eta_r must exceed L = {base.L}, got {eta_r}")
    unit = float(phi_i_alpha(eta_r, base.replace(alpha=1.0, L_trunc_override=eta_r)))
    alpha = eta_i / unit
    return base.replace(alpha=alpha, L_trunc_override=eta_r)


def run_endpoint_sweep(config):
    """Error at the probe as the truncation endpoint covers a rectangle in the complex plane."""
    start = time.perf_counter()
    base = build_spec(config)
    source = IncidentField.point_source(base.k, config.source)
    nm = config.segment_panels[1] if config.segment_panels else 44
    rows, records = [], []
    for eta_r in config.eta_r:
        n_tail = max(1, int(math.ceil((eta_r - base.L) / config.tail_panel_length)))
        for eta_i in config.eta_i:
            spec = endpoint_spec(base, eta_r, eta_i)
            dc = discretize(spec, None, segment_panels=(n_tail, nm, n_tail), max_tail=config.max_tail)
            _, density = solve_problem(dc, lambda a, b: incident_eval(source, a, b), config.tol,
                                       config.near_factor)
            probe = config.probes[0]
            u = eval_dlp(dc, density.values, [probe[0]], [probe[1]], spec.k, tol=config.tol)[0]
            ex = incident_eval(source, [probe[0]], [probe[1]])[0]
            err = float(abs(u - ex) / abs(ex))
            log.info("endpoint eta_r=%g eta_i=%g alpha=%.4g N=%d error=%.3e", eta_r, eta_i, spec.alpha,
                     dc.n_nodes, err)
            rows.append((eta_r, eta_i, spec.alpha, dc.n_nodes, math.log10(max(err, 1e-300))))
            records.append(dict(eta_r=eta_r, eta_i=eta_i, alpha=spec.alpha, n_nodes=dc.n_nodes, error=err))
    fit = [r for r in records if 0.3 - 1e-12 <= r["eta_i"] <= 1.8 + 1e-12]
    slope = fit_slope([r["eta_i"] for r in fit], [math.log(r["error"]) for r in fit])
    path = _output_path(config, "endpoint_sweep.csv")
    if path:
        _write_rows(path, ["eta_r", "eta_i", "alpha", "n_nodes", "log10_error"], rows)
    return dict(
        experiment="endpoint_sweep", derived=derived_parameters(base), records=records,
        fitted_slope=slope, slope_over_k=slope / base.k, fit_range=[0.3, 1.8],
        mapping="L_trunc = eta_r, alpha = eta_i / phi_{i,1}(eta_r)",
        wall_seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Self-convergence with a reflected plane wave
# ---------------------------------------------------------------------------
def convergence_spec(config):
    spec = build_spec(config)
    if config.L_trunc is None:
        spec = spec.replace(L_trunc_override=spec.L + 8.0)
    return spec


def run_convergence(config):
    """Field at the probe for increasing N against the largest-N reference."""
    start = time.perf_counter()
    spec = convergence_spec(config)
    wave = IncidentField.plane_wave_reflected(spec.k, math.radians(config.angle_deg), config.amplitude)
    probe = config.probes[0]

    def field_at_probe(n_nodes):
        dc = discretize(spec, n_nodes // 16, max_tail=None)
        _, density = solve_problem(dc, lambda a, b: -incident_eval(wave, a, b), config.tol, config.near_factor)
        return complex(eval_dlp(dc, density.values, [probe[0]], [probe[1]], spec.k, tol=config.tol)[0]), dc

    reference, ref_dc = field_at_probe(config.n_reference)
    records = []
    for n in config.n_sweep:
        value, dc = field_at_probe(n)
        err = abs(value - reference) / abs(reference)
        log.info("convergence N=%d error=%.3e", n, err)
        records.append(dict(n_nodes=n, n_panels=dc.n_panels, error=float(err),
                            panel_lengths=sorted(set(np.round(dc.panel_lengths, 12).tolist()))))
    pre = [r for r in records if r["error"] > CONVERGENCE_FLOOR]
    order = -fit_slope([math.log(r["n_nodes"]) for r in pre], [math.log(r["error"]) for r in pre])
    path = _output_path(config, "convergence.csv")
    if path:
        _write_rows(path, ["N", "error"], [(r["n_nodes"], r["error"]) for r in records])
    return dict(
        experiment="convergence", derived=derived_parameters(spec), reference_n=config.n_reference,
        reference_value=[reference.real, reference.imag], records=records, fitted_order=order,
        fit_points=len(pre), floor=CONVERGENCE_FLOOR,
        penultimate_error=records[-1]["error"] if records else float("nan"),
        wall_seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Scattering by the interface
# ---------------------------------------------------------------------------
def upward_standoff(dc, t, distance):
    """Points at ``distance`` above the real curve along its upward unit normal."""
    sample = gamma_eval(np.asarray(t, dtype=float), dc.spec)
    _, n1, n2 = speed_and_normal(sample)
    return sample.x1.real - distance * n1.real, sample.x2.real - distance * n2.real


def boundary_trace(dc, density, incident, t, standoff, tol=DEFAULT_TOL):
    """Total field at standoffs d, 2d, 3d above the curve and its extrapolation to d = 0.

    Returns (values at d, quadratic extrapolation to the curve).  For a
    sound-soft interface the extrapolated trace vanishes; the value at d
    itself is O(d |du/dn|).
    """
    values = []
    for m in (1, 2, 3):
        p1, p2 = upward_standoff(dc, t, m * standoff)
        u = eval_dlp(dc, density.values, p1, p2, dc.spec.k, tol=tol) + incident_eval(incident, p1, p2)
        values.append(u)
    u1, u2, u3 = values
    return u1, 3 * u1 - 3 * u2 + u3


def run_scatter(config):
    """Incident, scattered and total fields for a source above the interface."""
    start = time.perf_counter()
    spec = build_spec(config)
    incident = build_incident(config, spec.k)
    dc = build_contour(config, spec)
    _, density = solve_problem(dc, lambda a, b: -incident_eval(incident, a, b), config.tol,
                               config.near_factor)
    solved = time.perf_counter()
    x1, x2, shape = _grid(config)
    scat = scattered_field(dc, density, x1, x2, config.mask, config.tol, shape)
    total = total_field(incident, scat)
    inc = incident_grid(incident, scat)

    rng = np.random.default_rng(config.seed)
    t = np.sort(rng.uniform(-spec.L + spec.delta, spec.L - spec.delta, config.trace_points))
    at_standoff, extrapolated = boundary_trace(dc, density, incident, t, config.trace_standoff, config.tol)
    scale = float(np.max(np.abs(incident_eval(incident, *upward_standoff(dc, t, config.trace_standoff)))))
    done = time.perf_counter()

    for name, grid in (("incident", inc), ("scattered", scat), ("total", total)):
        path = _output_path(config, f"{name}_field.csv")
        if path:
            grid.to_csv(path)
    valid_inc = inc.values[inc.mask]
    return dict(
        experiment="scatter", incident=config.incident, n_nodes=dc.n_nodes, n_panels=dc.n_panels,
        derived=derived_parameters(spec), residual=density.residual, decay=decay_diagnostic(density),
        incident_max_abs=float(np.max(np.abs(valid_inc))) if valid_inc.size else float("nan"),
        trace_standoff=config.trace_standoff,
        trace_at_standoff=float(np.max(np.abs(at_standoff))),
        trace_extrapolated=float(np.max(np.abs(extrapolated))),
        trace_scale=scale,
        solve_seconds=solved - start, field_seconds=done - solved, wall_seconds=done - start,
        correction=scat.meta,
    )


RUNNERS = dict(
    analytic_test=run_analytic_test,
    endpoint_sweep=run_endpoint_sweep,
    convergence=run_convergence,
    scatter=run_scatter,
)


def run(config):
    return RUNNERS[config.experiment](config)
