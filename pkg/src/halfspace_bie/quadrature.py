"""Gauss-Legendre rules, adaptive integration and local correction weights.

The correction weights replace the smooth 16-point rule for a (target,
panel) pair whose kernel is singular or nearly singular.  For each such
pair we integrate

    kernel(x, gamma(s)) * speed(s) * l_m(s)       (m = 0..15)

over the panel, where l_m is the Lagrange basis on the panel's Gauss nodes,
so that sum_m W_m sigma_m is the integral of the kernel against the
polynomial interpolant of the density.  The integrals are computed by
bisection with a 16-point rule, all pairs at once, splitting at the
singular parameter when the target lies on the panel.
"""

import logging
from functools import lru_cache

import numpy as np

from .errors import QuadratureError

log = logging.getLogger(__name__)

MAX_RULE_ORDER = 64
DEFAULT_MAX_DEPTH = 40
ROUNDOFF_FACTOR = 64.0
MAX_ACTIVE_INTERVALS = 200_000
# correction pairs integrated together; keeps the live-interval cap per batch
JOBS_PER_BATCH = 8192
FAIL_ABOVE = 1e-8
_CHUNK_POINTS = 400_000


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------
def _legendre_and_derivative(n, x):
    p0, p1 = np.ones_like(x), x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


@lru_cache(maxsize=None)
def _gauss_legendre_cached(p):
    if p == 1:
        return np.array([0.0]), np.array([2.0])
    i = np.arange(1, p + 1)
    x = -np.cos(np.pi * (i - 0.25) / (p + 0.5))
    for _ in range(100):
        val, der = _legendre_and_derivative(p, x)
        step = val / der
        x = x - step
        if np.max(np.abs(step)) < 1e-16:
            break
    _, der = _legendre_and_derivative(p, x)
    w = 2.0 / ((1.0 - x * x) * der * der)
    # symmetrize to remove the last bits of Newton noise
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(p):
    """Nodes (ascending) and weights of the p-point Gauss-Legendre rule on [-1, 1]."""
    p = int(p)
    if not 1 <= p <= MAX_RULE_ORDER:
        raise ValueError(f"gauss_legendre: order must be in [1, {MAX_RULE_ORDER}], got {p}")
    return _gauss_legendre_cached(p)


@lru_cache(maxsize=None)
def _projection_matrix(p):
    x, w = gauss_legendre(p)
    polys = np.empty((p, p))
    polys[0] = 1.0
    if p > 1:
        polys[1] = x
    for n in range(2, p):
        polys[n] = ((2 * n - 1) * x * polys[n - 1] - (n - 1) * polys[n - 2]) / n
    scale = (2 * np.arange(p) + 1) / 2.0
    mat = scale[:, None] * polys * w[None, :]
    mat.setflags(write=False)
    return mat


def legendre_coefficients(values):
    """Legendre coefficients from samples at the Gauss nodes (last axis)."""
    values = np.asarray(values)
    return values @ _projection_matrix(values.shape[-1]).T


@lru_cache(maxsize=None)
def _barycentric_weights(p):
    x, _ = gauss_legendre(p)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    bw = bw / np.max(np.abs(bw))
    bw.setflags(write=False)
    return bw


def lagrange_basis(xi, p=16):
    """Values l_m(xi) of the Lagrange basis on the p Gauss nodes, shape (len(xi), p)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    nodes, _ = gauss_legendre(p)
    bw = _barycentric_weights(p)
    diff = xi[:, None] - nodes[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    terms = bw[None, :] / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = np.any(hit, axis=1)
    if np.any(rows):
        out[rows] = hit[rows].astype(float)
    return out


# ---------------------------------------------------------------------------
# Adaptive integration
# ---------------------------------------------------------------------------
def adaptive_batch(func, a, b, tol, singular=None, max_depth=DEFAULT_MAX_DEPTH, order=16, noise_scale=None):
    """Integrate many vector-valued functions by simultaneous bisection.

    ``func(job, s)`` receives job indices and abscissae of equal length M
    and returns an (M, m) array.  Job ``j`` integrates over [a[j], b[j]];
    if ``singular[j]`` lies strictly inside, the interval is split there
    first.  An interval is accepted when refining it changes the result by
    at most ``tol * length / (b - a)`` (absolute, max norm over components)
    or by no more than rounding noise, 64 eps times the integral of |f|
    over the interval.  ``noise_scale`` (per job, default 1) widens that
    floor for integrands that are themselves only known to noise_scale * eps
    relative accuracy, e.g. kernels with cancellation in x - y.  The error
    estimate reported for a job is the sum of its leaves' refinement
    differences.

    Returns (values (J, m), error estimates (J,), converged (J,) bool);
    a job is unconverged when some interval hit ``max_depth`` or the cap
    on live intervals before meeting either test.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n_jobs = len(a)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (n_jobs,))
    x, w = gauss_legendre(order)

    lo, hi, job = a.copy(), b.copy(), np.arange(n_jobs)
    if singular is not None:
        sing = np.broadcast_to(np.asarray(singular, dtype=float), (n_jobs,))
        inside = np.isfinite(sing) & (sing > a) & (sing < b)
        lo = np.concatenate([lo, sing[inside]])
        hi = np.concatenate([np.where(inside, sing, hi), b[inside]])
        job = np.concatenate([job, job[inside]])

    def rule(lo, hi, job):
        out, mags = [], []
        for start in range(0, len(lo), max(1, _CHUNK_POINTS // order)):
            sl = slice(start, start + max(1, _CHUNK_POINTS // order))
            half = 0.5 * (hi[sl] - lo[sl])
            mid = 0.5 * (hi[sl] + lo[sl])
            s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            jj = np.repeat(job[sl], order)
            vals = np.asarray(func(jj, s))
            vals = vals.reshape(len(half), order, -1)
            out.append(np.einsum("iqm,q->im", vals, w) * half[:, None])
            mags.append(np.einsum("iqm,q->i", np.abs(vals), w) * np.abs(half))
        return np.concatenate(out, axis=0), np.concatenate(mags)

    coarse, _ = rule(lo, hi, job)
    total = np.zeros((n_jobs, coarse.shape[1]), dtype=coarse.dtype)
    err = np.zeros(n_jobs)
    forced = np.zeros(n_jobs, dtype=bool)
    span = b - a
    scale = np.ones(n_jobs) if noise_scale is None else np.broadcast_to(
        np.maximum(np.asarray(noise_scale, dtype=float), 1.0), (n_jobs,))

    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        both, mag = rule(np.concatenate([lo, mid]), np.concatenate([mid, hi]), np.concatenate([job, job]))
        n = len(lo)
        left, right = both[:n], both[n:]
        fine = left + right
        diff = np.max(np.abs(fine - coarse), axis=1)
        allowed = tol[job] * (hi - lo) / span[job]
        # below this the difference is rounding noise and bisection cannot help
        noise = ROUNDOFF_FACTOR * np.finfo(float).eps * scale[job] * (mag[:n] + mag[n:])
        ok = (diff <= allowed) | (diff <= noise)
        if depth == max_depth or 2 * np.count_nonzero(~ok) > MAX_ACTIVE_INTERVALS:
            forced[job[~ok]] = True
            ok[:] = True
        np.add.at(total, job[ok], fine[ok])
        np.add.at(err, job[ok], diff[ok])
        if np.all(ok):
            break
        keep = ~ok
        lo, hi, job = (np.concatenate([lo[keep], mid[keep]]),
                       np.concatenate([mid[keep], hi[keep]]),
                       np.concatenate([job[keep], job[keep]]))
        coarse = np.concatenate([left[keep], right[keep]])
    # a forced leaf is harmless when the summed estimate still meets tol
    # (endpoint singularities shrink the error per level, not per length)
    return total, err, ~forced | (err <= tol)


def adaptive_integrate(f, a, b, tol=1e-13, singular=None, max_depth=DEFAULT_MAX_DEPTH, order=16):
    """Integrate a scalar or vector function of one real variable over [a, b].

    ``f(s)`` takes an array of abscissae and returns an array with first
    axis matching.  Raises ``QuadratureError`` if ``tol`` is not met.
    """
    def func(job, s):
        vals = np.asarray(f(s))
        return vals.reshape(len(s), -1)

    sing = None if singular is None else [singular]
    val, err, ok = adaptive_batch(func, [a], [b], tol, sing, max_depth, order)
    if not ok[0]:
        raise QuadratureError(f"adaptive_integrate: error estimate {err[0]:.2e} > tol {tol:.1e}",
                              achieved=float(err[0]))
    out = val[0]
    return out[0] if out.shape == (1,) else out


# ---------------------------------------------------------------------------
# Local correction weights
# ---------------------------------------------------------------------------
def correction_weights(dc, target_x1, target_x2, target_t, panels, k, tol=1e-14,
                       max_depth=DEFAULT_MAX_DEPTH, hint=None, fail_above=FAIL_ABOVE, report=None):
    """Corrected weights for kernel(x_j, .) against the density on panel p_j.

    ``target_t`` holds the curve parameter of on-curve targets and NaN for
    off-curve ones; on-curve targets in the middle segment use the
    cancellation-free kernel for sources in the middle segment.  ``hint``
    optionally gives a parameter near which an off-curve target is closest
    to the panel; the panel is split there.

    Returns an array (J, 16) of complex weights W with
    sum_m W[j, m] sigma(t_{p_j, m}) ~ int_panel kernel * speed * sigma.

    Pairs that miss ``tol`` are logged and counted in ``report`` (a dict,
    if given); a ``QuadratureError`` is raised only when some error
    estimate exceeds ``fail_above``.
    """
    from .contour import MIDDLE, curve_height, gamma_eval, speed_and_normal
    from .kernels import kernel_from_geometry, kernel_on_curve

    spec = dc.spec
    target_x1 = np.asarray(target_x1, dtype=complex)
    target_x2 = np.asarray(target_x2, dtype=complex)
    target_t = np.asarray(target_t, dtype=float)
    panels = np.asarray(panels, dtype=int)
    if len(panels) == 0:
        return np.zeros((0, dc.order), dtype=complex)
    a, b = dc.breaks[panels], dc.breaks[panels + 1]
    centre, half = 0.5 * (a + b), 0.5 * (b - a)
    on_middle = np.isfinite(target_t) & (np.abs(np.nan_to_num(target_t)) <= spec.L)

    def integrand(job, s):
        sample = gamma_eval(s, spec)
        speed, n1, n2 = speed_and_normal(sample)
        x1, x2 = target_x1[job], target_x2[job]
        vals = np.zeros(len(s), dtype=complex)
        accurate = on_middle[job] & (sample.region == MIDDLE)
        if np.any(accurate):
            vals[accurate] = kernel_on_curve(target_t[job][accurate], s[accurate], spec, k)
        rest = ~accurate
        if np.any(rest):
            vals[rest] = kernel_from_geometry(x1[rest], x2[rest], sample.x1[rest], sample.x2[rest],
                                              n1[rest], n2[rest], k)
        basis = lagrange_basis((s - centre[job]) / half[job], dc.order)
        return (vals * speed)[:, None] * basis

    sing = np.where(np.isfinite(target_t), target_t, np.nan)
    if hint is not None:
        sing = np.where(np.isfinite(sing), sing, np.asarray(hint, dtype=float))
    # off-curve targets: x - y cancels to relative accuracy eps (1 + |x|) / gap
    off = ~np.isfinite(target_t)
    noise_scale = np.ones(len(panels))
    if np.any(off):
        gap = np.abs(target_x2[off].real - curve_height(target_x1[off].real, spec))
        size = 1.0 + np.abs(target_x1[off]) + np.abs(target_x2[off])
        noise_scale[off] = size / np.maximum(gap, 1e-300)
    weights = np.empty((len(panels), dc.order), dtype=complex)
    err = np.empty(len(panels))
    ok = np.empty(len(panels), dtype=bool)
    for start in range(0, len(panels), JOBS_PER_BATCH):
        sl = slice(start, start + JOBS_PER_BATCH)
        offset = start

        def batch_integrand(job, s):
            return integrand(job + offset, s)

        weights[sl], err[sl], ok[sl] = adaptive_batch(batch_integrand, a[sl], b[sl], tol, sing[sl], max_depth,
                                                      noise_scale=noise_scale[sl])
    worst = float(np.max(err))
    missed = int(np.count_nonzero(~ok))
    if report is not None:
        report["pairs"] = report.get("pairs", 0) + len(panels)
        report["unconverged"] = report.get("unconverged", 0) + missed
        report["worst_error"] = max(report.get("worst_error", 0.0), worst)
    if missed:
        message = (f"near-singular quadrature missed tolerance {tol:.1e} on {missed} "
                   f"pair(s); worst estimate {worst:.2e}")
        if fail_above is not None and worst > fail_above:
            raise QuadratureError(message, achieved=worst)
        log.warning(message)
    return weights
