"""Dense Nystrom system sigma + K sigma = -2 f and its direct solution.

K uses the kernel g (minus twice the double layer), so the same density
solves -1/2 sigma + D sigma = f.  Off-diagonal entries for well separated
(target, panel) pairs are w_j g(x_i, y_j); for near pairs the 16 entries
come from the adaptive correction weights.  Entries with both target and
source on the flat tails are exactly zero and are never computed.
"""

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .contour import MIDDLE
from .errors import SolverError
from .kernels import complex_distance, kernel_from_geometry
from .quadrature import correction_weights

log = logging.getLogger(__name__)

NEAR_FACTOR = 1.5
DEFAULT_TOL = 1e-14
_CHUNK_ENTRIES = 250_000


# ---------------------------------------------------------------------------
# Near-field detection
# ---------------------------------------------------------------------------
def near_panels(dc, x1, x2, t=None, factor=NEAR_FACTOR):
    """Boolean (n_targets, n_panels) mask of pairs needing corrected weights.

    A pair is near if the target's parameter lies within ``factor`` panel
    lengths of the panel, or its distance |r| to some node of the panel is
    below ``factor`` panel arc lengths.  The second test catches targets
    off the curve and strongly curved interfaces where parameter distance
    is misleading.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=complex))
    x2 = np.atleast_1d(np.asarray(x2, dtype=complex))
    npan, p = dc.n_panels, dc.order
    a, b = dc.breaks[:-1], dc.breaks[1:]
    arclen = dc.panel_arclengths
    out = np.zeros((len(x1), npan), dtype=bool)
    if t is not None:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        on = np.isfinite(t)
        gap = np.maximum(np.maximum(a[None, :] - t[on, None], t[on, None] - b[None, :]), 0.0)
        out[on] = gap < factor * (b - a)[None, :]
    rows = max(1, _CHUNK_ENTRIES // dc.n_nodes)
    for start in range(0, len(x1), rows):
        sl = slice(start, start + rows)
        r = np.abs(complex_distance(x1[sl, None], x2[sl, None], dc.x1[None, :], dc.x2[None, :], check=False))
        rmin = r.reshape(-1, npan, p).min(axis=2)
        out[sl] |= rmin < factor * arclen[None, :]
    return out


def _zero_pairs(dc, target_region, panels):
    """Pairs with the target and the whole panel on the flat tails."""
    tail_target = np.asarray(target_region) != MIDDLE
    tail_panel = dc.panel_regions[panels] != MIDDLE
    return tail_target[:, None] & tail_panel[None, :]


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------
def kernel_block(dc, k, rows=None, panels=None, tol=DEFAULT_TOL, near_factor=NEAR_FACTOR, stats=None):
    """K restricted to target nodes ``rows`` and source ``panels``.

    Returns an array (len(rows), 16 * len(panels)) with entries
    w_j g(x_i, y_j), corrected on near pairs.  The diagonal self terms are
    included through the corrections.
    """
    p = dc.order
    rows = np.arange(dc.n_nodes) if rows is None else np.asarray(rows, dtype=int)
    panels = np.arange(dc.n_panels) if panels is None else np.asarray(panels, dtype=int)
    cols = (panels[:, None] * p + np.arange(p)[None, :]).ravel()
    block = np.zeros((len(rows), len(cols)), dtype=complex)

    near_all = near_panels(dc, dc.x1[rows], dc.x2[rows], dc.t[rows], near_factor)[:, panels]
    zero = _zero_pairs(dc, dc.region[rows], panels)
    near = near_all & ~zero

    y1, y2, n1, n2, w = dc.x1[cols], dc.x2[cols], dc.n1[cols], dc.n2[cols], dc.weights[cols]
    skip_cols = np.repeat(zero | near, p, axis=1)
    tail_rows = dc.region[rows] != MIDDLE
    tail_cols = dc.region[cols] != MIDDLE
    step = max(1, _CHUNK_ENTRIES // max(1, len(cols)))
    for start in range(0, len(rows), step):
        sl = slice(start, start + step)
        ri = rows[sl]
        live = ~skip_cols[sl] & ~(tail_rows[sl, None] & tail_cols[None, :])
        if not np.any(live):
            continue
        ii, jj = np.nonzero(live)
        vals = kernel_from_geometry(dc.x1[ri][ii], dc.x2[ri][ii], y1[jj], y2[jj], n1[jj], n2[jj], k)
        chunk = np.zeros(live.shape, dtype=complex)
        chunk[ii, jj] = vals * w[jj]
        block[sl] = chunk

    ti, pj = np.nonzero(near)
    if len(ti):
        tgt = rows[ti]
        weights = correction_weights(dc, dc.x1[tgt], dc.x2[tgt], dc.t[tgt], panels[pj], k, tol=tol)
        col_idx = pj[:, None] * p + np.arange(p)[None, :]
        block[ti[:, None], col_idx] = weights
    if stats is not None:
        stats["corrections"] = stats.get("corrections", 0) + len(ti)
    return block


@dataclass
class SystemMatrix:
    """The assembled operator I + K and a cached LU factorization."""

    contour: object
    k: float
    matrix: np.ndarray
    tol: float = DEFAULT_TOL
    n_corrections: int = 0
    assembly_seconds: float = 0.0
    _lu: Optional[tuple] = field(default=None, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def factor(self):
        if self._lu is None:
            if not np.all(np.isfinite(self.matrix)):
                raise SolverError("system matrix has non-finite entries")
            with warnings.catch_warnings():
                # exact zero pivots are reported below as a SolverError
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(self.matrix, check_finite=False)
            pivots = np.abs(np.diag(lu))
            largest = max(pivots.max(), 1e-300)
            if pivots.min() <= 1e-14 * largest:
                raise SolverError(
                    f"matrix is singular to working precision (pivot ratio {pivots.min() / largest:.1e}); "
                    "check the resolution and the contour parameters")
            self._lu = (lu, piv)
        return self._lu

    def tail_tail_block(self):
        tail = self.contour.tail
        return self.matrix[np.ix_(tail, tail)] - np.eye(int(tail.sum()))


def assemble(dc, k, tol=DEFAULT_TOL, near_factor=NEAR_FACTOR):
    """Dense I + K for the discretized contour."""
    started = time.perf_counter()
    stats = {}
    mat = kernel_block(dc, k, tol=tol, near_factor=near_factor, stats=stats)
    mat[np.diag_indices_from(mat)] += 1.0
    elapsed = time.perf_counter() - started
    log.info("assembled N=%d in %.1fs with %d corrected pairs", dc.n_nodes, elapsed, stats["corrections"])
    return SystemMatrix(dc, k, mat, tol, stats["corrections"], elapsed)


# ---------------------------------------------------------------------------
# Densities and solves
# ---------------------------------------------------------------------------
@dataclass
class Density:
    """Solution values at the contour nodes."""

    values: np.ndarray
    contour: object
    k: float
    residual: float = float("nan")

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise SolverError("density has non-finite values")

    @property
    def decay(self):
        return decay_diagnostic(self)

    def weighted_abs(self):
        dc = self.contour
        radius = np.sqrt(np.abs(dc.x1) ** 2 + np.abs(dc.x2) ** 2)
        return np.exp(self.k * np.abs(dc.x1.imag)) * np.sqrt(1.0 + radius) * np.abs(self.values)

    def dump_csv(self, path):
        dc = self.contour
        weighted = self.weighted_abs()
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "Re x1", "Im x1", "Re sigma", "Im sigma", "abs sigma", "weighted_abs"])
            for i in range(dc.n_nodes):
                s = self.values[i]
                out.writerow([f"{v:.17g}" for v in (dc.t[i], dc.x1[i].real, dc.x1[i].imag,
                                                     s.real, s.imag, abs(s), weighted[i])])


def relative_residual(matrix, sigma, rhs):
    norm = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ sigma - rhs)
    return float(res / norm) if norm > 0 else float(res)


def solve(system, rhs):
    """LU solve of (I + K) sigma = rhs; returns a Density with its residual."""
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.shape != (system.n,):
        raise SolverError(f"right-hand side has shape {rhs.shape}, expected ({system.n},)")
    if not np.any(rhs):
        return Density(np.zeros(system.n, dtype=complex), system.contour, system.k, 0.0)
    sigma = scipy.linalg.lu_solve(system.factor(), rhs, check_finite=False)
    return Density(sigma, system.contour, system.k, relative_residual(system.matrix, sigma, rhs))


def boundary_rhs(dc, data):
    """-2 f at the nodes, for a callable f(x1, x2)."""
    return -2.0 * np.asarray(data(dc.x1, dc.x2), dtype=complex)


def decay_diagnostic(density):
    """max over tail nodes of e^{k|Im x1|} (1+|x|)^{1/2} |sigma|, over max |sigma| on the middle."""
    dc = density.contour
    tail = dc.tail
    middle_max = np.max(np.abs(density.values[~tail])) if np.any(~tail) else 0.0
    if not np.any(tail):
        return 0.0
    top = np.max(density.weighted_abs()[tail])
    if middle_max == 0:
        return 0.0 if top == 0 else float("inf")
    return float(top / middle_max)


def condition_estimate(system, iterations=60, seed=0, rtol=1e-6):
    """2-norm condition number from power iterations on A^H A and its inverse."""
    a = system.matrix
    lu = system.factor()
    rng = np.random.default_rng(seed)

    def power(apply):
        v = rng.standard_normal(system.n) + 1j * rng.standard_normal(system.n)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iterations):
            w = apply(v)
            new = np.linalg.norm(w)
            v = w / new
            if abs(new - est) <= rtol * new:
                est = new
                break
            est = new
        return np.sqrt(est)

    big = power(lambda v: a.conj().T @ (a @ v))
    small_inv = power(lambda v: scipy.linalg.lu_solve(lu, scipy.linalg.lu_solve(lu, v), trans=2))
    return float(big * small_inv)


# ---------------------------------------------------------------------------
# Block solve exploiting the identity tail-tail block
# ---------------------------------------------------------------------------
def solve_structured(dc, k, data, tol=DEFAULT_TOL):
    """Solve (I + K) sigma = -2 f without forming the tail-tail block.

    With T the tail nodes and M the middle ones, K_TT = 0, so
    sigma_T = b_T - K_TM sigma_M and
    (I + K_MM - K_MT K_TM) sigma_M = b_M - K_MT b_T.
    Useful for long real (alpha = 0) tails where the full matrix is large.
    """
    regions = dc.panel_regions
    mid_p, tail_p = np.nonzero(regions == MIDDLE)[0], np.nonzero(regions != MIDDLE)[0]
    p = dc.order
    mid = (mid_p[:, None] * p + np.arange(p)).ravel()
    tail = (tail_p[:, None] * p + np.arange(p)).ravel()
    rhs = boundary_rhs(dc, data)
    k_mm = kernel_block(dc, k, mid, mid_p, tol)
    k_mt = kernel_block(dc, k, mid, tail_p, tol)
    k_tm = kernel_block(dc, k, tail, mid_p, tol)
    schur = np.eye(len(mid)) + k_mm - k_mt @ k_tm
    sigma_m = scipy.linalg.solve(schur, rhs[mid] - k_mt @ rhs[tail])
    sigma = np.empty(dc.n_nodes, dtype=complex)
    sigma[mid] = sigma_m
    sigma[tail] = rhs[tail] - k_tm @ sigma_m
    applied = sigma.copy()
    applied[mid] += k_mm @ sigma_m + k_mt @ sigma[tail]
    applied[tail] += k_tm @ sigma_m
    residual = float(np.linalg.norm(applied - rhs) / np.linalg.norm(rhs))
    return Density(sigma, dc, k, residual)
