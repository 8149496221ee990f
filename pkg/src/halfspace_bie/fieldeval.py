"""Scattered and total fields at real targets above the interface.

The field of a density is the double-layer potential
u(x) = -1/2 sum_j w_j g(x, y_j) sigma_j, computed on the complexified
contour.  It equals the physical field only where the deformation is
invisible to the target: in the strip |x1| < L above the curve, and more
generally in the cone x1 + x2 > -L, x1 - x2 < L.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .contour import curve_height, phi_i_alpha
from .errors import ConfigError, HalfspaceError
from .kernels import IncidentField, incident_eval, kernel_from_geometry
from .quadrature import correction_weights
from .solver import NEAR_FACTOR, near_panels

STRIP, CONE = "strip", "cone"
MIN_CLEARANCE = 1e-8
_CHUNK_ENTRIES = 250_000


def region_mask(x1, x2, spec, mode=STRIP, clearance=MIN_CLEARANCE):
    """Targets where the contour field reproduces the physical one.

    Both modes require the target at least ``clearance`` above the
    interface (closer targets are boundary traces, not field points).  ``strip``
    keeps |x1| < L; ``cone`` also keeps x1 + x2 > -L and x1 - x2 < L.
    Outside |x1| <= L a target must also see the tail below it with
    |Im x1| < x2, otherwise the continued distance crosses its branch cut.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if mode not in (STRIP, CONE):
        raise ConfigError(f"unknown mask mode {mode!r}; use 'strip' or 'cone'")
    above = x2 > curve_height(x1, spec) + clearance
    strip = np.abs(x1) < spec.L
    if mode == STRIP:
        return above & strip
    wedge = (x1 + x2 > -spec.L) & (x1 - x2 < spec.L)
    reach = np.clip(x1, -spec.L_trunc, spec.L_trunc)
    admissible = np.abs(phi_i_alpha(reach, spec)) < x2
    return above & (strip | (wedge & admissible))


def near_tail_flag(x1, x2, spec):
    """Targets within half a wavelength of (+-L, 0), where accuracy degrades."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    radius = 0.5 * 2.0 * math.pi / spec.k
    return (np.hypot(x1 - spec.L, x2) < radius) | (np.hypot(x1 + spec.L, x2) < radius)


def eval_dlp(dc, sigma, x1, x2, k, tol=1e-14, near_factor=NEAR_FACTOR, report=None):
    """-1/2 sum w_j g(x, y_j) sigma_j at real targets, corrected near the curve.

    ``report`` (optional dict) collects correction statistics.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float)).astype(complex)
    x2 = np.atleast_1d(np.asarray(x2, dtype=float)).astype(complex)
    sigma = np.asarray(sigma, dtype=complex)
    gap = np.abs(x2.real - curve_height(x1.real, dc.spec))
    if np.any(gap < 1e-3 * MIN_CLEARANCE):
        raise HalfspaceError("eval_dlp: target on the interface; use the boundary trace instead")
    out = np.zeros(len(x1), dtype=complex)
    if len(x1) == 0 or not np.any(sigma):
        return out
    near = near_panels(dc, x1, x2, None, near_factor)
    p = dc.order
    weighted = dc.weights * sigma
    rows = max(1, _CHUNK_ENTRIES // dc.n_nodes)
    for start in range(0, len(x1), rows):
        sl = slice(start, start + rows)
        g = kernel_from_geometry(x1[sl, None], x2[sl, None], dc.x1[None, :], dc.x2[None, :],
                                 dc.n1[None, :], dc.n2[None, :], k)
        g[np.repeat(near[sl], p, axis=1)] = 0.0
        out[sl] = g @ weighted

    ti, pj = np.nonzero(near)
    if len(ti):
        nodes = (pj[:, None] * p + np.arange(p)[None, :])
        d = np.abs(np.sqrt((x1[ti, None] - dc.x1[nodes]) ** 2 + (x2[ti, None] - dc.x2[nodes]) ** 2))
        hint = dc.t[nodes[np.arange(len(ti)), np.argmin(d, axis=1)]]
        w = correction_weights(dc, x1[ti], x2[ti], np.full(len(ti), np.nan), pj, k, tol=tol, hint=hint,
                               report=report)
        np.add.at(out, ti, np.sum(w * sigma[nodes], axis=1))
    return -0.5 * out


@dataclass
class FieldGrid:
    """Field values at real targets; masked-out targets hold NaN (absent)."""

    x1: np.ndarray
    x2: np.ndarray
    mask: np.ndarray
    values: np.ndarray
    near_tail: np.ndarray
    shape: Optional[Tuple[int, int]] = None
    meta: dict = field(default_factory=dict)

    @property
    def valid_values(self):
        return self.values[self.mask]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x", "y", "mask", "Re u", "Im u", "abs u", "flag_near_tail"])
            for a, b, m, u, f in zip(self.x1, self.x2, self.mask, self.values, self.near_tail):
                if m:
                    vals = [f"{u.real:.17g}", f"{u.imag:.17g}", f"{abs(u):.17g}"]
                else:
                    vals = ["nan", "nan", "nan"]
                out.writerow([f"{a:.17g}", f"{b:.17g}", int(m)] + vals + [int(f)])


def grid_points(x1_range, x2_range, n1, n2):
    """Flattened uniform rectangular grid (row-major in x2) and its shape."""
    a = np.linspace(x1_range[0], x1_range[1], int(n1))
    b = np.linspace(x2_range[0], x2_range[1], int(n2))
    g1, g2 = np.meshgrid(a, b)
    return g1.ravel(), g2.ravel(), (int(n2), int(n1))


def scattered_field(dc, density, x1, x2, mode=STRIP, tol=1e-14, shape=None):
    """Evaluate the density's field on the masked targets."""
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    mask = region_mask(x1, x2, dc.spec, mode)
    values = np.full(len(x1), np.nan + 0j)
    report = {}
    values[mask] = eval_dlp(dc, density.values, x1[mask], x2[mask], density.k, tol=tol, report=report)
    meta = dict(mode=mode, tol=tol, n_nodes=dc.n_nodes)
    meta.update({f"correction_{key}": val for key, val in report.items()})
    return FieldGrid(x1, x2, mask, values, near_tail_flag(x1, x2, dc.spec), shape, meta=meta)


def incident_grid(incident, like):
    """The incident field on the targets and mask of ``like``."""
    values = np.full(len(like.x1), np.nan + 0j)
    values[like.mask] = incident_eval(incident, like.x1[like.mask], like.x2[like.mask])
    return FieldGrid(like.x1, like.x2, like.mask.copy(), values, like.near_tail.copy(), like.shape,
                     meta=dict(like.meta))


def total_field(incident, scattered):
    """u_in + u_scat on the scattered field's targets.

    ``incident`` may be an IncidentField or a FieldGrid on the same
    targets and mask.
    """
    if isinstance(incident, IncidentField):
        incident = incident_grid(incident, scattered)
    if not (np.array_equal(incident.mask, scattered.mask)
            and np.array_equal(incident.x1, scattered.x1) and np.array_equal(incident.x2, scattered.x2)):
        raise HalfspaceError("total_field: incident and scattered grids differ in targets or mask")
    values = np.full(len(scattered.x1), np.nan + 0j)
    m = scattered.mask
    values[m] = incident.values[m] + scattered.values[m]
    return FieldGrid(scattered.x1, scattered.x2, m.copy(), values, scattered.near_tail.copy(),
                     scattered.shape, meta=dict(scattered.meta))
