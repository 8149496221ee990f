"""Continued distance, the double-layer kernel g, and incident fields.

Kernel convention: g(x, y) = -(i k / 2) H1(k r) ((x - y) . n(y)) / r, which
is -2 times the usual 2D Helmholtz double-layer kernel.  With it the
Dirichlet problem becomes sigma + K sigma = -2 f, and the field is
u = -1/2 * sum_j w_j g(x, y_j) sigma_j.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import CoincidentPointError, ConfigError
from .quadrature import gauss_legendre
from .specfun import hankel1, principal_sqrt

# (largest |t - s|, Gauss points) for the cancellation-free on-curve kernel
_CURVE_RULES = ((0.02, 6), (0.1, 10))


def complex_distance(x1, x2, y1, y2, check=True):
    """Principal square root of (x1 - y1)^2 + (x2 - y2)^2.

    Raises ``BranchCutError`` when the radicand lies on (-inf, 0], which
    happens only for point pairs outside the admissible class.
    """
    d1 = np.asarray(x1, dtype=complex) - np.asarray(y1, dtype=complex)
    d2 = np.asarray(x2, dtype=complex) - np.asarray(y2, dtype=complex)
    rsq = d1 * d1 + d2 * d2
    if check:
        return principal_sqrt(rsq)
    return np.sqrt(rsq)


def kernel_from_geometry(x1, x2, y1, y2, n1, n2, k):
    """g without the coincidence check; entries with (x - y) . n = 0 are exactly 0."""
    d1 = np.asarray(x1, dtype=complex) - np.asarray(y1, dtype=complex)
    d2 = np.asarray(x2, dtype=complex) - np.asarray(y2, dtype=complex)
    d1, d2 = np.broadcast_arrays(d1, d2)
    dot = d1 * n1 + d2 * n2
    out = np.zeros(dot.shape, dtype=complex)
    live = dot != 0
    if np.any(live):
        r = principal_sqrt(d1[live] ** 2 + d2[live] ** 2)
        out[live] = -0.5j * k * hankel1(1, k * r) * dot[live] / r
    return out


def kernel_g(x1, x2, y1, y2, n1, n2, k):
    """Complexified double-layer kernel g(x, y) with normal n at y."""
    same = (np.asarray(x1) == np.asarray(y1)) & (np.asarray(x2) == np.asarray(y2))
    if np.any(same):
        raise CoincidentPointError("kernel_g: coincident points; use the corrected quadrature")
    out = kernel_from_geometry(x1, x2, y1, y2, n1, n2, k)
    return out[()] if out.ndim == 0 else out


def kernel_on_curve(t, s, spec, k):
    """g(gamma(t), gamma(s)) for two parameters on the real middle segment.

    For |t - s| <= 0.1 it evaluates (x - y) . n / r^2 through Gauss rules
    for integrals of x2' and x2'' over [s, t], so the result keeps full
    relative accuracy as s -> t, where the direct formula loses about
    eps |x2| / (|t - s|^2 |x2''|).  Farther apart it uses the equivalent
    difference quotients, whose loss is then at the 1e-14 level.  The diagonal value is the
    limit x2''/(2 pi speed^3).
    """
    from .contour import height_derivatives

    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    u = t - s
    x2s, slope_s, _ = height_derivatives(s, spec)
    mean_slope = np.empty(len(u))
    remainder = np.empty(len(u))
    # mean of x2' and the (1 - v)-weighted mean of x2'' along [s, t]; the
    # rule order matches the span so the integrands stay well resolved
    lo = 0.0
    for switch, order in _CURVE_RULES:
        close = (np.abs(u) > lo) & (np.abs(u) <= switch) if lo else np.abs(u) <= switch
        lo = switch
        if not np.any(close):
            continue
        xq, wq = gauss_legendre(order)
        q, wq = 0.5 * (xq + 1.0), 0.5 * wq
        pts = s[close, None] + q[None, :] * u[close, None]
        _, d1, d2 = height_derivatives(pts.ravel(), spec)
        mean_slope[close] = d1.reshape(pts.shape) @ wq
        remainder[close] = d2.reshape(pts.shape) @ (wq * (1.0 - q))
    far = np.abs(u) > lo
    if np.any(far):
        # far apart the difference quotients lose little
        x2t, _, _ = height_derivatives(t[far], spec)
        uf = u[far]
        mean_slope[far] = (x2t - x2s[far]) / uf
        remainder[far] = (x2t - x2s[far] - uf * slope_s[far]) / (uf * uf)
    speed = np.sqrt(1.0 + slope_s ** 2)
    stretch = 1.0 + mean_slope ** 2
    d_over_r2 = -remainder / (speed * stretch)
    r = np.abs(u) * np.sqrt(stretch)
    out = np.empty(len(u), dtype=complex)
    zero = r == 0
    live = ~zero & (d_over_r2 != 0)
    out[~live] = 0.0
    if np.any(live):
        kr = k * r[live]
        out[live] = -0.5j * kr * hankel1(1, kr) * d_over_r2[live]
    if np.any(zero):
        out[zero] = -d_over_r2[zero] / math.pi
    return out


# ---------------------------------------------------------------------------
# Incident fields
# ---------------------------------------------------------------------------
KINDS = ("point_source", "plane_wave_reflected", "gaussian_beam")
BEAM_SOURCE = (-10.0 + 4.0j, 20.0 - 8.0j)
BEAM_AMPLITUDE = -1.5e-23


@dataclass(frozen=True)
class IncidentField:
    """A field amplitude * basis(x) that can be continued onto the contour.

    point_source and gaussian_beam use H0(k r(x, source)); the beam is a
    point source at a complex location.  plane_wave_reflected is the
    incoming wave at angle ``angle`` plus its mirror image in the flat
    interface, so it vanishes on x2 = 0.
    """

    kind: str
    k: float
    source: Optional[Tuple[complex, complex]] = None
    angle: Optional[float] = None
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown incident field kind {self.kind!r}")
        if not self.k > 0:
            raise ConfigError("incident field needs k > 0")
        if self.kind == "plane_wave_reflected":
            if self.angle is None or not math.sin(self.angle) < 0:
                raise ConfigError("plane_wave_reflected needs sin(angle) < 0 (incoming from above)")
        elif self.source is None or len(self.source) != 2:
            raise ConfigError(f"{self.kind} needs a two-coordinate source")

    @classmethod
    def point_source(cls, k, source, amplitude=1.0):
        return cls("point_source", k, source=(complex(source[0]), complex(source[1])), amplitude=amplitude)

    @classmethod
    def plane_wave_reflected(cls, k, angle, amplitude=1.0):
        return cls("plane_wave_reflected", k, angle=float(angle), amplitude=amplitude)

    @classmethod
    def gaussian_beam(cls, k, source=BEAM_SOURCE, amplitude=BEAM_AMPLITUDE):
        return cls("gaussian_beam", k, source=(complex(source[0]), complex(source[1])), amplitude=amplitude)


def incident_eval(field, x1, x2):
    """Value of ``field`` at points (x1, x2), real or on the contour."""
    x1 = np.asarray(x1, dtype=complex)
    x2 = np.asarray(x2, dtype=complex)
    k = field.k
    if field.kind == "plane_wave_reflected":
        c, s = math.cos(field.angle), math.sin(field.angle)
        # e^{ik(x1 c + x2 s)} - e^{ik(x1 c - x2 s)}, factored so x2 = 0 gives exactly 0
        vals = 2j * np.exp(1j * k * c * x1) * np.sin(k * s * x2)
    else:
        r = complex_distance(x1, x2, field.source[0], field.source[1])
        vals = hankel1(0, k * r)
    return field.amplitude * vals
