"""Interface geometry, its complexified truncation, and panel discretization.

The physical interface is the graph x2 = h(t) psi_{L-delta}(t) over x1 = t.
The complexified contour keeps x2 and moves x1 to t + i phi_{i,alpha}(t),
which is real (to far below double precision) for |t| <= L and grows
linearly with slope alpha beyond L + 2 t0.

Nodes are tagged by region: left (t < -L), middle (|t| <= L), right
(t > L).  On the tails the curve is flat, so x2 and its derivative are set
to exactly zero and the normal to exactly (0, -1); on the middle Im x1 is
set to exactly zero.  Both replacements change values by less than 1e-20
and make the kernel-vanishing structure exact.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import ConfigError, ResolutionError
from .quadrature import gauss_legendre, legendre_coefficients
from .specfun import _exp_neg_square, erfc

LEFT, MIDDLE, RIGHT = -1, 0, 1
PANEL_ORDER = 16
SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Profile:
    """Sum of amplitude * exp(-rate t^2) * cos(freq t + phase) terms.

    The window psi_{L-delta} is applied by the contour, not here.
    """

    terms: Tuple[Tuple[float, float, float, float], ...]
    name: str = "custom"

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for amp, rate, freq, phase in self.terms:
            out = out + amp * np.exp(-rate * t * t) * np.cos(freq * t + phase)
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for amp, rate, freq, phase in self.terms:
            g = np.exp(-rate * t * t)
            arg = freq * t + phase
            out = out + amp * g * (-2.0 * rate * t * np.cos(arg) - freq * np.sin(arg))
        return out

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for amp, rate, freq, phase in self.terms:
            g = np.exp(-rate * t * t)
            arg = freq * t + phase
            c, s = np.cos(arg), np.sin(arg)
            out = out + amp * g * ((4.0 * rate * rate * t * t - 2.0 * rate - freq * freq) * c
                                   + 4.0 * rate * t * freq * s)
        return out


FLAT = Profile(terms=(), name="flat")
BUMP_COSINE = Profile(terms=((1.0, 0.25, 1.0, 0.0),), name="bump-cosine")
TRIG_SUM = Profile(
    terms=(
        (2.0, 0.0, 2.0 * math.pi, 0.8),
        (-1.0, 0.0, 10.0 * math.pi / 13.0, 1.5),
        (0.6, 0.0, math.sqrt(2.0) * math.pi, 3.2),
    ),
    name="trig-sum",
)


# ---------------------------------------------------------------------------
# Contour parameters
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ContourSpec:
    """Perturbation profile plus complexification and truncation parameters.

    ``L_trunc_override`` replaces the derived truncation point.  The derived
    value is L + t0 + log(1/eps)/(alpha k), which reduces to the usual
    L + t0 + log(1/eps)/k for alpha = 1 and keeps k |Im x1| at the
    truncation point near log(1/eps) for other slopes.  alpha = 0 gives a
    real (uncomplexified) truncated contour and then requires an override.
    """

    k: float
    L: float
    delta: float
    profile: Profile = BUMP_COSINE
    epsilon: float = 1e-12
    alpha: float = 1.0
    L_trunc_override: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ConfigError(f"wavenumber k must be positive, got {self.k}")
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if not 0 < self.delta < self.L:
            raise ConfigError(f"need 0 < delta < L, got delta={self.delta}, L={self.L}")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.alpha == 0 and self.L_trunc_override is None:
            raise ConfigError("alpha = 0 (real contour) needs an explicit L_trunc")
        if self.L_trunc_override is not None and not self.L_trunc_override > self.L:
            raise ConfigError(f"L_trunc must exceed L, got {self.L_trunc_override}")

    @property
    def t0(self):
        return 0.5 * math.sqrt(math.log(1.0 / self.epsilon))

    @property
    def L_trunc(self):
        if self.L_trunc_override is not None:
            return float(self.L_trunc_override)
        return self.L + self.t0 + math.log(1.0 / self.epsilon) / (self.alpha * self.k)

    @property
    def window_radius(self):
        """The s in psi_s: the profile is cut off beyond L - delta."""
        return self.L - self.delta

    def replace(self, **changes):
        fields = dict(
            k=self.k, L=self.L, delta=self.delta, profile=self.profile,
            epsilon=self.epsilon, alpha=self.alpha, L_trunc_override=self.L_trunc_override,
        )
        fields.update(changes)
        return ContourSpec(**fields)


def preset(name, **overrides):
    """Named geometry presets: "paper-7.2", "paper-7.3", "flat"."""
    base = {
        "paper-7.2": dict(k=2 * math.pi, L=10.0, delta=1.0, profile=BUMP_COSINE),
        "paper-7.3": dict(k=2 * math.pi, L=20.0, delta=1.0, profile=TRIG_SUM),
        "flat": dict(k=2 * math.pi, L=10.0, delta=1.0, profile=FLAT),
    }
    if name not in base:
        raise ConfigError(f"unknown contour preset {name!r}; choose from {sorted(base)}")
    params = base[name]
    params.update(overrides)
    return ContourSpec(**params)


# ---------------------------------------------------------------------------
# Smoothing functions
# ---------------------------------------------------------------------------
def phi(x):
    """phi(x) = -1/2 int_x^inf erfc(t) dt = (x erfc(x) - exp(-x^2)/sqrt(pi)) / 2."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x * erfc(x) - _exp_neg_square(x) / SQRT_PI)


def phi_prime(x):
    return 0.5 * erfc(x)


def phi_i_alpha(x, spec):
    """Imaginary part of the complexified first coordinate (odd in x)."""
    x = np.asarray(x, dtype=float)
    c = spec.L + spec.t0
    return (spec.alpha / 3.0) * (phi(3.0 * (x + c)) - phi(3.0 * (c - x)))


def phi_i_alpha_prime(x, spec):
    x = np.asarray(x, dtype=float)
    c = spec.L + spec.t0
    return 0.5 * spec.alpha * (erfc(3.0 * (x + c)) + erfc(3.0 * (c - x)))


# erfc(z) < 4e-20 beyond this, far below the rounding of psi ~ 2
_ERFC_NEGLIGIBLE = 6.5


def _erfc_tail(z):
    """erfc(z), skipping the evaluation where it is negligible next to 2."""
    out = np.zeros(z.shape)
    live = z < _ERFC_NEGLIGIBLE
    if np.any(live):
        out[live] = erfc(z[live])
    return out


def psi(x, s, spec):
    """Smooth window, ~2 for |x| < s - t0 and ~0 for |x| > s."""
    x = np.asarray(x, dtype=float)
    t0 = spec.t0
    return 2.0 - (_erfc_tail(2.0 * (x + s - t0)) + _erfc_tail(2.0 * (s - x - t0)))


def psi_prime(x, s, spec):
    x = np.asarray(x, dtype=float)
    t0 = spec.t0
    a = _exp_neg_square(2.0 * (x + s - t0))
    b = _exp_neg_square(2.0 * (s - x - t0))
    return 4.0 / SQRT_PI * (a - b)


def psi_second(x, s, spec):
    x = np.asarray(x, dtype=float)
    t0 = spec.t0
    u, v = x + s - t0, s - x - t0
    return -32.0 / SQRT_PI * (u * _exp_neg_square(2.0 * u) + v * _exp_neg_square(2.0 * v))


def height_derivatives(t, spec):
    """x2 = h psi and its first two t-derivatives on the middle segment."""
    t = np.asarray(t, dtype=float)
    s = spec.window_radius
    h, dh, d2h = spec.profile.value(t), spec.profile.derivative(t), spec.profile.second_derivative(t)
    w, dw, d2w = psi(t, s, spec), psi_prime(t, s, spec), psi_second(t, s, spec)
    return h * w, dh * w + h * dw, d2h * w + 2.0 * dh * dw + h * d2w


# ---------------------------------------------------------------------------
# Parameterization
# ---------------------------------------------------------------------------
class CurveSample(NamedTuple):
    x1: np.ndarray
    x2: np.ndarray
    dx1: np.ndarray
    dx2: np.ndarray
    region: np.ndarray


def region_of(t, spec):
    t = np.asarray(t, dtype=float)
    return np.where(t < -spec.L, LEFT, np.where(t > spec.L, RIGHT, MIDDLE)).astype(np.int8)


def gamma_eval(t, spec, complexified=True):
    """Point and analytic derivative of the (complexified) parameterization."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if complexified and np.any(np.abs(t) > spec.L_trunc * (1 + 1e-14)):
        raise ConfigError(f"parameter outside the truncated range [-{spec.L_trunc}, {spec.L_trunc}]")
    region = region_of(t, spec)
    tail = region != MIDDLE
    s = spec.window_radius

    h = spec.profile.value(t)
    dh = spec.profile.derivative(t)
    w = psi(t, s, spec)
    dw = psi_prime(t, s, spec)
    x2 = np.where(tail, 0.0, h * w)
    dx2 = np.where(tail, 0.0, dh * w + h * dw)

    x1 = t.astype(complex)
    dx1 = np.ones_like(x1)
    if complexified and spec.alpha > 0 and np.any(tail):
        x1[tail] += 1j * phi_i_alpha(t[tail], spec)
        dx1[tail] += 1j * phi_i_alpha_prime(t[tail], spec)
    return CurveSample(x1, x2.astype(complex), dx1, dx2.astype(complex), region)


def speed_and_normal(sample):
    """Complex speed sqrt(x1'^2 + x2'^2) and the complexified normal."""
    tail = sample.region != MIDDLE
    speed = np.sqrt(sample.dx1 ** 2 + sample.dx2 ** 2)
    speed = np.where(tail, sample.dx1, speed)
    n1 = np.where(tail, 0.0, sample.dx2 / speed)
    n2 = np.where(tail, -1.0, -sample.dx1 / speed)
    return speed, n1.astype(complex), n2.astype(complex)


def curve_height(x1, spec):
    """Height of the real interface above the point x1 (it is a graph)."""
    x1 = np.asarray(x1, dtype=float)
    return np.where(np.abs(x1) > spec.L, 0.0,
                    spec.profile.value(x1) * psi(x1, spec.window_radius, spec))


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------
@dataclass
class DiscretizedContour:
    """Panel-wise Nystrom data; all per-node arrays have length 16 * n_panels.

    ``weights`` already contain the complex speed, so a smooth integral is
    sum(weights * f(nodes)).
    """

    spec: ContourSpec
    breaks: np.ndarray  # panel endpoints in t, length n_panels + 1
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    dx1: np.ndarray
    dx2: np.ndarray
    speed: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    weights: np.ndarray
    region: np.ndarray
    panel_of: np.ndarray
    resolution: np.ndarray = field(default=None)  # Legendre tail per panel

    @property
    def n_panels(self):
        return len(self.breaks) - 1

    @property
    def n_nodes(self):
        return len(self.t)

    @property
    def order(self):
        return PANEL_ORDER

    def panel_slice(self, p):
        return slice(p * PANEL_ORDER, (p + 1) * PANEL_ORDER)

    @property
    def panel_lengths(self):
        return np.diff(self.breaks)

    @property
    def panel_arclengths(self):
        return np.abs(self.weights.reshape(self.n_panels, PANEL_ORDER).sum(axis=1))

    @property
    def panel_regions(self):
        mid = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        return region_of(mid, self.spec)

    @property
    def tail(self):
        return self.region != MIDDLE

    def dump_csv(self, path):
        """Write nodes as CSV (t, Re x1, Im x1, Re x2, normals, weights)."""
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "Re x1", "Im x1", "Re x2", "Re n1", "Im n1",
                          "Re n2", "Im n2", "Re w", "Im w"])
            for i in range(self.n_nodes):
                out.writerow([f"{v:.17g}" for v in (
                    self.t[i], self.x1[i].real, self.x1[i].imag, self.x2[i].real,
                    self.n1[i].real, self.n1[i].imag, self.n2[i].real, self.n2[i].imag,
                    self.weights[i].real, self.weights[i].imag)])


def _segment_counts(spec, n_panels):
    lt, L = spec.L_trunc, spec.L
    side = max(1, int(round(n_panels * (lt - L) / (2.0 * lt))))
    mid = n_panels - 2 * side
    if mid < 1:
        raise ConfigError(f"n_panels={n_panels} too small for three segments")
    return side, mid, side


def panel_breaks(spec, n_panels=None, segment_panels=None):
    """Panel endpoints aligned with t = -L and t = L.

    Panels are uniform inside each of the three segments; the counts are
    proportional to the segment lengths unless given explicitly.
    """
    if segment_panels is None:
        if n_panels is None or n_panels < 4:
            raise ConfigError("need n_panels >= 4")
        segment_panels = _segment_counts(spec, n_panels)
    nl, nm, nr = (int(v) for v in segment_panels)
    if min(nl, nm, nr) < 1:
        raise ConfigError(f"every segment needs a panel, got {segment_panels}")
    lt, L = spec.L_trunc, spec.L
    return np.concatenate([
        np.linspace(-lt, -L, nl + 1)[:-1],
        np.linspace(-L, L, nm + 1)[:-1],
        np.linspace(L, lt, nr + 1),
    ])


def _panel_tails(t_nodes, sample, h, weights):
    """Legendre tail per panel of x (relative to the panel size) and x' (relative to max |x'|).

    The speed itself is not tested: on steep profiles it has complex
    branch points close to the crests, but the quadrature only ever uses
    speed * normal = (x2', -x1') and x, which are as smooth as the profile.
    """
    npan = len(t_nodes) // PANEL_ORDER
    shape = (npan, PANEL_ORDER)
    out = np.zeros(npan)
    size = np.maximum(h, np.abs(weights.reshape(shape).sum(axis=1)))
    slope = np.max(np.hypot(np.abs(sample.dx1), np.abs(sample.dx2)).reshape(shape), axis=1)
    for vals, scale in ((sample.x1, size), (sample.x2, size), (sample.dx1, slope), (sample.dx2, slope)):
        c = legendre_coefficients(vals.reshape(shape))
        tail = np.max(np.abs(c[:, -2:]), axis=1)
        out = np.maximum(out, tail / np.maximum(scale, 1e-300))
    return out


def discretize_breaks(spec, breaks, max_tail=1e-8):
    """Build the Nystrom discretization on the given panel endpoints."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(PANEL_ORDER)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    t = ((a + b)[:, None] * 0.5 + half[:, None] * x[None, :]).ravel()
    sample = gamma_eval(t, spec)
    speed, n1, n2 = speed_and_normal(sample)
    if np.any(speed.real <= 0):
        raise ConfigError("complex speed reached the branch cut; contour leaves class G")
    weights = (half[:, None] * w[None, :]).ravel() * speed
    tails = _panel_tails(t, sample, 2 * half, weights)
    dc = DiscretizedContour(
        spec=spec, breaks=breaks, t=t, x1=sample.x1, x2=sample.x2, dx1=sample.dx1,
        dx2=sample.dx2, speed=speed, n1=n1, n2=n2, weights=weights, region=sample.region,
        panel_of=np.repeat(np.arange(len(a)), PANEL_ORDER), resolution=tails,
    )
    if max_tail is not None and np.max(tails) > max_tail:
        worst = int(np.argmax(tails))
        raise ResolutionError(
            f"panel {worst} on [{a[worst]:.4g}, {b[worst]:.4g}] under-resolved: "
            f"Legendre tail {tails[worst]:.2e} > {max_tail:.1e}; increase n_panels"
        )
    return dc


def discretize(spec, n_panels, segment_panels=None, max_tail=1e-8):
    """Uniform-in-segment panels covering [-L_trunc, L_trunc], 16 nodes each."""
    return discretize_breaks(spec, panel_breaks(spec, n_panels, segment_panels), max_tail)


def _arclength_breaks(spec, lo, hi, max_arclength, samples=4096):
    """Breaks on [lo, hi] at equal arc length, each piece at most ``max_arclength`` long."""
    x, w = gauss_legendre(PANEL_ORDER)
    edges = np.linspace(lo, hi, samples // PANEL_ORDER + 1)
    half = 0.5 * np.diff(edges)
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * x[None, :])
    sample = gamma_eval(t.ravel(), spec)
    speed = np.abs(np.sqrt(sample.dx1 ** 2 + sample.dx2 ** 2)).reshape(t.shape)
    cum = np.concatenate([[0.0], np.cumsum((speed * w[None, :]).sum(axis=1) * half)])
    count = max(1, int(math.ceil(cum[-1] / max_arclength)))
    return np.interp(np.linspace(0.0, cum[-1], count + 1), cum, edges)


def _bend_breaks(spec, breaks, max_bend, samples=65, max_rounds=40):
    """Bisect middle panels until arc length times peak curvature is at most ``max_bend``.

    Sharp crests need short panels even where the geometry itself is
    resolved, because the density varies on the scale of the radius of
    curvature there.
    """
    L = spec.L
    for _ in range(max_rounds):
        a, b = breaks[:-1], breaks[1:]
        t = a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, samples)[None, :]
        inside = np.abs(t) <= L
        _, dh, d2h = height_derivatives(np.clip(t, -L, L), spec)
        slope = np.sqrt(1.0 + dh * dh)
        curvature = np.where(inside, np.abs(d2h) / slope ** 3, 0.0).max(axis=1)
        speed = np.where(inside, slope, 1.0)
        arclength = (0.5 * (speed[:, 1:] + speed[:, :-1]) * np.diff(t, axis=1)).sum(axis=1)
        split = arclength * curvature > max_bend
        if not np.any(split):
            return breaks
        breaks = np.sort(np.concatenate([breaks, 0.5 * (a + b)[split]]))
    raise ResolutionError("curvature refinement did not settle")


def discretize_adaptive(spec, max_arclength, max_bend=20.0, tail_tol=1e-12, max_tail=1e-8, max_rounds=30):
    """Panels of nearly equal arc length (at most ``max_arclength``), bisected until resolved.

    Meant for strongly oscillating interfaces where uniform panels in t
    would under-resolve the steep flanks and over-resolve the flat parts.
    Middle panels are further bisected while their arc length times their
    peak curvature exceeds ``max_bend`` (None disables this).  The breaks
    still include t = -L and t = L.
    """
    lt, L = spec.L_trunc, spec.L
    breaks = np.concatenate([
        _arclength_breaks(spec, -lt, -L, max_arclength)[:-1],
        _arclength_breaks(spec, -L, L, max_arclength)[:-1],
        _arclength_breaks(spec, L, lt, max_arclength),
    ])
    breaks[[0, -1]] = -lt, lt
    if max_bend is not None:
        breaks = _bend_breaks(spec, breaks, max_bend)
    for _ in range(max_rounds):
        dc = discretize_breaks(spec, breaks, max_tail=None)
        split = dc.resolution > tail_tol
        if not np.any(split):
            break
        mids = 0.5 * (breaks[:-1] + breaks[1:])[split]
        breaks = np.sort(np.concatenate([breaks, mids]))
    else:
        raise ResolutionError("adaptive panel refinement did not settle")
    return discretize_breaks(spec, breaks, max_tail)


def class_g_violations(x1, tol=0.0):
    """Count node pairs breaking sgn Re(y1 - x1) = sgn Im(y1 - x1).

    Only pairs where one of the two points has a nonzero imaginary part are
    constrained.  O(N^2); used as a brute-force check.
    """
    x1 = np.asarray(x1, dtype=complex)
    d = x1[None, :] - x1[:, None]
    constrained = (x1.imag[None, :] != 0) | (x1.imag[:, None] != 0)
    ok = np.sign(d.real) == np.sign(d.imag)
    np.fill_diagonal(ok, True)
    return int(np.count_nonzero(constrained & ~ok))
