import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfspace_bie.contour import (
    LEFT,
    MIDDLE,
    RIGHT,
    ContourSpec,
    class_g_violations,
    curve_height,
    discretize,
    discretize_adaptive,
    gamma_eval,
    height_derivatives,
    panel_breaks,
    phi,
    phi_i_alpha,
    phi_i_alpha_prime,
    preset,
    psi,
    psi_prime,
    speed_and_normal,
)
from halfspace_bie.errors import ConfigError, ResolutionError


@pytest.fixture(scope="module")
def spec72():
    return preset("paper-7.2")


# ---------------------------------------------------------------- smoothing functions
def test_phi_at_zero():
    assert phi(0.0) == pytest.approx(-0.28209479177387814, abs=1e-17)
    assert phi(0.0) == pytest.approx(-1 / (2 * math.sqrt(math.pi)), rel=1e-15)


def test_phi_right_asymptote():
    assert abs(phi(6.0)) <= 1e-16


def test_phi_left_asymptote_against_integral():
    # phi(x) = -1/2 int_x^inf erfc
    with mp.workdps(30):
        oracle = float(-0.5 * mp.quad(mp.erfc, [-8, 0, 8, 20]))
    assert phi(-8.0) == pytest.approx(oracle, abs=1e-14)
    assert abs(phi(-8.0) - (-8.0)) <= 1e-14


@pytest.mark.parametrize("x", [-3.0, -0.4, 0.0, 1.2, 2.5])
def test_phi_matches_integral(x):
    with mp.workdps(30):
        oracle = float(-0.5 * mp.quad(mp.erfc, [x, x + 5, 30]))
    assert phi(x) == pytest.approx(oracle, abs=1e-15)


def test_phi_i_alpha_is_small_inside(spec72):
    assert phi_i_alpha(0.0, spec72) == 0.0
    for frac in (0.1, 0.5, 0.9):
        assert abs(phi_i_alpha(frac * spec72.L, spec72)) < spec72.epsilon


def test_phi_i_alpha_linear_far_out(spec72):
    x = spec72.L + 2 * spec72.t0 + 3
    assert abs(phi_i_alpha(x, spec72) - (x - spec72.L - spec72.t0)) < spec72.epsilon


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 14.0), st.floats(0.1, 2.0))
def test_phi_i_alpha_is_odd(x, alpha):
    spec = preset("paper-7.2", alpha=alpha)
    assert phi_i_alpha(-x, spec) == pytest.approx(-phi_i_alpha(x, spec), abs=1e-15)


def test_psi_window_values(spec72):
    assert abs(psi(0.0, 9.0, spec72) - 2.0) < spec72.epsilon
    assert abs(psi(9.5, 9.0, spec72)) < spec72.epsilon
    assert psi(3.7, 9.0, spec72) == psi(-3.7, 9.0, spec72)


@pytest.mark.parametrize("func, deriv", [
    (lambda x, s: phi_i_alpha(x, s), lambda x, s: phi_i_alpha_prime(x, s)),
    (lambda x, s: psi(x, 9.0, s), lambda x, s: psi_prime(x, 9.0, s)),
])
def test_smoothing_derivatives(spec72, func, deriv):
    x = np.linspace(-14, 14, 57)
    h = 1e-5
    fd = (func(x + h, spec72) - func(x - h, spec72)) / (2 * h)
    assert np.max(np.abs(fd - deriv(x, spec72))) <= 1e-8


# ---------------------------------------------------------------- spec validation
@pytest.mark.parametrize("kwargs", [
    dict(k=-1.0), dict(k=0.0), dict(delta=0.0), dict(delta=10.0), dict(epsilon=0.0),
    dict(epsilon=1.0), dict(alpha=-0.5), dict(alpha=0.0), dict(L_trunc_override=9.0),
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        preset("paper-7.2", **kwargs)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("nope")


def test_derived_parameters(spec72):
    eps = 1e-12
    assert spec72.t0 == pytest.approx(0.5 * math.sqrt(math.log(1 / eps)), rel=1e-15)
    assert spec72.L_trunc == pytest.approx(10 + spec72.t0 + math.log(1 / eps) / (2 * math.pi), rel=1e-15)
    # truncation rule
    assert spec72.k * phi_i_alpha(spec72.L_trunc, spec72) >= math.log(1 / eps) - 1


@pytest.mark.parametrize("alpha", [0.5, 0.75, 1.25, 2.0])
def test_truncation_rule_other_slopes(alpha):
    spec = preset("paper-7.2", alpha=alpha)
    assert spec.k * phi_i_alpha(spec.L_trunc, spec) >= math.log(1 / spec.epsilon) - 1


# ---------------------------------------------------------------- parameterization
def test_gamma_at_origin(spec72):
    sample = gamma_eval(0.0, spec72, complexified=False)
    assert sample.x1[0] == 0
    # exp(0) cos(0) psi_9(0), psi from the mpmath erfc
    s, t0 = spec72.window_radius, spec72.t0
    with mp.workdps(30):
        oracle = float(2 - mp.erfc(2 * (s - t0)) - mp.erfc(2 * (s - t0)))
    assert sample.x2[0].real == pytest.approx(oracle, abs=1e-15)
    assert abs(sample.x2[0] - 2.0) < spec72.epsilon


@pytest.mark.parametrize("name", ["paper-7.2", "paper-7.3"])
def test_gamma_derivative_against_central_difference(name):
    spec = preset(name)
    rng = np.random.default_rng(1)
    t = rng.uniform(-spec.L_trunc + 1e-5, spec.L_trunc - 1e-5, 100)
    t = t[np.abs(np.abs(t) - spec.L) > 1e-5]  # the tail/middle switch is not differentiable at float level
    h = 1e-6
    plus, minus, mid = gamma_eval(t + h, spec), gamma_eval(t - h, spec), gamma_eval(t, spec)
    for fd, exact in (((plus.x1 - minus.x1) / (2 * h), mid.dx1), ((plus.x2 - minus.x2) / (2 * h), mid.dx2)):
        scale = max(1.0, np.max(np.abs(exact)))
        assert np.max(np.abs(fd - exact)) <= 1e-8 * scale


def test_height_second_derivative():
    spec = preset("paper-7.3")
    t = np.linspace(-19.5, 19.5, 301)
    h = 1e-5
    _, d_plus, _ = height_derivatives(t + h, spec)
    _, d_minus, _ = height_derivatives(t - h, spec)
    _, _, second = height_derivatives(t, spec)
    assert np.max(np.abs((d_plus - d_minus) / (2 * h) - second)) <= 1e-5 * np.max(np.abs(second))


def test_gamma_rejects_out_of_range(spec72):
    with pytest.raises(ConfigError):
        gamma_eval(spec72.L_trunc + 0.1, spec72)


def test_second_coordinate_is_real_and_middle_is_real(spec72):
    t = np.linspace(-spec72.L_trunc, spec72.L_trunc, 2001)
    sample = gamma_eval(t, spec72)
    assert np.all(sample.x2.imag == 0)
    middle = np.abs(t) <= spec72.L
    assert np.all(sample.x1[middle].imag == 0)
    assert np.all(np.sign(sample.x1.imag[~middle]) == np.sign(t[~middle]))


def test_region_tag_tie_break(spec72):
    sample = gamma_eval([-spec72.L, spec72.L, -spec72.L - 1, spec72.L + 1], spec72)
    assert list(sample.region) == [MIDDLE, MIDDLE, LEFT, RIGHT]


def test_imaginary_part_monotone(spec72):
    t = np.linspace(-spec72.L_trunc, spec72.L_trunc, 10_000)
    im = gamma_eval(t, spec72).x1.imag
    assert np.all(np.diff(im) >= 0)


def test_complexification_is_odd(spec72):
    t = np.linspace(0, spec72.L_trunc, 1000)
    assert np.max(np.abs(gamma_eval(-t, spec72).x1.imag + gamma_eval(t, spec72).x1.imag)) <= 1e-15


@pytest.mark.parametrize("name", ["paper-7.2", "paper-7.3"])
def test_flat_margin(name):
    spec = preset(name)
    t = np.concatenate([np.linspace(-spec.L, -spec.L + spec.delta, 500),
                        np.linspace(spec.L - spec.delta, spec.L, 500)])
    assert np.max(np.abs(gamma_eval(t, spec, complexified=False).x2)) < 10 * spec.epsilon


def test_tail_normals_are_exact(spec72):
    t = np.array([-spec72.L_trunc, -11.0, 10.5, spec72.L_trunc])
    speed, n1, n2 = speed_and_normal(gamma_eval(t, spec72))
    assert np.all(n1 == 0) and np.all(n2 == -1)


def test_curve_height_is_the_graph(spec72):
    x = np.linspace(-12, 12, 97)
    sample = gamma_eval(np.clip(x, -spec72.L_trunc, spec72.L_trunc), spec72, complexified=False)
    assert np.array_equal(curve_height(x, spec72)[np.abs(x) <= spec72.L], sample.x2.real[np.abs(x) <= spec72.L])
    assert np.all(curve_height(x[np.abs(x) > spec72.L], spec72) == 0)


# ---------------------------------------------------------------- discretization
def test_node_count_and_breaks(spec72):
    dc = discretize(spec72, 64)
    assert dc.n_nodes == 16 * 64 == 16 * dc.n_panels
    assert dc.breaks[0] == -spec72.L_trunc and dc.breaks[-1] == spec72.L_trunc
    assert -spec72.L in dc.breaks and spec72.L in dc.breaks
    assert np.all(dc.speed.real > 0)


def test_panel_breaks_segments(spec72):
    b = panel_breaks(spec72, segment_panels=(3, 10, 3))
    assert len(b) == 17
    assert np.allclose(np.diff(b[3:14]), 2 * spec72.L / 10, rtol=1e-14)


def test_doubling_panels_halves_lengths(spec72):
    a = panel_breaks(spec72, segment_panels=(5, 20, 5))
    b = panel_breaks(spec72, segment_panels=(10, 40, 10))
    assert np.allclose(np.repeat(np.diff(a), 2) / 2, np.diff(b), rtol=1e-13, atol=0)


def test_smooth_weights_integrate_arc_length():
    spec = preset("flat")
    dc = discretize(spec, 64)
    assert dc.weights[~dc.tail].sum().real == pytest.approx(2 * spec.L, rel=1e-14)


def test_real_contour_has_no_imaginary_parts():
    spec = preset("paper-7.2", alpha=0.0, L_trunc_override=16.0)
    dc = discretize(spec, 64)
    assert np.all(dc.x1.imag == 0) and np.all(dc.x2.imag == 0)


def test_class_g_exhaustive(spec72):
    dc = discretize(spec72, 24, max_tail=None)
    assert class_g_violations(dc.x1) == 0


def test_class_g_detects_violation():
    x1 = np.array([0.0, 1.0 - 1.0j])
    assert class_g_violations(x1) == 2


def test_under_resolution_is_reported(spec72):
    with pytest.raises(ResolutionError, match="increase n_panels"):
        discretize(spec72, 8)
    dc = discretize(spec72, 8, max_tail=None)
    assert dc.resolution.max() > 1e-8


def test_too_few_panels(spec72):
    with pytest.raises(ConfigError):
        discretize(spec72, 3)


def test_adaptive_discretization_resolves_steep_profile():
    spec = preset("paper-7.3")
    dc = discretize_adaptive(spec, max_arclength=3.0, tail_tol=1e-9)
    assert dc.resolution.max() <= 1e-9
    assert -spec.L in dc.breaks and spec.L in dc.breaks


def test_dump_csv_columns(tmp_path, spec72):
    dc = discretize(spec72, 16, max_tail=None)
    path = tmp_path / "nodes.csv"
    dc.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,Re x1,Im x1,Re x2,Re n1,Im n1,Re n2,Im n2,Re w,Im w"
    assert len(lines) == dc.n_nodes + 1
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == dc.t[0] and first[2] == dc.x1[0].imag


def test_custom_spec_accepts_profile():
    spec = ContourSpec(k=3.0, L=6.0, delta=1.5)
    dc = discretize(spec, 48)
    assert dc.spec.L_trunc == pytest.approx(6.0 + spec.t0 + math.log(1e12) / 3.0)


def test_bend_refinement_shortens_crest_panels():
    spec = preset("paper-7.3", L=6.0)
    plain = discretize_adaptive(spec, max_arclength=2.0, max_bend=None, max_tail=None)
    bent = discretize_adaptive(spec, max_arclength=2.0, max_bend=20.0, max_tail=None)
    assert bent.n_panels > plain.n_panels
    assert set(plain.breaks) <= set(bent.breaks)
    t = np.linspace(-spec.L, spec.L, 20001)
    _, dh, d2h = height_derivatives(t, spec)
    curvature = np.abs(d2h) / (1 + dh * dh) ** 1.5
    crest = t[np.argmax(curvature)]
    p = np.searchsorted(bent.breaks, crest) - 1
    assert bent.panel_arclengths[p] * curvature.max() <= 20.0 * 1.05


def test_bend_refinement_leaves_flat_preset_alone():
    spec = preset("flat")
    a = discretize_adaptive(spec, max_arclength=2.0, max_bend=None)
    b = discretize_adaptive(spec, max_arclength=2.0, max_bend=20.0)
    assert np.array_equal(a.breaks, b.breaks)
