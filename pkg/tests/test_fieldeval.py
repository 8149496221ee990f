import math

import numpy as np
import pytest

from halfspace_bie.contour import curve_height, preset
from halfspace_bie.errors import ConfigError, HalfspaceError
from halfspace_bie.experiments import boundary_trace, upward_standoff
from halfspace_bie.fieldeval import (
    CONE,
    STRIP,
    FieldGrid,
    eval_dlp,
    grid_points,
    incident_grid,
    near_tail_flag,
    region_mask,
    scattered_field,
    total_field,
)
from halfspace_bie.kernels import IncidentField, incident_eval
from halfspace_bie.solver import boundary_rhs, solve

K = 2 * math.pi


@pytest.fixture(scope="module")
def plane_wave_problem(bump_problem):
    """Sound-soft scattering of a reflected plane wave, reusing the factored bump matrix."""
    wave = IncidentField.plane_wave_reflected(K, -math.pi / 4)
    data = lambda a, b: -incident_eval(wave, a, b)
    density = solve(bump_problem.system, boundary_rhs(bump_problem.dc, data))
    return wave, density


# ---------------------------------------------------------------- masks
@pytest.mark.parametrize("point, strip, cone", [
    ((0.0, 5.0), True, True),
    ((15.0, 1.0), False, False),
    ((15.0, 10.0), False, True),
    ((-15.0, 10.0), False, True),
    ((0.0, -3.0), False, False),
])
def test_region_mask_examples(point, strip, cone):
    spec = preset("paper-7.2")
    assert bool(region_mask([point[0]], [point[1]], spec, STRIP)[0]) is strip
    assert bool(region_mask([point[0]], [point[1]], spec, CONE)[0]) is cone


def test_mask_excludes_points_on_the_curve():
    spec = preset("paper-7.2")
    x1 = np.linspace(-9, 9, 7)
    assert not np.any(region_mask(x1, curve_height(x1, spec), spec))


def test_mask_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        region_mask([0.0], [1.0], preset("paper-7.2"), "disk")


def test_near_tail_flag():
    spec = preset("paper-7.2")
    flags = near_tail_flag([10.2, -9.9, 0.0, 10.0], [0.3, 0.1, 1.0, 2.0], spec)
    assert list(flags) == [True, True, False, False]


# ---------------------------------------------------------------- evaluation
def test_zero_density_gives_zero_field(bump_problem):
    dc = bump_problem.dc
    u = eval_dlp(dc, np.zeros(dc.n_nodes), [0.0, 1.0], [3.0, 2.0], K)
    assert not np.any(u)


def test_targets_on_the_curve_are_rejected(bump_problem):
    dc = bump_problem.dc
    with pytest.raises(HalfspaceError):
        eval_dlp(dc, bump_problem.density.values, [0.5], curve_height(np.array([0.5]), dc.spec), K)


def test_field_near_the_curve_matches_the_exact_solution(bump_problem):
    # the corrected rule keeps full accuracy a small fraction of a panel above the interface
    dc = bump_problem.dc
    t = np.array([-6.3, -0.7, 2.2, 5.9])
    for distance in (1e-1, 1e-2, 1e-4):
        x1, x2 = upward_standoff(dc, t, distance)
        u = eval_dlp(dc, bump_problem.density.values, x1, x2, K)
        exact = incident_eval(bump_problem.field, x1, x2)
        assert np.max(np.abs(u - exact) / np.abs(exact)) <= 1e-9


def test_far_field_decays_like_inverse_square_root(bump_problem):
    dc = bump_problem.dc
    direction = np.array([0.1, 1.0]) / math.hypot(0.1, 1.0)
    near, far = 1e3 * direction, 4e3 * direction
    u = eval_dlp(dc, bump_problem.density.values, [near[0], far[0]], [near[1], far[1]], K)
    assert abs(u[1]) / abs(u[0]) == pytest.approx(0.5, rel=0.2)


def test_helmholtz_residual_of_the_scattered_field(plane_wave_problem, bump_problem):
    _, density = plane_wave_problem
    dc = bump_problem.dc
    rng = np.random.default_rng(5)
    centres = np.column_stack([rng.uniform(-8, 8, 10), rng.uniform(2, 6, 10)])
    h = 1e-3
    offsets = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]])
    pts = (centres[:, None, :] + offsets[None]).reshape(-1, 2)
    u = eval_dlp(dc, density.values, pts[:, 0], pts[:, 1], K).reshape(-1, 5)
    lap = (u[:, 1] + u[:, 2] + u[:, 3] + u[:, 4] - 4 * u[:, 0]) / h ** 2
    assert np.max(np.abs(lap + K ** 2 * u[:, 0])) <= 1e-4 * K ** 2 * np.max(np.abs(u[:, 0]))


# ---------------------------------------------------------------- grids and totals
def test_grid_points_layout():
    x1, x2, shape = grid_points((-1, 1), (0, 2), 3, 5)
    assert shape == (5, 3) and len(x1) == 15
    assert list(x1[:3]) == [-1.0, 0.0, 1.0] and x2[3] == 0.5


def test_total_field_adds_incident(bump_problem):
    dc = bump_problem.dc
    x1, x2, shape = grid_points((-12, 12), (-1, 6), 13, 8)
    scat = scattered_field(dc, bump_problem.density, x1, x2, STRIP, shape=shape)
    assert np.all(np.isnan(scat.values[~scat.mask]))
    wave = IncidentField.plane_wave_reflected(K, -math.pi / 4)
    total = total_field(wave, scat)
    inc = incident_grid(wave, scat)
    m = scat.mask
    assert np.array_equal(total.values[m], inc.values[m] + scat.values[m])
    zero = FieldGrid(x1, x2, m.copy(), np.zeros(len(x1), dtype=complex), scat.near_tail)
    assert np.array_equal(total_field(zero, scat).values[m], scat.values[m])


def test_total_field_rejects_mismatched_grids(bump_problem):
    dc = bump_problem.dc
    x1, x2, shape = grid_points((-5, 5), (1, 4), 4, 3)
    scat = scattered_field(dc, bump_problem.density, x1, x2, shape=shape)
    other = FieldGrid(x1 + 1, x2, scat.mask, scat.values, scat.near_tail)
    with pytest.raises(HalfspaceError):
        total_field(other, scat)


def test_field_csv_marks_masked_targets(bump_problem, tmp_path):
    dc = bump_problem.dc
    x1, x2 = np.array([0.0, 15.0]), np.array([3.0, 1.0])
    grid = scattered_field(dc, bump_problem.density, x1, x2)
    path = tmp_path / "field.csv"
    grid.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,mask,Re u,Im u,abs u,flag_near_tail"
    assert lines[2].split(",")[2:6] == ["0", "nan", "nan", "nan"]
    assert float(lines[1].split(",")[3]) == grid.values[0].real


# ---------------------------------------------------------------- sound-soft boundary trace
def test_total_field_vanishes_on_the_interface(plane_wave_problem, bump_problem):
    wave, density = plane_wave_problem
    t = np.linspace(-8.5, 8.5, 20)
    _, extrapolated = boundary_trace(bump_problem.dc, density, wave, t, 1e-3)
    assert np.max(np.abs(extrapolated)) <= 1e-6


@pytest.mark.xfail(strict=True, reason="the total field at stand-off d is O(d |du/dn|), about 1e-2 at d = 1e-3")
def test_total_field_at_small_standoff_is_below_1e6(plane_wave_problem, bump_problem):
    wave, density = plane_wave_problem
    t = np.linspace(-8.5, 8.5, 20)
    at_standoff, _ = boundary_trace(bump_problem.dc, density, wave, t, 1e-3)
    assert np.max(np.abs(at_standoff)) <= 1e-6
