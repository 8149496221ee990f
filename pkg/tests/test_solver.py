import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from conftest import solve_point_source
from halfspace_bie.contour import MIDDLE, discretize, gamma_eval, preset
from halfspace_bie.errors import SolverError
from halfspace_bie.kernels import IncidentField, incident_eval
from halfspace_bie.quadrature import lagrange_basis
from halfspace_bie.solver import (
    SystemMatrix,
    assemble,
    boundary_rhs,
    condition_estimate,
    decay_diagnostic,
    relative_residual,
    solve,
    solve_structured,
)

K = 2 * math.pi
# regression bound for the weighted tail decay of the bump-cosine density
DECAY_BOUND = 50.0


# ---------------------------------------------------------------- flat and trivial cases
@pytest.fixture(scope="module")
def flat_system():
    dc = discretize(preset("flat"), 64)
    return assemble(dc, K)


def test_flat_contour_gives_identity(flat_system):
    assert np.array_equal(flat_system.matrix, np.eye(flat_system.n))


def test_identity_system_returns_rhs(flat_system):
    dc = flat_system.contour
    field = IncidentField.point_source(K, (0.1, -1.0))
    rhs = boundary_rhs(dc, lambda a, b: incident_eval(field, a, b))
    density = solve(flat_system, rhs)
    assert np.array_equal(density.values, rhs)
    assert density.residual == 0.0


def test_flat_decay_diagnostic_is_the_data_ratio(flat_system):
    dc = flat_system.contour
    field = IncidentField.point_source(K, (0.1, -1.0))
    f = incident_eval(field, dc.x1, dc.x2)
    density = solve(flat_system, -2 * f)
    radius = np.sqrt(np.abs(dc.x1) ** 2 + np.abs(dc.x2) ** 2)
    weighted = np.exp(K * np.abs(dc.x1.imag)) * np.sqrt(1 + radius) * np.abs(f)
    want = np.max(weighted[dc.tail]) / np.max(np.abs(f[~dc.tail]))
    assert decay_diagnostic(density) == pytest.approx(want, rel=1e-14)


def test_zero_data_gives_zero_density(bump_problem):
    density = solve(bump_problem.system, np.zeros(bump_problem.system.n))
    assert not np.any(density.values)


def test_rhs_shape_is_checked(flat_system):
    with pytest.raises(SolverError):
        solve(flat_system, np.ones(3))


def test_singular_matrix_is_reported(flat_system):
    bad = SystemMatrix(flat_system.contour, K, np.zeros((flat_system.n, flat_system.n), dtype=complex))
    with pytest.raises(SolverError):
        solve(bad, np.ones(flat_system.n))


def test_small_random_system_residual():
    rng = np.random.default_rng(8)
    a = np.eye(8) + 0.3 * (rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    system = SystemMatrix(None, K, a)
    rhs = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    density = solve(system, rhs)
    assert relative_residual(a, density.values, rhs) <= 1e-13
    assert density.residual <= 1e-13


# ---------------------------------------------------------------- the bump-cosine problem
def test_tail_tail_block_is_exactly_zero(bump_problem):
    block = bump_problem.system.tail_tail_block()
    assert block.size > 0 and not np.any(block)


def test_residual_and_linearity(bump_problem):
    system, dc = bump_problem.system, bump_problem.dc
    assert bump_problem.density.residual <= 1e-12
    other = IncidentField.plane_wave_reflected(K, -math.pi / 3)
    rhs1 = boundary_rhs(dc, bump_problem.data)
    rhs2 = boundary_rhs(dc, lambda a, b: incident_eval(other, a, b))
    s1, s2, s12 = solve(system, rhs1).values, solve(system, rhs2).values, solve(system, rhs1 + rhs2).values
    assert np.max(np.abs(s12 - s1 - s2)) <= 1e-12 * np.max(np.abs(s12))


def _independent_middle_integral(dc, sigma, targets):
    """sum over middle panels of int g(x, y(s)) sigma(s) |y'(s)| ds by scipy quadrature."""
    spec = dc.spec
    x1, x2 = dc.x1[targets], dc.x2[targets]
    total = np.zeros(len(targets), dtype=complex)
    for p in np.nonzero(dc.panel_regions == MIDDLE)[0]:
        a, b = dc.breaks[p], dc.breaks[p + 1]
        vals = sigma[dc.panel_slice(p)]

        def integrand(s):
            y = gamma_eval(np.array([s]), spec, complexified=False)
            dens = lagrange_basis([(2 * s - a - b) / (b - a)])[0] @ vals
            d1, d2 = x1 - y.x1[0], x2 - y.x2[0]
            r = np.sqrt(d1 * d1 + d2 * d2)
            # (x - y) . n |y'| with n |y'| = (y2', -1)
            dot = d1 * y.dx2[0] - d2 * y.dx1[0]
            return -0.5j * K * scipy.special.hankel1(1, K * r) * dot / r * dens

        val, _ = scipy.integrate.quad_vec(integrand, a, b, epsabs=1e-14, epsrel=1e-13)
        total += val
    return total


def test_tail_values_satisfy_the_equation(bump_problem):
    # on the tails K_TT = 0, so sigma = -2 f - int_M g sigma
    dc, density = bump_problem.dc, bump_problem.density
    rng = np.random.default_rng(3)
    targets = np.sort(rng.choice(np.nonzero(dc.tail)[0], 10, replace=False))
    integral = _independent_middle_integral(dc, density.values, targets)
    want = -2 * bump_problem.data(dc.x1[targets], dc.x2[targets]) - integral
    assert np.max(np.abs(density.values[targets] - want)) <= 1e-10


def test_condition_estimate_matches_svd():
    problem = solve_point_source(preset("paper-7.2"), segment_panels=(10, 22, 10))
    est = condition_estimate(problem.system)
    assert est == pytest.approx(np.linalg.cond(problem.system.matrix), rel=1e-2)


def test_condition_is_mesh_independent(bump_problem):
    coarse = solve_point_source(preset("paper-7.2"), segment_panels=(10, 22, 10))
    fine = condition_estimate(bump_problem.system)
    assert np.isfinite(fine)
    assert abs(condition_estimate(coarse.system) / fine - 1) <= 0.2


def test_decay_diagnostic_is_bounded(bump_problem):
    value = bump_problem.density.decay
    assert np.isfinite(value) and value <= DECAY_BOUND


def test_density_dump(bump_problem, tmp_path):
    path = tmp_path / "density.csv"
    bump_problem.density.dump_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,Re x1,Im x1,Re sigma,Im sigma,abs sigma,weighted_abs"
    assert len(lines) == bump_problem.dc.n_nodes + 1
    row = [float(v) for v in lines[5].split(",")]
    assert row[3] == bump_problem.density.values[4].real


@pytest.mark.slow
def test_real_contour_limit(bump_problem):
    # alpha = 0 with real tails out to 200 wavelengths reproduces the middle density slowly
    spec = preset("paper-7.2", alpha=0.0, L_trunc_override=200.0)
    n_tail = int(math.ceil((200.0 - spec.L) / 0.7))
    dc = discretize(spec, None, segment_panels=(n_tail, 44, n_tail))
    density = solve_structured(dc, K, bump_problem.data)
    assert density.residual <= 1e-10
    mid_real = density.values[dc.region == MIDDLE]
    mid_complex = bump_problem.density.values[bump_problem.dc.region == MIDDLE]
    assert np.max(np.abs(mid_real - mid_complex)) <= 1e-4 * np.max(np.abs(mid_complex))
