"""
Tests for the weak formulations and their linear systems.
"""

import numpy as np
import pytest
import scipy.sparse as sps
from unittest.mock import patch

from cdlab.exceptions import SolverError
from cdlab.formulations import Formulation, FormulationKind, LinearSolver
from cdlab.quadrature import QuadratureGrid
from cdlab.small_scales import SmallScaleField
from cdlab.spline_space import SplineSpace2D, project_l2
from cdlab.time_integration import StepState, make_alpha
from cdlab.verify import oracle_system_matrix

VELOCITY = (1.0, 0.5)
KAPPA = 0.01


def smooth(x, y):
    return np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) + 0.5 * np.cos(2 * np.pi * x)


def make_formulation(kind, mesh=8, degree=2, dt=0.05, kappa=KAPPA, **kwargs):
    grid = QuadratureGrid(SplineSpace2D.uniform(degree, mesh))
    return Formulation(kind, grid, VELOCITY, kappa, make_alpha("crank-nicolson", dt), **kwargs)


def test_kind_properties():
    """Weight signs and orthogonality factors of every kind."""
    K = FormulationKind
    assert [K.parse(n).weight_sign for n in ("supgs", "vmss", "glss", "vmsd", "supgd", "glsd", "do")] == \
        [0, 1, -1, 1, 0, -1, 1]
    assert K.SUPG_STATIC.orthogonality_factor == 1
    assert K.VMS_DYNAMIC.orthogonality_factor == 2
    assert K.GLS_DYNAMIC.orthogonality_factor == 0
    assert K.SUPG_DYNAMIC_INCONSISTENT.orthogonality_factor == 0
    assert K.GALERKIN.orthogonality_factor == 0 and K.DYNAMIC_ORTHOGONAL.orthogonality_factor == 0
    assert not K.SUPG_DYNAMIC_INCONSISTENT.consistent
    assert K.DYNAMIC_ORTHOGONAL.dynamic and K.DYNAMIC_ORTHOGONAL.orthogonal


def test_parse_unknown_kind():
    """Unknown names list the valid choices."""
    with pytest.raises(ValueError, match="glsd"):
        FormulationKind.parse("streamline")
    assert FormulationKind.parse("GLSD") is FormulationKind.GLS_DYNAMIC


def test_do_requirements():
    """The orthogonal form needs positive diffusivity and quadratic splines."""
    with pytest.raises(ValueError):
        make_formulation("do", kappa=0.0)
    with pytest.raises(ValueError):
        make_formulation("do", degree=1)


@pytest.mark.parametrize("kind", list(FormulationKind))
def test_matches_oracle_assembly(kind):
    """The Kronecker assembly agrees with an element loop for every kind."""
    space = SplineSpace2D.uniform(2, 4)
    alpha = make_alpha("crank-nicolson", 0.05)
    form = Formulation(kind, QuadratureGrid(space), VELOCITY, 0.05, alpha)
    state, field = form.initial_state(np.zeros(space.num_functions))
    system = form.assemble(state, field)
    oracle = oracle_system_matrix(kind, space, VELOCITY, 0.05, alpha)
    np.testing.assert_allclose(system.matrix.toarray(), oracle, atol=1e-12)


def test_linear_splines_coincide():
    """With p = 1 the Laplacian vanishes and SUPG, VMS and GLS give one matrix."""
    matrices = []
    for kind in ("supgs", "vmss", "glss"):
        form = make_formulation(kind, degree=1)
        state, field = form.initial_state(np.zeros(form.num_functions))
        matrices.append(form.assemble(state, field).matrix)
    for other in matrices[1:]:
        assert abs(matrices[0] - other).max() <= 1e-14


def test_galerkin_convection_is_skew():
    """Periodic convection satisfies c^T C c = 0."""
    form = make_formulation("galerkin")
    c = np.random.default_rng(5).normal(size=form.num_functions)
    assert abs(c @ (form.convection @ c)) <= 1e-12 * np.linalg.norm(c) ** 2
    assert abs(form.convection + form.convection.T).max() <= 1e-13


@pytest.mark.parametrize("kind", list(FormulationKind))
def test_constant_state_is_steady(kind):
    """A constant field has zero residual, zero small-scales and stays put."""
    form = make_formulation(kind)
    state, field = form.initial_state(np.ones(form.num_functions))
    np.testing.assert_allclose(state.phi_dot, 0.0, atol=1e-12)
    for _ in range(3):
        result = form.step(state, field)
        state, field = result.state, result.field
    np.testing.assert_allclose(state.phi, 1.0, atol=1e-11)
    np.testing.assert_allclose(result.small_scale_alpha, 0.0, atol=1e-11)
    np.testing.assert_allclose(field.value, 0.0, atol=1e-11)


def test_galerkin_has_no_small_scales():
    """Galerkin steps report zero small-scales."""
    form = make_formulation("galerkin")
    state, field = form.initial_state(project_l2(form.space, smooth, form.grid))
    result = form.step(state, field)
    assert np.all(result.small_scale_alpha == 0.0)
    assert result.sigma is None
    assert result.state.t == pytest.approx(0.05)


def test_static_initial_small_scales():
    """Static kinds start from phi' = -tau R and dynamic kinds from phi' = 0, phidot' = -R."""
    static = make_formulation("glss")
    phi0 = project_l2(static.space, smooth, static.grid)
    state, field = static.initial_state(phi0)
    residual = static.residual_points(state.phi, state.phi_dot)
    np.testing.assert_allclose(field.value, -static.tau_static * residual, atol=1e-12)
    assert not field.dynamic

    dynamic = make_formulation("glsd")
    state, field = dynamic.initial_state(phi0)
    np.testing.assert_allclose(field.value, 0.0)
    np.testing.assert_allclose(field.rate, -dynamic.residual_points(state.phi, state.phi_dot), atol=1e-12)


def test_inconsistent_supg_difference():
    """Consistent and inconsistent SUPG small-scales differ by tau_eff kappa Lap phi at n+alpha_f."""
    consistent = make_formulation("supgd")
    inconsistent = make_formulation("supgd-inconsistent")
    rng = np.random.default_rng(2)
    state = StepState(rng.normal(size=consistent.num_functions), np.zeros(consistent.num_functions))
    solution = rng.normal(size=consistent.num_functions)
    field = SmallScaleField(consistent.grid.num_points)

    small_c, _ = consistent.recover_small_scales(consistent.assemble(state, field), solution)
    system_i = inconsistent.assemble(state, field)
    small_i, _ = inconsistent.recover_small_scales(system_i, solution)

    alpha = consistent.alpha
    phi_alpha = alpha.alpha_f * solution + (1 - alpha.alpha_f) * state.phi
    expected = system_i.condensation.slope_value * KAPPA * (consistent.L @ phi_alpha)
    np.testing.assert_allclose(small_c - small_i, expected, atol=1e-10)


def test_do_constraint_holds():
    """The orthogonal small-scales are L2-orthogonal to kappa Lap N_i after every step."""
    form = make_formulation("do")
    state, field = form.initial_state(project_l2(form.space, smooth, form.grid))
    for _ in range(3):
        result = form.step(state, field)
        constraints = form.constraint_residuals(result.small_scale_alpha)
        scale = KAPPA * np.sqrt(form.grid.inner(result.small_scale_alpha, result.small_scale_alpha))
        assert np.abs(constraints).max() <= 1e-9 * max(scale * np.abs(form.L).max(), 1e-30)
        assert result.sigma is not None
        state, field = result.state, result.field


def test_do_tikhonov_regularization():
    """The Tikhonov variant gives the same large scales as the pinned multiplier."""
    pinned = make_formulation("do")
    tikhonov = make_formulation("do", do_regularization="tikhonov")
    phi0 = project_l2(pinned.space, smooth, pinned.grid)
    a = pinned.step(*pinned.initial_state(phi0))
    b = tikhonov.step(*tikhonov.initial_state(phi0))
    np.testing.assert_allclose(a.state.phi, b.state.phi, atol=1e-6)


@pytest.mark.parametrize("kind", ["galerkin", "supgs", "vmsd", "glsd", "do"])
def test_mass_conservation(kind):
    """Total mass of large plus small scales is constant on the periodic square."""
    form = make_formulation(kind)
    state, field = form.initial_state(project_l2(form.space, smooth, form.grid) + 1.0)
    mass0 = form.grid.integrate(form.V @ state.phi) + form.grid.integrate(field.value)
    for _ in range(4):
        result = form.step(state, field)
        state, field = result.state, result.field
        mass = form.grid.integrate(form.V @ state.phi)
        mass += form.grid.integrate(field.value)
        assert mass == pytest.approx(mass0, abs=1e-12)


def test_dirichlet_mode_keeps_boundary_zero():
    """Homogeneous Dirichlet mode leaves boundary coefficients at zero."""
    form = make_formulation("glsd", boundary="dirichlet")
    free = form.space.boundary_free_dofs()
    state, field = form.initial_state(project_l2(form.space, smooth, form.grid))
    mask = np.ones(form.num_functions, dtype=bool)
    mask[free] = False
    assert np.all(state.phi[mask] == 0.0)
    result = form.step(state, field)
    assert np.all(result.state.phi[mask] == 0.0)


def test_callable_forcing():
    """Forcing callables are sampled at the quadrature points."""
    form = make_formulation("galerkin", forcing=lambda x, y: x + y)
    np.testing.assert_allclose(form.forcing, form.grid.points.sum(axis=1))


def test_linear_solver_direct_and_gmres():
    """Both solver paths solve a mass-matrix system."""
    grid = QuadratureGrid(SplineSpace2D.uniform(2, 6))
    mass = grid.mass_matrix()
    rhs = mass @ np.ones(mass.shape[0])
    for method in ("direct", "gmres"):
        x, residual = LinearSolver(method, tolerance=1e-8).solve(mass, rhs)
        np.testing.assert_allclose(x, 1.0, atol=1e-8)
        assert residual <= 1e-8


def test_linear_solver_zero_rhs():
    """A zero right-hand side returns zero without factorizing."""
    x, residual = LinearSolver().solve(sps.eye(3, format="csr"), np.zeros(3))
    assert np.all(x == 0.0) and residual == 0.0


def test_linear_solver_failures():
    """Singular matrices and unknown methods raise."""
    with pytest.raises(SolverError):
        LinearSolver().solve(sps.csr_matrix((3, 3)), np.ones(3))
    with pytest.raises(ValueError):
        LinearSolver("cg")


def test_linear_solver_identity():
    """An identity system returns its right-hand side."""
    b = np.array([1.0, -2.0, 3.5])
    x, _ = LinearSolver().solve(sps.eye(3, format="csr"), b)
    np.testing.assert_allclose(x, b)


def test_start_from_rest():
    """A rest start has zero rate and small-scales built from R(phi_0, 0)."""
    static = make_formulation("supgs")
    phi0 = project_l2(static.space, smooth, static.grid)
    state, field = static.initial_state(phi0, rate="rest")
    assert np.all(state.phi_dot == 0.0)
    residual = static.residual_points(phi0, np.zeros_like(phi0))
    np.testing.assert_allclose(field.value, -static.tau_static * residual, atol=1e-12)

    dynamic = make_formulation("glsd")
    state, field = dynamic.initial_state(phi0, rate="rest")
    assert np.all(state.phi_dot == 0.0)
    np.testing.assert_allclose(field.value, 0.0)
    np.testing.assert_allclose(field.rate, -dynamic.residual_points(phi0, np.zeros_like(phi0)), atol=1e-12)


def test_unknown_initial_rate():
    """Only consistent and rest starts exist."""
    form = make_formulation("galerkin")
    with pytest.raises(ValueError, match="rest"):
        form.initial_state(np.zeros(form.num_functions), rate="zero")


@pytest.mark.parametrize("kind", ["glsd", "do"])
def test_step_goes_through_generalized_alpha(kind):
    """Every step advances the state through GeneralizedAlpha.advance."""
    form = make_formulation(kind)
    state, field = form.initial_state(project_l2(form.space, smooth, form.grid))
    with patch.object(form.integrator, "advance", wraps=form.integrator.advance) as advance:
        result = form.step(state, field)
    advance.assert_called_once()
    assert result.state.t == pytest.approx(0.05)
    np.testing.assert_allclose(result.state.phi_dot,
                               form.integrator.rate_from_value(result.state.phi, state), atol=1e-12)
    assert (result.sigma is not None) == (kind == "do")
    assert result.state.sigma is result.sigma
