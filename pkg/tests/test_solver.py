import math

import numpy as np
import pytest

from diffwave.errors import (
    CflViolation,
    InvalidParams,
    NonpositiveDensity,
    OrderUnsupported,
    VacuumDetected,
    VacuumInducingPerturbation,
)
from diffwave.model import Params, PressureModel
from diffwave.solver import (
    Grid,
    PerturbationSpec,
    SchemeConfig,
    Solver,
    State,
    hyperbolic_flux,
    init_state,
    mc_slopes,
    physical_flux,
    update_phi,
)
from diffwave.wave import WaveField, build_profile


@pytest.fixture(scope="module")
def ground_params():
    return Params(rho_minus=1.0, rho_plus=1.0)


@pytest.fixture(scope="module")
def ground_field(ground_params):
    pm = PressureModel.quadratic(2.0, ground_params)
    return WaveField(build_profile(ground_params, pm, n_pts=201))


# ========================================
# Data types
# ========================================

def test_grid_cell_centres():
    grid = Grid(-1.0, 1.0, 64)
    assert grid.dx == pytest.approx(2.0 / 64)
    assert grid.x[0] == pytest.approx(-1.0 + grid.dx / 2)
    assert grid.x[-1] == pytest.approx(1.0 - grid.dx / 2)
    assert grid.clearance(0.5) == pytest.approx(0.5)
    assert grid.required_clearance(8.0, 99.0) == pytest.approx(100.0)


def test_grid_validation():
    with pytest.raises(InvalidParams):
        Grid(1.0, -1.0, 128)
    with pytest.raises(InvalidParams):
        Grid(-1.0, 1.0, 32)


def test_scheme_validation():
    with pytest.raises(OrderUnsupported):
        SchemeConfig(order=3)
    with pytest.raises(InvalidParams):
        SchemeConfig(cfl=1.5)
    with pytest.raises(InvalidParams):
        SchemeConfig(diffusion_mode="spectral")


# ========================================
# Fluxes
# ========================================

def test_hll_flux_is_consistent(quadratic_model):
    rho = np.array([0.5, 1.0, 2.0])
    m = np.array([-0.3, 0.0, 1.1])
    f_rho, f_m = hyperbolic_flux(quadratic_model, rho, m, rho, m)
    e_rho, e_m = physical_flux(quadratic_model, rho, m)
    np.testing.assert_allclose(f_rho, e_rho, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(f_m, e_m, rtol=1e-14, atol=1e-15)


def test_hll_flux_upwinds_supersonic_flow(quadratic_model):
    # u - c > 0 on both sides: the flux is the left physical flux
    rho_l, m_l = np.array([1.0]), np.array([3.0])
    rho_r, m_r = np.array([1.2]), np.array([4.0])
    f_rho, f_m = hyperbolic_flux(quadratic_model, rho_l, m_l, rho_r, m_r)
    e_rho, e_m = physical_flux(quadratic_model, rho_l, m_l)
    np.testing.assert_allclose(f_rho, e_rho)
    np.testing.assert_allclose(f_m, e_m)


def test_hll_flux_rejects_vacuum(quadratic_model):
    with pytest.raises(NonpositiveDensity):
        hyperbolic_flux(quadratic_model, np.array([0.0]), np.array([0.0]), np.array([1.0]), np.array([0.0]))


def test_mc_slopes():
    linear = np.linspace(0.0, 1.0, 11)
    slopes = mc_slopes(linear)
    np.testing.assert_allclose(slopes[1:-1], 0.1)
    assert slopes[0] == 0.0 and slopes[-1] == 0.0
    peak = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
    assert mc_slopes(peak)[2] == 0.0


# ========================================
# Chemoattractant update
# ========================================

def _heat_kernel(x, t):
    return np.exp(-np.square(x) / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


@pytest.mark.parametrize("mode,dt", [("implicit", 0.01), ("explicit", 0.001)])
def test_phi_update_follows_the_heat_kernel(mode, dt):
    grid = Grid(-20.0, 20.0, 800)
    phi = _heat_kernel(grid.x, 1.0)
    rho = np.zeros_like(phi)
    for _ in range(int(round(1.0 / dt))):
        phi = update_phi(phi, rho, dt, grid.dx, 1.0, 0.0, 0.0, (0.0, 0.0), mode)
    assert np.max(np.abs(phi - _heat_kernel(grid.x, 2.0))) < 2e-3


@pytest.mark.parametrize("mode", ["implicit", "explicit"])
def test_phi_equilibrium_is_preserved(mode):
    phi = np.full(100, 1.5)
    rho = np.full(100, 0.75)
    new = update_phi(phi, rho, 0.01, 0.1, 1.0, 2.0, 1.0, (1.5, 1.5), mode)
    np.testing.assert_allclose(new, 1.5, rtol=1e-14)


def test_unknown_diffusion_mode():
    with pytest.raises(InvalidParams):
        update_phi(np.ones(10), np.ones(10), 0.1, 0.1, 1.0, 1.0, 1.0, (1.0, 1.0), "spectral")


# ========================================
# Initial data
# ========================================

def test_unperturbed_initial_state(default_params, default_profile):
    grid = Grid(-30.0, 30.0, 600)
    state = init_state(grid, WaveField(default_profile))
    assert state.t == 0.0
    assert state.rho[0] == default_params.rho_minus
    assert state.rho[-1] == default_params.rho_plus
    np.testing.assert_allclose(state.phi, state.rho * default_params.a / default_params.b)


def test_shifted_initial_state(default_profile):
    grid = Grid(-30.0, 30.0, 600)
    wave = WaveField(default_profile)
    state = init_state(grid, wave, PerturbationSpec(kind="shifted-wave", shift=1.5))
    np.testing.assert_allclose(state.rho[1:-1], wave.rho_bar(grid.x + 1.5, 0.0)[1:-1])


def test_bump_adds_its_mass(default_profile):
    grid = Grid(-30.0, 30.0, 1200)
    wave = WaveField(default_profile)
    base = init_state(grid, wave)
    spec = PerturbationSpec(kind="bump", amplitude=0.1, support=5.0)
    bumped = init_state(grid, wave, spec)
    added = bumped.mass(grid.dx) - base.mass(grid.dx)
    assert added == pytest.approx(spec.bump_mass(), rel=1e-6)
    assert spec.bump_mass() == pytest.approx(0.1 * 5.0 * 32.0 / 35.0)


def test_zero_mass_bump(default_profile):
    spec = PerturbationSpec(kind="bump", amplitude=0.1, support=5.0, zero_mass=True)
    x = np.linspace(-6.0, 6.0, 120_001)
    shape = spec.shape(x)
    assert np.max(shape) == pytest.approx(1.0, abs=1e-6)
    assert abs(np.sum(shape) * (x[1] - x[0])) < 1e-9
    assert spec.bump_mass() == 0.0


def test_vacuum_inducing_bump(default_profile):
    grid = Grid(-30.0, 30.0, 600)
    with pytest.raises(VacuumInducingPerturbation):
        init_state(grid, WaveField(default_profile), PerturbationSpec(kind="bump", amplitude=1.5))


# ========================================
# Time stepping
# ========================================

@pytest.mark.parametrize("order,steps", [(2, 10_000), (1, 1_000)])
def test_ground_state_is_preserved(ground_params, ground_field, order, steps):
    grid = Grid(-50.0, 50.0, 256)
    solver = Solver(grid, ground_params, ground_field.pm, SchemeConfig(order=order))
    state = init_state(grid, ground_field)
    for _ in range(steps):
        state = solver.step(state, solver.max_dt(state))
    assert np.max(np.abs(state.rho - 1.0)) < 1e-11
    assert np.max(np.abs(state.m)) < 1e-11
    assert np.max(np.abs(state.phi - 1.0)) < 1e-11


@pytest.mark.parametrize("order", [1, 2])
def test_damping_is_exact_on_uniform_flow(ground_params, ground_field, order):
    grid = Grid(-10.0, 10.0, 128)
    n = grid.nx
    state = State(t=0.0, rho=np.ones(n), m=np.full(n, 0.3), phi=np.ones(n))
    solver = Solver(grid, ground_params, ground_field.pm, SchemeConfig(order=order))
    dt = 0.5 * solver.max_dt(state)
    new = solver.step(state, dt)
    interior = slice(10, n - 10)
    np.testing.assert_allclose(new.m[interior], 0.3 * math.exp(-dt), rtol=1e-13)
    np.testing.assert_allclose(new.rho[interior], 1.0, rtol=1e-14)


def test_cfl_violation(ground_params, ground_field):
    grid = Grid(-10.0, 10.0, 128)
    solver = Solver(grid, ground_params, ground_field.pm)
    state = init_state(grid, ground_field)
    with pytest.raises(CflViolation):
        solver.step(state, 2.0 * solver.max_dt(state))
    with pytest.raises(CflViolation):
        solver.step(state, 0.0)


def test_explicit_mode_respects_the_diffusion_bound(ground_params, ground_field):
    grid = Grid(-1.0, 1.0, 256)
    solver = Solver(grid, ground_params, ground_field.pm, SchemeConfig(diffusion_mode="explicit"))
    state = init_state(grid, ground_field)
    assert solver.max_dt(state) <= 0.4 * grid.dx ** 2 / ground_params.dd * (1.0 + 1e-12)


def test_vacuum_detected(ground_params, ground_field):
    grid = Grid(-10.0, 10.0, 128)
    n = grid.nx
    rho = np.ones(n)
    rho[64] = -0.1
    state = State(t=0.0, rho=rho, m=np.zeros(n), phi=np.ones(n))
    solver = Solver(grid, ground_params, ground_field.pm, SchemeConfig(order=1))
    with np.errstate(invalid="ignore"), pytest.raises(VacuumDetected) as excinfo:
        solver.step(state, 1e-4)
    assert excinfo.value.exit_code == 3


def test_run_lands_on_snapshots_and_balances_mass(default_params, quadratic_model, default_profile):
    grid = Grid(-30.0, 30.0, 512)
    wave = WaveField(default_profile)
    solver = Solver(grid, default_params, quadratic_model, SchemeConfig(snapshot_times=(0.1, 0.25, 5.0)))
    state0 = init_state(grid, wave, PerturbationSpec(kind="bump", amplitude=0.1))
    seen = []
    final, stats = solver.run(state0, 0.5, sink=lambda s: seen.append(s.t))
    assert seen == [0.1, 0.25]
    assert final.t == 0.5
    assert stats.steps > 0
    assert stats.snapshots == 2
    assert abs(stats.mass_defect) < 1e-9


def test_run_to_the_start_time_is_a_no_op(default_params, quadratic_model, default_profile):
    grid = Grid(-30.0, 30.0, 256)
    state0 = init_state(grid, WaveField(default_profile))
    final, stats = Solver(grid, default_params, quadratic_model).run(state0, 0.0)
    assert final is state0
    assert stats.steps == 0


# Minimum observed order per refinement pair (256->512, 512->1024). The
# MC limiter clips the order-2 scheme at the coarsest level.
@pytest.mark.parametrize("order,bounds", [(1, (0.9, 0.9)), (2, (0.85, 0.9))])
def test_self_convergence(default_params, quadratic_model, default_profile, order, bounds):
    wave = WaveField(default_profile)
    spec = PerturbationSpec(kind="bump", amplitude=0.1, support=5.0)
    cfg = SchemeConfig(order=order)

    def density(nx):
        grid = Grid(-30.0, 30.0, nx)
        final, _ = Solver(grid, default_params, quadratic_model, cfg).run(init_state(grid, wave, spec), 1.0)
        return final.rho

    reference = density(4096)
    errors = []
    for nx in (256, 512, 1024):
        coarse_ref = reference.reshape(nx, -1).mean(axis=1)
        errors.append(np.sum(np.abs(density(nx) - coarse_ref)) * 60.0 / nx)
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert all(o >= b for o, b in zip(orders, bounds)), orders
    assert errors[2] < errors[0]
