import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from diffwave.diagnostics import (
    ANTIDERIVATIVE_SERIES,
    MONITOR_WEIGHTS,
    SUP_NORM_SERIES,
    Perturbation,
    a_priori_band,
    build_perturbation,
    compute_shift,
    derivative,
    energy_functional,
    random_form_check,
    residual_decay_scan,
    residuals,
    snapshot_row,
    sobolev_norms,
    weighted_monitor,
)
from diffwave.errors import DegenerateWave, InvalidParams, WeightTooSmall
from diffwave.model import Params, PressureModel, check_admissible
from diffwave.solver import Grid, PerturbationSpec, Solver, State, init_state
from diffwave.wave import WaveField, build_profile


@pytest.fixture(scope="module")
def field(default_profile):
    return WaveField(default_profile)


@pytest.fixture(scope="module")
def grid():
    return Grid(-60.0, 60.0, 2400)


# ========================================
# Shift
# ========================================

@pytest.mark.parametrize("shift", [-2.0, 0.5, 1.0])
def test_shift_recovers_a_translated_wave(grid, field, shift):
    state = init_state(grid, field, PerturbationSpec(kind="shifted-wave", shift=shift))
    assert compute_shift(state.rho, grid, field) == pytest.approx(shift, abs=1e-6)


def test_shift_of_the_wave_itself_is_zero(grid, field):
    state = init_state(grid, field)
    assert abs(compute_shift(state.rho, grid, field)) < 1e-9


def test_shift_absorbs_bump_mass(grid, field, default_params):
    spec = PerturbationSpec(kind="bump", amplitude=0.05, support=5.0)
    state = init_state(grid, field, spec)
    x0 = compute_shift(state.rho, grid, field)
    jump = default_params.rho_plus - default_params.rho_minus
    assert x0 == pytest.approx(spec.bump_mass() / jump, rel=1e-6)
    pert = build_perturbation(state, grid, field, x0)
    assert abs(pert.v_right()) < 1e-9


def test_shift_of_a_zero_mass_bump_vanishes(grid, field):
    spec = PerturbationSpec(kind="bump", amplitude=0.05, support=5.0, zero_mass=True)
    state = init_state(grid, field, spec)
    assert np.max(np.abs(state.rho - init_state(grid, field).rho)) == pytest.approx(0.05, rel=1e-3)
    assert abs(compute_shift(state.rho, grid, field)) < 1e-9


def test_bump_of_mass_four_hundredths_shifts_by_a_tenth(grid, field):
    # amplitude * support * 32/35 = 0.04 for support 5
    spec = PerturbationSpec(kind="bump", amplitude=0.04 * 35.0 / (32.0 * 5.0), support=5.0)
    assert spec.bump_mass() == pytest.approx(0.04, rel=1e-14)
    state = init_state(grid, field, spec)
    assert compute_shift(state.rho, grid, field) == pytest.approx(0.1, abs=1e-6)


def test_shift_of_a_constant_state_is_undefined():
    params = Params(rho_minus=1.0, rho_plus=1.0)
    wave = WaveField(build_profile(params, PressureModel.quadratic(2.0, params), n_pts=201))
    grid = Grid(-10.0, 10.0, 128)
    with pytest.raises(DegenerateWave):
        compute_shift(np.ones(grid.nx), grid, wave)


# ========================================
# Perturbation and norms
# ========================================

def test_exact_wave_has_zero_perturbation(grid, field):
    state = init_state(grid, field)
    pert = build_perturbation(state, grid, field, 0.0)
    for values in (pert.V, pert.M, pert.Phi, pert.vx):
        assert np.max(np.abs(values)) < 1e-12
    np.testing.assert_allclose(pert.Vt, -pert.M)


def test_differenced_antiderivative_recovers_vx(field):
    spec = PerturbationSpec(kind="bump", amplitude=0.05, support=5.0)
    errors = []
    for nx in (1200, 2400):
        g = Grid(-60.0, 60.0, nx)
        state = init_state(g, field, spec)
        pert = build_perturbation(state, g, field, compute_shift(state.rho, g, field))
        errors.append(np.max(np.abs(np.gradient(pert.V, g.dx) - pert.vx)))
    assert errors[1] < 1e-4
    # second order in dx
    assert errors[0] / errors[1] > 3.5


def test_sobolev_norms_of_sine():
    grid = Grid(0.0, 2.0 * math.pi, 4096)
    report = sobolev_norms(np.sin(grid.x), grid)
    root_pi = math.sqrt(math.pi)
    # Trapezoid weights drop half a cell at each end, where cos^2 is ~1
    root_pi_cos = math.sqrt(math.pi - grid.dx * math.cos(0.5 * grid.dx) ** 2)
    assert report.l2[0] == pytest.approx(root_pi, rel=1e-6)
    assert report.l2[1] == pytest.approx(root_pi_cos, rel=1e-5)
    assert report.l2[2] == pytest.approx(root_pi, rel=1e-4)
    assert report.l2[3] == pytest.approx(root_pi_cos, rel=1e-4)
    assert report.linf[0] == pytest.approx(1.0, abs=1e-6)
    assert report.linf[1] == pytest.approx(1.0, abs=1e-5)
    assert report.hm(1) == pytest.approx(math.hypot(root_pi, root_pi_cos), rel=1e-5)
    assert report.interpolation_ok()


def test_sobolev_norms_of_gaussian():
    grid = Grid(-10.0, 10.0, 4000)
    report = sobolev_norms(np.exp(-np.square(grid.x)), grid, k_max=2)
    s = math.sqrt(math.pi / 2.0)
    assert report.l2[0] == pytest.approx(math.sqrt(s), rel=1e-8)
    assert report.l2[1] == pytest.approx(math.sqrt(s), rel=1e-4)
    assert report.l2[2] == pytest.approx(math.sqrt(3.0 * s), rel=2e-4)
    assert report.linf[1] == pytest.approx(math.sqrt(2.0) * math.exp(-0.5), rel=1e-4)


def test_sobolev_norm_limits():
    with pytest.raises(InvalidParams):
        sobolev_norms(np.zeros(16), 0.1, k_max=4)
    with pytest.raises(InvalidParams):
        sobolev_norms(np.zeros(16), 0.1, k_max=1).hm(2)
    with pytest.raises(InvalidParams):
        derivative(np.zeros(16), 0.1, 4)


def test_derivative_of_a_cubic_is_exact():
    x = np.linspace(-1.0, 1.0, 201)
    dx = x[1] - x[0]
    np.testing.assert_allclose(derivative(x ** 3, dx, 3), 6.0, atol=1e-8)
    np.testing.assert_allclose(derivative(x ** 2, dx, 2), 2.0, atol=1e-8)


# ========================================
# Energy
# ========================================

def test_energy_of_the_exact_wave_is_zero(grid, field):
    pert = build_perturbation(init_state(grid, field), grid, field, 0.0)
    report = energy_functional(pert, field)
    assert report.e_t == pytest.approx(0.0, abs=1e-20)
    assert report.equivalent_norm == pytest.approx(0.0, abs=1e-20)


def test_energy_of_a_small_bump_is_equivalent_to_the_norm(grid, field):
    state = init_state(grid, field, PerturbationSpec(kind="bump", amplitude=0.05))
    x0 = compute_shift(state.rho, grid, field)
    report = energy_functional(build_perturbation(state, grid, field, x0), field)
    assert report.e_t > 0.0
    assert report.equivalent_norm > 0.0
    assert math.isfinite(report.c_eq)


def test_energy_of_a_chemical_only_perturbation(field, default_params):
    # V = V_t = 0 leaves only the Phi terms of the functional
    g = Grid(-20.0, 20.0, 8000)
    x = g.x
    gauss = 0.01 * np.exp(-np.square(x))
    phi_k = [
        gauss,
        -2.0 * x * gauss,
        (4.0 * x ** 2 - 2.0) * gauss,
        (12.0 * x - 8.0 * x ** 3) * gauss,
    ]
    zeros = np.zeros_like(x)
    pert = Perturbation(t=0.0, x0=0.0, x=x, dx=g.dx, V=zeros, M=zeros, Phi=gauss, vx=zeros)

    k_e = 5.0
    prm = default_params
    rho_bar = field.rho_bar(x, 0.0)
    expected = 0.0
    for k in range(3):
        own = trapezoid(rho_bar * phi_k[k] ** 2, dx=g.dx)
        expected += 0.5 * k_e * prm.mu * prm.b / prm.a * own
        expected += prm.mu / (2.0 * prm.a) * own
        expected += prm.mu * prm.dd * k_e / (2.0 * prm.a) * trapezoid(rho_bar * phi_k[k + 1] ** 2, dx=g.dx)

    report = energy_functional(pert, field, k_e=k_e)
    assert report.cross_part == 0.0
    assert report.weighted_part == 0.0
    assert report.e_t == pytest.approx(expected, rel=5e-4)
    norm2 = sum(trapezoid(d ** 2, dx=g.dx) for d in phi_k)
    assert report.equivalent_norm == pytest.approx(norm2, rel=5e-4)


def test_energy_weight_must_dominate_damping(grid, field):
    pert = build_perturbation(init_state(grid, field), grid, field, 0.0)
    with pytest.raises(WeightTooSmall):
        energy_functional(pert, field, k_e=0.5)


# ========================================
# Residuals
# ========================================

def test_residual_g_decays(field):
    fit = residual_decay_scan(field, np.geomspace(1.0, 100.0, 20))
    assert fit.exponent <= -1.40


def test_residual_scan_rejects_high_orders(field):
    with pytest.raises(InvalidParams):
        residual_decay_scan(field, [1.0, 10.0, 100.0], k=3)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_residuals_on_the_exact_wave(grid, field, quadratic_model, default_params, t):
    vals = field(grid.x, t)
    state = State(t=t, rho=np.array(vals.rho), m=np.array(vals.m), phi=np.array(vals.phi))
    pert = build_perturbation(state, grid, field, 0.0)
    report = residuals(state, grid, field, 0.0, pert)

    # q(rho_bar)_x and q(rho_bar)_t by central differences of q along the wave
    alpha, h = default_params.alpha, 1e-5
    x, q = grid.x, quadratic_model.q
    rho_bar = field.rho_bar(x, t)
    q_x = (q(field.rho_bar(x + h, t)) - q(field.rho_bar(x - h, t))) / (2.0 * h)
    q_t = (q(field.rho_bar(x, t + h)) - q(field.rho_bar(x, t - h))) / (2.0 * h)

    np.testing.assert_allclose(report.h, -np.square(q_x / alpha) / rho_bar, atol=1e-8)
    np.testing.assert_allclose(report.f, q_t / alpha, atol=1e-8)
    assert np.all(report.h <= 0.0)
    assert not report.band_violation
    assert report.band_min == pytest.approx(0.8, abs=1e-9)
    assert report.band_max == pytest.approx(1.2, abs=1e-9)


def test_residuals_vanish_on_a_constant_state():
    params = Params(rho_minus=1.0, rho_plus=1.0)
    wave = WaveField(build_profile(params, PressureModel.quadratic(2.0, params), n_pts=201))
    g = Grid(-10.0, 10.0, 128)
    state = init_state(g, wave)
    pert = build_perturbation(state, g, wave, 0.0)
    report = residuals(state, g, wave, 0.0, pert)
    for values in (report.h, report.f, report.g):
        assert np.max(np.abs(values)) == 0.0
    assert report.h_norm == 0.0
    assert report.f_norm == 0.0
    assert report.g_norms == (0.0, 0.0, 0.0)


def test_a_priori_band(default_params):
    assert a_priori_band(default_params) == pytest.approx((0.4, 1.8))


# ========================================
# Monitors
# ========================================

def test_monitor_of_a_vanishing_series():
    times = np.geomspace(1.0, 101.0, 12) - 1.0
    [row] = weighted_monitor(times, {"mon_vt_0": np.zeros(12)})
    assert row.sup == 0.0
    assert row.non_increasing and row.bounded and row.sufficient


def test_monitor_detects_growth():
    times = np.geomspace(1.0, 101.0, 12) - 1.0
    rows = weighted_monitor(
        times,
        {"flat": (1.0 + times) ** -2.0, "growing": (1.0 + times) ** -1.0},
        weights={"flat": 2, "growing": 2},
    )
    flat, growing = rows
    assert flat.final == pytest.approx(1.0)
    assert flat.bounded
    assert flat.theil_sen == pytest.approx(0.0, abs=1e-12)
    assert not growing.bounded
    assert not growing.non_increasing


def test_monitor_sufficiency_needs_a_decade():
    times = np.linspace(0.0, 2.0, 12)
    [row] = weighted_monitor(times, {"mon_low": np.ones(12)})
    assert not row.sufficient


# ========================================
# Seeded form check
# ========================================

def test_random_form_check_is_seeded(default_params, quadratic_model, default_profile):
    struct = check_admissible(default_params, quadratic_model)
    first = random_form_check(struct, 7)
    assert first == random_form_check(struct, 7)
    assert first.ok
    assert first.worst < 0.0
    assert random_form_check(struct, 8).worst != first.worst

    on_wave = random_form_check(struct, 7, rho_pool=default_profile.phi, samples=500)
    assert on_wave.ok
    assert on_wave.to_dict() == {"seed": 7, "samples": 500, "ok": True, "worst": on_wave.worst}


def test_random_form_check_catches_a_wrong_bound(default_params, quadratic_model):
    struct = check_admissible(default_params, quadratic_model)
    inflated = replace(struct, c1=2.0 * struct.c2)
    report = random_form_check(inflated, 0, samples=100)
    assert not report.ok
    assert report.worst > 0.0


# ========================================
# Snapshot row
# ========================================

def test_snapshot_row_holds_every_series(grid, field):
    state = init_state(grid, field, PerturbationSpec(kind="bump", amplitude=0.05))
    x0 = compute_shift(state.rho, grid, field)
    analysis = snapshot_row(state, grid, field, x0)
    for name in list(SUP_NORM_SERIES) + list(ANTIDERIVATIVE_SERIES) + list(MONITOR_WEIGHTS):
        assert name in analysis.row
        assert math.isfinite(analysis.row[name])
    assert set(analysis.monitors) == set(MONITOR_WEIGHTS)
    assert analysis.row["x0"] == x0
    assert analysis.row["band_violation"] == 0.0


def test_interpolation_inequality_holds_along_a_run(grid, field, default_params, quadratic_model):
    state = init_state(grid, field, PerturbationSpec(kind="bump", amplitude=0.05))
    x0 = compute_shift(state.rho, grid, field)
    final, _ = Solver(grid, default_params, quadratic_model).run(state, 1.0)
    for snapshot in (state, final):
        analysis = snapshot_row(snapshot, grid, field, x0)
        for name in ("vx", "vt"):
            report = analysis.norm_reports[name]
            assert report.linf[0] > 0.0
            assert report.interpolation_ok(), name
