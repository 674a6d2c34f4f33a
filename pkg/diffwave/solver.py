"""
Solver - Finite-volume integrator for the damped chemotaxis system.

    rho_t + m_x = 0
    m_t + (m^2/rho + p(rho))_x = mu rho phi_x - alpha m
    phi_t = D phi_xx + a rho - b phi

Provides:
- Grid, State, SchemeConfig, PerturbationSpec, RunStats
- init_state: wave (optionally shifted or bumped) sampled at cell centres
- hyperbolic_flux: HLL flux for F(rho, m) = (m, m^2/rho + p(rho))
- Solver.step / Solver.run: one update / adaptive run with exact snapshot landing
- update_phi: explicit or implicit (banded solve) chemoattractant update
"""

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    CflViolation,
    InvalidParams,
    NonpositiveDensity,
    OrderUnsupported,
    VacuumDetected,
    VacuumInducingPerturbation,
)
from .model import Params, PressureModel
from .wave import WaveField

MIN_CELLS = 64
EXPLICIT_DIFFUSION_LIMIT = 0.4
PERTURBATION_KINDS = ("none", "shifted-wave", "bump")
DIFFUSION_MODES = ("explicit", "implicit")

# Peak of r (1 - r^2)^3 on [-1, 1], reached at r^2 = 1/7
_ODD_BUMP_PEAK = (1.0 / math.sqrt(7.0)) * (6.0 / 7.0) ** 3


# ========================================
# Data types
# ========================================

@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh; x[i] = x_min + (i + 1/2) dx."""

    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise InvalidParams(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if self.nx < MIN_CELLS:
            raise InvalidParams(f"nx must be at least {MIN_CELLS}, got {self.nx}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    def clearance(self, center: float = 0.0) -> float:
        """Distance from `center` to the nearer domain end."""
        return min(self.x_max - center, center - self.x_min)

    def required_clearance(self, xi_max: float, t_end: float) -> float:
        """Half-width the wave occupies by t_end (at least 10 sqrt(1+T))."""
        return max(10.0, xi_max) * math.sqrt(1.0 + t_end)


@dataclass(frozen=True)
class State:
    t: float
    rho: np.ndarray
    m: np.ndarray
    phi: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.m / self.rho

    def mass(self, dx: float) -> float:
        return float(np.sum(self.rho) * dx)


@dataclass(frozen=True)
class SchemeConfig:
    cfl: float = 0.45
    diffusion_mode: str = "implicit"
    order: int = 2
    snapshot_times: Tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise InvalidParams(f"cfl must lie in (0, 1), got {self.cfl}")
        if self.diffusion_mode not in DIFFUSION_MODES:
            raise InvalidParams(f"diffusion_mode must be one of {DIFFUSION_MODES}, got {self.diffusion_mode!r}")
        if self.order not in (1, 2):
            raise OrderUnsupported(f"Scheme order must be 1 or 2, got {self.order}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Initial perturbation of the wave.

    kind:
        none: the wave itself
        shifted-wave: rho_0(x) = rho_bar(x + shift, 0), same for m and phi
        bump: amplitude * B((x - center)/support) added to rho_bar, m_bar
            and (a/b) * that to phi_bar, where B(r) = (1 - r^2)^3 on |r| < 1,
            or the odd zero-mass bump r (1 - r^2)^3 scaled to unit peak
    """

    kind: str = "none"
    amplitude: float = 0.0
    support: float = 5.0
    center: float = 0.0
    shift: float = 0.0
    zero_mass: bool = False

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise InvalidParams(f"perturbation must be one of {PERTURBATION_KINDS}, got {self.kind!r}")
        if not self.support > 0:
            raise InvalidParams(f"support must be positive, got {self.support}")

    def shape(self, x: np.ndarray) -> np.ndarray:
        r = (np.asarray(x, dtype=float) - self.center) / self.support
        inside = np.abs(r) < 1.0
        core = np.where(inside, (1.0 - np.square(r)) ** 3, 0.0)
        if self.zero_mass:
            return r * core / _ODD_BUMP_PEAK
        return core

    def bump_mass(self) -> float:
        """Exact integral of amplitude * B over the line."""
        if self.zero_mass:
            return 0.0
        return self.amplitude * self.support * 32.0 / 35.0


@dataclass
class RunStats:
    """Step counter and discrete mass ledger of one run."""

    steps: int = 0
    t_final: float = 0.0
    snapshots: int = 0
    boundary_mass_flux: float = 0.0
    mass_initial: float = 0.0
    mass_final: float = 0.0

    @property
    def mass_defect(self) -> float:
        """(mass_final - mass_initial) - net boundary inflow; roundoff for a conservative run."""
        return (self.mass_final - self.mass_initial) - self.boundary_mass_flux


def far_field(params: Params) -> Tuple[Tuple[float, float, float], Tuple[float, float, float]]:
    """Left/right boundary states (rho, m, phi)."""
    return (
        (params.rho_minus, 0.0, params.phi_minus),
        (params.rho_plus, 0.0, params.phi_plus),
    )


def apply_far_field(rho: np.ndarray, m: np.ndarray, phi: np.ndarray, params: Params) -> None:
    (rl, ml, pl), (rr, mr, pr) = far_field(params)
    rho[0], m[0], phi[0] = rl, ml, pl
    rho[-1], m[-1], phi[-1] = rr, mr, pr


# ========================================
# Initial data
# ========================================

def init_state(grid: Grid, wave: WaveField, perturbation: Optional[PerturbationSpec] = None) -> State:
    """Sample the (perturbed) wave at t = 0 on the cell centres.

    Raises:
        VacuumInducingPerturbation: the bump, with either sign, reaches rho <= 0
    """
    perturbation = perturbation or PerturbationSpec()
    params = wave.params
    x = grid.x
    if perturbation.kind == "shifted-wave":
        x = x + perturbation.shift

    values = wave(x, 0.0)
    rho = np.array(values.rho, dtype=float)
    m = np.array(values.m, dtype=float)
    phi = np.array(values.phi, dtype=float)

    if perturbation.kind == "bump" and perturbation.amplitude != 0.0:
        bump = perturbation.amplitude * perturbation.shape(grid.x)
        if np.any(rho - np.abs(bump) <= 0.0):
            raise VacuumInducingPerturbation(
                f"Bump amplitude {perturbation.amplitude:g} drives the density to vacuum",
                fix_suggestion="Use an amplitude below min(rho_-, rho_+)",
            )
        rho += bump
        m += bump
        phi += params.a / params.b * bump

    apply_far_field(rho, m, phi, params)
    if np.any(rho <= 0.0):
        raise VacuumInducingPerturbation("Initial density is not positive everywhere")
    return State(t=0.0, rho=rho, m=m, phi=phi)


# ========================================
# Fluxes and reconstruction
# ========================================

def physical_flux(pm: PressureModel, rho, m) -> Tuple[np.ndarray, np.ndarray]:
    return m, m * m / rho + pm.p(rho)


def hyperbolic_flux(pm: PressureModel, rho_l, m_l, rho_r, m_r) -> Tuple[np.ndarray, np.ndarray]:
    """HLL flux at interfaces between left and right traces.

    Wave-speed bounds s_L = min(u - c, 0), s_R = max(u + c, 0) over both
    traces with c = sqrt(p'(rho)). The general form is
        (s_R F_L - s_L F_R + s_L s_R (U_R - U_L)) / (s_R - s_L)

    Raises:
        NonpositiveDensity: a trace density is <= 0
    """
    rho_l = np.asarray(rho_l, dtype=float)
    rho_r = np.asarray(rho_r, dtype=float)
    if np.any(~(rho_l > 0.0)) or np.any(~(rho_r > 0.0)):
        raise NonpositiveDensity("HLL flux needs positive densities on both sides")

    u_l = m_l / rho_l
    u_r = m_r / rho_r
    c_l = pm.sound_speed(rho_l)
    c_r = pm.sound_speed(rho_r)
    s_l = np.minimum(np.minimum(u_l - c_l, u_r - c_r), 0.0)
    s_r = np.maximum(np.maximum(u_l + c_l, u_r + c_r), 0.0)

    f_rho_l, f_m_l = physical_flux(pm, rho_l, m_l)
    f_rho_r, f_m_r = physical_flux(pm, rho_r, m_r)
    inv = 1.0 / (s_r - s_l)
    f_rho = (s_r * f_rho_l - s_l * f_rho_r + s_l * s_r * (rho_r - rho_l)) * inv
    f_m = (s_r * f_m_l - s_l * f_m_r + s_l * s_r * (m_r - m_l)) * inv
    return f_rho, f_m


def mc_slopes(f: np.ndarray) -> np.ndarray:
    """Monotonized-central limited slopes; zero in the two boundary cells."""
    slopes = np.zeros_like(f)
    dl = f[1:-1] - f[:-2]
    dr = f[2:] - f[1:-1]
    mag = np.minimum(np.minimum(2.0 * np.abs(dl), 2.0 * np.abs(dr)), 0.5 * np.abs(dl + dr))
    slopes[1:-1] = np.where(dl * dr > 0.0, np.sign(dl) * mag, 0.0)
    return slopes


# ========================================
# Chemoattractant update
# ========================================

def laplacian(f: np.ndarray, dx: float) -> np.ndarray:
    lap = np.zeros_like(f)
    lap[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (dx * dx)
    return lap


def update_phi(
    phi: np.ndarray,
    rho: np.ndarray,
    dt: float,
    dx: float,
    dd: float,
    a: float,
    b: float,
    bc: Tuple[float, float],
    mode: str = "implicit",
) -> np.ndarray:
    """Advance phi_t = D phi_xx + a rho - b phi by dt with Dirichlet ends.

    implicit: (1 + b dt) phi' - dt D lap(phi') = phi + dt a rho  (rho at the new level)
    explicit: phi' = phi + dt (D lap(phi) + a rho - b phi)
    """
    n = phi.size
    if mode == "explicit":
        new = phi + dt * (dd * laplacian(phi, dx) + a * rho - b * phi)
    elif mode == "implicit":
        r = dt * dd / (dx * dx)
        ab = np.zeros((3, n))
        ab[0, 2:] = -r
        ab[1, 1:-1] = 1.0 + b * dt + 2.0 * r
        ab[2, :-2] = -r
        ab[1, 0] = ab[1, -1] = 1.0
        rhs = phi + dt * a * rho
        rhs[0], rhs[-1] = bc
        new = solve_banded((1, 1), ab, rhs)
    else:
        raise InvalidParams(f"Unknown diffusion mode {mode!r}")
    new[0], new[-1] = bc
    return new


# ========================================
# Solver
# ========================================

SnapshotSink = Callable[[State], None]


class Solver:
    """Time integrator on a fixed grid.

    order 1: HLL + forward Euler, damping by e^{-alpha dt}
    order 2: MUSCL (MC limiter) + integrating-factor Heun, damping exact

    phi_x in the momentum source is frozen at the start of the step.
    """

    def __init__(self, grid: Grid, params: Params, pm: PressureModel, cfg: Optional[SchemeConfig] = None):
        self.grid = grid
        self.params = params
        self.pm = pm
        self.cfg = cfg or SchemeConfig()

    # ----------------------------------------
    # Time step bounds
    # ----------------------------------------

    def max_speed(self, state: State) -> float:
        c = self.pm.sound_speed(state.rho)
        return float(np.max(np.abs(state.u) + c))

    def max_dt(self, state: State) -> float:
        dx = self.grid.dx
        dt = self.cfg.cfl * dx / self.max_speed(state)
        if self.cfg.diffusion_mode == "explicit":
            dt = min(dt, EXPLICIT_DIFFUSION_LIMIT * dx * dx / self.params.dd)
        return dt

    # ----------------------------------------
    # Spatial operator
    # ----------------------------------------

    def _interface_fluxes(self, rho: np.ndarray, m: np.ndarray):
        if self.cfg.order == 2:
            sr, sm = mc_slopes(rho), mc_slopes(m)
            rho_l, m_l = rho[:-1] + 0.5 * sr[:-1], m[:-1] + 0.5 * sm[:-1]
            rho_r, m_r = rho[1:] - 0.5 * sr[1:], m[1:] - 0.5 * sm[1:]
        else:
            rho_l, m_l, rho_r, m_r = rho[:-1], m[:-1], rho[1:], m[1:]
        try:
            return hyperbolic_flux(self.pm, rho_l, m_l, rho_r, m_r)
        except NonpositiveDensity as e:
            raise VacuumDetected(f"Vacuum in reconstructed traces: {e.message}") from e

    def _operator(self, rho: np.ndarray, m: np.ndarray, phi_x: np.ndarray):
        """Interior rates (d rho/dt, d m/dt) without damping, and the boundary mass inflow rate."""
        f_rho, f_m = self._interface_fluxes(rho, m)
        dx = self.grid.dx
        l_rho = np.zeros_like(rho)
        l_m = np.zeros_like(m)
        l_rho[1:-1] = -(f_rho[1:] - f_rho[:-1]) / dx
        l_m[1:-1] = -(f_m[1:] - f_m[:-1]) / dx + self.params.mu * rho[1:-1] * phi_x[1:-1]
        inflow = float(f_rho[0] - f_rho[-1])
        return l_rho, l_m, inflow

    def _advance(self, state: State, dt: float) -> Tuple[State, float]:
        params = self.params
        dx = self.grid.dx
        damp = math.exp(-params.alpha * dt)

        phi_x = np.zeros_like(state.phi)
        phi_x[1:-1] = (state.phi[2:] - state.phi[:-2]) / (2.0 * dx)

        l_rho, l_m, inflow = self._operator(state.rho, state.m, phi_x)
        rho1 = state.rho + dt * l_rho
        m1 = damp * (state.m + dt * l_m)

        if self.cfg.order == 2:
            self._check_density(rho1)
            l_rho1, l_m1, inflow1 = self._operator(rho1, m1, phi_x)
            rho_new = 0.5 * state.rho + 0.5 * (rho1 + dt * l_rho1)
            m_new = 0.5 * damp * state.m + 0.5 * (m1 + dt * l_m1)
            inflow = 0.5 * (inflow + inflow1)
        else:
            rho_new, m_new = rho1, m1

        self._check_density(rho_new)
        (rl, _, pl), (rr, _, pr) = far_field(params)
        phi_new = update_phi(
            state.phi,
            rho_new if self.cfg.diffusion_mode == "implicit" else state.rho,
            dt,
            dx,
            params.dd,
            params.a,
            params.b,
            (pl, pr),
            self.cfg.diffusion_mode,
        )
        apply_far_field(rho_new, m_new, phi_new, params)
        return State(t=state.t + dt, rho=rho_new, m=m_new, phi=phi_new), inflow * dt

    @staticmethod
    def _check_density(rho: np.ndarray) -> None:
        if not np.all(rho > 0.0):
            bad = int(np.argmin(np.where(np.isfinite(rho), rho, -np.inf)))
            raise VacuumDetected(
                f"Density reached {rho[bad]!r} at cell {bad}",
                fix_suggestion="Reduce the perturbation amplitude or the CFL number",
            )

    def step(self, state: State, dt: float) -> State:
        """One full update of (rho, m, phi) by dt.

        Raises:
            CflViolation: dt above the hyperbolic (or explicit diffusion) bound
            VacuumDetected: rho <= 0 after the update
        """
        self._check_dt(state, dt)
        return self._advance(state, dt)[0]

    def _check_dt(self, state: State, dt: float) -> None:
        if not dt > 0.0:
            raise CflViolation(f"Time step must be positive, got {dt!r}")
        limit = self.max_dt(state)
        if dt > limit * (1.0 + 1e-12):
            raise CflViolation(
                f"dt = {dt:.6g} exceeds the stable bound {limit:.6g}",
                fix_suggestion="Lower cfl or use a smaller dt",
            )

    def run(
        self,
        state0: State,
        t_end: float,
        sink: Optional[SnapshotSink] = None,
        snapshot_times: Optional[Sequence[float]] = None,
    ) -> Tuple[State, RunStats]:
        """Advance to t_end with CFL-limited steps that land on snapshot times.

        Args:
            state0: Initial state
            t_end: Final time (0 returns state0 untouched)
            sink: Called with the state at every snapshot time in (t0, t_end]
            snapshot_times: Overrides cfg.snapshot_times

        Returns:
            (final state, RunStats)
        """
        dx = self.grid.dx
        stats = RunStats(t_final=state0.t, mass_initial=state0.mass(dx), mass_final=state0.mass(dx))
        if t_end <= state0.t:
            return state0, stats

        times = self.cfg.snapshot_times if snapshot_times is None else snapshot_times
        snaps = sorted({float(t) for t in times if state0.t < t <= t_end})
        targets = sorted(set(snaps) | {float(t_end)})
        snap_set = set(snaps)

        state = state0
        for target in targets:
            while state.t < target:
                dt = self.max_dt(state)
                remaining = target - state.t
                landing = dt >= remaining * (1.0 - 1e-12)
                if landing:
                    dt = remaining
                self._check_dt(state, dt)
                state, inflow = self._advance(state, dt)
                if landing:
                    state = replace(state, t=target)
                stats.boundary_mass_flux += inflow
                stats.steps += 1
            if target in snap_set and sink is not None:
                sink(state)
                stats.snapshots += 1

        stats.t_final = state.t
        stats.mass_final = state.mass(dx)
        return state, stats
