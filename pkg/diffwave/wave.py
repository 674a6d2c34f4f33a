"""
Wave - Self-similar diffusion wave profile and the wave field built on it.

Provides:
- WaveProfile: tabulated phi(xi) with phi', phi'', phi''' on a uniform xi grid
- build_profile: shooting solve of q'(phi) phi'' + q''(phi) phi'^2 + (alpha/2) xi phi' = 0
  with phi(-xi_max) = rho_-, phi(+xi_max) = rho_+
- WaveField / eval_wave: (rho_bar, m_bar, phi_bar) and their x/t partials at
  (x, t) through xi = x / sqrt(1+t)
- tail_check, profile_decay_scan, first_integral_residual, erf_profile
"""

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    DegenerateFit,
    InsufficientTail,
    InvalidParams,
    OrderUnsupported,
    ShootingFailed,
    ToleranceNotMet,
    WindowTooNarrow,
)
from .fitting import MIN_DECADES, MIN_SAMPLES, log_slope, window_decades
from .model import Params, PressureModel

MIN_NODES = 201
MAX_BRACKET_EXPANSIONS = 60
MAX_ORDER = 3

# Ratio of tail deviation to rho_+ below which the tail is pure roundoff
TAIL_FLOOR = 1e-13


# ========================================
# Profile table
# ========================================

@dataclass(frozen=True, eq=False)
class WaveProfile:
    """Tabulated wave profile.

    Derivative columns come from the profile equation, not from differencing.
    `d3phi` is optional for hand-built tables; it is then filled from the
    differentiated equation on first use.
    """

    xi: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    params: Params
    pm: PressureModel
    d3phi: Optional[np.ndarray] = None
    slope: float = 0.0
    iterations: int = 0
    max_residual: float = 0.0

    @property
    def xi_max(self) -> float:
        return float(self.xi[-1])

    @property
    def n_pts(self) -> int:
        return int(self.xi.size)

    @property
    def is_constant(self) -> bool:
        return self.params.rho_minus == self.params.rho_plus

    @property
    def endpoint_errors(self) -> Tuple[float, float]:
        return (
            abs(float(self.phi[0]) - self.params.rho_minus),
            abs(float(self.phi[-1]) - self.params.rho_plus),
        )

    @cached_property
    def third_derivative(self) -> np.ndarray:
        if self.d3phi is not None:
            return self.d3phi
        return ode_third_derivative(self.params, self.pm, self.xi, self.phi, self.dphi, self.d2phi)

    @cached_property
    def _splines(self) -> Tuple[CubicHermiteSpline, CubicHermiteSpline, CubicHermiteSpline]:
        return (
            CubicHermiteSpline(self.xi, self.phi, self.dphi, extrapolate=False),
            CubicHermiteSpline(self.xi, self.dphi, self.d2phi, extrapolate=False),
            CubicHermiteSpline(self.xi, self.d2phi, self.third_derivative, extrapolate=False),
        )

    def derivatives(self, xi, order: int = MAX_ORDER) -> list:
        """[phi, phi', ..., phi^(order)] at xi; far-field constants off the table."""
        xi = np.asarray(xi, dtype=float)
        s0, s1, s2 = self._splines
        inside = np.abs(xi) <= self.xi_max
        xq = np.where(inside, xi, 0.0)

        far = np.where(xi < 0.0, self.phi[0], self.phi[-1])
        values = [np.where(inside, s0(xq), far)]
        if order >= 1:
            values.append(np.where(inside, s1(xq), 0.0))
        if order >= 2:
            values.append(np.where(inside, s2(xq), 0.0))
        if order >= 3:
            values.append(np.where(inside, s2(xq, 1), 0.0))
        return values

    def to_rows(self):
        """(xi, phi, dphi, d2phi) tuples for the profile dump."""
        return zip(self.xi.tolist(), self.phi.tolist(), self.dphi.tolist(), self.d2phi.tolist())


def ode_second_derivative(params: Params, pm: PressureModel, xi, phi, dphi) -> np.ndarray:
    return -(pm.d2q(phi) * np.square(dphi) + 0.5 * params.alpha * xi * dphi) / pm.dq(phi)


def ode_third_derivative(params: Params, pm: PressureModel, xi, phi, dphi, d2phi) -> np.ndarray:
    num = (
        3.0 * pm.d2q(phi) * dphi * d2phi
        + pm.d3q(phi) * dphi ** 3
        + 0.5 * params.alpha * (dphi + xi * d2phi)
    )
    return -num / pm.dq(phi)


def ode_residual(params: Params, pm: PressureModel, wp: WaveProfile) -> np.ndarray:
    """Profile-equation residual at nodes 2..n-3.

    phi'' is approximated by a fourth-order centred difference of the
    tabulated phi', so the check does not reuse the equation that filled d2phi.
    """
    h = wp.xi[1] - wp.xi[0]
    f = wp.dphi
    d2 = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    phi = wp.phi[2:-2]
    dphi = f[2:-2]
    return pm.dq(phi) * d2 + pm.d2q(phi) * np.square(dphi) + 0.5 * params.alpha * wp.xi[2:-2] * dphi


# ========================================
# Shooting
# ========================================

class _Shooter:
    """Fixed-step RK4 integration of (phi, psi) from xi = -L with phi = start.

    The loop runs on plain floats; q' and q'' come from
    `PressureModel.scalar_reduced`.
    """

    def __init__(self, params: Params, pm: PressureModel, start: float, xi_max: float, n_pts: int):
        self.alpha = params.alpha
        self.start = start
        self.xi_max = xi_max
        self.n_pts = n_pts
        self.h = 2.0 * xi_max / (n_pts - 1)
        self.band_lo, self.band_hi = params.band()
        self._dq, self._d2q = pm.scalar_reduced()
        self.shots = 0

    def integrate(self, slope: float, record: bool = False):
        """Return phi(+L), or (phi[], psi[]) when record is set.

        Leaving the admissibility band ends the integration with the band
        edge as the saturated end value.
        """
        self.shots += 1
        dq, d2q = self._dq, self._d2q
        h = self.h
        h2, h6 = 0.5 * h, h / 6.0
        half_alpha = 0.5 * self.alpha
        band_lo, band_hi = self.band_lo, self.band_hi
        x0 = -self.xi_max
        isfinite = math.isfinite

        phi, psi = float(self.start), float(slope)
        if record:
            phis = np.empty(self.n_pts)
            psis = np.empty(self.n_pts)
            phis[0], psis[0] = phi, psi

        for i in range(self.n_pts - 1):
            xi = x0 + i * h
            xm = xi + h2
            rising = psi > 0.0
            try:
                k1s = -(d2q(phi) * psi * psi + half_alpha * xi * psi) / dq(phi)
                p2, s2 = phi + h2 * psi, psi + h2 * k1s
                k2s = -(d2q(p2) * s2 * s2 + half_alpha * xm * s2) / dq(p2)
                p3, s3 = phi + h2 * s2, psi + h2 * k2s
                k3s = -(d2q(p3) * s3 * s3 + half_alpha * xm * s3) / dq(p3)
                p4, s4 = phi + h * s3, psi + h * k3s
                k4s = -(d2q(p4) * s4 * s4 + half_alpha * (xi + h) * s4) / dq(p4)
                phi += h6 * (psi + 2.0 * s2 + 2.0 * s3 + s4)
                psi += h6 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
                inside = band_lo <= phi <= band_hi and isfinite(psi)
            except (ArithmeticError, TypeError, ValueError):
                # q' hit zero, a power went complex or a float overflowed
                phi, inside = (band_hi if rising else band_lo), False

            if not inside:
                if record:
                    raise ShootingFailed(f"Profile left the admissibility band at xi = {xi + h:.6g}")
                return band_hi if not phi < band_lo else band_lo
            if record:
                phis[i + 1] = phi
                psis[i + 1] = psi

        if record:
            return phis, psis
        return phi


def _bracket_slope(miss, guess: float) -> Tuple[float, float]:
    """Factor-2 bracket [s_lo, s_hi] around the slope guess with miss(s_lo) < 0 <= miss(s_hi).

    miss(0) < 0 always holds (the flat solution stays at the lower state),
    so shrinking falls back to s_lo = 0 once the expansion cap is hit.
    """
    if miss(guess) < 0.0:
        s_lo, s_hi = guess, 2.0 * guess
        for _ in range(MAX_BRACKET_EXPANSIONS):
            if miss(s_hi) >= 0.0:
                return s_lo, s_hi
            s_lo, s_hi = s_hi, 2.0 * s_hi
        raise ShootingFailed(
            "No slope bracket found for the shooting problem",
            fix_suggestion="Increase xi_max or check the pressure law",
        )

    s_lo, s_hi = 0.5 * guess, guess
    for _ in range(MAX_BRACKET_EXPANSIONS):
        if miss(s_lo) < 0.0:
            return s_lo, s_hi
        s_lo, s_hi = 0.5 * s_lo, s_lo
    return 0.0, s_hi


def erf_profile(params: Params, c: float, xi) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form profile for q'(rho) = c constant.

    phi = rho_- + (rho_+ - rho_-)(1 + erf(xi sqrt(alpha/(4c))))/2
    """
    xi = np.asarray(xi, dtype=float)
    k = math.sqrt(params.alpha / (4.0 * c))
    jump = params.rho_plus - params.rho_minus
    phi = params.rho_minus + 0.5 * jump * (1.0 + special.erf(k * xi))
    dphi = jump * k / math.sqrt(math.pi) * np.exp(-np.square(k * xi))
    return phi, dphi


def build_profile(
    params: Params,
    pm: PressureModel,
    xi_max: float = 8.0,
    n_pts: int = 4001,
    tol: float = 1e-10,
    residual_tol: float = 1e-6,
    max_iter: int = 200,
) -> WaveProfile:
    """Solve the profile boundary value problem by shooting on phi'(-xi_max).

    Args:
        params: Physical parameters
        pm: Pressure model (admissibility assumed checked)
        xi_max: Truncation half-width of the similarity variable
        n_pts: Node count (RK4 step 2 xi_max / (n_pts - 1))
        tol: Allowed |phi(xi_max) - rho_+|
        residual_tol: Allowed ODE residual, scaled by max(1, max q'(phi))
        max_iter: Root-finder iteration cap

    Returns:
        WaveProfile

    Raises:
        InvalidParams: xi_max <= 0 or n_pts < 201
        ShootingFailed: No slope bracket found
        ToleranceNotMet: Root finder or post-checks did not reach tolerance
    """
    if not xi_max > 0:
        raise InvalidParams(f"xi_max must be positive, got {xi_max!r}")
    if n_pts < MIN_NODES:
        raise InvalidParams(f"n_pts must be at least {MIN_NODES}, got {n_pts}")

    xi = np.linspace(-xi_max, xi_max, n_pts)
    rho_m, rho_p = params.rho_minus, params.rho_plus

    if rho_m == rho_p:
        zeros = np.zeros(n_pts)
        return WaveProfile(
            xi=xi,
            phi=np.full(n_pts, rho_m),
            dphi=zeros,
            d2phi=zeros.copy(),
            d3phi=zeros.copy(),
            params=params,
            pm=pm,
        )

    # Solve the increasing problem; a decreasing wave is its mirror image
    lo, hi = min(rho_m, rho_p), max(rho_m, rho_p)
    shooter = _Shooter(params, pm, lo, xi_max, n_pts)

    def miss(slope: float) -> float:
        return shooter.integrate(slope) - hi

    # Linearised tail about lo gives the slope scale
    c_lo = float(pm.dq(lo))
    guess = (hi - lo) * math.sqrt(params.alpha / (4.0 * math.pi * c_lo)) * math.exp(
        -params.alpha * xi_max ** 2 / (4.0 * c_lo)
    )
    if guess <= 0.0 or not math.isfinite(guess):
        raise ShootingFailed(
            f"Initial slope underflows at xi_max = {xi_max:g}",
            fix_suggestion="Lower xi_max",
        )

    s_lo, s_hi = _bracket_slope(miss, guess)

    try:
        slope = optimize.brentq(
            miss, s_lo, s_hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=max_iter
        )
    except RuntimeError as e:
        raise ToleranceNotMet(f"Shooting did not converge: {e}") from e

    phi, dphi = shooter.integrate(slope, record=True)
    if abs(phi[-1] - hi) > tol:
        raise ToleranceNotMet(
            f"|phi(xi_max) - rho_+| = {abs(phi[-1] - hi):.3e} exceeds tol {tol:.1e}",
            fix_suggestion="Increase n_pts or relax profile_tol",
        )

    if rho_m > rho_p:
        phi = phi[::-1].copy()
        dphi = -dphi[::-1]
    phi = np.clip(phi, lo, hi)

    d2phi = ode_second_derivative(params, pm, xi, phi, dphi)
    d3phi = ode_third_derivative(params, pm, xi, phi, dphi, d2phi)

    direction = np.sign(rho_p - rho_m)
    if np.any(direction * np.diff(phi) < 0.0):
        raise ToleranceNotMet("Profile is not monotone")

    wp = WaveProfile(
        xi=xi,
        phi=phi,
        dphi=dphi,
        d2phi=d2phi,
        d3phi=d3phi,
        params=params,
        pm=pm,
        slope=float(slope),
        iterations=shooter.shots,
    )
    residual = float(np.max(np.abs(ode_residual(params, pm, wp))))
    limit = residual_tol * max(1.0, float(np.max(pm.dq(phi))))
    if residual > limit:
        raise ToleranceNotMet(
            f"Profile equation residual {residual:.3e} exceeds {limit:.1e}",
            fix_suggestion="Increase n_pts",
        )
    return replace(wp, max_residual=residual)


# ========================================
# Profile checks
# ========================================

class TailFit(NamedTuple):
    c_fit: float
    ok: bool
    r2: float


def tail_check(wp: WaveProfile) -> TailFit:
    """Fit log|phi - rho_+| against -alpha xi^2 on [xi_max/2, 0.9 xi_max].

    ok means c_fit > 0 and r^2 >= 0.99.

    Raises:
        InsufficientTail: deviation at roundoff level inside the window
    """
    rho_p = wp.params.rho_plus
    lo, hi = 0.5 * wp.xi_max, 0.9 * wp.xi_max
    mask = (wp.xi >= lo) & (wp.xi <= hi)
    dev = np.abs(wp.phi[mask] - rho_p)
    floor = TAIL_FLOOR * max(1.0, abs(rho_p))
    if dev.size < 3 or np.any(dev <= floor):
        raise InsufficientTail(
            "Tail deviation reaches the floating-point floor inside the fit window",
            fix_suggestion="Lower xi_max or use a genuine wave (rho_- != rho_+)",
        )

    x = -wp.params.alpha * np.square(wp.xi[mask])
    y = np.log(dev)
    coef, residuals, _, _, _ = np.polyfit(x, y, 1, full=True)
    ss_tot = float(np.sum(np.square(y - y.mean())))
    ss_res = float(residuals[0]) if residuals.size else 0.0
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    c_fit = float(coef[0])
    return TailFit(c_fit=c_fit, ok=bool(c_fit > 0.0 and r2 >= 0.99), r2=r2)


def first_integral_residual(wp: WaveProfile) -> float:
    """Relative mismatch between the table and the integrated form of phi'.

    With G = q'(phi) phi', the profile equation gives G' = -(alpha/2) xi phi',
    hence phi'(xi) = G(0)/q'(phi(xi)) exp(-int_0^xi alpha eta / (2 q'(phi)) d eta).
    """
    scale = float(np.max(np.abs(wp.dphi)))
    if scale == 0.0:
        return 0.0
    params, pm = wp.params, wp.pm
    dq = pm.dq(wp.phi)
    i0 = int(np.argmin(np.abs(wp.xi)))
    g0 = dq[i0] * wp.dphi[i0]

    integrand = params.alpha * wp.xi / (2.0 * dq)
    cum = cumulative_trapezoid(integrand, wp.xi, initial=0.0)
    cum -= cum[i0]
    predicted = g0 / dq * np.exp(-cum)
    return float(np.max(np.abs(predicted - wp.dphi)) / scale)


# ========================================
# Wave field
# ========================================

class WaveValues(NamedTuple):
    rho: np.ndarray
    m: np.ndarray
    phi: np.ndarray


def eval_wave(wp: WaveProfile, x, t, k: int = 0, l: int = 0) -> WaveValues:
    """Partial d_x^k d_t^l of (rho_bar, m_bar, phi_bar) at (x, t).

    rho_bar = phi(xi), m_bar = -(1/alpha) d_x q(rho_bar), phi_bar = (a/b) rho_bar,
    with xi = x / sqrt(1+t). Supported: l in {0, 1}, k + l <= 3.
    """
    if k < 0 or l not in (0, 1) or k + l > MAX_ORDER:
        raise OrderUnsupported(f"Partial d_x^{k} d_t^{l} is not tabulated (need l <= 1, k + l <= 3)")

    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise InvalidParams("Wave evaluation time must be >= 0")
    x = np.asarray(x, dtype=float)
    params, pm = wp.params, wp.pm

    s = 1.0 / np.sqrt(1.0 + t)
    xi = x * s
    # phi^(0..3) cover every combination allowed above
    d = wp.derivatives(xi, order=MAX_ORDER)

    if l == 0:
        rho = s ** k * d[k]
    else:
        rho = -0.5 * s ** (k + 2) * (k * d[k] + xi * d[k + 1])

    # G = q'(phi) phi' and its xi-derivatives
    g_needed = k + l
    phi0, phi1, phi2, phi3 = d
    dq, d2q, d3q = pm.dq(phi0), pm.d2q(phi0), pm.d3q(phi0)
    g = [dq * phi1]
    if g_needed >= 1:
        g.append(d2q * phi1 ** 2 + dq * phi2)
    if g_needed >= 2:
        g.append(d3q * phi1 ** 3 + 3.0 * d2q * phi1 * phi2 + dq * phi3)
    if g_needed >= 3:
        g.append(-0.5 * params.alpha * (2.0 * phi2 + xi * phi3))

    if l == 0:
        m = -(s ** (k + 1)) / params.alpha * g[k]
    else:
        m = s ** (k + 3) / (2.0 * params.alpha) * ((k + 1) * g[k] + xi * g[k + 1])

    phi_bar = params.a / params.b * rho
    return WaveValues(rho=rho, m=m, phi=phi_bar)


class WaveField:
    """Evaluator of the wave triple, optionally shifted by x0.

    field(x, t) evaluates the wave at x + x0.
    """

    def __init__(self, wp: WaveProfile, x0: float = 0.0):
        self.profile = wp
        self.x0 = float(x0)

    @property
    def params(self) -> Params:
        return self.profile.params

    @property
    def pm(self) -> PressureModel:
        return self.profile.pm

    def shifted(self, x0: float) -> "WaveField":
        return WaveField(self.profile, x0)

    def __call__(self, x, t, k: int = 0, l: int = 0) -> WaveValues:
        return eval_wave(self.profile, np.asarray(x, dtype=float) + self.x0, t, k, l)

    def rho_bar(self, x, t, k: int = 0, l: int = 0):
        return self(x, t, k, l).rho

    def m_bar(self, x, t, k: int = 0, l: int = 0):
        return self(x, t, k, l).m

    def phi_bar(self, x, t, k: int = 0, l: int = 0):
        return self(x, t, k, l).phi


# ========================================
# Self-similar decay
# ========================================

def wave_norm(wp: WaveProfile, k: int, l: int, p: float, t: float) -> float:
    """||d_t^l d_x^k rho_bar(., t)||_{L^p} for p in {2, inf}."""
    root = math.sqrt(1.0 + t)
    x = wp.xi * root
    values = eval_wave(wp, x, t, k, l).rho
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    if p != 2:
        raise InvalidParams(f"Norm index must be 2 or inf, got {p!r}")
    return float(math.sqrt(trapezoid(np.square(values), x)))


def profile_decay_scan(wp: WaveProfile, k: int, l: int, p: float, t_grid: Sequence[float]) -> float:
    """Log-log exponent of ||d_t^l d_x^k rho_bar||_{L^p} over t_grid.

    Self-similarity makes the norm scale like (1+t)^(-k/2 - l + 1/(2p)).

    Raises:
        InvalidParams: k + l outside 1..3
        WindowTooNarrow: fewer than 3 times, or t_grid spans less than a decade
        DegenerateFit: norms at the floating-point floor (e.g. constant wave)
    """
    if not 1 <= k + l <= MAX_ORDER:
        raise InvalidParams(f"profile_decay_scan needs 1 <= k + l <= 3, got k={k}, l={l}")
    t = np.asarray(t_grid, dtype=float)
    if t.size < MIN_SAMPLES:
        raise WindowTooNarrow(
            f"Scan grid holds {t.size} times, need at least {MIN_SAMPLES}",
            fix_suggestion="Pass more scan times",
        )
    decades = window_decades(float(t.min()), float(t.max()))
    if decades < MIN_DECADES - 1e-12:
        raise WindowTooNarrow(
            f"Scan grid spans {decades:.3f} decades, need {MIN_DECADES:g}",
            fix_suggestion="Widen the scan times to cover a decade",
        )
    norms = np.array([wave_norm(wp, k, l, p, ti) for ti in t])
    if np.any(~(norms > np.finfo(float).tiny)):
        raise DegenerateFit("Wave derivative norms vanish; nothing to fit")
    return log_slope(t, norms)


def expected_wave_exponent(k: int, l: int, p: float) -> float:
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return -0.5 * k - l + 0.5 * inv_p
