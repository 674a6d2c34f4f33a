"""
Model - Physical parameters, pressure laws and structural checks.

Provides:
- Params: damping, chemotaxis, secretion/death rates, diffusivity, far fields
- PressureModel: p, p', p'' (and p''') with the reduced pressure
  q(rho) = p(rho) - (a*mu/(2b)) rho^2 and its derivatives
- check_admissible: the q' > 0 condition and the eigenvalue bounds of
  A(rho) = [[p'(rho), -mu rho], [-mu rho, b mu rho / a]] over the
  admissibility band [min(rho_pm)/2, 2 max(rho_pm)]
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import AdmissibilityViolation, InvalidParams, NonpositiveDensity

# Samples used for every band sweep (endpoints included)
BAND_SAMPLES = 1000


@dataclass(frozen=True)
class Params:
    """Physical constants and far-field densities."""

    alpha: float = 1.0
    mu: float = 1.0
    a: float = 1.0
    b: float = 1.0
    dd: float = 1.0
    rho_minus: float = 0.8
    rho_plus: float = 1.2

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise InvalidParams if a constant is not strictly positive."""
        for name in ("alpha", "mu", "a", "b", "dd", "rho_minus", "rho_plus"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParams(
                    f"{name} must be strictly positive, got {value!r}",
                    fix_suggestion=f"Set {name} to a positive number",
                )

    @property
    def phi_minus(self) -> float:
        return self.a / self.b * self.rho_minus

    @property
    def phi_plus(self) -> float:
        return self.a / self.b * self.rho_plus

    def delta0(self) -> float:
        """Wave strength |rho_+ - rho_-|."""
        return abs(self.rho_plus - self.rho_minus)

    def band(self) -> Tuple[float, float]:
        """Admissibility band [min(rho_pm)/2, 2 max(rho_pm)]."""
        lo = min(self.rho_minus, self.rho_plus)
        hi = max(self.rho_minus, self.rho_plus)
        return 0.5 * lo, 2.0 * hi

    @property
    def chemo_coefficient(self) -> float:
        """a*mu/b, the quadratic part removed from p to get q."""
        return self.a * self.mu / self.b


@dataclass(frozen=True)
class PressureModel:
    """Pressure law p with derivatives, plus the reduced pressure q.

    Build it with one of the factories (`quadratic`, `linear_q`,
    `gamma_law`, `custom`); `kappa` is the stiffness constant of the law.
    """

    params: Params
    kappa: float
    name: str
    p: Callable
    dp: Callable
    d2p: Callable
    d3p: Callable
    # (q', q'') on plain floats, for scalar loops; None falls back to float() of dq/d2q
    scalar_dq: Optional[Tuple[Callable, Callable]] = None

    # ========================================
    # Factories
    # ========================================

    @classmethod
    def quadratic(cls, kappa: float, params: Params) -> "PressureModel":
        """p(rho) = (kappa/2) rho^2."""
        c0 = kappa - params.chemo_coefficient
        return cls(
            params=params,
            kappa=kappa,
            name="quadratic",
            p=lambda r: 0.5 * kappa * np.square(r),
            dp=lambda r: kappa * np.asarray(r, dtype=float),
            d2p=lambda r: kappa * np.ones_like(r, dtype=float),
            d3p=lambda r: np.zeros_like(r, dtype=float),
            scalar_dq=(lambda r: c0 * r, lambda r: c0),
        )

    @classmethod
    def linear_q(cls, c: float, params: Params) -> "PressureModel":
        """p(rho) = c rho + (a mu / 2b) rho^2, so that q'(rho) = c."""
        k = params.chemo_coefficient
        return cls(
            params=params,
            kappa=c,
            name="linear_q",
            p=lambda r: c * np.asarray(r, dtype=float) + 0.5 * k * np.square(r),
            dp=lambda r: c + k * np.asarray(r, dtype=float),
            d2p=lambda r: k * np.ones_like(r, dtype=float),
            d3p=lambda r: np.zeros_like(r, dtype=float),
            scalar_dq=(lambda r: c, lambda r: 0.0),
        )

    @classmethod
    def gamma_law(cls, kappa: float, gamma: float, params: Params) -> "PressureModel":
        """p(rho) = kappa rho^gamma / gamma."""
        k = params.chemo_coefficient
        return cls(
            params=params,
            kappa=kappa,
            name=f"gamma_law({gamma:g})",
            p=lambda r: kappa * np.power(r, gamma) / gamma,
            dp=lambda r: kappa * np.power(r, gamma - 1.0),
            d2p=lambda r: kappa * (gamma - 1.0) * np.power(r, gamma - 2.0),
            d3p=lambda r: kappa * (gamma - 1.0) * (gamma - 2.0) * np.power(r, gamma - 3.0),
            scalar_dq=(
                lambda r: kappa * r ** (gamma - 1.0) - k * r,
                lambda r: kappa * (gamma - 1.0) * r ** (gamma - 2.0) - k,
            ),
        )

    @classmethod
    def custom(
        cls,
        p: Callable,
        dp: Callable,
        d2p: Callable,
        params: Params,
        d3p: Optional[Callable] = None,
        kappa: float = float("nan"),
        name: str = "custom",
    ) -> "PressureModel":
        """User-supplied (p, p', p'') triple.

        p''' falls back to a centred difference of p'' when not given.
        """
        if d3p is None:
            def d3p(r, _h=1e-5):
                r = np.asarray(r, dtype=float)
                return (d2p(r + _h) - d2p(r - _h)) / (2.0 * _h)

        return cls(params=params, kappa=kappa, name=name, p=p, dp=dp, d2p=d2p, d3p=d3p)

    # ========================================
    # Reduced pressure q
    # ========================================

    def q(self, rho):
        return self.p(rho) - 0.5 * self.params.chemo_coefficient * np.square(rho)

    def dq(self, rho):
        return self.dp(rho) - self.params.chemo_coefficient * np.asarray(rho, dtype=float)

    def d2q(self, rho):
        return self.d2p(rho) - self.params.chemo_coefficient

    def d3q(self, rho):
        return self.d3p(rho)

    def scalar_reduced(self) -> Tuple[Callable, Callable]:
        """(q', q'') as float -> float callables."""
        if self.scalar_dq is not None:
            return self.scalar_dq
        dq, d2q = self.dq, self.d2q
        return (lambda r: float(dq(r))), (lambda r: float(d2q(r)))

    def sound_speed(self, rho):
        """sqrt(p'(rho)), the acoustic speed of the hyperbolic part."""
        return np.sqrt(self.dp(rho))


@dataclass(frozen=True)
class StructuralCheck:
    """Outcome of the admissibility sweep.

    c1/c2 bound the quadratic form
        p'(rho) x1^2 - 2 mu rho x1 x2 + (b mu rho / a) x2^2
    from below/above by c1 (x1^2 + x2^2) and c2 (x1^2 + x2^2) on the band.
    """

    params: Params
    pm: PressureModel
    c1: float
    c2: float
    band: Tuple[float, float]
    min_dq: float
    argmin_dq: float
    samples: int = field(default=BAND_SAMPLES + 2)

    def matrix(self, rho) -> np.ndarray:
        """A(rho) stacked over rho, shape (..., 2, 2)."""
        return structural_matrix(self.params, self.pm, rho)

    def lambda1(self, rho):
        """Smaller eigenvalue of A(rho)."""
        return np.linalg.eigvalsh(self.matrix(rho))[..., 0]

    def lambda2(self, rho):
        """Larger eigenvalue of A(rho)."""
        return np.linalg.eigvalsh(self.matrix(rho))[..., 1]

    def quadratic_form(self, rho, x1, x2):
        prm = self.params
        return (
            self.pm.dp(rho) * np.square(x1)
            - 2.0 * prm.mu * rho * x1 * x2
            + prm.b * prm.mu * rho / prm.a * np.square(x2)
        )

    def to_dict(self) -> dict:
        return {
            "pressure_law": self.pm.name,
            "kappa": self.pm.kappa,
            "band_lo": self.band[0],
            "band_hi": self.band[1],
            "c1": self.c1,
            "c2": self.c2,
            "min_dq": self.min_dq,
            "argmin_dq": self.argmin_dq,
            "samples": self.samples,
        }


def structural_matrix(params: Params, pm: PressureModel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    mat = np.empty(rho.shape + (2, 2))
    mat[..., 0, 0] = pm.dp(rho)
    mat[..., 0, 1] = -params.mu * rho
    mat[..., 1, 0] = -params.mu * rho
    mat[..., 1, 1] = params.b * params.mu * rho / params.a
    return mat


def band_samples(params: Params, count: int = BAND_SAMPLES) -> np.ndarray:
    """`count` uniform interior points of the band plus both endpoints."""
    lo, hi = params.band()
    return np.linspace(lo, hi, count + 2)


def check_admissible(params: Params, pm: PressureModel) -> StructuralCheck:
    """Verify q' > 0 on the admissibility band and bound A's eigenvalues.

    Args:
        params: Physical parameters
        pm: Pressure model

    Returns:
        StructuralCheck with c1 = min lambda_min(A), c2 = max lambda_max(A)

    Raises:
        InvalidParams: A constant is not strictly positive
        AdmissibilityViolation: q'(rho) <= 0 at some sampled rho, or the
            pressure law is not smooth on the band
    """
    params.validate()
    rho = band_samples(params)

    p = np.asarray(pm.p(rho), dtype=float)
    dp = np.asarray(pm.dp(rho), dtype=float)
    d2p = np.asarray(pm.d2p(rho), dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(dp)) and np.all(np.isfinite(d2p))):
        raise AdmissibilityViolation(f"Pressure law '{pm.name}' is not finite on the band {params.band()}")

    # p'' consistency with p' (smoothness proxy on the band)
    h = 1e-5
    fd = (pm.dp(rho + h) - pm.dp(rho - h)) / (2.0 * h)
    scale = np.maximum(1.0, np.abs(d2p))
    if np.max(np.abs(fd - d2p) / scale) > 1e-4:
        raise AdmissibilityViolation(
            f"Pressure law '{pm.name}': p'' is inconsistent with p' on the band"
        )

    dq = np.asarray(pm.dq(rho), dtype=float)
    i_min = int(np.argmin(dq))
    if dq[i_min] <= 0.0:
        raise AdmissibilityViolation(
            f"q'(rho) = p'(rho) - (a*mu/b) rho = {dq[i_min]:.6g} <= 0 at rho = {rho[i_min]:.6g}",
            rho=float(rho[i_min]),
            dq=float(dq[i_min]),
        )

    eig = np.linalg.eigvalsh(structural_matrix(params, pm, rho))
    c1 = float(np.min(eig[:, 0]))
    c2 = float(np.max(eig[:, 1]))
    if c1 <= 0.0:
        raise AdmissibilityViolation(f"A(rho) is not positive definite on the band (min eigenvalue {c1:.6g})")

    return StructuralCheck(
        params=params,
        pm=pm,
        c1=c1,
        c2=c2,
        band=params.band(),
        min_dq=float(dq[i_min]),
        argmin_dq=float(rho[i_min]),
        samples=rho.size,
    )


def eval_pressure_chain(pm: PressureModel, rho):
    """Return (p, p', p'', q, q', q'') at rho.

    Raises:
        NonpositiveDensity: rho <= 0 anywhere
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(~(rho_arr > 0.0)):
        raise NonpositiveDensity(f"Density must be positive, got min {np.min(rho_arr)!r}")
    return (
        pm.p(rho),
        pm.dp(rho),
        pm.d2p(rho),
        pm.q(rho),
        pm.dq(rho),
        pm.d2q(rho),
    )
