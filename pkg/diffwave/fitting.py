"""
Power-law fitting helpers shared by the wave and diagnostics modules.

Provides:
- fit_decay: least-squares slope of log(value) against log(1+t)
- theil_sen_slope: robust slope used by the boundedness monitors
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import DegenerateFit, NonpositiveValues, WindowTooNarrow

# Decades of (1+t) a fit window must span
MIN_DECADES = 1.0
MIN_SAMPLES = 3


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    r2: float
    intercept: float
    samples: int
    t_lo: float
    t_hi: float

    def predict(self, t):
        return np.exp(self.intercept) * np.power(1.0 + np.asarray(t, dtype=float), self.exponent)


def select_window(
    times: Sequence[float], values: Sequence[float], window: Optional[Tuple[float, float]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values must have the same shape")
    if window is not None:
        lo, hi = window
        mask = (t >= lo) & (t <= hi)
        t, v = t[mask], v[mask]
    return t, v


def window_decades(t_lo: float, t_hi: float) -> float:
    """Decades spanned by [t_lo, t_hi], in t or in (1+t), whichever is wider."""
    ratio = (1.0 + t_hi) / (1.0 + t_lo)
    if t_lo > 0.0:
        ratio = max(ratio, t_hi / t_lo)
    return float(np.log10(ratio)) if ratio > 0 else 0.0


def fit_decay(
    times: Sequence[float],
    values: Sequence[float],
    window: Optional[Tuple[float, float]] = None,
) -> DecayFit:
    """Fit values ~ C (1+t)^exponent over a time window.

    Args:
        times: Sample times (t >= 0)
        values: Positive samples
        window: Inclusive (t_lo, t_hi); the whole series when None

    Returns:
        DecayFit with the log-log slope and coefficient of determination

    Raises:
        WindowTooNarrow: fewer than 3 samples, or the window (the sample
            range when no window is given) spans less than a decade
        NonpositiveValues: a value in the window is <= 0 or not finite
    """
    t, v = select_window(times, values, window)
    if t.size < MIN_SAMPLES:
        raise WindowTooNarrow(
            f"Decay window holds {t.size} samples, need at least {MIN_SAMPLES}",
            fix_suggestion="Record more snapshots or widen fit_start/fit_end",
        )
    lo, hi = window if window is not None else (float(t.min()), float(t.max()))
    decades = window_decades(lo, hi)
    if decades < MIN_DECADES - 1e-12:
        raise WindowTooNarrow(
            f"Decay window spans {decades:.3f} decades of (1+t), need {MIN_DECADES:g}",
            fix_suggestion="Lower fit_start or raise t_end",
        )
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise NonpositiveValues("Decay fit needs strictly positive finite values")

    x = np.log1p(t)
    y = np.log(v)
    if np.ptp(y) == 0.0:
        # Constant series: exact zero slope, perfect fit
        return DecayFit(0.0, 1.0, float(y[0]), t.size, float(t.min()), float(t.max()))

    res = stats.linregress(x, y)
    return DecayFit(
        exponent=float(res.slope),
        r2=float(res.rvalue ** 2),
        intercept=float(res.intercept),
        samples=int(t.size),
        t_lo=float(t.min()),
        t_hi=float(t.max()),
    )


def log_slope(times: Sequence[float], values: Sequence[float]) -> float:
    """Log-log slope without the window checks; DegenerateFit on floor values."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 2 or np.any(~(v > np.finfo(float).tiny)):
        raise DegenerateFit("Values at or below the floating-point floor cannot be fitted")
    return float(stats.linregress(np.log1p(t), np.log(v)).slope)


def theil_sen_slope(times: Sequence[float], values: Sequence[float]) -> float:
    """Theil-Sen slope of log(value) against log(1+t); 0 for all-zero series."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0.0
    if np.count_nonzero(keep) < 2:
        return 0.0
    slope, _, _, _ = stats.theilslopes(np.log(v[keep]), np.log1p(t[keep]))
    return float(slope)
