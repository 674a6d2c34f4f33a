"""
diffwave - Diffusion waves of a damped hyperbolic-parabolic chemotaxis system.

Builds the self-similar wave profile, integrates the full system with a
finite-volume scheme, and measures how fast solutions approach the wave.
"""

__version__ = "0.3.0"

from .errors import DiffwaveError
from .model import Params, PressureModel, check_admissible
from .wave import WaveField, WaveProfile, build_profile
from .solver import Grid, SchemeConfig, Solver, init_state

__all__ = [
    "__version__",
    "DiffwaveError",
    "Params",
    "PressureModel",
    "check_admissible",
    "WaveField",
    "WaveProfile",
    "build_profile",
    "Grid",
    "SchemeConfig",
    "Solver",
    "init_state",
]
