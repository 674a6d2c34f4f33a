"""
Config - Experiment configuration: parsing, defaults and validation.

Config files are flat `key = value` lines (`#` starts a comment). Values are
typed with yaml.safe_load, so `1e-3`, `true` and `[1, 2]` parse naturally.
A `.yaml`/`.yml` file holding a flat mapping is accepted too.

Provides:
- KEY_TABLE: every key with its default and description
- load_config / parse_config_text / build_config
- ExperimentConfig: resolved, validated configuration tree
- describe_defaults: key table as text (used in --help)
"""

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .errors import AdmissibilityViolation, DiffwaveError, ParseError, ValidationError
from .model import Params, PressureModel, check_admissible
from .solver import DIFFUSION_MODES, PERTURBATION_KINDS, Grid, PerturbationSpec, SchemeConfig
from .wave import MIN_NODES

PRESSURE_LAWS = ("quadratic", "linear_q", "gamma_law")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# (key, default, kind, description); None defaults are resolved from other keys
KEY_TABLE: List[Tuple[str, Any, str, str]] = [
    ("alpha", 1.0, "float", "damping rate alpha (> 0)"),
    ("mu", 1.0, "float", "chemotactic sensitivity mu (> 0)"),
    ("a", 1.0, "float", "chemoattractant secretion rate (> 0)"),
    ("b", 1.0, "float", "chemoattractant death rate (> 0)"),
    ("dd", 1.0, "float", "chemoattractant diffusivity D (> 0)"),
    ("kappa", 2.0, "float", "pressure stiffness; quadratic law p = kappa/2 rho^2"),
    ("pressure_law", "quadratic", "str", "quadratic | linear_q | gamma_law"),
    ("gamma", 2.0, "float", "exponent of the gamma law p = kappa rho^gamma / gamma"),
    ("rho_minus", 0.8, "float", "far-field density at -infinity (> 0)"),
    ("rho_plus", 1.2, "float", "far-field density at +infinity (> 0)"),
    ("x_min", -400.0, "float", "left end of the domain"),
    ("x_max", 400.0, "float", "right end of the domain"),
    ("nx", 8192, "int", "cell count (>= 64)"),
    ("cfl", 0.45, "float", "hyperbolic CFL number in (0, 1)"),
    ("diffusion_mode", "implicit", "str", "explicit | implicit"),
    ("order", 2, "int", "scheme order: 1 (HLL/Euler) or 2 (MUSCL/Heun)"),
    ("t_end", 200.0, "float", "final time (>= 0)"),
    ("snapshots", 40, "int", "log-spaced snapshot count including t = 0 (>= 2)"),
    ("snapshot_times", None, "list", "explicit snapshot times; overrides `snapshots`"),
    ("perturbation", "none", "str", "none | shifted-wave | bump"),
    ("amplitude", 0.0, "float", "bump amplitude"),
    ("support", 5.0, "float", "bump half-width (> 0)"),
    ("center", 0.0, "float", "bump centre"),
    ("shift", 0.0, "float", "shift s of the shifted-wave initial data"),
    ("zero_mass", False, "bool", "use the odd, zero-mass bump"),
    ("xi_max", 8.0, "float", "profile half-width in xi (> 0)"),
    ("n_pts", 4001, "int", f"profile node count (>= {MIN_NODES})"),
    ("profile_tol", 1e-10, "float", "shooting end-value tolerance (> 0)"),
    ("k_e", None, "float", "energy weight; default 4/alpha + 1, needs alpha*k_e > 1"),
    ("fit_start", None, "float", "decay-fit window start; default t_end/10"),
    ("fit_end", None, "float", "decay-fit window end; default t_end"),
    ("out_dir", "runs/default", "str", "output directory"),
    ("seed", 0, "int", "seed of the random quadratic-form check (c1, c2 bounds)"),
    ("log_level", "INFO", "str", "DEBUG | INFO | WARNING | ERROR"),
]

DEFAULTS: Dict[str, Any] = {key: default for key, default, _, _ in KEY_TABLE}
KINDS: Dict[str, str] = {key: kind for key, _, kind, _ in KEY_TABLE}

_LINE = re.compile(r"^\s*(?P<key>[^=#\s][^=#]*?)\s*=\s*(?P<value>[^#]*?)\s*(?:#.*)?$")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved and validated experiment configuration."""

    params: Params
    kappa: float
    pressure_law: str
    gamma: float
    grid: Grid
    scheme: SchemeConfig
    perturbation: PerturbationSpec
    t_end: float
    snapshots: int
    snapshot_times: Optional[Tuple[float, ...]]
    xi_max: float
    n_pts: int
    profile_tol: float
    k_e: float
    fit_start: float
    fit_end: float
    out_dir: str
    seed: int
    log_level: str
    values: Dict[str, Any] = field(default_factory=dict, compare=False)

    def pressure_model(self) -> PressureModel:
        return make_pressure_model(self.pressure_law, self.kappa, self.gamma, self.params)

    @property
    def fit_window(self) -> Tuple[float, float]:
        return self.fit_start, self.fit_end

    def schedule(self) -> List[float]:
        """Snapshot times, t = 0 first."""
        return snapshot_schedule(self.t_end, self.snapshots, self.snapshot_times)

    def to_text(self) -> str:
        return config_to_text(self.values)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.values)


def make_pressure_model(law: str, kappa: float, gamma: float, params: Params) -> PressureModel:
    if law == "quadratic":
        return PressureModel.quadratic(kappa, params)
    if law == "linear_q":
        return PressureModel.linear_q(kappa, params)
    if law == "gamma_law":
        return PressureModel.gamma_law(kappa, gamma, params)
    raise ValueError(f"Unknown pressure law {law!r}")


def snapshot_schedule(t_end: float, count: int, explicit: Optional[Tuple[float, ...]] = None) -> List[float]:
    """t = 0 plus either the explicit times in (0, t_end] or the log-spaced
    times t_j = (1+t_end)^(j/(N-1)) - 1, j = 1..N-1."""
    if t_end <= 0.0:
        return [0.0]
    if explicit is not None:
        times = sorted({float(t) for t in explicit if 0.0 < t <= t_end})
    else:
        times = [(1.0 + t_end) ** (j / (count - 1)) - 1.0 for j in range(1, count)]
        times[-1] = float(t_end)
    return [0.0] + times


# ========================================
# Parsing
# ========================================

def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse flat key = value text into typed raw values.

    Raises:
        ParseError: malformed line, bad value syntax, unknown or duplicate key
    """
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _LINE.match(raw)
        if match is None:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ParseError(f"{source}: expected `key = value`, got {stripped!r}", line=lineno, col=col)

        key = match.group("key")
        key_col = match.start("key") + 1
        if key not in DEFAULTS:
            raise ParseError(f"{source}: unknown key {key!r}", line=lineno, col=key_col, key=key)
        if key in values:
            raise ParseError(f"{source}: duplicate key {key!r}", line=lineno, col=key_col, key=key)

        value_text = match.group("value")
        try:
            value = yaml.safe_load(value_text) if value_text else None
        except yaml.YAMLError as e:
            raise ParseError(
                f"{source}: cannot parse value of {key!r}: {value_text!r} ({e.__class__.__name__})",
                line=lineno,
                col=match.start("value") + 1,
                key=key,
            ) from e
        values[key] = value
    return values


def parse_yaml_mapping(text: str, source: str = "<config>") -> Dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        col = mark.column + 1 if mark is not None else 0
        raise ParseError(f"{source}: invalid YAML ({e.__class__.__name__})", line=line, col=col) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError(f"{source}: YAML config must be a flat mapping", line=1, col=1)
    for key in data:
        if key not in DEFAULTS:
            raise ParseError(f"{source}: unknown key {key!r}", line=1, col=1, key=str(key))
    return dict(data)


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Load, resolve and validate an experiment config file.

    Args:
        path: Config file (key = value text, or .yaml/.yml mapping)
        overrides: Values applied on top of the file (CLI flags)

    Returns:
        ExperimentConfig

    Raises:
        ParseError: Syntax error or unknown key (with line/col)
        ValidationError: One record per failed constraint
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        values = parse_yaml_mapping(text, str(path))
    else:
        values = parse_config_text(text, str(path))
    return build_config(values, overrides)


# ========================================
# Resolution and validation
# ========================================

def _error(path: str, message: str, fix: str = "") -> Dict[str, str]:
    record = {"path": path, "message": message}
    if fix:
        record["fix_suggestion"] = fix
    return record


def _as_number(value: Any) -> Any:
    # YAML 1.1 reads exponent forms without a dot (1e-10) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(key: str, value: Any, errors: List[Dict[str, str]]) -> Any:
    kind = KINDS[key]
    if value is None:
        return None
    if kind == "float":
        value = _as_number(value)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(_error(key, f"expected a number, got {value!r}"))
            return None
        value = float(value)
        if not math.isfinite(value):
            errors.append(_error(key, f"must be finite, got {value!r}"))
            return None
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(_error(key, f"expected an integer, got {value!r}"))
            return None
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            errors.append(_error(key, f"expected true or false, got {value!r}"))
            return None
        return value
    if kind == "list":
        if isinstance(value, list):
            value = [_as_number(v) for v in value]
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            errors.append(_error(key, f"expected a list of numbers, got {value!r}"))
            return None
        return [float(v) for v in value]
    return str(value)


def resolve_values(values: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    merged = dict(DEFAULTS)
    for source in (values, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ParseError(f"unknown key {key!r}", key=key)
            if value is not None:
                merged[key] = value
    return merged


def build_config(values: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Apply defaults, then validate every constraint before building objects."""
    merged = resolve_values(values, overrides)
    errors: List[Dict[str, str]] = []
    v = {key: _coerce(key, merged[key], errors) for key in DEFAULTS}
    if errors:
        raise ValidationError(errors)

    for key in ("alpha", "mu", "a", "b", "dd", "rho_minus", "rho_plus", "kappa", "gamma", "support", "xi_max", "profile_tol"):
        if not v[key] > 0:
            errors.append(_error(key, f"must be strictly positive, got {v[key]!r}"))
    if v["pressure_law"] not in PRESSURE_LAWS:
        errors.append(_error("pressure_law", f"must be one of {PRESSURE_LAWS}, got {v['pressure_law']!r}"))
    if v["diffusion_mode"] not in DIFFUSION_MODES:
        errors.append(_error("diffusion_mode", f"must be one of {DIFFUSION_MODES}, got {v['diffusion_mode']!r}"))
    if v["perturbation"] not in PERTURBATION_KINDS:
        errors.append(_error("perturbation", f"must be one of {PERTURBATION_KINDS}, got {v['perturbation']!r}"))
    if v["order"] not in (1, 2):
        errors.append(_error("order", f"must be 1 or 2, got {v['order']!r}"))
    if not 0.0 < v["cfl"] < 1.0:
        errors.append(_error("cfl", f"must lie in (0, 1), got {v['cfl']!r}"))
    if v["nx"] < 64:
        errors.append(_error("nx", f"must be at least 64, got {v['nx']}"))
    if not v["x_max"] > v["x_min"]:
        errors.append(_error("x_max", f"must exceed x_min ({v['x_min']})"))
    if v["n_pts"] < MIN_NODES:
        errors.append(_error("n_pts", f"must be at least {MIN_NODES}, got {v['n_pts']}"))
    if v["t_end"] < 0.0:
        errors.append(_error("t_end", f"must be >= 0, got {v['t_end']}"))
    if v["snapshots"] < 2:
        errors.append(_error("snapshots", f"must be at least 2, got {v['snapshots']}"))
    if v["log_level"].upper() not in LOG_LEVELS:
        errors.append(_error("log_level", f"must be one of {LOG_LEVELS}, got {v['log_level']!r}"))
    if errors:
        raise ValidationError(errors)

    # Derived defaults
    if v["k_e"] is None:
        v["k_e"] = 4.0 / v["alpha"] + 1.0
    if v["fit_start"] is None:
        v["fit_start"] = v["t_end"] / 10.0
    if v["fit_end"] is None:
        v["fit_end"] = v["t_end"]
    v["log_level"] = v["log_level"].upper()

    if v["alpha"] * v["k_e"] <= 1.0:
        errors.append(_error("k_e", f"alpha * k_e = {v['alpha'] * v['k_e']:g} must exceed 1", f"use k_e > {1.0 / v['alpha']:g}"))
    if v["t_end"] > 0.0 and not 0.0 <= v["fit_start"] < v["fit_end"]:
        errors.append(_error("fit_start", f"fit window [{v['fit_start']}, {v['fit_end']}] is empty"))

    params = Params(
        alpha=v["alpha"], mu=v["mu"], a=v["a"], b=v["b"], dd=v["dd"],
        rho_minus=v["rho_minus"], rho_plus=v["rho_plus"],
    )
    pm = make_pressure_model(v["pressure_law"], v["kappa"], v["gamma"], params)
    try:
        check_admissible(params, pm)
    except AdmissibilityViolation as e:
        errors.append(
            _error(
                "kappa",
                f"admissibility condition p'(rho) - (a*mu/b) rho > 0 fails: {e.message}",
                e.fix_suggestion or "",
            )
        )

    grid = Grid(v["x_min"], v["x_max"], v["nx"])
    if v["rho_minus"] != v["rho_plus"]:
        center = -v["shift"] if v["perturbation"] == "shifted-wave" else 0.0
        need = grid.required_clearance(v["xi_max"], v["t_end"])
        if grid.clearance(center) < need:
            errors.append(
                _error(
                    "x_min",
                    f"domain leaves {grid.clearance(center):g} around the wave, need {need:g} up to t_end",
                    "Widen [x_min, x_max] or lower t_end",
                )
            )
    if errors:
        raise ValidationError(errors)

    explicit = tuple(v["snapshot_times"]) if v["snapshot_times"] is not None else None
    schedule = snapshot_schedule(v["t_end"], v["snapshots"], explicit)
    try:
        scheme = SchemeConfig(
            cfl=v["cfl"], diffusion_mode=v["diffusion_mode"], order=v["order"], snapshot_times=tuple(schedule[1:])
        )
        perturbation = PerturbationSpec(
            kind=v["perturbation"],
            amplitude=v["amplitude"],
            support=v["support"],
            center=v["center"],
            shift=v["shift"],
            zero_mass=v["zero_mass"],
        )
    except DiffwaveError as e:
        raise ValidationError([_error("scheme", e.message)]) from e

    return ExperimentConfig(
        params=params,
        kappa=v["kappa"],
        pressure_law=v["pressure_law"],
        gamma=v["gamma"],
        grid=grid,
        scheme=scheme,
        perturbation=perturbation,
        t_end=v["t_end"],
        snapshots=v["snapshots"],
        snapshot_times=explicit,
        xi_max=v["xi_max"],
        n_pts=v["n_pts"],
        profile_tol=v["profile_tol"],
        k_e=v["k_e"],
        fit_start=v["fit_start"],
        fit_end=v["fit_end"],
        out_dir=v["out_dir"],
        seed=v["seed"],
        log_level=v["log_level"],
        values=v,
    )


# ========================================
# Text output
# ========================================

def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def config_to_text(values: Dict[str, Any]) -> str:
    """Canonical key = value text; reloading it gives the same config."""
    lines = []
    for key, _, _, _ in KEY_TABLE:
        text = format_value(values.get(key))
        lines.append(f"{key} = {text}" if text else f"{key} =")
    return "\n".join(lines) + "\n"


def describe_defaults() -> str:
    width = max(len(key) for key, _, _, _ in KEY_TABLE)
    lines = ["Config keys (key = default):"]
    for key, default, _, description in KEY_TABLE:
        shown = format_value(default) or "(derived)"
        lines.append(f"  {key.ljust(width)} = {shown:<14} {description}")
    return "\n".join(lines)
