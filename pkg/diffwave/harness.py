"""
Harness - Runs one experiment end to end and writes its data files.

    check_admissible -> build_profile -> compute_shift -> init_state
    -> Solver.run (diagnostics at every snapshot) -> decay fits

Output directory layout:
    manifest.json        run record (written before and after the run)
    profile.csv          xi,phi,dphi,d2phi
    snapshots.csv        SNAPSHOT_COLUMNS, one row per snapshot
    decay_report.csv     series,exponent,r2,theory_exponent,status
    monitor_report.csv   MONITOR_COLUMNS, one row per weighted monitor
    plotdata/            <series>.dat and plot.gp
    logs/                events.log, errors.log

CSV floats use 17 significant digits, so reruns are byte-identical.
"""

import csv
import io
import math
import time
import traceback
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel

from . import __version__
from .config import ExperimentConfig, build_config, parse_config_text
from .diagnostics import (
    MONITOR_WEIGHTS,
    ANTIDERIVATIVE_SERIES,
    SUP_NORM_SERIES,
    compute_shift,
    random_form_check,
    snapshot_row,
    weighted_monitor,
)
from .errors import AdmissibilityViolation, DegenerateFit, DiffwaveError, MissingSeries, OutputFailure
from .fitting import fit_decay
from .log_manager import LogManager
from .manifest import ManifestStore, RunManifest
from .model import StructuralCheck, check_admissible
from .solver import Solver, State, init_state
from .wave import WaveField, WaveProfile, build_profile

PROFILE_COLUMNS = ("xi", "phi", "dphi", "d2phi")
DECAY_COLUMNS = ("series", "exponent", "r2", "theory_exponent", "status")
MONITOR_COLUMNS = ("name", "weight", "sup", "final", "non_increasing", "theil_sen", "bounded", "sufficient")

SNAPSHOT_COLUMNS = (
    "t",
    "x0",
    "linf_rho_0",
    "linf_rho_1",
    "l2_rho_0",
    "l2_rho_1",
    "linf_m_0",
    "linf_m_1",
    "l2_m_0",
    "l2_m_1",
    "linf_phi_0",
    "linf_phi_1",
    "l2_phi_0",
    "l2_phi_1",
    "l2_phi_2",
    "l2_vx_0",
    "l2_vx_1",
    "l2_vx_2",
    "l2_vt_0",
    "l2_vt_1",
    "l2_vt_2",
    "h3_v",
    "h2_vt",
    "h3_phi",
    "n_t",
    "n_sup",
    "energy",
    "energy_ratio",
    "l2_h",
    "l2_f",
    "l2_g_0",
    "l2_g_1",
    "l2_g_2",
    "v_right",
    "band_min",
    "band_max",
    "band_violation",
    "interpolation_ok",
) + tuple(MONITOR_WEIGHTS)

# series -> theory exponent, in decay report order
DECAY_SERIES: Dict[str, float] = {**SUP_NORM_SERIES, **ANTIDERIVATIVE_SERIES}

# One plot file per sup-norm decay claim
PLOT_SERIES = tuple(SUP_NORM_SERIES)

# Series whose window maximum is below this are roundoff, not decay
NOISE_FLOOR = 1e-12

# Snapshot-log norms
_LOGGED_NORMS = ("linf_rho_0", "linf_m_0", "linf_phi_0", "energy", "v_right")


# ========================================
# CSV helpers
# ========================================

def format_float(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    return format_float(value)


def to_csv(columns: Sequence[str], rows: Iterable[Dict]) -> str:
    """Header plus one line per row, fields in `columns` order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> Tuple[List[str], List[Dict[str, str]]]:
    reader = csv.DictReader(io.StringIO(text))
    rows = list(reader)
    return list(reader.fieldnames or []), rows


def profile_csv(wp: WaveProfile) -> str:
    return to_csv(PROFILE_COLUMNS, (dict(zip(PROFILE_COLUMNS, r)) for r in wp.to_rows()))


# ========================================
# Decay fits
# ========================================

def fit_series(
    times: Sequence[float],
    values: Sequence[float],
    window: Tuple[float, float],
) -> Tuple[Optional[float], Optional[float], str]:
    """(exponent, r2, status) for one series; status is 'ok' or an error code."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    in_window = (t >= window[0]) & (t <= window[1])
    try:
        if in_window.any() and not np.any(np.abs(v[in_window]) > NOISE_FLOOR):
            raise DegenerateFit(f"Series stays below {NOISE_FLOOR:g} in the fit window")
        fit = fit_decay(t, v, window)
    except DiffwaveError as e:
        return None, None, e.error_code
    return fit.exponent, fit.r2, "ok"


def decay_report(
    rows: Sequence[Dict[str, float]],
    window: Tuple[float, float],
    series: Optional[Dict[str, float]] = None,
) -> List[Dict[str, object]]:
    """One report row per series, each fitted over `window`."""
    series = DECAY_SERIES if series is None else series
    times = [float(r["t"]) for r in rows]
    report = []
    for name, theory in series.items():
        values = [float(r[name]) for r in rows]
        exponent, r2, status = fit_series(times, values, window)
        report.append(
            {"series": name, "exponent": exponent, "r2": r2, "theory_exponent": theory, "status": status}
        )
    return report


# ========================================
# Snapshot recorder
# ========================================

class SnapshotRecorder:
    """Solver sink: runs the diagnostics on each snapshot state and keeps the rows."""

    def __init__(self, grid, wave: WaveField, x0: float, k_e: float, log_manager: Optional[LogManager] = None):
        self.grid = grid
        self.wave = wave
        self.x0 = x0
        self.k_e = k_e
        self.log_manager = log_manager
        self.rows: List[Dict[str, float]] = []
        self.monitors: Dict[str, List[float]] = {name: [] for name in MONITOR_WEIGHTS}
        self.n_sup = 0.0

    def __call__(self, state: State):
        analysis = snapshot_row(state, self.grid, self.wave, self.x0, self.k_e)
        row = analysis.row
        self.n_sup = max(self.n_sup, row["n_t"])
        row["n_sup"] = self.n_sup
        self.rows.append(row)
        for name, value in analysis.monitors.items():
            self.monitors[name].append(value)

        if self.log_manager is not None:
            self.log_manager.log_snapshot(
                t=state.t, index=len(self.rows) - 1, norms={k: row[k] for k in _LOGGED_NORMS}
            )
            if analysis.residual is not None and analysis.residual.band_violation:
                self.log_manager.log_band_violation(state.t, analysis.residual.band_min, analysis.residual.band_max)

    @property
    def times(self) -> List[float]:
        return [row["t"] for row in self.rows]


# ========================================
# Experiment
# ========================================

def build_wave(cfg: ExperimentConfig) -> Tuple[StructuralCheck, WaveProfile]:
    pm = cfg.pressure_model()
    struct = check_admissible(cfg.params, pm)
    wp = build_profile(cfg.params, pm, xi_max=cfg.xi_max, n_pts=cfg.n_pts, tol=cfg.profile_tol)
    return struct, wp


class ExperimentHarness:
    """Runs one configured experiment and records it in a manifest."""

    def __init__(self, cfg: ExperimentConfig, console: Optional[Console] = None, quiet: bool = False):
        """Initialize experiment harness.

        Args:
            cfg: Validated experiment configuration
            console: Rich console for progress output
            quiet: Suppress console output
        """
        self.cfg = cfg
        self.console = console or Console()
        self.quiet = quiet
        self.store = ManifestStore(cfg.out_dir)
        self.run_id = self.store.run_dir.name

    def _say(self, message: str):
        if not self.quiet:
            self.console.print(message)

    def run(self) -> RunManifest:
        """Run the experiment.

        Returns:
            Completed RunManifest

        Raises:
            DiffwaveError: Recorded in the manifest (status "failed") first
        """
        cfg = self.cfg
        manifest = RunManifest(
            config=cfg.to_dict(),
            config_text=cfg.to_text(),
            code_version=__version__,
            config_hash=cfg.config_hash(),
        )
        manifest.mark_started()
        self.store.save(manifest)

        log_manager = LogManager(log_dir=str(self.store.run_dir / "logs"), level=cfg.log_level)
        log_manager.log_run_start(self.run_id, manifest.config_hash, __version__)
        start_time = time.time()

        if not self.quiet:
            self.console.print(
                Panel(f"[bold cyan]Running experiment:[/bold cyan] {self.run_id}", expand=False)
            )

        try:
            try:
                self._execute(manifest, log_manager)
            except OSError as e:
                raise OutputFailure(f"I/O error during run: {e}") from e

            manifest.mark_completed()
            self.store.save(manifest)
            log_manager.log_run_complete(
                self.run_id, "completed", wall_time=time.time() - start_time, steps=manifest.steps
            )
            self._say(f"[bold green]✓[/bold green] Run completed in {manifest.steps} steps")
            self._say(f"[dim]Output saved to: {self.store.run_dir}[/dim]")
            return manifest

        except DiffwaveError as e:
            manifest.mark_failed(e.to_dict(), e.exit_code)
            try:
                self.store.save(manifest)
            except OutputFailure:
                pass
            log_manager.log_run_error(self.run_id, e.to_dict(), traceback=traceback.format_exc())
            self._say(f"[bold red]✗[/bold red] Run failed: {escape(e.message)}")
            raise
        finally:
            log_manager.close()

    def _execute(self, manifest: RunManifest, log_manager: LogManager):
        cfg = self.cfg
        params, grid = cfg.params, cfg.grid

        struct, wp = build_wave(cfg)
        form = random_form_check(struct, cfg.seed, rho_pool=wp.phi)
        manifest.form_check = form.to_dict()
        log_manager.log_profile_built(
            wp.iterations,
            wp.max_residual,
            wp.endpoint_errors,
            c1=struct.c1,
            c2=struct.c2,
            form_check=form.to_dict(),
        )
        if not form.ok:
            raise AdmissibilityViolation(
                f"Quadratic form leaves [c1, c2] by {form.worst:.3e} on random vectors (seed {form.seed})"
            )
        self.store.write_text("profile.csv", profile_csv(wp))
        manifest.add_file("profile", "profile.csv")

        wave = WaveField(wp)
        state0 = init_state(grid, wave, cfg.perturbation)
        x0 = 0.0 if wp.is_constant else compute_shift(state0.rho, grid, wave)
        manifest.x0 = x0

        recorder = SnapshotRecorder(grid, wave, x0, cfg.k_e, log_manager)
        recorder(state0)
        solver = Solver(grid, params, struct.pm, cfg.scheme)
        _, stats = solver.run(state0, cfg.t_end, sink=recorder)
        manifest.steps = stats.steps
        manifest.mass_defect = stats.mass_defect

        self.store.write_text("snapshots.csv", to_csv(SNAPSHOT_COLUMNS, recorder.rows))
        manifest.add_file("snapshots", "snapshots.csv")
        for index, t in enumerate(recorder.times):
            manifest.add_snapshot(t, index)

        report = decay_report(recorder.rows, cfg.fit_window)
        for row in report:
            log_manager.log_decay_fit(row["series"], row["exponent"], row["r2"], row["status"])
        self.store.write_text("decay_report.csv", to_csv(DECAY_COLUMNS, report))
        manifest.add_file("decay_report", "decay_report.csv")

        monitors = weighted_monitor(recorder.times, recorder.monitors)
        self.store.write_text("monitor_report.csv", to_csv(MONITOR_COLUMNS, (m._asdict() for m in monitors)))
        manifest.add_file("monitor_report", "monitor_report.csv")

        written = emit_plotdata(self.store.run_dir, skip_missing=True)
        if written:
            manifest.add_file("plotdata", "plotdata")


def run_experiment(cfg: ExperimentConfig, console: Optional[Console] = None, quiet: bool = True) -> RunManifest:
    """Run one experiment; see ExperimentHarness.run."""
    return ExperimentHarness(cfg, console=console, quiet=quiet).run()


# ========================================
# Post-processing
# ========================================

def _run_dir(source: Union[RunManifest, str, Path]) -> Path:
    if isinstance(source, RunManifest):
        return Path(source.config["out_dir"])
    return Path(source)


def load_snapshots(run_dir: Union[str, Path]) -> List[Dict[str, float]]:
    """Rows of snapshots.csv as floats.

    Raises:
        MissingSeries: snapshots.csv is absent or empty
    """
    text = ManifestStore(str(run_dir)).read_text("snapshots.csv")
    if text is None:
        raise MissingSeries(f"No snapshots.csv in {run_dir}")
    _, rows = read_csv(text)
    if not rows:
        raise MissingSeries(f"snapshots.csv in {run_dir} has no rows")
    return [{k: float(v) for k, v in row.items()} for row in rows]


def plot_series_data(times: Sequence[float], values: Sequence[float], name: str = "") -> str:
    """Two columns log10(1+t) log10(value), positive values only.

    Raises:
        MissingSeries: no positive value to plot
    """
    lines = []
    for t, v in zip(times, values):
        if v > 0.0 and math.isfinite(v):
            lines.append(f"{format_float(math.log10(1.0 + t))} {format_float(math.log10(v))}")
    if not lines:
        raise MissingSeries(f"Series {name or '<unnamed>'} has no positive samples to plot")
    return "\n".join(lines) + "\n"


def gnuplot_commands(series: Sequence[str]) -> str:
    lines = [
        "set xlabel 'log10(1+t)'",
        "set ylabel 'log10(norm)'",
        "set key left bottom",
        "plot \\",
    ]
    entries = [f"  '{name}.dat' using 1:2 with linespoints title '{name}'" for name in series]
    lines.append(", \\\n".join(entries))
    return "\n".join(lines) + "\n"


def emit_plotdata(
    source: Union[RunManifest, str, Path],
    series: Optional[Sequence[str]] = None,
    skip_missing: bool = False,
) -> List[Path]:
    """Write plotdata/<series>.dat and plotdata/plot.gp for a finished run.

    Args:
        source: RunManifest or run directory
        series: Columns of snapshots.csv to export (PLOT_SERIES by default)
        skip_missing: Leave out series without positive samples instead of raising

    Returns:
        Paths of the written files (plot.gp last)

    Raises:
        MissingSeries: No snapshots, unknown column, or a series with no
            positive samples (unless skip_missing)
    """
    run_dir = _run_dir(source)
    rows = load_snapshots(run_dir)
    series = PLOT_SERIES if series is None else tuple(series)
    store = ManifestStore(str(run_dir))
    times = [r["t"] for r in rows]

    written: List[Path] = []
    kept: List[str] = []
    for name in series:
        if name not in rows[0]:
            raise MissingSeries(f"snapshots.csv has no column {name!r}")
        try:
            data = plot_series_data(times, [r[name] for r in rows], name)
        except MissingSeries:
            if skip_missing:
                continue
            raise
        written.append(store.write_text(f"plotdata/{name}.dat", data))
        kept.append(name)

    if kept:
        written.append(store.write_text("plotdata/plot.gp", gnuplot_commands(kept)))
    return written


def refit(
    run_dir: Union[str, Path],
    window: Optional[Tuple[float, float]] = None,
) -> List[Dict[str, object]]:
    """Re-run every decay fit from snapshots.csv and rewrite decay_report.csv.

    The window defaults to the one in the run's manifest, else
    [t_end/10, t_end] of the recorded times.
    """
    rows = load_snapshots(run_dir)
    store = ManifestStore(str(run_dir))
    if window is None:
        manifest = store.load()
        if manifest is not None and manifest.config.get("fit_start") is not None:
            window = (float(manifest.config["fit_start"]), float(manifest.config["fit_end"]))
        else:
            t_end = max(r["t"] for r in rows)
            window = (t_end / 10.0, t_end)
    report = decay_report(rows, window)
    store.write_text("decay_report.csv", to_csv(DECAY_COLUMNS, report))
    return report


def config_from_manifest(run_dir: Union[str, Path], out_dir: Optional[str] = None) -> ExperimentConfig:
    """Rebuild the config a run was made with (optionally retargeted)."""
    manifest = ManifestStore(str(run_dir)).load()
    if manifest is None:
        raise OutputFailure(f"No manifest.json in {run_dir}")
    values = parse_config_text(manifest.config_text, f"{run_dir}/manifest.json")
    overrides = {"out_dir": out_dir} if out_dir is not None else None
    return build_config(values, overrides)
