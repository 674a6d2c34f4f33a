"""
Command-line interface.

Usage:
    diffwave check --config experiments/default-wave.conf
    diffwave profile --config experiments/default-wave.conf --out runs/profile
    diffwave run --config experiments/default-wave.conf --t-end 50 --snapshots 20
    diffwave fit --out runs/default

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .config import ExperimentConfig, build_config, describe_defaults, load_config
from .errors import AdmissibilityViolation, DiffwaveError, OutputFailure
from .harness import build_wave, profile_csv, read_csv, refit, run_experiment
from .log_manager import LogManager
from .manifest import ManifestStore
from .diagnostics import random_form_check
from .model import check_admissible
from .wave import first_integral_residual, tail_check

EXIT_OK = 0


def _fmt(value: Optional[float], digits: int = 6) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}g}"


def _describe_outcome(message: Dict[str, Any]) -> str:
    """One line for a run_complete / run_error event."""
    run_id = message.get("run_id")
    if message.get("event") == "run_complete":
        text = (
            f"run_complete {run_id}: status {message.get('status')}, "
            f"{message.get('steps')} steps in {_fmt(message.get('wall_time'), 3)} s"
        )
    else:
        error = message.get("error") or {}
        text = f"run_error {run_id}: {error.get('error_code')} {error.get('message', '')}"
    return escape(text)


class DiffwaveCLI:
    """Dispatches the subcommands and renders their results."""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    # ========================================
    # Config
    # ========================================

    @staticmethod
    def overrides(args: argparse.Namespace) -> Dict[str, Any]:
        return {
            "t_end": args.t_end,
            "nx": args.nx,
            "snapshots": args.snapshots,
            "seed": args.seed,
            "out_dir": args.out,
        }

    def load(self, args: argparse.Namespace) -> ExperimentConfig:
        overrides = self.overrides(args)
        if args.config is None:
            return build_config({}, overrides)
        try:
            return load_config(args.config, overrides)
        except OSError as e:
            raise OutputFailure(f"Cannot read config {args.config}: {e}") from e

    # ========================================
    # Subcommands
    # ========================================

    def check(self, args: argparse.Namespace) -> int:
        """Admissibility report; exit 2 when the pressure law is inadmissible."""
        cfg = self.load(args)
        struct = check_admissible(cfg.params, cfg.pressure_model())
        table = Table(title="Structural Check", show_header=True, header_style="bold cyan")
        table.add_column("Quantity", style="green")
        table.add_column("Value")
        table.add_row("pressure law", struct.pm.name)
        table.add_row("band", f"\\[{_fmt(struct.band[0])}, {_fmt(struct.band[1])}]")
        table.add_row("min q'", f"{_fmt(struct.min_dq)} at rho = {_fmt(struct.argmin_dq)}")
        table.add_row("c1", _fmt(struct.c1))
        table.add_row("c2", _fmt(struct.c2))
        table.add_row("delta0", _fmt(cfg.params.delta0()))
        form = random_form_check(struct, cfg.seed)
        table.add_row(
            f"form check (seed {form.seed})",
            f"{form.samples} vectors, worst breach {_fmt(form.worst, 3)}, ok={form.ok}",
        )
        self.console.print(table)
        if not form.ok:
            raise AdmissibilityViolation(
                f"Quadratic form leaves [c1, c2] by {form.worst:.3e} on random vectors (seed {form.seed})"
            )
        self.console.print("[bold green]✓[/bold green] Admissible")
        return EXIT_OK

    def profile(self, args: argparse.Namespace) -> int:
        cfg = self.load(args)
        struct, wp = build_wave(cfg)
        store = ManifestStore(cfg.out_dir)
        path = store.write_text("profile.csv", profile_csv(wp))

        table = Table(title="Wave Profile", show_header=True, header_style="bold cyan")
        table.add_column("Quantity", style="green")
        table.add_column("Value")
        table.add_row("nodes", str(wp.n_pts))
        table.add_row("xi_max", _fmt(wp.xi_max))
        table.add_row("shooting iterations", str(wp.iterations))
        table.add_row("max ODE residual", _fmt(wp.max_residual, 3))
        table.add_row("endpoint errors", ", ".join(_fmt(e, 3) for e in wp.endpoint_errors))
        table.add_row("phi(0)", _fmt(float(wp.derivatives(0.0, 0)[0]), 10))
        if not wp.is_constant:
            table.add_row("first-integral residual", _fmt(first_integral_residual(wp), 3))
            try:
                tail = tail_check(wp)
                table.add_row("tail constant", f"{_fmt(tail.c_fit)} (r2 {_fmt(tail.r2, 4)}, ok={tail.ok})")
            except DiffwaveError as e:
                table.add_row("tail constant", f"[yellow]{escape(e.message)}[/yellow]")
        self.console.print(table)
        self.console.print(f"[dim]Profile saved to: {path}[/dim]")
        return EXIT_OK

    def run(self, args: argparse.Namespace) -> int:
        cfg = self.load(args)
        manifest = run_experiment(cfg, console=self.console, quiet=False)
        self._print_decay(Path(cfg.out_dir))
        self.console.print(f"[dim]Steps: {manifest.steps}, x0 = {_fmt(manifest.x0, 10)}[/dim]")
        return EXIT_OK

    def fit(self, args: argparse.Namespace) -> int:
        """Re-run the decay fits of an existing run directory."""
        run_dir = Path(args.out) if args.out is not None else Path(self.load(args).out_dir)
        report = refit(run_dir)
        self._print_decay(run_dir, report)

        logs_dir = run_dir / "logs"
        if logs_dir.exists():
            log_manager = LogManager(log_dir=str(logs_dir))
            try:
                last = log_manager.last_outcome()
            finally:
                log_manager.close()
            if last is not None:
                stamp = escape(str(last["timestamp"]))
                self.console.print(f"[dim]Last run ({stamp}): {_describe_outcome(last)}[/dim]")
        return EXIT_OK

    # ========================================
    # Output
    # ========================================

    def _print_decay(self, run_dir: Path, report: Optional[List[Dict[str, Any]]] = None):
        if report is None:
            text = ManifestStore(str(run_dir)).read_text("decay_report.csv")
            if text is None:
                return
            _, rows = read_csv(text)
            report = [
                {
                    "series": r["series"],
                    "exponent": float(r["exponent"]) if r["exponent"] else None,
                    "r2": float(r["r2"]) if r["r2"] else None,
                    "theory_exponent": float(r["theory_exponent"]),
                    "status": r["status"],
                }
                for r in rows
            ]

        table = Table(title="Decay Report", show_header=True, header_style="bold cyan")
        table.add_column("Series", style="green")
        table.add_column("Exponent", justify="right")
        table.add_column("r2", justify="right")
        table.add_column("Theory", justify="right")
        table.add_column("Status")
        for row in report:
            status = row["status"]
            style = "green" if status == "ok" else "yellow"
            table.add_row(
                row["series"],
                _fmt(row["exponent"], 4),
                _fmt(row["r2"], 4),
                _fmt(row["theory_exponent"], 4),
                f"[{style}]{status}[/{style}]",
            )
        self.console.print(table)

    def _print_error(self, error: DiffwaveError):
        lines = [f"[bold red]{error.error_code}[/bold red]: {escape(error.message)}"]
        for record in getattr(error, "errors", []):
            lines.append(f"  [yellow]•[/yellow] {escape(record['path'])}: {escape(record['message'])}")
        if error.fix_suggestion:
            lines.append(f"[dim]Fix: {escape(error.fix_suggestion)}[/dim]")
        self.console.print(Panel("\n".join(lines), border_style="red", expand=False))

    def dispatch(self, args: argparse.Namespace) -> int:
        handler = getattr(self, args.command)
        try:
            return handler(args)
        except DiffwaveError as e:
            self._print_error(e)
            return e.exit_code
        except OSError as e:
            self._print_error(OutputFailure(str(e)))
            return OutputFailure.exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Config file (key = value lines, or .yaml)")
    common.add_argument("--out", help="Output directory (overrides out_dir)")
    common.add_argument("--t-end", dest="t_end", type=float, help="Final time")
    common.add_argument("--nx", type=int, help="Cell count")
    common.add_argument("--snapshots", type=int, help="Log-spaced snapshot count")
    common.add_argument("--seed", type=int, help="Seed of the random quadratic-form check")

    parser = argparse.ArgumentParser(
        prog="diffwave",
        description="Diffusion-wave experiments for the damped chemotaxis system",
        epilog=describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"diffwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("profile", "Build the wave profile and write profile.csv"),
        ("run", "Run the full experiment"),
        ("fit", "Re-fit decay rates from an existing snapshots.csv"),
        ("check", "Report the admissibility check of the pressure law"),
    ):
        sub.add_parser(
            name,
            parents=[common],
            help=text,
            description=text,
            epilog=describe_defaults(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    return parser


def main(argv: Optional[List[str]] = None, console: Optional[Console] = None) -> int:
    """Main entry point; returns the exit code."""
    args = build_parser().parse_args(argv)
    return DiffwaveCLI(console).dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
