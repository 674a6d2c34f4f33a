"""
Log Manager - Structured logging for experiment runs.

Provides:
- Rotating file handlers for run events and errors
- Structured JSON log format (one object per line)
- Queries over the decoded run events (snapshots, run outcomes)
"""

import json
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional


class LogManager:
    """Manages structured logging for one run directory."""

    def __init__(self, log_dir: str = "logs", level: str = "INFO"):
        """Initialize Log Manager.

        Args:
            log_dir: Directory for log files
            level: Level name for the events log
        """
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        tag = str(self.log_dir.resolve())

        self.event_logger = self._setup_logger(
            f"diffwave.events:{tag}",
            self.log_dir / "events.log",
            level=logging.getLevelName(level.upper()) if isinstance(level, str) else level,
        )
        self.error_logger = self._setup_logger(
            f"diffwave.errors:{tag}",
            self.log_dir / "errors.log",
            level=logging.ERROR,
        )

    def _setup_logger(self, name: str, log_file: Path, level: int = logging.INFO) -> logging.Logger:
        """Setup a rotating file logger.

        Args:
            name: Logger name
            log_file: Path to log file
            level: Logging level

        Returns:
            Configured logger
        """
        logger = logging.getLogger(name)
        logger.setLevel(level if isinstance(level, int) else logging.INFO)

        # Remove existing handlers to avoid duplicates
        for handler in list(logger.handlers):
            handler.close()
        logger.handlers = []

        # Rotating file handler (10MB max, keep 5 backups)
        handler = RotatingFileHandler(
            str(log_file),
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
            encoding="utf-8",
        )
        formatter = logging.Formatter(
            '{"timestamp": "%(asctime)s", "level": "%(levelname)s", "message": %(message)s}'
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)

        # Prevent propagation to root logger
        logger.propagate = False
        return logger

    def close(self):
        for logger in (self.event_logger, self.error_logger):
            for handler in list(logger.handlers):
                handler.close()
            logger.handlers = []

    # ========================================
    # Logging Operations
    # ========================================

    def _event(self, event: str, **kwargs) -> str:
        return json.dumps({"event": event, **kwargs}, default=_jsonable)

    def log_run_start(self, run_id: str, config_hash: str, code_version: str, **kwargs):
        """Log run start.

        Args:
            run_id: Run identifier (output directory name)
            config_hash: SHA-256 of the canonical config text
            code_version: Package version string
            **kwargs: Additional context
        """
        self.event_logger.info(
            self._event("run_start", run_id=run_id, config_hash=config_hash, code_version=code_version, **kwargs)
        )

    def log_profile_built(self, iterations: int, residual: float, endpoint_errors, **kwargs):
        self.event_logger.info(
            self._event(
                "profile_built",
                iterations=iterations,
                residual=residual,
                endpoint_errors=list(endpoint_errors),
                **kwargs,
            )
        )

    def log_snapshot(self, t: float, index: int, norms: Dict[str, float]):
        self.event_logger.info(self._event("snapshot", t=t, index=index, norms=norms))

    def log_decay_fit(self, series: str, exponent: Optional[float], r2: Optional[float], status: str):
        self.event_logger.info(self._event("decay_fit", series=series, exponent=exponent, r2=r2, status=status))

    def log_band_violation(self, t: float, band_min: float, band_max: float):
        """Band violations are warnings: logged to both files, never raised."""
        payload = self._event("band_violation", t=t, band_min=band_min, band_max=band_max)
        self.event_logger.warning(payload)
        self.error_logger.error(payload)

    def log_run_complete(self, run_id: str, status: str, wall_time: float, steps: int, **kwargs):
        self.event_logger.info(
            self._event("run_complete", run_id=run_id, status=status, wall_time=wall_time, steps=steps, **kwargs)
        )

    def log_run_error(self, run_id: str, error: Dict[str, Any], traceback: Optional[str] = None):
        """Log run error.

        Args:
            run_id: Run identifier
            error: Error record ({"error_code", "message", "fix_suggestion"})
            traceback: Full traceback
        """
        payload = self._event("run_error", run_id=run_id, error=error, traceback=traceback)
        self.error_logger.error(payload)
        self.event_logger.error(payload)

    # ========================================
    # Query Operations
    # ========================================

    def parse_events(
        self,
        log_type: str = "events",
        event: Optional[str] = None,
        run_id: Optional[str] = None,
        limit: Optional[int] = None,
    ) -> List[Dict[str, Any]]:
        """Decode JSON log records, oldest first.

        Args:
            log_type: events or errors
            event: Keep only this event type (run_start, snapshot, ...)
            run_id: Keep only records carrying this run id
            limit: Keep the last `limit` matches

        Returns:
            Records {"timestamp", "level", "message": {"event", ...}}
        """
        log_file = self.log_dir / f"{log_type}.log"
        if not log_file.exists():
            return []

        records = []
        with open(log_file, "r", encoding="utf-8") as f:
            for line in f:
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    continue
                message = record.get("message")
                if not isinstance(message, dict):
                    continue
                if event is not None and message.get("event") != event:
                    continue
                if run_id is not None and message.get("run_id") != run_id:
                    continue
                records.append(record)
        return records[-limit:] if limit else records

    def run_outcomes(self, run_id: Optional[str] = None) -> List[Dict[str, Any]]:
        """run_complete and run_error records in log order."""
        return [
            r
            for r in self.parse_events(run_id=run_id)
            if r["message"].get("event") in ("run_complete", "run_error")
        ]

    def last_outcome(self, run_id: Optional[str] = None) -> Optional[Dict[str, Any]]:
        """Message of the latest run_complete or run_error, with its timestamp."""
        outcomes = self.run_outcomes(run_id)
        if not outcomes:
            return None
        last = outcomes[-1]
        return {**last["message"], "timestamp": last["timestamp"]}


def _jsonable(value):
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)
