"""
Run Manifest - JSON record of one experiment run.

The manifest is written when a run starts (status "running") and rewritten
when it ends, so an interrupted run still leaves a record. Its `config_text`
reloads to the same configuration, which makes a run reproducible from the
manifest alone.
"""

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import OutputFailure

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    config: Dict[str, Any]
    config_text: str
    code_version: str
    config_hash: str = ""
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    status: str = "running"
    exit_code: Optional[int] = None
    error: Optional[Dict[str, Any]] = None
    files: Dict[str, Any] = field(default_factory=dict)
    snapshots: List[Dict[str, Any]] = field(default_factory=list)
    steps: int = 0
    x0: Optional[float] = None
    mass_defect: Optional[float] = None
    form_check: Optional[Dict[str, Any]] = None

    def mark_started(self):
        self.started_at = datetime.now().isoformat()
        self.status = "running"

    def mark_completed(self):
        self.finished_at = datetime.now().isoformat()
        self.status = "completed"
        self.exit_code = 0

    def mark_failed(self, error: Dict[str, Any], exit_code: int):
        self.finished_at = datetime.now().isoformat()
        self.status = "failed"
        self.error = error
        self.exit_code = exit_code

    def add_snapshot(self, t: float, row: int):
        """Index a snapshot: time -> row number in snapshots.csv."""
        self.snapshots.append({"t": t, "row": row})

    def add_file(self, kind: str, name: str):
        self.files[kind] = name

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


class ManifestStore:
    """Reads and writes manifest.json and the run's output files."""

    def __init__(self, run_dir: str):
        """Initialize manifest store.

        Args:
            run_dir: Output directory of the run (created if missing)

        Raises:
            OutputFailure: The directory cannot be created
        """
        self.run_dir = Path(run_dir)
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputFailure(f"Cannot create output directory {self.run_dir}: {e}") from e
        self.manifest_file = self.run_dir / MANIFEST_NAME

    def save(self, manifest: RunManifest):
        self._save_json(self.manifest_file, manifest.to_dict())

    def load(self) -> Optional[RunManifest]:
        """Load the manifest, or None if the run directory has none."""
        if not self.manifest_file.exists():
            return None
        return RunManifest.from_dict(self._load_json(self.manifest_file))

    def write_text(self, name: str, content: str) -> Path:
        """Write an output file inside the run directory.

        Returns:
            Path to the written file
        """
        path = self.run_dir / name
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            # newline="" keeps the bytes identical across platforms
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(content)
        except OSError as e:
            raise OutputFailure(f"Cannot write {path}: {e}") from e
        return path

    def read_text(self, name: str) -> Optional[str]:
        path = self.run_dir / name
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8", newline="") as f:
                return f.read()
        except OSError as e:
            raise OutputFailure(f"Cannot read {path}: {e}") from e

    # ========================================
    # Internal Helpers
    # ========================================

    def _load_json(self, path: Path) -> Any:
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise OutputFailure(f"Cannot read {path}: {e}") from e

    def _save_json(self, path: Path, data: Any):
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, default=_jsonable)
        except OSError as e:
            raise OutputFailure(f"Cannot write {path}: {e}") from e


def _jsonable(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)
