"""
Run Service - run directories and run manifests.

Every run gets its own directory named ``<UTC timestamp>-<config hash[:12]>``.
The manifest is written before any compute starts and rewritten when the
run ends, with the output inventory and final status.
"""

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, TypedDict

from .. import __version__
from ..core.config import get_settings
from ..core.logging import get_logger
from ..data.mnist import file_checksum

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
MANIFEST_FORMAT = "workbench.run"


class OutputRecord(TypedDict):
    path: str
    bytes: int
    sha256: str


class RunManifest(TypedDict):
    format: str
    version: int
    command: str
    status: str
    config: dict
    args: dict
    config_hash: str
    seeds: dict
    datasets: List[dict]
    code_version: str
    started_at: str
    finished_at: Optional[str]
    outputs: List[OutputRecord]
    flags: List[str]
    summary: dict
    error: Optional[str]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunService:
    """Creates run directories under ``runs_dir`` and maintains their manifests."""

    def __init__(self, runs_dir: Optional[str | Path] = None):
        self.runs_dir = Path(runs_dir or get_settings().runs_dir)

    def create_run_dir(self, cfg_hash: str) -> Path:
        """A fresh directory; never reuses an existing one."""
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        base = f"{stamp}-{cfg_hash[:12]}"
        for attempt in range(1000):
            run_dir = self.runs_dir / (base if attempt == 0 else f"{base}-{attempt}")
            try:
                run_dir.mkdir()
            except FileExistsError:
                continue
            logger.info("Run directory created", run_dir=str(run_dir))
            return run_dir
        raise FileExistsError(f"no free run directory for {base}")

    def start(self, run_dir: Path, command: str, config: dict, cfg_hash: str, seeds: dict,
              flags: List[str], args: Optional[dict] = None) -> RunManifest:
        """Write config.json and the running manifest; ``args`` holds command inputs beyond the config."""
        manifest: RunManifest = {
            "format": MANIFEST_FORMAT,
            "version": 1,
            "command": command,
            "status": "running",
            "config": config,
            "config_hash": cfg_hash,
            "args": args or {},
            "seeds": seeds,
            "datasets": [],
            "code_version": __version__,
            "started_at": _now(),
            "finished_at": None,
            "outputs": [],
            "flags": flags,
            "summary": {},
            "error": None,
        }
        (run_dir / CONFIG_NAME).write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
        self.write(run_dir, manifest)
        return manifest

    def write(self, run_dir: Path, manifest: RunManifest):
        tmp = run_dir / (MANIFEST_NAME + ".tmp")
        tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        tmp.replace(run_dir / MANIFEST_NAME)

    def inventory(self, run_dir: Path) -> List[OutputRecord]:
        """Every file in the run directory except the manifest itself."""
        records = []
        for path in sorted(p for p in run_dir.rglob("*") if p.is_file()):
            if path.name in (MANIFEST_NAME, MANIFEST_NAME + ".tmp"):
                continue
            records.append({"path": str(path.relative_to(run_dir)), "bytes": path.stat().st_size,
                            "sha256": file_checksum(path)})
        return records

    def finish(self, run_dir: Path, manifest: RunManifest, status: str, summary: Optional[dict] = None,
               error: Optional[str] = None) -> RunManifest:
        manifest = {**manifest, "status": status, "finished_at": _now(), "outputs": self.inventory(run_dir),
                    "summary": summary or {}, "error": error}
        self.write(run_dir, manifest)
        logger.info("Run finalized", run_dir=str(run_dir), status=status, outputs=len(manifest["outputs"]))
        return manifest


def load_manifest(run_dir: str | Path) -> RunManifest:
    return json.loads((Path(run_dir) / MANIFEST_NAME).read_text())
