from .data_service import DataService
from .run_service import RunManifest, RunService, load_manifest

__all__ = ["DataService", "RunManifest", "RunService", "load_manifest"]
