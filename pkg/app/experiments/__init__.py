from .config import ExperimentConfig, config_hash, load_config
from .orchestrator import RunOrchestrator, RunState
from .runners import RUNNERS, RunContext, resolve_seeds

__all__ = [
    "ExperimentConfig", "config_hash", "load_config",
    "RunOrchestrator", "RunState",
    "RUNNERS", "RunContext", "resolve_seeds",
]
