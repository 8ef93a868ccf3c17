"""
Run Orchestrator - LangGraph-based run lifecycle.

Every CLI command runs through the same graph:
1. prepare  → resolve seeds, create the run directory, write the manifest
2. execute  → call the command's runner
3. finalize → inventory outputs, mark the manifest completed

A failure in prepare or execute routes to handle_error, which marks the
manifest failed (when a run directory exists) and sets the exit code.
"""

import operator
import traceback
from pathlib import Path
from typing import Annotated, Literal, Optional, TypedDict

from langgraph.graph import END, StateGraph

from ..core.errors import UNEXPECTED_EXIT_CODE, ConfigError, WorkbenchError
from ..core.logging import command_context, get_logger
from ..services.run_service import RunManifest, RunService
from .config import ExperimentConfig, config_hash, recorded_args
from .runners import RUNNERS, RunContext, resolve_seeds

logger = get_logger(__name__)


class RunState(TypedDict):
    """State carried through the run graph."""
    # Input
    command: str
    cfg: ExperimentConfig
    args: dict

    # Intermediate results
    run_dir: Optional[Path]
    context: Optional[RunContext]
    manifest: Optional[RunManifest]

    # Output
    summary: dict
    exit_code: int

    # Control flow
    errors: Annotated[list[str], operator.add]
    status: str


class RunOrchestrator:
    """
    Drives one command through prepare → execute → finalize.

    ┌─────────┐     ┌─────────┐     ┌──────────┐
    │ prepare │────►│ execute │────►│ finalize │────► END
    └────┬────┘     └────┬────┘     └──────────┘
         │ (error)       │ (error)
         ▼               ▼
    ┌──────────────────────┐
    │     handle_error     │────► END
    └──────────────────────┘
    """

    def __init__(self, runs_dir: Optional[str | Path] = None):
        self.runs = RunService(runs_dir)
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(RunState)

        workflow.add_node("prepare", self._prepare_node)
        workflow.add_node("execute", self._execute_node)
        workflow.add_node("finalize", self._finalize_node)
        workflow.add_node("handle_error", self._error_node)

        workflow.set_entry_point("prepare")
        workflow.add_conditional_edges("prepare", self._route, {"continue": "execute", "error": "handle_error"})
        workflow.add_conditional_edges("execute", self._route, {"continue": "finalize", "error": "handle_error"})
        workflow.add_edge("finalize", END)
        workflow.add_edge("handle_error", END)

        return workflow.compile()

    # ==================== Node Functions ====================

    def _prepare_node(self, state: RunState) -> dict:
        command, cfg = state["command"], state["cfg"]
        try:
            if command not in RUNNERS:
                raise ConfigError(f"unknown command: {command}")
            args = recorded_args(state["args"])
            cfg_hash = config_hash(cfg, args)
            run_dir = self.runs.create_run_dir(cfg_hash)
            seeds = resolve_seeds(cfg.seed)
            context = RunContext(command, cfg, run_dir, cfg_hash, state["args"], seeds)
            manifest = self.runs.start(run_dir, command, cfg.model_dump(mode="json"), cfg_hash, seeds,
                                       cfg.flags(command), args)
            for flag in manifest["flags"]:
                logger.warning("Run flagged", command=command, flag=flag)
            return {"run_dir": run_dir, "context": context, "manifest": manifest, "status": "prepared"}
        except Exception as e:
            return self._failure(e, "prepare")

    def _execute_node(self, state: RunState) -> dict:
        context = state["context"]
        logger.info("Executing command", command=state["command"], run_dir=str(state["run_dir"]))
        try:
            summary = RUNNERS[state["command"]](context)
            return {"summary": summary, "status": "executed"}
        except Exception as e:
            return self._failure(e, "execute")

    def _finalize_node(self, state: RunState) -> dict:
        manifest = self._finish(state, "completed", state["summary"])
        return {"manifest": manifest, "status": "completed", "exit_code": 0}

    def _error_node(self, state: RunState) -> dict:
        logger.error("Run failed", command=state["command"], errors=state.get("errors", []))
        manifest = state.get("manifest")
        if state.get("run_dir") is not None and manifest is not None:
            error = state["errors"][-1] if state.get("errors") else "unknown error"
            manifest = self._finish(state, "failed", {}, error)
        return {"manifest": manifest, "status": "failed"}

    # ==================== Routing Functions ====================

    def _route(self, state: RunState) -> Literal["continue", "error"]:
        return "error" if state.get("status") == "error" else "continue"

    # ==================== Helper Methods ====================

    def _failure(self, e: Exception, stage: str) -> dict:
        if isinstance(e, WorkbenchError):
            logger.error("Command error", stage=stage, error_type=type(e).__name__, error=str(e))
            code = e.exit_code
        else:
            logger.error("Unexpected failure", stage=stage, error_type=type(e).__name__, error=str(e),
                         traceback=traceback.format_exc())
            code = UNEXPECTED_EXIT_CODE
        return {"errors": [f"{type(e).__name__}: {e}"], "status": "error", "exit_code": code}

    def _finish(self, state: RunState, status: str, summary: dict, error: Optional[str] = None) -> RunManifest:
        manifest = dict(state["manifest"])
        context = state.get("context")
        if context is not None:
            manifest["datasets"] = context.data.records
        summary = {k: v for k, v in summary.items() if k != "table"}
        return self.runs.finish(state["run_dir"], manifest, status, summary, error)

    # ==================== Public API ====================

    def run(self, command: str, cfg: ExperimentConfig, args: Optional[dict] = None) -> RunState:
        """
        Run one command to completion.

        Returns:
            final state; ``exit_code`` is 0 on success, the error class's
            code otherwise
        """
        initial: RunState = {
            "command": command,
            "cfg": cfg,
            "args": args or {},
            "run_dir": None,
            "context": None,
            "manifest": None,
            "summary": {},
            "exit_code": 0,
            "errors": [],
            "status": "pending",
        }
        with command_context(command):
            final = self.graph.invoke(initial)
        logger.info("Run finished", command=command, status=final["status"], exit_code=final["exit_code"])
        return final
