"""
Sampler oracle check: Gibbs and single-rung annealing against exact
enumeration on random models over Chimera subgraphs.
"""

import csv
from pathlib import Path
from typing import List, Optional, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.logging import get_logger
from ..core.seeding import derive_seed, make_rng
from .chimera import graph_for_hidden
from .energy import EnergyModel
from .samplers import (
    MAX_EXACT_FREE,
    anneal_sample,
    exact_distribution,
    gibbs_sample,
    moments,
    total_variation,
    weighted_moments,
    write_comparison_csv,
)

logger = get_logger(__name__)


class ValidationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    models: int = Field(default=20, ge=1)
    min_nodes: int = Field(default=4, ge=1)
    max_nodes: int = Field(default=8, ge=1, le=MAX_EXACT_FREE)
    scale: float = Field(default=1.5, gt=0)
    chains: int = Field(default=1000, ge=1)
    sweeps: int = Field(default=100, ge=1)
    burn_in: int = Field(default=50, ge=0)
    anneal_reads: int = Field(default=100000, ge=1)
    anneal_sweeps_per_rung: int = Field(default=20, ge=1)
    tolerance: float = Field(default=0.02, gt=0)
    dump: bool = True

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.min_nodes > self.max_nodes:
            raise ValueError("min_nodes exceeds max_nodes")
        return self


class ValidationRow(TypedDict):
    model: int
    nodes: int
    edges: int
    source: str
    samples: int
    tv: float
    marginal_error: float
    passed: bool


def random_chimera_model(nodes: int, scale: float, seed: int) -> EnergyModel:
    """Biases and couplings ~ scale * N(0, 1) on the first ``nodes`` nodes of the smallest fitting Chimera grid."""
    graph = graph_for_hidden(nodes)
    rng = make_rng(seed)
    return EnergyModel(scale * rng.standard_normal(nodes), graph.edges, scale * rng.standard_normal(graph.edge_count))


def validate_samplers(cfg: ValidationConfig, seed: int, out_dir: Optional[str | Path] = None) -> List[ValidationRow]:
    """
    One row per (model, sampler). When ``out_dir`` is given and ``cfg.dump``
    is set, empirical-vs-exact CSVs are written per row.
    """
    rows: List[ValidationRow] = []
    sizes = make_rng(derive_seed(seed, "validate-sizes")).integers(cfg.min_nodes, cfg.max_nodes + 1, size=cfg.models)
    for index, nodes in enumerate(sizes):
        model = random_chimera_model(int(nodes), cfg.scale, derive_seed(seed, "validate-model", index))
        dist = exact_distribution(model)
        exact = weighted_moments(dist)
        batches = {
            "gibbs": gibbs_sample(model, None, cfg.sweeps, cfg.chains, cfg.burn_in, derive_seed(seed, "gibbs", index)),
            "anneal": anneal_sample(model, None, [1.0], cfg.anneal_reads, derive_seed(seed, "anneal", index),
                                    cfg.anneal_sweeps_per_rung),
        }
        for source, batch in batches.items():
            tv = total_variation(batch, dist)
            marginal_error = float(np.max(np.abs(moments(batch).first - exact.first)))
            rows.append({"model": index, "nodes": int(nodes), "edges": int(model.edges.shape[0]), "source": source,
                         "samples": len(batch), "tv": tv, "marginal_error": marginal_error,
                         "passed": tv <= cfg.tolerance})
            if out_dir is not None and cfg.dump:
                write_comparison_csv(Path(out_dir) / f"model_{index:02d}_{source}.csv", batch, dist)
        logger.info("Sampler oracle check", model=index, nodes=int(nodes),
                    gibbs_tv=rows[-2]["tv"], anneal_tv=rows[-1]["tv"])
    return rows


def write_validation_csv(path: str | Path, rows: List[ValidationRow]):
    with open(path, "w", newline="") as f:
        f.write("# workbench-sampler-validation v1\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["model", "nodes", "edges", "source", "samples", "tv", "marginal_error", "passed"])
        for r in rows:
            writer.writerow([r["model"], r["nodes"], r["edges"], r["source"], r["samples"], f"{r['tv']:.6f}",
                             f"{r['marginal_error']:.6f}", int(r["passed"])])
