"""
Command runners.

Each runner receives a RunContext with the resolved configuration and the
run directory, writes its artifacts there and returns a summary dict that
ends up in the run manifest. A ``table`` key in the summary is printed by
the CLI.
"""

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

from ..boltzmann.models import save_checkpoint
from ..boltzmann.training import EpochMetrics, train, write_metrics_csv
from ..core.errors import ComputeError, ConfigError
from ..core.logging import get_logger
from ..core.seeding import derive_seed
from ..data.mnist import LABEL_COUNT
from ..energy.accounting import account, load_profile, reference_network, reference_profile, reference_stimulus, save_profile
from ..evolution.cnn import BASELINE, GENE_SPECS, LeNetHyper, build, fit, save_model, score, train_and_score, write_fit_csv
from ..evolution.engine import (
    FitnessFn, GenerationStats, evolve, fitness_seed, target_fitness, write_evaluations_csv, write_generations_csv,
)
from ..sampling.chimera import graph_for_hidden, write_edge_list
from ..sampling.validation import validate_samplers, write_validation_csv
from ..services.data_service import DataService, fetch, inspect
from ..spiking.detectors import (
    DetectorEnsemble, ensemble_accuracy, evolve_ensemble, load_detector, save_detector, save_ensemble,
)
from ..spiking.network import load_network, scan_charges, simulate_batch, total_activity
from .config import ExperimentConfig
from .report import render_report

logger = get_logger(__name__)


@dataclass
class RunContext:
    command: str
    cfg: ExperimentConfig
    run_dir: Path
    cfg_hash: str = ""
    args: dict = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    data: DataService = None

    def __post_init__(self):
        if not self.seeds:
            self.seeds = resolve_seeds(self.cfg.seed)
        if self.data is None:
            self.data = DataService(self.cfg.data, self.seeds["data"])


def resolve_seeds(run_seed: int) -> Dict[str, int]:
    """Per-module seeds, all derived from the single run seed."""
    seeds = {"run": run_seed}
    for part in ("data", "train", "validation", "evolution", "snn"):
        seeds[part] = derive_seed(run_seed, part)
    return seeds


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ==================== data ====================

def run_data_inspect(ctx: RunContext) -> dict:
    images = ctx.args.get("images") or ctx.data.resolve(ctx.cfg.data.train_images)
    labels = ctx.args.get("labels") or ctx.data.resolve(ctx.cfg.data.train_labels)
    manifest = inspect(images, labels, ctx.args.get("split") or "train")
    _write_json(ctx.run_dir / "dataset_manifest.json", manifest)
    ctx.data.records.append(manifest)
    return {"count": manifest["count"], "table": json.dumps(manifest, sort_keys=True, indent=2)}


def run_data_fetch(ctx: RunContext) -> dict:
    images, labels = ctx.args.get("images"), ctx.args.get("labels")
    if not images or not labels:
        raise ConfigError("data fetch needs --images and --labels")
    dest = ctx.args.get("dest") or ctx.cfg.data.dir
    if dest is None:
        raise ConfigError("data fetch needs --dest or data.dir")
    manifest = fetch(images, labels, dest, ctx.cfg.data.checksums, ctx.args.get("split") or "train")
    _write_json(ctx.run_dir / "dataset_manifest.json", manifest)
    ctx.data.records.append(manifest)
    return {"count": manifest["count"], "dest": str(dest)}


# ==================== train ====================

def _run_train(ctx: RunContext, kind: str) -> dict:
    cfg = ctx.cfg
    train_cfg = cfg.train.model_copy(update={"seed": ctx.seeds["train"]})
    ds_train, ds_eval = ctx.data.train_eval()
    if kind == "lbm":
        graph = graph_for_hidden(train_cfg.hidden, train_cfg.chimera_rows, train_cfg.chimera_cols)
        write_edge_list(graph, ctx.run_dir / "chimera_edges.txt")
    metrics_path = ctx.run_dir / "metrics.csv"
    checkpoint_path = ctx.run_dir / "checkpoint.json"
    rows: List[EpochMetrics] = []
    write_metrics_csv(metrics_path, rows)

    def on_epoch(model, row: EpochMetrics):
        rows.append(row)
        write_metrics_csv(metrics_path, rows)
        save_checkpoint(model, checkpoint_path, ctx.cfg_hash, train_cfg.seed)

    model, metrics = train(kind, ds_train, ds_eval, train_cfg, cfg.sampler, on_epoch)
    write_metrics_csv(metrics_path, metrics)
    save_checkpoint(model, checkpoint_path, ctx.cfg_hash, train_cfg.seed)
    summary = {"epochs": len(metrics)}
    if metrics:
        summary.update({"final_accuracy": metrics[-1]["accuracy"],
                        "final_reconstruction_error": metrics[-1]["reconstruction_error"]})
    return summary


def run_train_rbm(ctx: RunContext) -> dict:
    return _run_train(ctx, "rbm")


def run_train_lbm(ctx: RunContext) -> dict:
    return _run_train(ctx, "lbm")


# ==================== sampler ====================

def run_sampler_validate(ctx: RunContext) -> dict:
    dump_dir = ctx.run_dir / "dumps"
    if ctx.cfg.validation.dump:
        dump_dir.mkdir()
    rows = validate_samplers(ctx.cfg.validation, ctx.seeds["validation"], dump_dir)
    write_validation_csv(ctx.run_dir / "validation.csv", rows)
    failed = [r for r in rows if not r["passed"]]
    table = "\n".join(f"model {r['model']:2d} {r['source']:<6} nodes={r['nodes']} tv={r['tv']:.4f} "
                      f"{'ok' if r['passed'] else 'FAIL'}" for r in rows)
    if failed:
        raise ComputeError(f"{len(failed)} of {len(rows)} sampler checks exceeded tv {ctx.cfg.validation.tolerance}")
    return {"checks": len(rows), "max_tv": max(r["tv"] for r in rows), "table": table}


# ==================== evolve ====================

def _cnn_fitness(ctx: RunContext) -> tuple[FitnessFn, tuple]:
    cnn_cfg = ctx.cfg.cnn
    if cnn_cfg.fitness == "synthetic":
        return target_fitness(cnn_cfg.synthetic_target), ()
    data = ctx.data.train_eval(cnn_cfg.train_size, cnn_cfg.eval_size)
    def fitness(genome, seed: int) -> float:
        return train_and_score(LeNetHyper.from_genome(genome), cnn_cfg.model_copy(update={"seed": seed}), data)

    return fitness, data


def run_evolve_cnn(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    evo_cfg = cfg.evolution.model_copy(update={"seed": ctx.seeds["evolution"], "workers": cfg.workers})
    fitness, data = _cnn_fitness(ctx)
    history: List[GenerationStats] = []
    gen_path = ctx.run_dir / "generations.csv"

    def on_generation(stats: GenerationStats):
        history.append(stats)
        write_generations_csv(gen_path, history)

    snapshots = ctx.run_dir / "snapshots"
    if ctx.args.get("resume"):
        source = Path(ctx.args["resume"]) / "snapshots"
        if not source.is_dir():
            raise ConfigError(f"no snapshots to resume from in {ctx.args['resume']}")
        shutil.copytree(source, snapshots)
    result = evolve(GENE_SPECS, fitness, evo_cfg, snapshots, on_generation)
    write_generations_csv(gen_path, result.history)
    write_evaluations_csv(ctx.run_dir / "evaluations.csv", GENE_SPECS, result.evaluations)

    best = {"genome": list(result.best.genome), "genes": [s.name for s in GENE_SPECS],
            "fitness": result.best.fitness, "evaluations": len(result.evaluations),
            "fitness_mode": cfg.cnn.fitness}
    summary = {"best_fitness": result.best.fitness, "evaluations": len(result.evaluations)}

    if cfg.cnn.fitness == "train":
        if cfg.cnn.baseline:
            baseline = fitness(BASELINE.genome(), fitness_seed(evo_cfg.seed, BASELINE.genome()))
            best["baseline"] = {"genome": list(BASELINE.genome()), "fitness": baseline}
            summary["baseline_fitness"] = baseline
        # retrain the winner with its evaluation seed to keep the weights
        seed = fitness_seed(evo_cfg.seed, result.best.genome)
        fit_cfg = cfg.cnn.model_copy(update={"seed": seed})
        model = build(LeNetHyper.from_genome(result.best.genome), derive_seed(seed, "cnn-init"))
        model, fit_history = fit(model, data[0], fit_cfg, data[1])
        save_model(model, ctx.run_dir / "best_model.json")
        write_fit_csv(ctx.run_dir / "fit.csv", fit_history)
        best["retrained_accuracy"] = score(model, data[1])

    _write_json(ctx.run_dir / "best_genome.json", best)
    return summary


def run_evolve_snn(ctx: RunContext) -> dict:
    cfg = ctx.cfg
    snn_cfg = cfg.snn.model_copy(update={"seed": ctx.seeds["snn"], "workers": cfg.workers})
    digits = sorted(set(snn_cfg.digits))
    if not digits or any(not 0 <= d < LABEL_COUNT for d in digits):
        raise ConfigError(f"snn.digits must be a nonempty subset of 0..{LABEL_COUNT - 1}")
    ds_train, ds_eval = ctx.data.train_eval(eval_size=snn_cfg.eval_size)
    results = evolve_ensemble(ds_train, digits, snn_cfg.task_size, snn_cfg)

    summary = {"detectors": {}}
    for digit, result in results.items():
        save_detector(result.detector, ctx.run_dir / f"detector_{digit}.json")
        with open(ctx.run_dir / f"generations_{digit}.csv", "w", newline="") as f:
            f.write("# workbench-snn-generations v1\n")
            f.write("generation,best,mean,std,best_so_far\n")
            for row in result.history:
                f.write(f"{row['generation']},{row['best']!r},{row['mean']!r},{row['std']!r},{row['best_so_far']!r}\n")
        summary["detectors"][str(digit)] = {"balanced_accuracy": result.fitness,
                                            "neurons": result.detector.network.neuron_count,
                                            "synapses": result.detector.network.synapse_count}

    if digits == list(range(LABEL_COUNT)):
        ensemble = DetectorEnsemble(tuple(results[d].detector for d in digits))
        save_ensemble(ensemble, ctx.run_dir)
        summary["ensemble_accuracy"] = ensemble_accuracy(ensemble, ds_eval, snn_cfg.horizon, snn_cfg.scan, snn_cfg.leak)
    summary["table"] = "\n".join(f"digit {d}: balanced accuracy {v['balanced_accuracy']:.4f}"
                                 for d, v in summary["detectors"].items())
    return summary


# ==================== energy ====================

def _energy_network(name: str):
    if name == "reference":
        return reference_network()
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"network file not found: {path}")
    data = json.loads(path.read_text())
    return load_detector(path).network if "network" in data else load_network(path)


def run_snn_energy(ctx: RunContext) -> dict:
    ecfg = ctx.cfg.energy
    network = _energy_network(ecfg.network)
    profile = ecfg.profile
    phases, _ = load_profile(profile)
    if ecfg.stimulus == "reference":
        images = reference_stimulus()[:ecfg.images]
    else:
        images = ctx.data.eval_only(ecfg.images).images

    _, per_image = simulate_batch(network, scan_charges(images, ecfg.scan), ecfg.horizon, ecfg.leak)
    activity = total_activity(per_image)
    report = account(activity, phases, ecfg.device)

    _write_json(ctx.run_dir / "energy_report.json", report.to_dict())
    _write_json(ctx.run_dir / "activity.json", activity.to_dict())
    (ctx.run_dir / "energy_report.txt").write_text(report.table() + "\n")
    reference = reference_profile()[2] if profile == "reference" else None
    save_profile(ctx.run_dir / "profile.json", phases, ecfg.device, reference)
    with open(ctx.run_dir / "per_image_energy.csv", "w", newline="") as f:
        f.write("# workbench-energy-per-image v1\n")
        f.write("image,total_j,core_j\n")
        for i, counts in enumerate(per_image):
            r = account(counts, phases, ecfg.device)
            f.write(f"{i},{r.total!r},{r.core!r}\n")

    return {"total_j": report.total, "per_image_j": report.per_image, "average_power_w": report.average_power,
            "images": report.images, "table": report.table()}


# ==================== report ====================

def run_report(ctx: RunContext) -> dict:
    metrics = ctx.args.get("metrics") or []
    evaluations = ctx.args.get("evaluations")
    if not metrics and evaluations is None and ctx.args.get("no_reference"):
        raise ConfigError("report needs --metrics or --evaluations")
    return render_report(metrics, evaluations, ctx.run_dir, reference=not ctx.args.get("no_reference"))


RUNNERS: Dict[str, Callable[[RunContext], dict]] = {
    "data inspect": run_data_inspect,
    "data fetch": run_data_fetch,
    "train rbm": run_train_rbm,
    "train lbm": run_train_lbm,
    "sampler validate": run_sampler_validate,
    "evolve cnn": run_evolve_cnn,
    "evolve snn": run_evolve_snn,
    "snn energy": run_snn_energy,
    "report": run_report,
}
