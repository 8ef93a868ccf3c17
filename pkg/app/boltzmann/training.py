"""
Boltzmann training - contrastive divergence for RBMs and sampler-driven
updates for LBMs, plus the classification and reconstruction metrics
reported per epoch.
"""

import csv
from dataclasses import replace
from pathlib import Path
from typing import Callable, List, Literal, Optional, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import ComputeError, ConfigError, DataError, SamplerError
from ..core.logging import get_logger
from ..core.seeding import derive_seed, make_rng
from ..data.mnist import LABEL_COUNT, PIXEL_COUNT, Dataset, augment_batch, binarize
from ..sampling.chimera import graph_for_hidden
from ..sampling.energy import sigmoid
from ..sampling.samplers import AnnealSampler, GibbsSampler, geometric_schedule
from .models import (
    BoltzmannModel,
    LBMModel,
    hidden_conditional,
    init_model,
    redraw_couplings,
    visible_conditional,
)

logger = get_logger(__name__)

METRICS_COLUMNS = ["epoch", "accuracy", "reconstruction_error"]
METRICS_HEADER = "# workbench-metrics v1; reconstruction_error = sum over samples and all 794 units of squared difference"
_EVAL_CHUNK = 500


class SamplerConfig(BaseModel):
    """Sampler selection and parameters for training and classification."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["cd", "gibbs", "anneal"] = "cd"
    cd_k: int = Field(default=1, ge=1)
    reads: int = Field(default=10, ge=1)
    sweeps: int = Field(default=1, ge=1)
    burn_in: int = Field(default=10, ge=0)
    beta: float = Field(default=1.0, gt=0)
    schedule_start: float = Field(default=0.1, gt=0)
    schedule_stop: float = Field(default=1.0, gt=0)
    schedule_rungs: int = Field(default=20, ge=1)
    sweeps_per_rung: int = Field(default=1, ge=1)
    classify_reads: int = Field(default=256, ge=1)


class TrainConfig(BaseModel):
    """Training schedule for RBM and LBM runs."""
    model_config = ConfigDict(extra="forbid")

    hidden: int = Field(default=200, ge=1)
    chimera_rows: Optional[int] = Field(default=None, ge=1)
    chimera_cols: Optional[int] = Field(default=None, ge=1)
    epochs: int = Field(default=25, ge=0)
    lr_vh: float = Field(default=0.1, ge=0)
    lr_hh: float = Field(default=0.0001, ge=0)
    randomize_hh_epochs: int = Field(default=3, ge=0)
    batch_size: int = Field(default=100, ge=1)
    init_scale: float = Field(default=0.01, ge=0)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    weight_decay: float = Field(default=0.0, ge=0)
    binarize: bool = False
    free_phase: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.randomize_hh_epochs > self.epochs:
            raise ValueError("randomize_hh_epochs cannot exceed epochs")
        return self


class EpochMetrics(TypedDict):
    """One row of the per-epoch metrics table."""
    epoch: int
    accuracy: float
    reconstruction_error: float


class StepStats(TypedDict):
    """Gradient estimates of one update, before scaling by the learning rate."""
    grad_W: np.ndarray
    grad_a: np.ndarray
    grad_b: np.ndarray
    grad_U: Optional[np.ndarray]


Sampler = GibbsSampler


def make_sampler(cfg: SamplerConfig) -> Optional[Sampler]:
    """Sampler instance for a config; None for plain contrastive divergence."""
    if cfg.kind == "cd":
        return None
    if cfg.kind == "gibbs":
        return GibbsSampler(sweeps=cfg.sweeps, burn_in=cfg.burn_in, beta=cfg.beta)
    schedule = geometric_schedule(cfg.schedule_start, cfg.schedule_stop, cfg.schedule_rungs)
    return AnnealSampler(schedule, cfg.sweeps_per_rung)


def _apply(model: BoltzmannModel, stats: StepStats, lr: float, lr_hh: float = 0.0,
           weight_decay: float = 0.0, velocity: Optional[dict] = None, momentum: float = 0.0
           ) -> BoltzmannModel:
    steps = {"W": lr * (stats["grad_W"] - weight_decay * model.W), "a": lr * stats["grad_a"], "b": lr * stats["grad_b"]}
    if stats["grad_U"] is not None:
        steps["U"] = lr_hh * stats["grad_U"]
    if velocity is not None and momentum > 0:
        for key, step in steps.items():
            velocity[key] = momentum * velocity.get(key, 0.0) + step
            steps[key] = velocity[key]
    updates = {key: getattr(model, key) + step for key, step in steps.items()}
    return replace(model, **updates)


# ==================== Update rules ====================

def cd_step(model: BoltzmannModel, batch: np.ndarray, lr: float, k: int = 1, seed: int = 0,
            weight_decay: float = 0.0, velocity: Optional[dict] = None, momentum: float = 0.0
            ) -> tuple[BoltzmannModel, StepStats]:
    """
    One CD-k update.

    The data phase uses hidden probabilities. The reconstruction phase runs
    k alternating steps with sampled hidden states; intermediate visible
    states are sampled, the last one is kept as probabilities.
    """
    v0 = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if v0.shape[0] == 0:
        raise DataError("cd_step needs a non-empty batch")
    if k < 1:
        raise ConfigError("cd_step needs k >= 1")
    rng = make_rng(seed)
    ph0 = hidden_conditional(model, v0)
    h = (rng.random(ph0.shape) < ph0).astype(np.float64)
    for step in range(k):
        pv = visible_conditional(model, h)
        vk = pv if step == k - 1 else (rng.random(pv.shape) < pv).astype(np.float64)
        phk = hidden_conditional(model, vk)
        if step < k - 1:
            h = (rng.random(phk.shape) < phk).astype(np.float64)
    n = v0.shape[0]
    stats: StepStats = {
        "grad_W": (v0.T @ ph0 - vk.T @ phk) / n,
        "grad_a": (v0 - vk).mean(axis=0),
        "grad_b": (ph0 - phk).mean(axis=0),
        "grad_U": None,
    }
    return _apply(model, stats, lr, weight_decay=weight_decay, velocity=velocity, momentum=momentum), stats


def _edge_moments(h: np.ndarray, edges: np.ndarray) -> Optional[np.ndarray]:
    """<h_u h_v> per edge averaged over rows and reads of h (B, R, H)."""
    if edges.size == 0:
        return None
    return (h[:, :, edges[:, 0]] * h[:, :, edges[:, 1]]).mean(axis=(0, 1))


def _free_phase(model: BoltzmannModel, sampler: Sampler, reads: int, seed: int) -> tuple:
    """Negative-phase moments from sampling the full model with nothing clamped."""
    V = model.visible
    J = np.zeros((V + model.hidden, V + model.hidden))
    J[:V, V:] = model.W
    J[V:, :V] = model.W.T
    J[V:, V:] = model.hidden_coupling_matrix()
    bias = np.concatenate([model.a, model.b])[None, :]
    states = sampler.sample_fields(bias, J, reads, seed)[0]
    v, h = states[:, :V], states[:, V:]
    return v, h


def lbm_step(model: BoltzmannModel, batch: np.ndarray, cfg: TrainConfig, sampler: Sampler,
             epoch: int, seed: int, reads: int = 10, velocity: Optional[dict] = None) -> tuple[BoltzmannModel, StepStats]:
    """
    One sampler-driven update.

    Positive phase: hidden states sampled with the data clamped. Negative
    phase: visible reconstruction from one positive hidden sample per row,
    then a second clamped hidden sampling (or, with ``cfg.free_phase``, a
    free-running sample of the whole model). W, a and b move with lr_vh; U
    moves with lr_hh on Chimera edges only, except during the first
    ``randomize_hh_epochs`` epochs where it is redrawn instead.
    """
    if sampler is None:
        raise ConfigError("lbm_step needs a gibbs or anneal sampler")
    if epoch < 1:
        raise ConfigError("epochs are numbered from 1")
    v = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if v.shape[0] == 0:
        raise DataError("lbm_step needs a non-empty batch")
    J = model.hidden_coupling_matrix()
    edges = model.hidden_edges
    try:
        h_pos = sampler.sample_fields(model.b + v @ model.W, J, reads, derive_seed(seed, "positive"))
        eh_pos = h_pos.mean(axis=1)
        if cfg.free_phase:
            v_neg, h_free = _free_phase(model, sampler, reads, derive_seed(seed, "free"))
            vh_neg = v_neg.T @ h_free / h_free.shape[0]
            a_neg, b_neg = v_neg.mean(axis=0), h_free.mean(axis=0)
            hh_neg = _edge_moments(h_free[None], edges)
        else:
            v_neg = visible_conditional(model, h_pos[:, 0, :])
            h_neg = sampler.sample_fields(model.b + v_neg @ model.W, J, reads, derive_seed(seed, "negative"))
            eh_neg = h_neg.mean(axis=1)
            vh_neg = v_neg.T @ eh_neg / v.shape[0]
            a_neg, b_neg = v_neg.mean(axis=0), eh_neg.mean(axis=0)
            hh_neg = _edge_moments(h_neg, edges)
    except SamplerError as e:
        raise ComputeError(f"sampler failed during epoch {epoch}: {e}") from e

    hh_pos = _edge_moments(h_pos, edges)
    stats: StepStats = {
        "grad_W": v.T @ eh_pos / v.shape[0] - vh_neg,
        "grad_a": v.mean(axis=0) - a_neg,
        "grad_b": eh_pos.mean(axis=0) - b_neg,
        "grad_U": None if hh_pos is None else hh_pos - hh_neg,
    }
    randomize = isinstance(model, LBMModel) and epoch <= cfg.randomize_hh_epochs
    if randomize:
        stats = {**stats, "grad_U": None}
    updated = _apply(model, stats, cfg.lr_vh, cfg.lr_hh, cfg.weight_decay, velocity, cfg.momentum)
    if randomize:
        updated = redraw_couplings(updated, cfg.init_scale, derive_seed(seed, "redraw"))
    return updated, stats


# ==================== Evaluation ====================

def _label_probabilities_lbm(model: BoltzmannModel, pixels: np.ndarray, sampler: Sampler,
                             reads: int, seed: int) -> np.ndarray:
    """Label-unit on-probabilities with pixels clamped, labels and hidden units sampled."""
    L, H = LABEL_COUNT, model.hidden
    W_lab = model.W[PIXEL_COUNT:]
    J = np.zeros((L + H, L + H))
    J[:L, L:] = W_lab
    J[L:, :L] = W_lab.T
    J[L:, L:] = model.hidden_coupling_matrix()
    bias = np.concatenate(
        [np.broadcast_to(model.a[PIXEL_COUNT:], (pixels.shape[0], L)), model.b + pixels @ model.W[:PIXEL_COUNT]],
        axis=1,
    )
    states = sampler.sample_fields(bias, J, reads, seed)
    return states[:, :, :L].mean(axis=1)


def label_probabilities(model: BoltzmannModel, pixels: np.ndarray, sampler: Optional[Sampler] = None,
                        reads: int = 256, seed: int = 0) -> np.ndarray:
    """
    Label-unit on-probabilities for a batch of pixel vectors (n, 784).

    RBM (or no sampler): one mean-field pass with the label units off,
    pixels -> hidden probabilities -> label probabilities. LBM with a
    sampler: empirical means of the label units over sampler reads.
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if isinstance(model, LBMModel) and sampler is not None:
        return _label_probabilities_lbm(model, pixels, sampler, reads, seed)
    ph = sigmoid(model.b + pixels @ model.W[:PIXEL_COUNT])
    return sigmoid(model.a[PIXEL_COUNT:] + ph @ model.W[PIXEL_COUNT:].T)


def classify(model: BoltzmannModel, image, sampler: Optional[Sampler] = None, reads: int = 256,
             seed: int = 0) -> int:
    """Digit whose label unit has the highest on-probability; ties go to the lowest digit."""
    pixels = getattr(image, "pixels", image)
    probs = label_probabilities(model, pixels, sampler, reads, seed)[0]
    return int(np.argmax(probs))


def classify_batch(model: BoltzmannModel, ds: Dataset, sampler: Optional[Sampler] = None,
                   reads: int = 256, seed: int = 0) -> np.ndarray:
    digits = []
    for start in range(0, len(ds), _EVAL_CHUNK):
        chunk = ds.images[start:start + _EVAL_CHUNK]
        probs = label_probabilities(model, chunk, sampler, reads, derive_seed(seed, "classify", start))
        digits.append(np.argmax(probs, axis=1))
    return np.concatenate(digits)


def accuracy(model: BoltzmannModel, ds: Dataset, sampler: Optional[Sampler] = None,
             reads: int = 256, seed: int = 0) -> float:
    return float(np.mean(classify_batch(model, ds, sampler, reads, seed) == ds.labels))


def reconstruction_error(model: BoltzmannModel, ds: Dataset, sampler: Optional[Sampler] = None,
                         hide_label: bool = False, reads: int = 10, seed: int = 0) -> float:
    """
    Unnormalised reconstruction error: sum over samples and all 794 units of
    (input - reconstructed probability)^2, after one data -> hidden -> visible
    pass. LBM hidden means come from the sampler when one is given.
    """
    total = 0.0
    for start in range(0, len(ds), _EVAL_CHUNK):
        v = augment_batch(ds.take(np.arange(start, min(len(ds), start + _EVAL_CHUNK))), hide_label)
        if isinstance(model, LBMModel) and sampler is not None:
            eh = sampler.sample_fields(model.b + v @ model.W, model.hidden_coupling_matrix(), reads,
                                       derive_seed(seed, "reconstruct", start)).mean(axis=1)
        else:
            eh = hidden_conditional(model, v)
        total += float(np.sum((v - visible_conditional(model, eh)) ** 2))
    return total


# ==================== Training loop ====================

def train(kind: str, ds_train: Dataset, ds_eval: Dataset, cfg: TrainConfig,
          sampler_cfg: Optional[SamplerConfig] = None,
          on_epoch: Optional[Callable[[BoltzmannModel, EpochMetrics], None]] = None
          ) -> tuple[BoltzmannModel, List[EpochMetrics]]:
    """
    Train an RBM or LBM and evaluate after every epoch.

    Args:
        kind: "rbm" or "lbm"
        ds_train: training set (labels visible during training)
        ds_eval: held-out set for classification accuracy
        cfg: training configuration
        sampler_cfg: sampler selection; defaults to CD-1
        on_epoch: called with the model and metrics after each complete epoch
            (the CLI writes its checkpoint here)

    Returns:
        final model and the per-epoch metrics in order
    """
    sampler_cfg = sampler_cfg or SamplerConfig()
    sampler = make_sampler(sampler_cfg)
    if kind == "lbm" and sampler is None:
        raise ConfigError("LBM training needs sampler.kind gibbs or anneal")
    graph = graph_for_hidden(cfg.hidden, cfg.chimera_rows, cfg.chimera_cols) if kind == "lbm" else None
    model = init_model(kind, cfg.hidden, graph, cfg.init_scale, cfg.seed)
    data = augment_batch(ds_train, hide_label=False)
    velocity: dict = {}
    metrics: List[EpochMetrics] = []

    logger.info("Starting training", kind=kind, hidden=cfg.hidden, epochs=cfg.epochs,
                sampler=sampler_cfg.kind, train=len(ds_train), eval=len(ds_eval))

    for epoch in range(1, cfg.epochs + 1):
        order = make_rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(len(ds_train))
        for i, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = data[order[start:start + cfg.batch_size]]
            step_seed = derive_seed(cfg.seed, "step", epoch, i)
            if cfg.binarize:
                batch = binarize(batch, make_rng(derive_seed(step_seed, "binarize")))
            if sampler is None:
                model, _ = cd_step(model, batch, cfg.lr_vh, sampler_cfg.cd_k, step_seed,
                                   cfg.weight_decay, velocity, cfg.momentum)
            else:
                model, _ = lbm_step(model, batch, cfg, sampler, epoch, step_seed, sampler_cfg.reads, velocity)
            logger.debug("Batch complete", epoch=epoch, batch=i)

        eval_seed = derive_seed(cfg.seed, "eval", epoch)
        row: EpochMetrics = {
            "epoch": epoch,
            "accuracy": accuracy(model, ds_eval, sampler, sampler_cfg.classify_reads, eval_seed),
            "reconstruction_error": reconstruction_error(model, ds_train, sampler, False,
                                                         sampler_cfg.reads, eval_seed),
        }
        metrics.append(row)
        logger.info("Epoch complete", **row)
        if on_epoch is not None:
            on_epoch(model, row)

    return model, metrics


def write_metrics_csv(path: str | Path, metrics: List[EpochMetrics]):
    with open(path, "w", newline="") as f:
        f.write(METRICS_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in metrics:
            writer.writerow([row["epoch"], f"{row['accuracy']:.6f}", f"{row['reconstruction_error']:.6f}"])


def read_metrics_csv(path: str | Path) -> List[EpochMetrics]:
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    rows = csv.DictReader(lines)
    return [
        {"epoch": int(r["epoch"]), "accuracy": float(r["accuracy"]),
         "reconstruction_error": float(r["reconstruction_error"])}
        for r in rows
    ]
