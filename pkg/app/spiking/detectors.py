"""
Digit detectors - one spiking network per digit, scored by output fire
count, plus the structural evolution that produces them.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import ConfigError, DataError
from ..core.logging import get_logger
from ..core.seeding import derive_seed, make_rng
from ..data.mnist import IMAGE_SIDE, LABEL_COUNT, Dataset
from ..evolution.engine import parallel_map
from .network import (
    DEFAULT_HORIZON,
    ScanDirection,
    SNNetwork,
    network_dict,
    network_from_dict,
    scan_charges,
    simulate_batch,
)

logger = get_logger(__name__)

ENSEMBLE_FORMAT = "workbench.ensemble"
DETECTOR_FORMAT = "workbench.detector"


class MutationRates(BaseModel):
    """Per-offspring probability of each structural mutation."""
    model_config = ConfigDict(extra="forbid")

    add_neuron: float = Field(default=0.1, ge=0, le=1)
    remove_neuron: float = Field(default=0.05, ge=0, le=1)
    add_synapse: float = Field(default=0.3, ge=0, le=1)
    remove_synapse: float = Field(default=0.1, ge=0, le=1)
    perturb_weight: float = Field(default=0.5, ge=0, le=1)
    perturb_threshold: float = Field(default=0.3, ge=0, le=1)
    resample_delay: float = Field(default=0.1, ge=0, le=1)

    @classmethod
    def none(cls) -> "MutationRates":
        return cls(**{name: 0.0 for name in cls.model_fields})


class SNNEvoConfig(BaseModel):
    """Structural evolution and network initialisation parameters."""
    model_config = ConfigDict(extra="forbid")

    population: int = Field(default=100, ge=2)
    generations: int = Field(default=100, ge=1)
    elites: int = Field(default=2, ge=1)
    truncation: float = Field(default=0.25, gt=0, le=1)
    rates: MutationRates = Field(default_factory=MutationRates)
    weight_sigma: float = Field(default=0.5, gt=0)
    threshold_sigma: float = Field(default=0.25, gt=0)
    hidden_min: int = Field(default=5, ge=0)
    hidden_max: int = Field(default=40, ge=0)
    density: float = Field(default=0.1, ge=0, le=1)
    max_delay: int = Field(default=8, ge=1)
    threshold_low: float = 0.5
    threshold_high: float = 4.0
    horizon: int = Field(default=DEFAULT_HORIZON, ge=IMAGE_SIDE)
    scan: ScanDirection = "columns"
    leak: float = Field(default=0.0, ge=0, lt=1)
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.elites >= self.population:
            raise ValueError("elites must be smaller than the population")
        if self.hidden_min > self.hidden_max:
            raise ValueError("hidden_min exceeds hidden_max")
        if self.threshold_low > self.threshold_high:
            raise ValueError("threshold_low exceeds threshold_high")
        return self


@dataclass(frozen=True)
class Detector:
    """A network plus the affine score normalisation and decision cut learned on its task."""
    network: SNNetwork
    baseline: float = 0.0
    scale: float = 1.0
    cut: float = 1.0

    def normalise(self, fire_counts: np.ndarray) -> np.ndarray:
        return (np.asarray(fire_counts, dtype=np.float64) - self.baseline) / self.scale


@dataclass(frozen=True)
class DetectorEnsemble:
    detectors: Tuple[Detector, ...]

    def __post_init__(self):
        if len(self.detectors) != LABEL_COUNT:
            raise ConfigError(f"an ensemble needs exactly {LABEL_COUNT} detectors, got {len(self.detectors)}")


@dataclass
class SNNEvolutionResult:
    detector: Detector
    fitness: float
    history: List[dict]


# ==================== Scoring ====================

def output_counts(net: SNNetwork, images: np.ndarray, horizon: int = DEFAULT_HORIZON,
                  scan: ScanDirection = "columns", leak: float = 0.0) -> np.ndarray:
    counts, _ = simulate_batch(net, scan_charges(images, scan), horizon, leak)
    return counts[:, net.output]


def detector_score(det: Detector, image, horizon: int = DEFAULT_HORIZON, scan: ScanDirection = "columns",
                   leak: float = 0.0) -> float:
    """Output fire count over the horizon, normalised by the detector's baseline and scale."""
    pixels = getattr(image, "pixels", image)
    return float(det.normalise(output_counts(det.network, np.asarray(pixels)[None], horizon, scan, leak))[0])


def ensemble_scores(ens: DetectorEnsemble, images: np.ndarray, horizon: int = DEFAULT_HORIZON,
                    scan: ScanDirection = "columns", leak: float = 0.0) -> np.ndarray:
    return np.stack([d.normalise(output_counts(d.network, images, horizon, scan, leak)) for d in ens.detectors], axis=1)


def ensemble_classify(ens: DetectorEnsemble, image, horizon: int = DEFAULT_HORIZON,
                      scan: ScanDirection = "columns", leak: float = 0.0) -> int:
    """Digit of the highest-scoring detector; ties go to the lowest digit."""
    pixels = np.asarray(getattr(image, "pixels", image))
    return int(np.argmax(ensemble_scores(ens, pixels[None], horizon, scan, leak)[0]))


def ensemble_accuracy(ens: DetectorEnsemble, ds: Dataset, horizon: int = DEFAULT_HORIZON,
                      scan: ScanDirection = "columns", leak: float = 0.0) -> float:
    predicted = np.argmax(ensemble_scores(ens, ds.images, horizon, scan, leak), axis=1)
    return float(np.mean(predicted == ds.labels))


def balanced_accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    truth = np.asarray(truth, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    tpr = predicted[truth].mean() if truth.any() else 1.0
    tnr = (~predicted[~truth]).mean() if (~truth).any() else 1.0
    return float(0.5 * (tpr + tnr))


def best_cut(counts: np.ndarray, truth: np.ndarray) -> Tuple[float, float]:
    """
    Decision cut (predict yes when count >= cut) maximising balanced accuracy.

    Returns:
        (cut, balanced accuracy); the smallest best cut wins ties
    """
    counts = np.asarray(counts, dtype=np.float64)
    candidates = np.append(np.unique(counts), np.inf)
    best = (np.inf, balanced_accuracy(np.zeros_like(truth, dtype=bool), truth))
    for cut in candidates:
        acc = balanced_accuracy(counts >= cut, truth)
        if acc > best[1] or (acc == best[1] and cut < best[0]):
            best = (float(cut), acc)
    return best


def calibrate_detector(net: SNNetwork, counts: np.ndarray, truth: np.ndarray) -> Tuple[Detector, float]:
    """Baseline = mean negative count, scale = max(1, std of all counts)."""
    truth = np.asarray(truth, dtype=bool)
    cut, acc = best_cut(counts, truth)
    baseline = float(counts[~truth].mean()) if (~truth).any() else 0.0
    scale = max(1.0, float(np.std(counts)))
    return Detector(net, baseline, scale, cut), acc


# ==================== Variation ====================

def random_network(rng: np.random.Generator, cfg: SNNEvoConfig, inputs: int = IMAGE_SIDE,
                   hidden: Optional[int] = None, synapses: Optional[int] = None) -> SNNetwork:
    """
    Inputs first, then hidden neurons, output last. Without an explicit
    synapse count each ordered pair (no self-loops) is connected with
    probability ``cfg.density``.
    """
    if hidden is None:
        hidden = int(rng.integers(cfg.hidden_min, cfg.hidden_max + 1))
    n = inputs + hidden + 1
    thresholds = rng.uniform(cfg.threshold_low, cfg.threshold_high, size=n)
    pairs = np.array([(i, j) for i in range(n) for j in range(n) if i != j], dtype=np.int64)
    if synapses is None:
        chosen = pairs[rng.random(len(pairs)) < cfg.density]
    else:
        if synapses > len(pairs):
            raise ConfigError(f"{synapses} synapses do not fit {n} neurons")
        chosen = pairs[np.sort(rng.choice(len(pairs), size=synapses, replace=False))]
    count = len(chosen)
    return SNNetwork(
        thresholds=thresholds,
        pre=chosen[:, 0] if count else np.zeros(0, dtype=np.int64),
        post=chosen[:, 1] if count else np.zeros(0, dtype=np.int64),
        weight=rng.standard_normal(count),
        delay=rng.integers(1, cfg.max_delay + 1, size=count),
        inputs=tuple(range(inputs)),
        output=n - 1,
    )


def _remove_neuron(net: SNNetwork, neuron: int) -> SNNetwork:
    keep = (net.pre != neuron) & (net.post != neuron)
    shift = lambda ids: ids - (ids > neuron)
    return SNNetwork(
        thresholds=np.delete(net.thresholds, neuron),
        pre=shift(net.pre[keep]),
        post=shift(net.post[keep]),
        weight=net.weight[keep],
        delay=net.delay[keep],
        inputs=tuple(int(i - (i > neuron)) for i in net.inputs),
        output=int(net.output - (net.output > neuron)),
    )


def _add_synapse(net: SNNetwork, rng: np.random.Generator, cfg: SNNEvoConfig, pre: int, post: int) -> SNNetwork:
    return replace(
        net,
        pre=np.append(net.pre, pre),
        post=np.append(net.post, post),
        weight=np.append(net.weight, rng.standard_normal()),
        delay=np.append(net.delay, rng.integers(1, cfg.max_delay + 1)),
    )


def mutate(net: SNNetwork, rng: np.random.Generator, cfg: SNNEvoConfig) -> SNNetwork:
    """
    Clone with structural and parametric mutations, each applied with its
    configured probability. Mutations that would break the network (removing
    an input/output neuron, removing from an empty synapse list) are skipped.
    """
    r = cfg.rates
    n = net.neuron_count
    if rng.random() < r.add_neuron:
        # new hidden neuron sits just before the output and is wired in and out
        net = SNNetwork(
            thresholds=np.insert(net.thresholds, net.output, rng.uniform(cfg.threshold_low, cfg.threshold_high)),
            pre=net.pre + (net.pre >= net.output),
            post=net.post + (net.post >= net.output),
            weight=net.weight,
            delay=net.delay,
            inputs=tuple(i + (i >= net.output) for i in net.inputs),
            output=net.output + 1,
        )
        new = net.output - 1
        net = _add_synapse(net, rng, cfg, int(rng.choice([i for i in range(net.neuron_count) if i != new])), new)
        net = _add_synapse(net, rng, cfg, new, int(rng.choice([i for i in range(net.neuron_count) if i != new])))
        n = net.neuron_count
    if rng.random() < r.remove_neuron:
        hidden = net.hidden()
        if hidden:
            net = _remove_neuron(net, int(rng.choice(hidden)))
            n = net.neuron_count
    if rng.random() < r.add_synapse and n > 1:
        pre = int(rng.integers(0, n))
        post = int(rng.integers(0, n - 1))
        net = _add_synapse(net, rng, cfg, pre, post + (post >= pre))
    if rng.random() < r.remove_synapse and net.synapse_count:
        keep = np.ones(net.synapse_count, dtype=bool)
        keep[rng.integers(0, net.synapse_count)] = False
        net = replace(net, pre=net.pre[keep], post=net.post[keep], weight=net.weight[keep], delay=net.delay[keep])
    if rng.random() < r.perturb_weight and net.synapse_count:
        weight = net.weight.copy()
        weight[rng.integers(0, net.synapse_count)] += cfg.weight_sigma * rng.standard_normal()
        net = replace(net, weight=weight)
    if rng.random() < r.perturb_threshold:
        thresholds = net.thresholds.copy()
        k = rng.integers(0, n)
        if np.isfinite(thresholds[k]):
            thresholds[k] = max(1e-6, thresholds[k] + cfg.threshold_sigma * rng.standard_normal())
        net = replace(net, thresholds=thresholds)
    if rng.random() < r.resample_delay and net.synapse_count:
        delay = net.delay.copy()
        delay[rng.integers(0, net.synapse_count)] = rng.integers(1, cfg.max_delay + 1)
        net = replace(net, delay=delay)
    return net


# ==================== Evolution ====================

def detection_task(ds: Dataset, digit: int, size: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Balanced yes/no task: size/2 images of ``digit`` and size/2 of the other digits."""
    if not 0 <= digit < LABEL_COUNT:
        raise ConfigError(f"digit {digit} out of range")
    rng = make_rng(derive_seed(seed, "task", digit))
    positives = np.flatnonzero(ds.labels == digit)
    negatives = np.flatnonzero(ds.labels != digit)
    half = size // 2
    if half < 1 or len(positives) < half or len(negatives) < half:
        raise DataError(f"not enough images for a balanced task of {size} on digit {digit}")
    idx = np.concatenate([rng.choice(positives, half, replace=False), rng.choice(negatives, half, replace=False)])
    truth = np.concatenate([np.ones(half, dtype=bool), np.zeros(half, dtype=bool)])
    return ds.images[idx], truth


def evolve_snn(images: np.ndarray, truth: np.ndarray, cfg: SNNEvoConfig) -> SNNEvolutionResult:
    """
    Evolve one detector by clone-and-mutate with elitism.

    Args:
        images: (n, 784) task images
        truth: (n,) True for positives
        cfg: evolution parameters

    Returns:
        best detector found, its balanced accuracy on the task and
        per-generation statistics
    """
    truth = np.asarray(truth, dtype=bool)
    if not truth.any() or truth.all():
        raise DataError("a detection task needs both positive and negative images")
    charges = scan_charges(images, cfg.scan)
    rng = make_rng(derive_seed(cfg.seed, "snn-init"))
    population = [random_network(rng, cfg) for _ in range(cfg.population)]

    def fitness(net: SNNetwork) -> Tuple[Detector, float]:
        counts, _ = simulate_batch(net, charges, cfg.horizon, cfg.leak)
        return calibrate_detector(net, counts[:, net.output], truth)

    history: List[dict] = []
    best: Optional[Tuple[Detector, float]] = None
    scored: List[Tuple[Detector, float]] = []
    for generation in range(cfg.generations):
        fresh = parallel_map(fitness, population[len(scored):], cfg.workers)
        scored = scored + fresh
        order = sorted(range(len(scored)), key=lambda i: (-scored[i][1], i))
        ranked = [scored[i] for i in order]
        if best is None or ranked[0][1] > best[1]:
            best = ranked[0]
        values = np.array([s[1] for s in scored])
        history.append({"generation": generation, "best": float(values.max()), "mean": float(values.mean()),
                        "std": float(values.std()), "best_so_far": best[1]})
        logger.info("SNN generation complete", generation=generation, best=history[-1]["best"],
                    mean=history[-1]["mean"])
        if generation == cfg.generations - 1:
            break
        step_rng = make_rng(derive_seed(cfg.seed, "snn-generation", generation))
        pool = max(1, int(np.ceil(cfg.truncation * len(ranked))))
        scored = ranked[:cfg.elites]
        population = [d.network for d, _ in scored]
        while len(population) < cfg.population:
            parent = ranked[int(step_rng.integers(0, pool))][0].network
            population.append(mutate(parent, step_rng, cfg))

    return SNNEvolutionResult(best[0], best[1], history)


def evolve_ensemble(ds: Dataset, digits: Sequence[int], task_size: int, cfg: SNNEvoConfig
                    ) -> Dict[int, SNNEvolutionResult]:
    results = {}
    for digit in digits:
        images, truth = detection_task(ds, digit, task_size, cfg.seed)
        results[digit] = evolve_snn(images, truth, cfg.model_copy(update={"seed": derive_seed(cfg.seed, "digit", digit)}))
        logger.info("Detector evolved", digit=digit, balanced_accuracy=results[digit].fitness)
    return results


# ==================== Files ====================

def save_detector(det: Detector, path: str | Path):
    payload = {"format": DETECTOR_FORMAT, "version": 1, "baseline": det.baseline, "scale": det.scale,
               "cut": det.cut, "network": network_dict(det.network)}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_detector(path: str | Path) -> Detector:
    data = json.loads(Path(path).read_text())
    if data.get("format") == DETECTOR_FORMAT:
        return Detector(network_from_dict(data["network"]), data["baseline"], data["scale"], data["cut"])
    return Detector(network_from_dict(data))


def save_ensemble(ens: DetectorEnsemble, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for digit, det in enumerate(ens.detectors):
        name = f"detector_{digit}.json"
        save_detector(det, directory / name)
        files.append(name)
    manifest = directory / "ensemble.json"
    manifest.write_text(json.dumps({"format": ENSEMBLE_FORMAT, "version": 1, "detectors": files}, indent=1) + "\n")
    return manifest


def load_ensemble(manifest: str | Path) -> DetectorEnsemble:
    manifest = Path(manifest)
    data = json.loads(manifest.read_text())
    if data.get("format") != ENSEMBLE_FORMAT:
        raise DataError(f"{manifest} is not an ensemble manifest")
    return DetectorEnsemble(tuple(load_detector(manifest.parent / name) for name in data["detectors"]))
