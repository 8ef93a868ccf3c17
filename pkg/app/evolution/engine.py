"""
Evolution Engine - integer-genome evolutionary search.

Generational loop with elitism, truncation (or tournament) selection,
uniform crossover and per-gene resampling mutation. Fitness is maximised
and evaluated concurrently; every individual's fitness seed is derived from
(run seed, genome), so results do not depend on evaluation order or on the
number of workers.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, TypedDict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import ConfigError, DataError
from ..core.logging import get_logger
from ..core.seeding import derive_seed, make_rng

logger = get_logger(__name__)

Genome = Tuple[int, ...]
FitnessFn = Callable[[Genome, int], float]

WORST_FITNESS = -math.inf
SNAPSHOT_FORMAT = "workbench.evolution-snapshot"
GENERATIONS_HEADER = "# workbench-generations v1"
EVALUATIONS_HEADER = "# workbench-evaluations v1"


@dataclass(frozen=True)
class GeneSpec:
    """One integer gene with an inclusive range."""
    name: str
    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ConfigError(f"gene {self.name}: bounds must be integers")
        if self.lo > self.hi:
            raise ConfigError(f"gene {self.name}: lo {self.lo} > hi {self.hi}")

    def contains(self, value: int) -> bool:
        return self.lo <= value <= self.hi


@dataclass
class Individual:
    genome: Genome
    fitness: Optional[float] = None
    diagnostic: Optional[str] = None

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


class EvoConfig(BaseModel):
    """Evolution parameters. Full scale is population 500 for 32 generations."""
    model_config = ConfigDict(extra="forbid")

    population: int = Field(default=50, ge=2)
    generations: int = Field(default=50, ge=1)
    truncation: float = Field(default=0.25, gt=0, le=1)
    selection: Literal["truncation", "tournament"] = "truncation"
    tournament_size: int = Field(default=3, ge=2)
    crossover: float = Field(default=0.9, ge=0, le=1)
    mutation: Optional[float] = Field(default=None, ge=0, le=1)
    elites: int = Field(default=1, ge=1)
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_elites(self):
        if self.elites >= self.population:
            raise ValueError("elites must be smaller than the population")
        return self

    @property
    def budget(self) -> int:
        return self.population * self.generations

    def mutation_rate(self, genes: int) -> float:
        return 1.0 / genes if self.mutation is None else self.mutation


class GenerationStats(TypedDict):
    generation: int
    best: float
    mean: float
    std: float
    best_genome: List[int]


@dataclass
class EvolutionResult:
    best: Individual
    history: List[GenerationStats]
    evaluations: List[Tuple[Genome, float]]
    fresh_evaluations: int


def _bounds(specs: Sequence[GeneSpec]) -> Tuple[np.ndarray, np.ndarray]:
    if not specs:
        raise ConfigError("at least one gene is required")
    lo = np.array([s.lo for s in specs], dtype=np.int64)
    hi = np.array([s.hi for s in specs], dtype=np.int64)
    return lo, hi


def validate_genome(genome: Sequence[int], specs: Sequence[GeneSpec]) -> Genome:
    if len(genome) != len(specs):
        raise ConfigError(f"genome has {len(genome)} genes, expected {len(specs)}")
    for value, spec in zip(genome, specs):
        if not spec.contains(int(value)):
            raise ConfigError(f"gene {spec.name}={value} outside [{spec.lo}, {spec.hi}]")
    return tuple(int(v) for v in genome)


def fitness_seed(run_seed: int, genome: Genome) -> int:
    return derive_seed(run_seed, "fitness", list(genome))


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map preserving input order; threads when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


class FitnessCache:
    """
    Genome -> fitness memo for one run.

    Each distinct genome is computed at most once; ``records`` keeps every
    fresh (genome, fitness) pair in first-evaluation order.
    """

    def __init__(self):
        self._values: Dict[Genome, Tuple[float, Optional[str]]] = {}
        self.records: List[Tuple[Genome, float]] = []
        self.hits = 0

    def __contains__(self, genome: Genome) -> bool:
        return genome in self._values

    def __len__(self) -> int:
        return len(self._values)

    def get(self, genome: Genome) -> Tuple[float, Optional[str]]:
        self.hits += 1
        return self._values[genome]

    def put(self, genome: Genome, fitness: float, diagnostic: Optional[str] = None):
        self._values[genome] = (fitness, diagnostic)
        self.records.append((genome, fitness))


def _safe_fitness(fitness_fn: FitnessFn, run_seed: int) -> Callable[[Genome], Tuple[float, Optional[str]]]:
    def run(genome: Genome) -> Tuple[float, Optional[str]]:
        try:
            value = float(fitness_fn(genome, fitness_seed(run_seed, genome)))
        except Exception as e:
            logger.warning("Fitness evaluation failed", genome=list(genome), error=str(e))
            return WORST_FITNESS, f"{type(e).__name__}: {e}"
        if math.isnan(value):
            logger.warning("Fitness evaluation returned NaN", genome=list(genome))
            return WORST_FITNESS, "fitness is NaN"
        return value, None
    return run


# ==================== Operators ====================

def init_population(specs: Sequence[GeneSpec], cfg: EvoConfig) -> List[Individual]:
    """Uniformly random valid genomes; deterministic per ``cfg.seed``."""
    lo, hi = _bounds(specs)
    rng = make_rng(derive_seed(cfg.seed, "init"))
    genes = rng.integers(lo, hi + 1, size=(cfg.population, len(specs)))
    return [Individual(tuple(int(v) for v in row)) for row in genes]


def evaluate(population: List[Individual], fitness_fn: FitnessFn, workers: int = 1, seed: int = 0,
             cache: Optional[FitnessCache] = None) -> List[Individual]:
    """
    Attach fitness to every individual.

    Args:
        population: individuals to evaluate (already evaluated ones are re-read from the cache)
        fitness_fn: pure function of (genome, derived seed); higher is better
        workers: concurrent evaluations
        seed: run seed the per-genome seeds derive from
        cache: run-wide memo; a private one is used when omitted

    Returns:
        new Individual objects in the same order, all evaluated. Failing
        fitness calls yield -inf with a diagnostic.
    """
    cache = FitnessCache() if cache is None else cache
    pending: List[Genome] = []
    for ind in population:
        if ind.genome not in cache and ind.genome not in pending:
            pending.append(ind.genome)

    results = parallel_map(_safe_fitness(fitness_fn, seed), pending, workers)
    for genome, (value, diagnostic) in zip(pending, results):
        cache.put(genome, value, diagnostic)

    evaluated = []
    for ind in population:
        value, diagnostic = cache.get(ind.genome)
        evaluated.append(Individual(ind.genome, value, diagnostic))
    logger.debug("Population evaluated", size=len(population), fresh=len(pending))
    return evaluated


def rank(population: List[Individual]) -> List[Individual]:
    """Best first; ties keep population order."""
    if any(not ind.evaluated for ind in population):
        raise DataError("cannot rank an unevaluated population")
    order = sorted(range(len(population)), key=lambda i: (-population[i].fitness, i))
    return [population[i] for i in order]


def _select(ranked: List[Individual], cfg: EvoConfig, rng: np.random.Generator) -> Individual:
    if cfg.selection == "tournament":
        picks = rng.integers(0, len(ranked), size=cfg.tournament_size)
        return ranked[int(picks.min())]
    pool = max(1, int(math.ceil(cfg.truncation * len(ranked))))
    return ranked[int(rng.integers(0, pool))]


def next_generation(population: List[Individual], specs: Sequence[GeneSpec], cfg: EvoConfig,
                    rng: np.random.Generator) -> List[Individual]:
    """
    Elites copied unchanged, the rest bred from selected parents.

    Offspring: uniform crossover with probability ``cfg.crossover`` (a clone
    of the first parent otherwise), then every gene is resampled uniformly
    in its range with the mutation probability.
    """
    lo, hi = _bounds(specs)
    ranked = rank(population)
    rate = cfg.mutation_rate(len(specs))
    offspring = [Individual(ind.genome, ind.fitness, ind.diagnostic) for ind in ranked[:cfg.elites]]

    while len(offspring) < cfg.population:
        first = np.array(_select(ranked, cfg, rng).genome)
        second = np.array(_select(ranked, cfg, rng).genome)
        child = first.copy()
        if rng.random() < cfg.crossover:
            mask = rng.random(len(specs)) < 0.5
            child[mask] = second[mask]
        mutate = rng.random(len(specs)) < rate
        if mutate.any():
            child[mutate] = rng.integers(lo[mutate], hi[mutate] + 1)
        offspring.append(Individual(tuple(int(v) for v in child)))
    return offspring


def generation_stats(generation: int, population: List[Individual]) -> GenerationStats:
    best = rank(population)[0]
    finite = np.array([ind.fitness for ind in population if math.isfinite(ind.fitness)])
    return {
        "generation": generation,
        "best": float(best.fitness),
        "mean": float(finite.mean()) if finite.size else WORST_FITNESS,
        "std": float(finite.std()) if finite.size else 0.0,
        "best_genome": list(best.genome),
    }


def target_fitness(target: Sequence[int]) -> FitnessFn:
    """Known-optimum task: fitness = -sum((gene - target)^2), maximal (0) at ``target``."""
    goal = np.asarray(target, dtype=np.float64)

    def fitness(genome: Genome, seed: int) -> float:
        return -float(np.sum((np.asarray(genome, dtype=np.float64) - goal) ** 2))

    return fitness


# ==================== Snapshots ====================

def save_snapshot(path: str | Path, generation: int, population: List[Individual], best: Individual,
                  history: List[GenerationStats], cache: FitnessCache):
    """Resumable state after ``generation`` has been evaluated."""
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": 1,
        "generation": generation,
        "population": [[list(ind.genome), ind.fitness, ind.diagnostic] for ind in population],
        "best": [list(best.genome), best.fitness],
        "history": history,
        "evaluations": [[list(g), f] for g, f in cache.records],
    }
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.replace(path)


def load_snapshot(path: str | Path):
    data = json.loads(Path(path).read_text())
    if data.get("format") != SNAPSHOT_FORMAT:
        raise DataError(f"{path} is not an evolution snapshot")
    population = [Individual(tuple(g), f, d) for g, f, d in data["population"]]
    best = Individual(tuple(data["best"][0]), data["best"][1])
    cache = FitnessCache()
    for genome, fitness in data["evaluations"]:
        cache.put(tuple(genome), fitness)
    return data["generation"], population, best, data["history"], cache


def latest_snapshot(directory: str | Path) -> Optional[Path]:
    snapshots = sorted(Path(directory).glob("generation_*.json"))
    return snapshots[-1] if snapshots else None


# ==================== Driver ====================

def evolve(specs: Sequence[GeneSpec], fitness_fn: FitnessFn, cfg: EvoConfig,
           snapshot_dir: Optional[str | Path] = None,
           on_generation: Optional[Callable[[GenerationStats], None]] = None) -> EvolutionResult:
    """
    Run the generational loop.

    Args:
        specs: gene ranges
        fitness_fn: (genome, seed) -> fitness, maximised
        cfg: evolution parameters
        snapshot_dir: when set, a snapshot is written after every generation
            and an existing one is resumed from
        on_generation: called with each generation's statistics

    Returns:
        EvolutionResult with the best individual ever evaluated
    """
    _bounds(specs)
    if cfg.budget >= 16000:
        logger.warning("Full-scale evolution budget, long-running", evaluations=cfg.budget)

    cache = FitnessCache()
    history: List[GenerationStats] = []
    best: Optional[Individual] = None
    start = 0
    population = init_population(specs, cfg)

    if snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
        snapshot = latest_snapshot(snapshot_dir)
        if snapshot is not None:
            done, evaluated, best, history, cache = load_snapshot(snapshot)
            logger.info("Resuming evolution", generation=done + 1, snapshot=str(snapshot))
            start = done + 1
            if start < cfg.generations:
                population = next_generation(evaluated, specs, cfg, make_rng(derive_seed(cfg.seed, "generation", done)))

    logger.info("Starting evolution", genes=len(specs), population=cfg.population,
                generations=cfg.generations, workers=cfg.workers)

    for generation in range(start, cfg.generations):
        population = evaluate(population, fitness_fn, cfg.workers, cfg.seed, cache)
        leader = rank(population)[0]
        if best is None or leader.fitness > best.fitness:
            best = leader
        stats = generation_stats(generation, population)
        history.append(stats)
        logger.info("Generation complete", generation=generation, best=stats["best"],
                    mean=stats["mean"], std=stats["std"])
        if on_generation is not None:
            on_generation(stats)
        if snapshot_dir is not None:
            save_snapshot(Path(snapshot_dir) / f"generation_{generation:04d}.json", generation,
                          population, best, history, cache)
        if generation < cfg.generations - 1:
            population = next_generation(population, specs, cfg, make_rng(derive_seed(cfg.seed, "generation", generation)))

    return EvolutionResult(best, history, list(cache.records), len(cache))


# ==================== Output ====================

def write_generations_csv(path: str | Path, history: List[GenerationStats]):
    with open(path, "w", newline="") as f:
        f.write(GENERATIONS_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["generation", "best", "mean", "std", "best_genome"])
        for row in history:
            writer.writerow([row["generation"], repr(row["best"]), repr(row["mean"]), repr(row["std"]),
                             " ".join(str(g) for g in row["best_genome"])])


def write_evaluations_csv(path: str | Path, specs: Sequence[GeneSpec], records: List[Tuple[Genome, float]]):
    with open(path, "w", newline="") as f:
        f.write(EVALUATIONS_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([s.name for s in specs] + ["fitness"])
        for genome, fitness in records:
            writer.writerow(list(genome) + [repr(fitness)])


def read_evaluations_csv(path: str | Path) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Gene names, genomes (n, genes) and fitness (n,) from an evaluations file."""
    with open(path, newline="") as f:
        rows = list(csv.reader(line for line in f if not line.startswith("#")))
    if not rows:
        raise DataError(f"{path} is empty")
    names = rows[0][:-1]
    genomes = np.array([[int(v) for v in r[:-1]] for r in rows[1:]], dtype=np.int64).reshape(-1, len(names))
    fitness = np.array([float(r[-1]) for r in rows[1:]])
    return names, genomes, fitness
