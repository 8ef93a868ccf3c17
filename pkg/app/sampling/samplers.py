"""
Samplers for Boltzmann distributions over binary states.

Three sources are provided:
- exact enumeration (the oracle, up to 24 free nodes),
- Gibbs sampling with a fixed per-chain site order,
- simulated annealing over an inverse-temperature ladder, emulating the
  independent low-energy reads of an annealer.

All chain-based samplers run chains side by side as rows of a state matrix.
Chain c draws every random number from its own PCG64 stream seeded with
``seed ^ c``, so a chain's trajectory does not depend on how many other
chains run with it.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import SamplerError
from ..core.logging import get_logger
from ..core.seeding import chain_rngs, make_rng
from .energy import ClampSet, EnergyModel, reduce_model, sigmoid

logger = get_logger(__name__)

MAX_EXACT_FREE = 24
ENERGY_CHECK_EVERY = 1000
ENERGY_TOLERANCE = 1e-9
# Upper bound on chains * block_sweeps * free_nodes pre-drawn uniforms
_UNIFORM_BLOCK_ELEMENTS = 1 << 22
# Upper bound on chains * free_nodes held in one state matrix
_CHAIN_CHUNK_ELEMENTS = 1 << 21

SOURCES = ("exact", "gibbs", "anneal")


@dataclass(frozen=True)
class SampleBatch:
    """Binary states over the free nodes, one row per recorded sample."""
    states: np.ndarray
    source: str
    free_nodes: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.uint8)
        if states.ndim != 2 or states.shape[0] == 0:
            raise SamplerError("a sample batch needs at least one state")
        if self.source not in SOURCES:
            raise SamplerError(f"unknown sample source: {self.source}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "free_nodes", np.asarray(self.free_nodes, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.states.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.states.shape[1])

    def state_indices(self) -> np.ndarray:
        """Integer code of each state; free node j is bit j."""
        weights = (1 << np.arange(self.dimension, dtype=np.int64))
        return self.states.astype(np.int64) @ weights


@dataclass(frozen=True)
class Moments:
    """Empirical first moments and second moments on requested pairs."""
    first: np.ndarray
    second: np.ndarray
    pairs: Optional[np.ndarray]


# ==================== Exact enumeration ====================

@dataclass(frozen=True)
class ExactDistribution:
    """Boltzmann probabilities of every free-node state, indexed by state code."""
    free_nodes: np.ndarray
    probabilities: np.ndarray
    log_partition: float

    @property
    def dimension(self) -> int:
        return int(self.free_nodes.shape[0])

    def states(self) -> np.ndarray:
        return _enumerate_states(self.dimension, 0, 1 << self.dimension)

    def probability(self, state: Sequence[int]) -> float:
        code = sum(int(bit) << j for j, bit in enumerate(state))
        return float(self.probabilities[code])

    def marginals(self) -> np.ndarray:
        return self.probabilities @ self.states()

    def pair_moments(self, pairs: np.ndarray | None = None) -> np.ndarray:
        s = self.states()
        if pairs is None:
            return (s * self.probabilities[:, None]).T @ s
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return self.probabilities @ (s[:, pairs[:, 0]] * s[:, pairs[:, 1]])

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        codes = rng.choice(self.probabilities.size, size=count, p=self.probabilities)
        bits = (codes[:, None] >> np.arange(self.dimension)) & 1
        return SampleBatch(bits, "exact", self.free_nodes)


def _enumerate_states(n: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.float64)


def exact_distribution(model: EnergyModel, clamps: ClampSet | None = None, beta: float = 1.0
                       ) -> ExactDistribution:
    """
    Enumerate every free-node state and normalise exp(-beta * E).

    Clamped values are substituted into the energy; real-valued clamps enter
    the free nodes' fields directly.
    """
    clamps = clamps or ClampSet()
    free, bias, J = reduce_model(model, clamps)
    n = free.size
    if n > MAX_EXACT_FREE:
        raise SamplerError(f"exact enumeration supports at most {MAX_EXACT_FREE} free nodes, got {n}")
    bias = bias[0]
    total = 1 << n
    log_weights = np.empty(total)
    chunk = 1 << 16
    for start in range(0, total, chunk):
        s = _enumerate_states(n, start, min(total, start + chunk))
        log_weights[start:start + s.shape[0]] = beta * (s @ bias + 0.5 * np.einsum("kf,fg,kg->k", s, J, s))
    peak = log_weights.max()
    weights = np.exp(log_weights - peak)
    z = weights.sum()
    return ExactDistribution(free, weights / z, float(peak + np.log(z)))


# ==================== Chain kernel ====================

def _energies(states: np.ndarray, bias: np.ndarray, J: np.ndarray) -> np.ndarray:
    return -np.einsum("cf,cf->c", states, bias) - 0.5 * np.einsum("cf,fg,cg->c", states, J, states)


def _run_chains(bias: np.ndarray, J: np.ndarray, rngs: List[np.random.Generator],
                betas: np.ndarray, record: np.ndarray) -> tuple:
    """
    Advance len(rngs) chains through len(betas) sweeps.

    Each chain draws its site order once, then a uniform initial state, then
    one uniform per site update. The energy of every chain is tracked
    incrementally and checked against a full recomputation every
    ENERGY_CHECK_EVERY updates.

    Returns:
        (recorded states (n_records, C, F), diagnostics dict)
    """
    C, F = len(rngs), J.shape[0]
    bias = np.broadcast_to(bias, (C, F))
    rows = np.arange(C)
    orders = np.stack([rng.permutation(F) for rng in rngs])
    states = np.stack([(rng.random(F) < 0.5) for rng in rngs]).astype(np.float64)
    energy = _energies(states, bias, J)

    records = []
    max_drift, checks, since_check = 0.0, 0, 0
    block = max(1, _UNIFORM_BLOCK_ELEMENTS // max(1, C * F))
    uniforms = None
    for sweep, beta in enumerate(betas):
        offset = sweep % block
        if offset == 0:
            size = min(block, len(betas) - sweep)
            uniforms = np.stack([rng.random((size, F)) for rng in rngs])
        for t in range(F):
            idx = orders[:, t]
            local = bias[rows, idx] + np.einsum("cf,cf->c", J[idx], states)
            new = (uniforms[:, offset, t] < sigmoid(beta * local)).astype(np.float64)
            energy -= (new - states[rows, idx]) * local
            states[rows, idx] = new
            since_check += 1
            if since_check >= ENERGY_CHECK_EVERY:
                fresh = _energies(states, bias, J)
                drift = float(np.max(np.abs(fresh - energy) / np.maximum(1.0, np.abs(fresh))))
                if drift > ENERGY_TOLERANCE:
                    raise SamplerError(f"incremental energy drifted by {drift:.3e}")
                max_drift = max(max_drift, drift)
                energy = fresh
                since_check, checks = 0, checks + 1
        if record[sweep]:
            records.append(states.copy())

    diagnostics = {"energy_checks": checks, "max_energy_drift": max_drift, "chains": C, "sweeps": len(betas)}
    return np.array(records).reshape(len(records), C, F), diagnostics


def _resolve_clamps(model: EnergyModel, clamps: ClampSet, rngs: List[np.random.Generator]):
    """Per-chain effective biases; Bernoulli clamps are drawn from each chain's stream first."""
    if clamps.bernoulli and clamps.values:
        clamped = clamps.clamped_nodes()
        p = np.array([clamps.values[n] for n in clamped])
        rows = np.stack([(rng.random(clamped.size) < p) for rng in rngs]).astype(np.float64)
        return reduce_model(model, clamps, rows)
    return reduce_model(model, clamps)


def _check_free(free: np.ndarray):
    if free.size == 0:
        raise SamplerError("every node is clamped; nothing to sample")


# ==================== Public sampling operations ====================

def gibbs_sample(model: EnergyModel, clamps: ClampSet | None, sweeps: int, chains: int,
                 burn_in: int, seed: int, beta: float = 1.0) -> SampleBatch:
    """
    Gibbs sampling with p(s_i = 1 | rest) = sigmoid(beta * (b_i + sum_j w_ij s_j)).

    Each chain runs ``burn_in`` unrecorded sweeps and then records its state
    after each of ``sweeps`` sweeps, giving chains * sweeps states ordered
    chain by chain.
    """
    if sweeps < 1 or chains < 1 or burn_in < 0:
        raise SamplerError("gibbs_sample needs sweeps >= 1, chains >= 1, burn_in >= 0")
    clamps = clamps or ClampSet()
    rngs = chain_rngs(seed, chains)
    free, bias, J = _resolve_clamps(model, clamps, rngs)
    _check_free(free)
    betas = np.full(burn_in + sweeps, float(beta))
    record = np.arange(burn_in + sweeps) >= burn_in
    states, diagnostics = _run_chains(bias, J, rngs, betas, record)
    states = states.transpose(1, 0, 2).reshape(-1, free.size)
    return SampleBatch(states, "gibbs", free, diagnostics)


def geometric_schedule(start: float = 0.1, stop: float = 1.0, rungs: int = 20) -> np.ndarray:
    """Inverse temperatures spaced geometrically from ``start`` to ``stop``."""
    if rungs < 1 or start <= 0 or stop <= 0:
        raise SamplerError("a geometric schedule needs rungs >= 1 and positive endpoints")
    if rungs == 1:
        return np.array([float(stop)])
    return np.geomspace(start, stop, rungs)


def validate_schedule(schedule: Sequence[float]) -> np.ndarray:
    betas = np.asarray(schedule, dtype=np.float64).reshape(-1)
    if betas.size == 0:
        raise SamplerError("annealing schedule is empty")
    if np.any(np.diff(betas) <= 0):
        raise SamplerError("annealing schedule must be strictly increasing")
    if betas[-1] <= 0:
        raise SamplerError("final inverse temperature must be positive")
    return betas


def anneal_sample(model: EnergyModel, clamps: ClampSet | None, schedule: Sequence[float] | None,
                  reads: int, seed: int, sweeps_per_rung: int = 1) -> SampleBatch:
    """
    Simulated annealing: every read starts from a uniform random state, runs
    ``sweeps_per_rung`` Gibbs sweeps at each rung's inverse temperature and
    returns its final state.
    """
    if reads < 1 or sweeps_per_rung < 1:
        raise SamplerError("anneal_sample needs reads >= 1 and sweeps_per_rung >= 1")
    betas = validate_schedule(geometric_schedule() if schedule is None else schedule)
    clamps = clamps or ClampSet()
    rngs = chain_rngs(seed, reads)
    free, bias, J = _resolve_clamps(model, clamps, rngs)
    _check_free(free)
    ladder = np.repeat(betas, sweeps_per_rung)
    record = np.zeros(ladder.size, dtype=bool)
    record[-1] = True
    states, diagnostics = _run_chains(bias, J, rngs, ladder, record)
    diagnostics["schedule"] = betas.tolist()
    return SampleBatch(states[0], "anneal", free, diagnostics)


def moments(batch: SampleBatch, pairs: np.ndarray | None = None) -> Moments:
    """
    Empirical <s_i> and <s_i s_j>.

    ``pairs`` indexes columns of the batch; without pairs the full second
    moment matrix is returned.
    """
    s = batch.states.astype(np.float64)
    first = s.mean(axis=0)
    if pairs is None:
        return Moments(first, s.T @ s / len(batch), None)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= batch.dimension):
        raise SamplerError("pair references a node outside the batch")
    second = (s[:, pairs[:, 0]] * s[:, pairs[:, 1]]).mean(axis=0)
    return Moments(first, second, pairs)


def weighted_moments(dist: ExactDistribution, pairs: np.ndarray | None = None) -> Moments:
    """Analytic moments of an enumerated distribution."""
    return Moments(dist.marginals(), dist.pair_moments(pairs), None if pairs is None else np.asarray(pairs))


def total_variation(batch: SampleBatch, dist: ExactDistribution) -> float:
    """Half the L1 distance between the empirical and exact state distributions."""
    if batch.dimension != dist.dimension:
        raise SamplerError("batch and distribution cover different node sets")
    empirical = np.bincount(batch.state_indices(), minlength=dist.probabilities.size) / len(batch)
    return 0.5 * float(np.abs(empirical - dist.probabilities).sum())


def write_comparison_csv(path: str | Path, batch: SampleBatch, dist: ExactDistribution):
    """Diagnostic dump: state code, bit string, empirical and exact probability."""
    empirical = np.bincount(batch.state_indices(), minlength=dist.probabilities.size) / len(batch)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["state", "bits", "empirical", "exact"])
        for code in range(dist.probabilities.size):
            bits = "".join(str((code >> j) & 1) for j in range(dist.dimension))
            writer.writerow([code, bits, f"{empirical[code]:.10f}", f"{dist.probabilities[code]:.10f}"])


# ==================== Samplers used by training ====================

def _rows_per_chunk(per_row: int, width: int) -> int:
    return max(1, _CHAIN_CHUNK_ELEMENTS // max(1, per_row * width))


class GibbsSampler:
    """
    Batched conditional sampler: one set of chains per row of effective biases.

    Chain r * reads + k (for row r, read k) uses the stream seed ^ (r * reads + k).
    """
    source = "gibbs"

    def __init__(self, sweeps: int = 1, burn_in: int = 10, beta: float = 1.0):
        if sweeps < 1 or burn_in < 0:
            raise SamplerError("GibbsSampler needs sweeps >= 1 and burn_in >= 0")
        self.sweeps = sweeps
        self.burn_in = burn_in
        self.beta = beta

    def _betas(self) -> tuple:
        betas = np.full(self.burn_in + self.sweeps, float(self.beta))
        return betas, np.arange(betas.size) >= self.burn_in

    def sample_fields(self, bias: np.ndarray, J: np.ndarray, reads: int, seed: int) -> np.ndarray:
        """
        Sample states for every row of ``bias`` (B, F) under couplings J (F, F).

        Returns:
            (B, reads * samples_per_chain, F) float array of 0/1 states
        """
        bias = np.atleast_2d(np.asarray(bias, dtype=np.float64))
        B, F = bias.shape
        if F == 0:
            raise SamplerError("nothing to sample")
        betas, record = self._betas()
        per_row = int(record.sum())
        out = np.empty((B, reads * per_row, F))
        step = _rows_per_chunk(reads, F)
        for start in range(0, B, step):
            stop = min(B, start + step)
            rngs = [_chain_rng(seed, r * reads + k) for r in range(start, stop) for k in range(reads)]
            rows = np.repeat(bias[start:stop], reads, axis=0)
            states, _ = _run_chains(rows, J, rngs, betas, record)
            # (n_records, C, F) -> (rows, reads * n_records, F)
            states = states.transpose(1, 0, 2).reshape(stop - start, reads * per_row, F)
            out[start:stop] = states
        return out

    def describe(self) -> dict:
        return {"source": self.source, "sweeps": self.sweeps, "burn_in": self.burn_in, "beta": self.beta}


class AnnealSampler(GibbsSampler):
    """Annealer emulation: one final state per read after walking the ladder."""
    source = "anneal"

    def __init__(self, schedule: Sequence[float] | None = None, sweeps_per_rung: int = 1):
        super().__init__(sweeps=1, burn_in=0)
        self.schedule = validate_schedule(geometric_schedule() if schedule is None else schedule)
        self.sweeps_per_rung = sweeps_per_rung

    def _betas(self) -> tuple:
        betas = np.repeat(self.schedule, self.sweeps_per_rung)
        record = np.zeros(betas.size, dtype=bool)
        record[-1] = True
        return betas, record

    def describe(self) -> dict:
        return {"source": self.source, "schedule": self.schedule.tolist(), "sweeps_per_rung": self.sweeps_per_rung}


def _chain_rng(seed: int, index: int) -> np.random.Generator:
    return make_rng(int(seed) ^ index)
