"""
Spiking network simulator.

Discrete-time integrate-and-fire neurons joined by weighted synapses with
integer delays. Each timestep delivers every charge due at that step
(external scan injections plus synaptic arrivals), adds it to the
membrane potential (after an optional leak), fires every neuron at or above
threshold and resets it to zero. Fired spikes are queued on a ring buffer
and arrive ``delay`` steps later. Runs are vectorised over a batch of
images; ``simulate`` is the single-image case that also records events.
"""

import csv
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConfigError, DataError
from ..core.logging import get_logger
from ..data.mnist import IMAGE_SIDE

logger = get_logger(__name__)

NETWORK_FORMAT = "workbench.snn"
NETWORK_VERSION = 1
SCAN_STEPS = IMAGE_SIDE
DEFAULT_HORIZON = 2 * SCAN_STEPS
POTENTIAL_LIMIT = 1e300

ScanDirection = Literal["columns", "rows"]


@dataclass(frozen=True)
class SNNetwork:
    """
    Neurons are identified by index into ``thresholds``. Synapse arrays are
    aligned: synapse s goes pre[s] -> post[s] with weight[s] after delay[s].
    """
    thresholds: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    weight: np.ndarray
    delay: np.ndarray
    inputs: Tuple[int, ...]
    output: int

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=np.float64).reshape(-1)
        pre = np.asarray(self.pre, dtype=np.int64).reshape(-1)
        post = np.asarray(self.post, dtype=np.int64).reshape(-1)
        weight = np.asarray(self.weight, dtype=np.float64).reshape(-1)
        delay = np.asarray(self.delay, dtype=np.int64).reshape(-1)
        n = thresholds.size
        if n == 0:
            raise ConfigError("network has no neurons")
        if np.any(np.isnan(thresholds)):
            raise ConfigError("thresholds must not be NaN")
        if not (pre.size == post.size == weight.size == delay.size):
            raise ConfigError("synapse arrays must have equal length")
        if pre.size and (pre.min() < 0 or post.min() < 0 or pre.max() >= n or post.max() >= n):
            raise ConfigError("synapse references a missing neuron")
        if delay.size and delay.min() < 1:
            raise ConfigError("synapse delays must be >= 1")
        if not np.all(np.isfinite(weight)):
            raise ConfigError("synapse weights must be finite")
        inputs = tuple(int(i) for i in self.inputs)
        if len(set(inputs)) != len(inputs) or any(i < 0 or i >= n for i in inputs):
            raise ConfigError("input neurons must be distinct existing neurons")
        if not 0 <= int(self.output) < n:
            raise ConfigError("output neuron does not exist")
        for name, value in (("thresholds", thresholds), ("pre", pre), ("post", post),
                            ("weight", weight), ("delay", delay)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "output", int(self.output))

    @property
    def neuron_count(self) -> int:
        return int(self.thresholds.size)

    @property
    def synapse_count(self) -> int:
        return int(self.pre.size)

    @property
    def max_delay(self) -> int:
        return int(self.delay.max()) if self.delay.size else 1

    @property
    def delay_elements(self) -> int:
        """Delay-chain stages in the network (sum of synapse delays)."""
        return int(self.delay.sum())

    def hidden(self) -> List[int]:
        fixed = set(self.inputs) | {self.output}
        return [i for i in range(self.neuron_count) if i not in fixed]

    def role(self, neuron: int) -> str:
        if neuron == self.output:
            return "output"
        return "input" if neuron in self.inputs else "hidden"


@dataclass(frozen=True)
class ScanSchedule:
    """charges[t, i] is injected into input neuron i at timestep t."""
    charges: np.ndarray

    def __post_init__(self):
        charges = np.asarray(self.charges, dtype=np.float64)
        if charges.ndim != 2:
            raise DataError("schedule charges must be (steps, inputs)")
        if np.any(charges < 0) or np.any(charges > 1):
            raise DataError("scan charges must lie in [0, 1]")
        object.__setattr__(self, "charges", charges)

    @property
    def steps(self) -> int:
        return int(self.charges.shape[0])

    @classmethod
    def from_image(cls, pixels: np.ndarray, direction: ScanDirection = "columns") -> "ScanSchedule":
        return cls(scan_charges(np.asarray(pixels)[None], direction)[0])


def scan_charges(images: np.ndarray, direction: ScanDirection = "columns") -> np.ndarray:
    """
    (B, 784) or (B, 28, 28) images -> (B, 28 steps, 28 inputs) charges.

    columns: at step t input i receives pixel(row i, column t).
    rows: at step t input i receives pixel(row t, column i).
    """
    x = np.asarray(images, dtype=np.float64).reshape(-1, IMAGE_SIDE, IMAGE_SIDE)
    if direction == "columns":
        return x.transpose(0, 2, 1).copy()
    if direction == "rows":
        return x.copy()
    raise ConfigError(f"unknown scan direction: {direction}")


@dataclass(frozen=True)
class ActivityCounts:
    """Per-phase event tallies, summed over every simulated image."""
    fires: int = 0
    output_fires: int = 0
    accumulates: int = 0
    neuron_active: int = 0
    neuron_idle: int = 0
    synapse_active: int = 0
    synapse_passive: int = 0
    delay_stages: int = 0
    cycles: int = 0
    images: int = 0
    neurons: int = 0
    synapses: int = 0
    delay_elements: int = 0

    def __add__(self, other: "ActivityCounts") -> "ActivityCounts":
        shape = ("neurons", "synapses", "delay_elements")
        if self.images and other.images and any(getattr(self, k) != getattr(other, k) for k in shape):
            raise DataError("cannot add activity of different networks")
        base = self if self.images else other
        values = {f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self) if f.name not in shape}
        values.update({k: getattr(base, k) for k in shape})
        return ActivityCounts(**values)

    def validate(self):
        """Nonnegative, and slot counts fit within element-count x cycles."""
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise DataError(f"activity count {f.name} is negative")
        if self.neuron_idle > self.neurons * self.cycles or self.synapse_passive > self.synapses * self.cycles:
            raise DataError("idle/passive slots exceed element count x cycles")
        if self.output_fires > self.fires:
            raise DataError("output fires exceed total fires")

    def is_balanced(self) -> bool:
        return (self.neuron_active + self.neuron_idle == self.neurons * self.cycles
                and self.synapse_active + self.synapse_passive == self.synapses * self.cycles)

    def to_dict(self) -> dict:
        return {f.name: int(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityCounts":
        return cls(**{k: int(v) for k, v in data.items()})


@dataclass(frozen=True)
class SpikeTrace:
    times: np.ndarray
    neurons: np.ndarray
    counts: np.ndarray
    horizon: int
    saturated: bool = False

    @property
    def events(self) -> List[Tuple[int, int]]:
        return list(zip(self.times.tolist(), self.neurons.tolist()))

    def fire_times(self, neuron: int) -> List[int]:
        return self.times[self.neurons == neuron].tolist()


def _delay_groups(net: SNNetwork) -> List[Tuple[int, np.ndarray, np.ndarray]]:
    """Per distinct delay: dense (n, n) summed weights and nonzero-synapse counts."""
    n = net.neuron_count
    groups = []
    for d in np.unique(net.delay):
        sel = net.delay == d
        W = np.zeros((n, n))
        C = np.zeros((n, n), dtype=np.int64)
        np.add.at(W, (net.pre[sel], net.post[sel]), net.weight[sel])
        np.add.at(C, (net.pre[sel], net.post[sel]), (net.weight[sel] != 0).astype(np.int64))
        groups.append((int(d), W, C))
    return groups


def _run(net: SNNetwork, charges: np.ndarray, horizon: int, leak: float, record: bool):
    charges = np.asarray(charges, dtype=np.float64)
    B, steps, width = charges.shape
    if width != len(net.inputs):
        raise DataError(f"schedule feeds {width} inputs, network has {len(net.inputs)}")
    if horizon < steps:
        raise ConfigError(f"horizon {horizon} is shorter than the {steps}-step scan")
    if not 0 <= leak < 1:
        raise ConfigError("leak must lie in [0, 1)")

    n, slots = net.neuron_count, net.max_delay + 1
    inputs = np.array(net.inputs, dtype=np.int64)
    groups = _delay_groups(net)
    out_degree = np.bincount(net.pre, minlength=n).astype(np.float64)
    out_delay = np.bincount(net.pre, weights=net.delay, minlength=n)

    ring = np.zeros((slots, B, n))
    pending = np.zeros((slots, B, n), dtype=np.int64)
    potential = np.zeros((B, n))
    counts = np.zeros((B, n), dtype=np.int64)
    tallies = {k: np.zeros(B, dtype=np.int64) for k in ("accumulates", "neuron_active", "synapse_active", "delay_stages")}
    times, neurons = [], []
    saturated = False

    for t in range(horizon):
        slot = t % slots
        incoming, ring[slot] = ring[slot].copy(), 0.0
        deliveries, pending[slot] = pending[slot].copy(), 0
        if t < steps:
            ext = charges[:, t, :]
            incoming[:, inputs] += ext
            deliveries[:, inputs] += (ext != 0)

        potential = potential * (1.0 - leak) + incoming if leak else potential + incoming
        if np.any(np.abs(potential) > POTENTIAL_LIMIT):
            saturated = True
            potential = np.clip(potential, -POTENTIAL_LIMIT, POTENTIAL_LIMIT)
        fired = potential >= net.thresholds
        potential[fired] = 0.0

        tallies["accumulates"] += deliveries.sum(axis=1)
        tallies["neuron_active"] += ((deliveries > 0) | fired).sum(axis=1)
        counts += fired
        if not fired.any():
            continue
        spikes = fired.astype(np.float64)
        tallies["synapse_active"] += np.rint(spikes @ out_degree).astype(np.int64)
        tallies["delay_stages"] += np.rint(spikes @ out_delay).astype(np.int64)
        spike_counts = fired.astype(np.int64)
        for d, W, C in groups:
            target = (t + d) % slots
            ring[target] += spikes @ W
            pending[target] += spike_counts @ C
        if record:
            ids = np.flatnonzero(fired[0])
            times.extend([t] * ids.size)
            neurons.extend(ids.tolist())

    if saturated:
        logger.warning("Membrane potential saturated", limit=POTENTIAL_LIMIT)

    activity = []
    for b in range(B):
        fires = int(counts[b].sum())
        activity.append(ActivityCounts(
            fires=fires,
            output_fires=int(counts[b, net.output]),
            accumulates=int(tallies["accumulates"][b]),
            neuron_active=int(tallies["neuron_active"][b]),
            neuron_idle=n * horizon - int(tallies["neuron_active"][b]),
            synapse_active=int(tallies["synapse_active"][b]),
            synapse_passive=net.synapse_count * horizon - int(tallies["synapse_active"][b]),
            delay_stages=int(tallies["delay_stages"][b]),
            cycles=horizon,
            images=1,
            neurons=n,
            synapses=net.synapse_count,
            delay_elements=net.delay_elements,
        ))
    trace = None
    if record:
        trace = SpikeTrace(np.array(times, dtype=np.int64), np.array(neurons, dtype=np.int64),
                           counts[0].copy(), horizon, saturated)
    return counts, activity, trace


def simulate(net: SNNetwork, schedule: ScanSchedule, horizon: int = DEFAULT_HORIZON,
             leak: float = 0.0) -> Tuple[SpikeTrace, ActivityCounts]:
    """Run one image; deterministic for identical (network, schedule, horizon)."""
    _, activity, trace = _run(net, schedule.charges[None], horizon, leak, record=True)
    return trace, activity[0]


def simulate_batch(net: SNNetwork, charges: np.ndarray, horizon: int = DEFAULT_HORIZON,
                   leak: float = 0.0) -> Tuple[np.ndarray, List[ActivityCounts]]:
    """
    Run a batch of schedules (B, steps, inputs) without event recording.

    Returns:
        per-image fire counts (B, neurons) and per-image ActivityCounts
    """
    counts, activity, _ = _run(net, charges, horizon, leak, record=False)
    return counts, activity


def total_activity(activity: Sequence[ActivityCounts]) -> ActivityCounts:
    total = ActivityCounts()
    for a in activity:
        total = total + a
    return total


# ==================== Files ====================

def network_dict(net: SNNetwork) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "version": NETWORK_VERSION,
        "neurons": [{"id": i, "threshold": float(t), "role": net.role(i)} for i, t in enumerate(net.thresholds)],
        "synapses": [
            {"pre": int(p), "post": int(q), "weight": float(w), "delay": int(d)}
            for p, q, w, d in zip(net.pre, net.post, net.weight, net.delay)
        ],
        "inputs": list(net.inputs),
        "output": net.output,
    }


def network_from_dict(data: dict) -> SNNetwork:
    if data.get("format") != NETWORK_FORMAT:
        raise DataError("not a spiking network file")
    if data.get("version") != NETWORK_VERSION:
        raise DataError(f"unsupported network version {data.get('version')}")
    neurons = sorted(data["neurons"], key=lambda n: n["id"])
    syn = data["synapses"]
    return SNNetwork(
        thresholds=np.array([float(n["threshold"]) for n in neurons]),
        pre=np.array([s["pre"] for s in syn], dtype=np.int64),
        post=np.array([s["post"] for s in syn], dtype=np.int64),
        weight=np.array([s["weight"] for s in syn], dtype=np.float64),
        delay=np.array([s["delay"] for s in syn], dtype=np.int64),
        inputs=tuple(data["inputs"]),
        output=data["output"],
    )


def save_network(net: SNNetwork, path: str | Path):
    Path(path).write_text(json.dumps(network_dict(net), sort_keys=True, indent=1) + "\n")


def load_network(path: str | Path) -> SNNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read network {path}: {e}") from e
    return network_from_dict(data)


def write_trace_csv(path: str | Path, trace: SpikeTrace):
    with open(path, "w", newline="") as f:
        f.write("# workbench-spike-trace v1\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["time", "neuron"])
        writer.writerows(trace.events)
