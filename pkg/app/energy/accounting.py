"""
Energy Accounting - per-phase energy ledger for a memristive realisation
of a spiking network.

Energy is a linear combination of activity counts and per-phase energies.
Average power is the per-image energy times the clock frequency. The
shipped reference profile is calibrated so that the reference network on
the reference stimulus spends 18.26 nJ per image in total and 5.24 nJ in
the core analog logic (everything but the delay chains).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import CalibrationError, ConfigError, DataError
from ..core.logging import get_logger
from ..core.seeding import make_rng
from ..data.mnist import IMAGE_SIDE
from ..spiking.network import (
    DEFAULT_HORIZON,
    ActivityCounts,
    SNNetwork,
    scan_charges,
    simulate_batch,
    total_activity,
)

logger = get_logger(__name__)

PROFILE_FORMAT = "workbench.energy-profile"
PROFILE_VERSION = 1
REPORT_FORMAT = "workbench.energy-report"

# phase -> ActivityCounts field it multiplies
PHASE_COUNTS = {
    "neuron_fire": "fires",
    "neuron_accumulate": "accumulates",
    "neuron_idle": "neuron_idle",
    "synapse_active": "synapse_active",
    "synapse_passive": "synapse_passive",
    "delay_stage": "delay_stages",
}
CORE_PHASES = ("neuron_fire", "neuron_accumulate", "neuron_idle", "synapse_active", "synapse_passive")

REFERENCE_NEURONS = 128
REFERENCE_SYNAPSES = 357
REFERENCE_TOTAL = 18.26e-9
REFERENCE_CORE = 5.24e-9
REFERENCE_IMAGES = 10
REFERENCE_SEED = 2017


class DeviceParams(BaseModel):
    """Memristor and clock parameters; HRS is derived from LRS and the on/off ratio."""
    model_config = ConfigDict(extra="forbid")

    lrs_ohm: float = Field(default=60e3, gt=0)
    on_off_ratio: float = Field(default=10.0, gt=0)
    clock_hz: float = Field(default=16.67e6, gt=0)

    @property
    def hrs_ohm(self) -> float:
        return self.lrs_ohm * self.on_off_ratio


class PhaseEnergies(BaseModel):
    """Joules per event (fire, accumulate, synapse_active), per cycle (idle, passive) or per spike-stage (delay)."""
    model_config = ConfigDict(extra="forbid")

    neuron_fire: float = Field(default=0.0, ge=0)
    neuron_accumulate: float = Field(default=0.0, ge=0)
    neuron_idle: float = Field(default=0.0, ge=0)
    synapse_active: float = Field(default=0.0, ge=0)
    synapse_passive: float = Field(default=0.0, ge=0)
    delay_stage: float = Field(default=0.0, ge=0)


@dataclass
class EnergyReport:
    total: float
    core: float
    per_image: float
    average_power: float
    breakdown: Dict[str, float]
    images: int
    energy_per_spike: Optional[float]
    energy_per_output_spike: Optional[float]
    elements: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": 1,
            "total_j": self.total,
            "core_j": self.core,
            "per_image_j": self.per_image,
            "average_power_w": self.average_power,
            "breakdown_j": self.breakdown,
            "images": self.images,
            "energy_per_spike_j": self.energy_per_spike,
            "energy_per_output_spike_j": self.energy_per_output_spike,
            "elements": self.elements,
        }

    def table(self) -> str:
        rows = [(name, value) for name, value in self.breakdown.items()]
        rows += [("total", self.total), ("core analog", self.core), ("per image", self.per_image)]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {value * 1e9:14.6f} nJ" for name, value in rows]
        lines.append(f"{'average power':<{width}}  {self.average_power * 1e3:14.6f} mW")
        if self.energy_per_spike is not None:
            lines.append(f"{'per spike':<{width}}  {self.energy_per_spike * 1e9:14.6f} nJ")
        lines.append(f"{'elements':<{width}}  " + ", ".join(f"{k}={v}" for k, v in self.elements.items()))
        return "\n".join(lines)


def power_from_energy(e_per_image: float, clock: float) -> float:
    """Average power (W) = energy per image (J) x clock frequency (Hz)."""
    if e_per_image < 0 or clock < 0:
        raise ConfigError("energy and clock must be nonnegative")
    return e_per_image * clock


def _terms(activity: ActivityCounts, phases: PhaseEnergies) -> Dict[str, float]:
    return {phase: getattr(activity, count) * getattr(phases, phase) for phase, count in PHASE_COUNTS.items()}


def account(activity: ActivityCounts, phases: PhaseEnergies, device: Optional[DeviceParams] = None) -> EnergyReport:
    """
    Energy ledger for ``activity`` (summed over ``activity.images`` images).

    Returns:
        EnergyReport whose breakdown sums to ``total``; ``core`` excludes the
        delay-chain term; average power uses the per-image energy
    """
    device = device or DeviceParams()
    activity.validate()
    breakdown = _terms(activity, phases)
    total = math.fsum(breakdown.values())
    core = math.fsum(breakdown[p] for p in CORE_PHASES)
    images = max(1, activity.images)
    per_image = total / images
    return EnergyReport(
        total=total,
        core=core,
        per_image=per_image,
        average_power=power_from_energy(per_image, device.clock_hz),
        breakdown=breakdown,
        images=activity.images,
        energy_per_spike=total / activity.fires if activity.fires else None,
        energy_per_output_spike=total / activity.output_fires if activity.output_fires else None,
        elements={"neurons": activity.neurons, "synapses": activity.synapses,
                  "delay_elements": activity.delay_elements},
    )


def calibrate(target_total: float, activity: ActivityCounts, free_phase: str,
              fixed: PhaseEnergies | Mapping[str, float] | None = None) -> PhaseEnergies:
    """
    Solve for the one free per-phase energy so that account() reproduces
    ``target_total`` exactly; the other phases keep their ``fixed`` values.
    """
    if free_phase not in PHASE_COUNTS:
        raise CalibrationError(f"unknown phase: {free_phase}")
    if fixed is None:
        values = {}
    elif isinstance(fixed, PhaseEnergies):
        values = fixed.model_dump()
    else:
        values = dict(fixed)
    values[free_phase] = 0.0
    base = PhaseEnergies(**values)
    count = getattr(activity, PHASE_COUNTS[free_phase])
    if count == 0:
        raise CalibrationError(f"activity has no {PHASE_COUNTS[free_phase]} to calibrate {free_phase} against")
    solution = (target_total - account(activity, base).total) / count
    if solution < 0:
        raise CalibrationError(f"{free_phase} would need negative energy {solution:.3e} J")
    values[free_phase] = solution
    return PhaseEnergies(**values)


# ==================== Profiles ====================

def save_profile(path: str | Path, phases: PhaseEnergies, device: DeviceParams, reference: Optional[dict] = None):
    payload = {
        "format": PROFILE_FORMAT,
        "version": PROFILE_VERSION,
        "device": device.model_dump(),
        "phases": phases.model_dump(),
        "reference": reference,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_profile(path: str | Path) -> Tuple[PhaseEnergies, DeviceParams]:
    """Load a profile file; the name ``reference`` selects the built-in calibrated profile."""
    if str(path) == "reference":
        phases, device, _ = reference_profile()
        return phases, device
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"energy profile not found: {path}")
    data = json.loads(path.read_text())
    if data.get("format") != PROFILE_FORMAT:
        raise DataError(f"{path} is not an energy profile")
    if data.get("version") != PROFILE_VERSION:
        raise DataError(f"unsupported profile version {data.get('version')}")
    return PhaseEnergies(**data["phases"]), DeviceParams(**data["device"])


# ==================== Reference ====================

def reference_network() -> SNNetwork:
    """
    128 neurons (28 inputs, 99 hidden, 1 output) and 357 synapses. Every
    input drives one hidden neuron; the remaining synapses are random
    distinct pairs.
    """
    rng = make_rng(REFERENCE_SEED)
    n, inputs = REFERENCE_NEURONS, IMAGE_SIDE
    pre = list(range(inputs))
    post = [inputs + i % (n - inputs - 1) for i in range(inputs)]
    taken = set(zip(pre, post))
    while len(pre) < REFERENCE_SYNAPSES:
        p, q = (int(v) for v in rng.integers(0, n, size=2))
        if p != q and (p, q) not in taken:
            taken.add((p, q))
            pre.append(p)
            post.append(q)
    count = len(pre)
    return SNNetwork(
        thresholds=rng.uniform(0.5, 4.0, size=n),
        pre=np.array(pre),
        post=np.array(post),
        weight=rng.standard_normal(count),
        delay=rng.integers(1, 9, size=count),
        inputs=tuple(range(inputs)),
        output=n - 1,
    )


def reference_stimulus() -> np.ndarray:
    """Ten synthetic (784,) images: a bright vertical bar at column 4+k and a horizontal bar at row 6+k."""
    images = np.zeros((REFERENCE_IMAGES, IMAGE_SIDE, IMAGE_SIDE))
    for k in range(REFERENCE_IMAGES):
        images[k, 4:24, 4 + k:11 + k] = 1.0
        images[k, 6 + k, 2:26] = 0.5
    return images.reshape(REFERENCE_IMAGES, -1)


NOMINAL_PHASES = PhaseEnergies(
    neuron_accumulate=10e-15,
    neuron_idle=1e-15,
    synapse_active=10e-15,
    synapse_passive=1e-15,
)


def reference_activity(horizon: int = DEFAULT_HORIZON) -> ActivityCounts:
    _, activity = simulate_batch(reference_network(), scan_charges(reference_stimulus()), horizon)
    return total_activity(activity)


def reference_profile() -> Tuple[PhaseEnergies, DeviceParams, dict]:
    """
    Calibrated profile: nominal accumulate/idle/synapse energies, neuron_fire
    solved so the core spends 5.24 nJ per image, delay_stage solved so the
    total is 18.26 nJ per image, both on the reference activity.
    """
    activity = reference_activity()
    images = activity.images
    phases = calibrate(REFERENCE_CORE * images, activity, "neuron_fire", NOMINAL_PHASES)
    phases = calibrate(REFERENCE_TOTAL * images, activity, "delay_stage", phases)
    reference = {"activity": activity.to_dict(), "per_image_total_j": REFERENCE_TOTAL,
                 "per_image_core_j": REFERENCE_CORE}
    return phases, DeviceParams(), reference
