"""
Experiment configuration.

One ExperimentConfig holds a section per module. Values are layered:
defaults, then a YAML/JSON file, then ``--set key.path=value`` overrides,
then the ``--seed``/``--workers`` flags. Unknown keys are rejected.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..boltzmann.training import SamplerConfig, TrainConfig
from ..core.config import get_settings
from ..core.errors import ConfigError
from ..energy.accounting import DeviceParams
from ..evolution.cnn import BASELINE, FitConfig
from ..evolution.engine import EvoConfig
from ..sampling.validation import ValidationConfig
from ..spiking.detectors import SNNEvoConfig
from ..spiking.network import DEFAULT_HORIZON, ScanDirection

LONG_RUNNING_EVALUATIONS = 16000


class DataConfig(BaseModel):
    """IDX file locations; relative names resolve against ``dir``."""
    model_config = ConfigDict(extra="forbid")

    dir: Optional[str] = None
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"
    train_size: int = Field(default=6000, ge=1)
    eval_size: int = Field(default=1000, ge=1)
    checksums: Dict[str, str] = Field(default_factory=dict)


class CNNConfig(FitConfig):
    """Fit settings plus the fitness mode used by ``evolve cnn``."""
    fitness: Literal["train", "synthetic"] = "train"
    synthetic_target: List[int] = Field(default_factory=lambda: list(BASELINE.genome()))
    baseline: bool = True


class SNNConfig(SNNEvoConfig):
    digits: List[int] = Field(default_factory=lambda: [0])
    task_size: int = Field(default=200, ge=2)
    eval_size: int = Field(default=1000, ge=1)


class EnergyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    profile: str = "reference"
    network: str = "reference"
    stimulus: Literal["reference", "dataset"] = "reference"
    scan: ScanDirection = "columns"
    images: int = Field(default=10, ge=1)
    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    leak: float = Field(default=0.0, ge=0, lt=1)
    device: DeviceParams = Field(default_factory=DeviceParams)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    workers: int = Field(default_factory=lambda: get_settings().workers, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    evolution: EvoConfig = Field(default_factory=lambda: EvoConfig(population=16, generations=8))
    cnn: CNNConfig = Field(default_factory=CNNConfig)
    snn: SNNConfig = Field(default_factory=SNNConfig)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)

    def flags(self, command: str) -> List[str]:
        if command == "evolve cnn" and self.evolution.budget >= LONG_RUNNING_EVALUATIONS:
            return ["long-running"]
        return []


def read_config_file(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def apply_override(data: Dict[str, Any], assignment: str):
    """Apply one ``a.b.c=value`` override in place; the value is parsed as YAML."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key.path=value: {assignment!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse override value {raw!r}: {e}") from e
    assign(data, key.strip(), value)


def assign(data: Dict[str, Any], key: str, value: Any):
    """Set dotted ``key`` in ``data`` in place, creating sections as needed."""
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{part} is not a section in {key!r}")
        node = child
    node[parts[-1]] = value


def load_config(path: Optional[str | Path] = None, overrides: Sequence[str] = (), seed: Optional[int] = None,
                workers: Optional[int] = None, values: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Layer defaults, the file, ``--set`` overrides, then ``values`` (dotted
    keys taken verbatim, used for command flags that name config fields),
    then ``--seed``/``--workers``.
    """
    data = read_config_file(path) if path else {}
    for assignment in overrides:
        apply_override(data, assignment)
    for key, value in (values or {}).items():
        assign(data, key, value)
    if seed is not None:
        data["seed"] = seed
    if workers is not None:
        data["workers"] = workers
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid configuration: {problems}") from e


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig, args: Optional[Dict[str, Any]] = None) -> str:
    """
    SHA-256 of the canonical JSON; independent of key order in the source
    file. Command inputs that are not config fields (``args``) are hashed
    with the config when present.
    """
    text = canonical_json(cfg)
    if args:
        text += json.dumps(args, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def recorded_args(args: Dict[str, Any]) -> Dict[str, Any]:
    """Command inputs worth recording: unset flags dropped, paths as strings."""
    recorded = {}
    for key, value in sorted(args.items()):
        if value is None or value is False or value == [] or value == "":
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        recorded[key] = value
    return recorded
