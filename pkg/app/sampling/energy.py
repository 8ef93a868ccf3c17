"""
Energy models over binary {0,1} states.

    E(s) = -sum_i b_i s_i - sum_{(i,j) in edges} w_ij s_i s_j

Couplings are stored once per unordered pair, aligned with ``edges``.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..core.errors import SamplerError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function without overflow warnings."""
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class EnergyModel:
    """Biases per node and couplings per declared edge."""
    biases: np.ndarray
    edges: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        couplings = np.asarray(self.couplings, dtype=np.float64).reshape(-1)
        n = biases.shape[0]
        if couplings.shape[0] != edges.shape[0]:
            raise SamplerError("one coupling per edge is required")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise SamplerError("edge references a node outside the model")
        if edges.size and np.any(edges[:, 0] == edges[:, 1]):
            raise SamplerError("self-loops are not allowed")
        if not (np.all(np.isfinite(biases)) and np.all(np.isfinite(couplings))):
            raise SamplerError("model parameters must be finite")
        for arr in (biases, edges, couplings):
            arr.setflags(write=False)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "couplings", couplings)

    @property
    def node_count(self) -> int:
        return int(self.biases.shape[0])

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric coupling matrix with zero diagonal."""
        J = np.zeros((self.node_count, self.node_count))
        if self.edges.size:
            np.add.at(J, (self.edges[:, 0], self.edges[:, 1]), self.couplings)
            np.add.at(J, (self.edges[:, 1], self.edges[:, 0]), self.couplings)
        return J

    def energy(self, states: np.ndarray) -> np.ndarray:
        """Energy of one state (N,) or a batch (K, N)."""
        s = np.asarray(states, dtype=np.float64)
        single = s.ndim == 1
        s = np.atleast_2d(s)
        e = -s @ self.biases
        if self.edges.size:
            e -= (s[:, self.edges[:, 0]] * s[:, self.edges[:, 1]]) @ self.couplings
        return e[0] if single else e


@dataclass(frozen=True)
class ClampSet:
    """
    Nodes held fixed while the rest are sampled.

    Values are 0/1 or reals in [0, 1]. With ``bernoulli=False`` a real value
    enters the free nodes' fields directly (mean-field clamping); with
    ``bernoulli=True`` each chain draws a binary value once at initialisation
    and holds it for the whole run.
    """
    values: Dict[int, float] = field(default_factory=dict)
    bernoulli: bool = False

    def __post_init__(self):
        clean = {int(k): float(v) for k, v in dict(self.values).items()}
        for node, value in clean.items():
            if not 0.0 <= value <= 1.0:
                raise SamplerError(f"clamp value for node {node} outside [0, 1]: {value}")
        object.__setattr__(self, "values", clean)

    @classmethod
    def from_vector(cls, nodes, values, bernoulli: bool = False) -> "ClampSet":
        return cls(dict(zip((int(n) for n in nodes), (float(v) for v in values))), bernoulli)

    def validate(self, model: EnergyModel):
        bad = [n for n in self.values if not 0 <= n < model.node_count]
        if bad:
            raise SamplerError(f"clamped nodes not in model: {bad}")

    def free_nodes(self, model: EnergyModel) -> np.ndarray:
        self.validate(model)
        return np.array([i for i in range(model.node_count) if i not in self.values], dtype=np.int64)

    def clamped_nodes(self) -> np.ndarray:
        return np.array(sorted(self.values), dtype=np.int64)


def reduce_model(model: EnergyModel, clamps: ClampSet, clamp_rows: np.ndarray | None = None
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fold clamped nodes into the free nodes' biases.

    Args:
        model: full energy model
        clamps: clamp set (validated against the model)
        clamp_rows: optional (C, n_clamped) per-chain clamp values overriding
            ``clamps.values`` (used for Bernoulli-resolved clamps)

    Returns:
        (free node ids, effective biases (C, F) or (1, F), free-free coupling matrix (F, F))
    """
    free = clamps.free_nodes(model)
    clamped = clamps.clamped_nodes()
    J = model.coupling_matrix()
    if clamp_rows is None:
        clamp_rows = np.array([[clamps.values[n] for n in clamped]], dtype=np.float64)
    if clamped.size:
        bias = model.biases[free][None, :] + clamp_rows @ J[np.ix_(clamped, free)]
    else:
        bias = model.biases[free][None, :].copy()
    return free, bias, J[np.ix_(free, free)]


def to_ising(model: EnergyModel) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Affine map to the +/-1 spin convention.

    With s = (sigma + 1) / 2, the returned (h, J, offset) satisfy

        E(s) = -sum_i h_i sigma_i - sum_edges J_ij sigma_i sigma_j + offset

    where J is aligned with ``model.edges``.
    """
    h = model.biases / 2.0
    if model.edges.size:
        np.add.at(h, model.edges[:, 0], model.couplings / 4.0)
        np.add.at(h, model.edges[:, 1], model.couplings / 4.0)
    J = model.couplings / 4.0
    offset = -model.biases.sum() / 2.0 - model.couplings.sum() / 4.0
    return h, J, float(offset)
