"""
RBM and LBM parameter containers.

An LBM is an RBM whose hidden units are additionally coupled along the
edges of a Chimera graph. Couplings are stored once per edge (aligned with
``graph.edges``), so the hidden-hidden interaction is symmetric by
construction.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..core.errors import ConfigError, DataError
from ..core.seeding import make_rng
from ..data.mnist import LABEL_COUNT, VISIBLE_COUNT
from ..sampling.chimera import ChimeraGraph, build, hidden_subgraph
from ..sampling.energy import EnergyModel, sigmoid

CHECKPOINT_FORMAT = "workbench.boltzmann"
CHECKPOINT_VERSION = 1
KINDS = ("rbm", "lbm")


@dataclass(frozen=True)
class RBMModel:
    """Bipartite visible/hidden model."""
    W: np.ndarray
    a: np.ndarray
    b: np.ndarray

    kind = "rbm"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if W.shape != (a.size, b.size):
            raise ConfigError(f"weight shape {W.shape} does not match biases ({a.size}, {b.size})")
        if not all(np.all(np.isfinite(x)) for x in (W, a, b)):
            raise ConfigError("model parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def visible(self) -> int:
        return int(self.a.size)

    @property
    def hidden(self) -> int:
        return int(self.b.size)

    @property
    def hidden_edges(self) -> np.ndarray:
        return np.zeros((0, 2), dtype=np.int64)

    @property
    def hidden_couplings(self) -> np.ndarray:
        return np.zeros(0)

    def hidden_coupling_matrix(self) -> np.ndarray:
        return np.zeros((self.hidden, self.hidden))


@dataclass(frozen=True)
class LBMModel(RBMModel):
    """RBM plus hidden-hidden couplings U on the edges of ``graph``."""
    graph: Optional[ChimeraGraph] = None
    U: Optional[np.ndarray] = None

    kind = "lbm"

    def __post_init__(self):
        super().__post_init__()
        if self.graph is None:
            raise ConfigError("an LBM needs a hidden-layer graph")
        if self.graph.node_count != self.hidden:
            raise ConfigError(f"graph has {self.graph.node_count} nodes for {self.hidden} hidden units")
        U = np.zeros(self.graph.edge_count) if self.U is None else np.asarray(self.U, dtype=np.float64).reshape(-1)
        if U.size != self.graph.edge_count:
            raise ConfigError("one hidden coupling per graph edge is required")
        if not np.all(np.isfinite(U)):
            raise ConfigError("model parameters must be finite")
        object.__setattr__(self, "U", U)

    @property
    def hidden_edges(self) -> np.ndarray:
        return self.graph.edges

    @property
    def hidden_couplings(self) -> np.ndarray:
        return self.U

    def hidden_coupling_matrix(self) -> np.ndarray:
        J = np.zeros((self.hidden, self.hidden))
        u, v = self.graph.edges[:, 0], self.graph.edges[:, 1]
        J[u, v] = self.U
        J[v, u] = self.U
        return J


BoltzmannModel = Union[RBMModel, LBMModel]


def init_model(kind: str, H: int, graph: Optional[ChimeraGraph] = None, scale: float = 0.01,
               seed: int = 0, visible: int = VISIBLE_COUNT) -> BoltzmannModel:
    """
    Fresh model with W (and U) ~ scale * N(0, 1) and zero biases.

    For an LBM the graph may be larger than H; it is restricted to its first
    H nodes. W is drawn before U, so an RBM and an LBM built from the same
    seed share their visible-hidden weights.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind: {kind}")
    if H < 1:
        raise ConfigError("hidden layer needs at least one unit")
    rng = make_rng(seed)
    W = scale * rng.standard_normal((visible, H))
    a, b = np.zeros(visible), np.zeros(H)
    if kind == "rbm":
        if graph is not None:
            raise ConfigError("kind=rbm takes no hidden-layer graph")
        return RBMModel(W, a, b)
    if graph is None:
        raise ConfigError("kind=lbm requires a Chimera graph")
    if graph.node_count < H:
        raise ConfigError(f"graph has {graph.node_count} nodes, fewer than H={H}")
    graph = hidden_subgraph(graph, H)
    U = scale * rng.standard_normal(graph.edge_count)
    return LBMModel(W, a, b, graph=graph, U=U)


def redraw_couplings(model: LBMModel, scale: float, seed: int) -> LBMModel:
    """Replace U with an independent scale * N(0, 1) draw."""
    return replace(model, U=scale * make_rng(seed).standard_normal(model.graph.edge_count))


# ==================== Conditionals ====================

def hidden_conditional(model: BoltzmannModel, v: np.ndarray) -> np.ndarray:
    """sigmoid(b_j + sum_i W_ij v_i) for one visible vector (V,) or a batch (B, V)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.visible:
        raise DataError(f"visible vector has {v.shape[-1]} units, model expects {model.visible}")
    return sigmoid(model.b + v @ model.W)


def visible_conditional(model: BoltzmannModel, h: np.ndarray) -> np.ndarray:
    """sigmoid(a_i + sum_j W_ij h_j) for one hidden state (H,) or a batch (B, H)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != model.hidden:
        raise DataError(f"hidden state has {h.shape[-1]} units, model expects {model.hidden}")
    return sigmoid(model.a + h @ model.W.T)


def as_energy_model(model: BoltzmannModel) -> EnergyModel:
    """
    The joint energy model: visible nodes 0..V-1, hidden nodes V..V+H-1.

    Used as the enumeration oracle for small models.
    """
    V, H = model.visible, model.hidden
    vi, hj = np.meshgrid(np.arange(V), np.arange(H), indexing="ij")
    edges = [np.stack([vi.ravel(), V + hj.ravel()], axis=1)]
    couplings = [model.W.ravel()]
    if model.hidden_edges.size:
        edges.append(V + model.hidden_edges)
        couplings.append(model.hidden_couplings)
    return EnergyModel(np.concatenate([model.a, model.b]), np.concatenate(edges), np.concatenate(couplings))


# ==================== Checkpoints ====================

def _graph_spec(model: BoltzmannModel) -> Optional[dict]:
    return model.graph.to_spec() if isinstance(model, LBMModel) else None


def checkpoint_dict(model: BoltzmannModel, config_hash: str = "", seed: int = 0) -> dict:
    params = {"W": model.W.ravel().tolist(), "a": model.a.tolist(), "b": model.b.tolist()}
    if isinstance(model, LBMModel):
        params["U"] = model.U.tolist()
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "visible": model.visible,
        "hidden": model.hidden,
        "labels": LABEL_COUNT,
        "graph": _graph_spec(model),
        "config_hash": config_hash,
        "seed": seed,
        "parameters": params,
    }


def dumps_checkpoint(model: BoltzmannModel, config_hash: str = "", seed: int = 0) -> str:
    return json.dumps(checkpoint_dict(model, config_hash, seed), sort_keys=True, separators=(",", ":")) + "\n"


def save_checkpoint(model: BoltzmannModel, path: str | Path, config_hash: str = "", seed: int = 0):
    """Write atomically so an interrupted run keeps its previous checkpoint."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_checkpoint(model, config_hash, seed))
    tmp.replace(path)


def loads_checkpoint(text: str) -> tuple[BoltzmannModel, dict]:
    data = json.loads(text)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise DataError("not a Boltzmann checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {data.get('version')}")
    V, H = data["visible"], data["hidden"]
    p = data["parameters"]
    W = np.array(p["W"], dtype=np.float64).reshape(V, H)
    if data["kind"] == "rbm":
        model = RBMModel(W, p["a"], p["b"])
    else:
        spec = data["graph"]
        graph = hidden_subgraph(build(spec["rows"], spec["cols"]), spec["hidden"])
        model = LBMModel(W, p["a"], p["b"], graph=graph, U=p["U"])
    meta = {k: data[k] for k in ("config_hash", "seed")}
    return model, meta


def load_checkpoint(path: str | Path) -> tuple[BoltzmannModel, dict]:
    return loads_checkpoint(Path(path).read_text())
