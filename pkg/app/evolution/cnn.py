"""
Compact CNN - LeNet-shaped network trained with plain SGD in numpy.

conv1 -> ReLU -> maxpool 2x2 -> conv2 -> ReLU -> maxpool 2x2 -> fc (ReLU)
-> linear(10) -> softmax. Convolutions are valid-mode; pooling has stride
2 and drops an odd trailing row/column.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, TypedDict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import ArchitectureError, DataError
from ..core.logging import get_logger
from ..core.seeding import derive_seed, make_rng
from ..data.mnist import IMAGE_SIDE, LABEL_COUNT, Dataset
from .engine import GeneSpec

logger = get_logger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
CHECKPOINT_FORMAT = "workbench.cnn"
GRADIENT_STEP = 1e-5
GRADIENT_FLOOR = 1e-3

GENE_SPECS = (
    GeneSpec("c1_kernel", 1, 14),
    GeneSpec("c1_maps", 2, 64),
    GeneSpec("c2_kernel", 1, 14),
    GeneSpec("c2_maps", 2, 64),
    GeneSpec("fc_units", 16, 512),
)


@dataclass(frozen=True)
class LeNetHyper:
    c1_kernel: int
    c1_maps: int
    c2_kernel: int
    c2_maps: int
    fc_units: int

    @classmethod
    def from_genome(cls, genome: Sequence[int]) -> "LeNetHyper":
        return cls(*(int(g) for g in genome))

    def genome(self) -> Tuple[int, ...]:
        return (self.c1_kernel, self.c1_maps, self.c2_kernel, self.c2_maps, self.fc_units)

    def shapes(self, side: int = IMAGE_SIDE) -> Dict[str, int]:
        """Spatial sizes per stage; raises ArchitectureError naming the stage that underflows."""
        for name in ("c1_kernel", "c1_maps", "c2_kernel", "c2_maps", "fc_units"):
            if getattr(self, name) < 1:
                raise ArchitectureError(f"{name} must be positive", stage=name)
        conv1 = side - self.c1_kernel + 1
        if conv1 < 1:
            raise ArchitectureError(f"conv1 output {conv1}x{conv1}", stage="conv1")
        pool1 = conv1 // 2
        if pool1 < 1:
            raise ArchitectureError(f"pooled dimension underflow after conv1 ({conv1}x{conv1})", stage="pool1")
        conv2 = pool1 - self.c2_kernel + 1
        if conv2 < 1:
            raise ArchitectureError(f"conv2 output {conv2}x{conv2}", stage="conv2")
        pool2 = conv2 // 2
        if pool2 < 1:
            raise ArchitectureError(f"pooled dimension underflow after conv2 ({conv2}x{conv2})", stage="pool2")
        return {"conv1": conv1, "pool1": pool1, "conv2": conv2, "pool2": pool2,
                "flat": self.c2_maps * pool2 * pool2}


BASELINE = LeNetHyper(5, 20, 5, 50, 500)


@dataclass
class CNNModel:
    hyper: LeNetHyper
    params: Dict[str, np.ndarray]

    def copy(self) -> "CNNModel":
        return CNNModel(self.hyper, {k: v.copy() for k, v in self.params.items()})

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


class FitConfig(BaseModel):
    """SGD settings for one fitness evaluation."""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=5, ge=0)
    learning_rate: float = Field(default=0.01, gt=0)
    batch_size: int = Field(default=10, ge=1)
    train_size: int = Field(default=2000, ge=1)
    eval_size: int = Field(default=1000, ge=1)
    seed: int = 0


class FitHistory(TypedDict):
    epoch: int
    loss: float
    accuracy: float


def build(h: LeNetHyper, seed: int = 0) -> CNNModel:
    """He-style init (N(0, 2/fan_in)), zero biases."""
    s = h.shapes()
    rng = make_rng(seed)

    def normal(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    params = {
        "W1": normal((h.c1_maps, 1, h.c1_kernel, h.c1_kernel), h.c1_kernel ** 2),
        "b1": np.zeros(h.c1_maps),
        "W2": normal((h.c2_maps, h.c1_maps, h.c2_kernel, h.c2_kernel), h.c1_maps * h.c2_kernel ** 2),
        "b2": np.zeros(h.c2_maps),
        "W3": normal((s["flat"], h.fc_units), s["flat"]),
        "b3": np.zeros(h.fc_units),
        "W4": normal((h.fc_units, LABEL_COUNT), h.fc_units),
        "b4": np.zeros(LABEL_COUNT),
    }
    return CNNModel(h, params)


# ==================== Layers ====================

def _conv_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    k = W.shape[-1]
    windows = sliding_window_view(x, (k, k), axis=(2, 3))  # (N, C, Ho, Wo, k, k)
    out = np.tensordot(windows, W, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, M)
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None], windows


def _conv_backward(dout: np.ndarray, windows: np.ndarray, W: np.ndarray) -> Tuple[np.ndarray, ...]:
    k = W.shape[-1]
    dW = np.tensordot(dout, windows, axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3))
    padded = np.pad(dout, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    full = sliding_window_view(padded, (k, k), axis=(2, 3))  # (N, M, H, W, k, k)
    dx = np.tensordot(full, W[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3]))  # (N, H, W, C)
    return dx.transpose(0, 3, 1, 2), dW, db


def _pool_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    N, C, H, W = x.shape
    ph, pw = H // 2, W // 2
    blocks = x[:, :, :2 * ph, :2 * pw].reshape(N, C, ph, 2, pw, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(N, C, ph, pw, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(dout: np.ndarray, arg: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    N, C, H, W = shape
    ph, pw = dout.shape[2], dout.shape[3]
    blocks = np.zeros((N, C, ph, pw, 4))
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(N, C, ph, pw, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(N, C, 2 * ph, 2 * pw)
    dx = np.zeros(shape)
    dx[:, :, :2 * ph, :2 * pw] = blocks
    return dx


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_images(images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == IMAGE_SIDE * IMAGE_SIDE:
        x = x.reshape(-1, IMAGE_SIDE, IMAGE_SIDE)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise DataError(f"expected (n, 28, 28) or (n, 784) images, got shape {np.shape(images)}")
    return x[:, None, :, :]


def _forward(model: CNNModel, images: np.ndarray) -> Tuple[np.ndarray, dict]:
    p = model.params
    x = _as_images(images)
    side = x.shape[-1]
    if x.shape[-2] != side or model.hyper.shapes(side)["flat"] != p["W3"].shape[0]:
        raise DataError(f"input of {x.shape[-2]}x{side} does not fit the model")
    z1, win1 = _conv_forward(x, p["W1"], p["b1"])
    a1 = np.maximum(z1, 0)
    p1, arg1 = _pool_forward(a1)
    z2, win2 = _conv_forward(p1, p["W2"], p["b2"])
    a2 = np.maximum(z2, 0)
    p2, arg2 = _pool_forward(a2)
    flat = p2.reshape(p2.shape[0], -1)
    z3 = flat @ p["W3"] + p["b3"]
    a3 = np.maximum(z3, 0)
    logits = a3 @ p["W4"] + p["b4"]
    cache = {"win1": win1, "z1": z1, "arg1": arg1, "a1_shape": a1.shape, "win2": win2, "z2": z2,
             "arg2": arg2, "a2_shape": a2.shape, "p2_shape": p2.shape, "flat": flat, "z3": z3, "a3": a3}
    return logits, cache


def forward(model: CNNModel, images: np.ndarray) -> np.ndarray:
    """Class probabilities (n, 10) for (n, 28, 28) or (n, 784) images."""
    logits, _ = _forward(model, images)
    return _softmax(logits)


def loss_and_grads(model: CNNModel, images: np.ndarray, labels: np.ndarray
                   ) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean softmax cross-entropy over the batch and its gradient for every parameter."""
    p = model.params
    labels = np.asarray(labels, dtype=np.int64)
    logits, c = _forward(model, images)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    g = {"W4": c["a3"].T @ dlogits, "b4": dlogits.sum(axis=0)}
    dz3 = (dlogits @ p["W4"].T) * (c["z3"] > 0)
    g["W3"], g["b3"] = c["flat"].T @ dz3, dz3.sum(axis=0)
    dp2 = (dz3 @ p["W3"].T).reshape(c["p2_shape"])
    dz2 = _pool_backward(dp2, c["arg2"], c["a2_shape"]) * (c["z2"] > 0)
    dp1, g["W2"], g["b2"] = _conv_backward(dz2, c["win2"], p["W2"])
    dz1 = _pool_backward(dp1, c["arg1"], c["a1_shape"]) * (c["z1"] > 0)
    _, g["W1"], g["b1"] = _conv_backward(dz1, c["win1"], p["W1"])
    return loss, g


def predict(model: CNNModel, images: np.ndarray, chunk: int = 500) -> np.ndarray:
    images = np.asarray(images)
    out = [np.argmax(forward(model, images[i:i + chunk]), axis=1) for i in range(0, len(images), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


# ==================== Training ====================

def fit(model: CNNModel, ds_train: Dataset, cfg: FitConfig, ds_eval: Optional[Dataset] = None
        ) -> Tuple[CNNModel, List[FitHistory]]:
    """SGD on softmax cross-entropy; the model is updated in place and returned."""
    history: List[FitHistory] = []
    for epoch in range(1, cfg.epochs + 1):
        order = make_rng(derive_seed(cfg.seed, "cnn-shuffle", epoch)).permutation(len(ds_train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, ds_train.images[idx], ds_train.labels[idx])
            for name in PARAM_NAMES:
                model.params[name] -= cfg.learning_rate * grads[name]
            losses.append(loss)
        acc = score(model, ds_eval) if ds_eval is not None else float("nan")
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": acc})
        logger.debug("CNN epoch complete", epoch=epoch, loss=history[-1]["loss"], accuracy=acc)
    return model, history


def score(model: CNNModel, ds: Dataset) -> float:
    return float(np.mean(predict(model, ds.images) == ds.labels))


def train_and_score(h: LeNetHyper, cfg: FitConfig, data: Tuple[Dataset, Dataset]) -> float:
    """
    Build, train and evaluate one architecture.

    Args:
        h: architecture genes
        cfg: SGD settings (the seed drives init and shuffling)
        data: (train, eval) datasets

    Returns:
        held-out accuracy in [0, 1]; 0.0 when the architecture cannot be built
    """
    ds_train, ds_eval = data
    try:
        model = build(h, derive_seed(cfg.seed, "cnn-init"))
    except ArchitectureError as e:
        logger.warning("Architecture rejected", genome=list(h.genome()), stage=e.stage, error=str(e))
        return 0.0
    model, _ = fit(model, ds_train, cfg)
    return score(model, ds_eval)


# ==================== Gradient check ====================

def _activation_pattern(model: CNNModel, images: np.ndarray) -> Tuple[np.ndarray, ...]:
    _, c = _forward(model, images)
    return (c["z1"] > 0, c["arg1"], c["z2"] > 0, c["arg2"], c["z3"] > 0)


def _same_pattern(a: Tuple[np.ndarray, ...], b: Tuple[np.ndarray, ...]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(model: CNNModel, images: np.ndarray, labels: np.ndarray, tolerance: float = 1e-4,
                   samples: int = 200, seed: int = 0, layers: Optional[Sequence[str]] = None,
                   step: float = GRADIENT_STEP) -> float:
    """
    Max relative error between analytic gradients and central differences.

    Parameters are sampled uniformly across ``layers`` (all by default).
    Relative error is |a - n| / max(|a|, |n|, 1e-3). A parameter is skipped
    when its +/- step changes a ReLU on/off pattern or a pooling winner
    (the difference quotient straddles a kink). Exceeding ``tolerance`` is
    logged; the value is returned either way.
    """
    names = list(layers or PARAM_NAMES)
    _, grads = loss_and_grads(model, images, labels)
    rng = make_rng(seed)
    sizes = np.array([model.params[n].size for n in names])
    picks = rng.integers(0, sizes.sum(), size=samples)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, checked, skipped = 0.0, 0, 0

    for flat in picks:
        layer = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, index = names[layer], int(flat - offsets[layer])
        param = model.params[name].reshape(-1)
        original = param[index]
        param[index] = original + step
        loss_plus, _ = loss_and_grads(model, images, labels)
        pattern_plus = _activation_pattern(model, images)
        param[index] = original - step
        loss_minus, _ = loss_and_grads(model, images, labels)
        pattern_minus = _activation_pattern(model, images)
        param[index] = original
        if not _same_pattern(pattern_plus, pattern_minus):
            skipped += 1
            continue
        numeric = (loss_plus - loss_minus) / (2 * step)
        analytic = grads[name].reshape(-1)[index]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRADIENT_FLOOR)
        worst = max(worst, err)
        checked += 1

    if worst > tolerance:
        logger.warning("Gradient check above tolerance", max_relative_error=worst, tolerance=tolerance)
    logger.debug("Gradient check", checked=checked, skipped=skipped, max_relative_error=worst)
    return worst


# ==================== Artifacts ====================

def dumps_model(model: CNNModel) -> str:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "hyper": list(model.hyper.genome()),
        "parameters": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in model.params.items()},
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: CNNModel, path: str | Path):
    Path(path).write_text(dumps_model(model))


def load_model(path: str | Path) -> CNNModel:
    data = json.loads(Path(path).read_text())
    if data.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a CNN checkpoint")
    params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in data["parameters"].items()}
    return CNNModel(LeNetHyper.from_genome(data["hyper"]), params)


def write_fit_csv(path: str | Path, history: List[FitHistory]):
    with open(path, "w", newline="") as f:
        f.write("# workbench-cnn-fit v1\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "loss", "accuracy"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['loss']:.6f}", f"{row['accuracy']:.6f}"])
