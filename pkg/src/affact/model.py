"""Attribute classifiers: losses, a small reference network, training, ensembles.

Targets are signed labels in {-1, +1}. Both losses lead to the same decision
rule downstream: an attribute is present when its score is above 0.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .raster import rescale, to_gray

log = logging.getLogger(__name__)

LOSSES = ("euclidean", "sigmoid-xent")
CHECKPOINT_MAGIC = b"AFFACTNN"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


def _check_pair(scores, target) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if scores.shape != target.shape:
        raise ValueError(f"score/target shape mismatch: {scores.shape} vs {target.shape}")
    return scores, target


def euclidean_loss(scores, target) -> tuple[float, np.ndarray]:
    """0.5 * sum (s - t)^2 and its gradient; targets are +-1."""
    scores, target = _check_pair(scores, target)
    diff = scores - target
    return 0.5 * float(np.sum(diff * diff)), diff


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def sigmoid_xent_loss(logits, target) -> tuple[float, np.ndarray]:
    """Sigmoid cross-entropy against {0, 1} targets derived from +-1 labels."""
    z, target = _check_pair(logits, target)
    t = 0.5 * (target + 1.0)
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(np.sum(loss)), sigmoid(z) - t


LOSS_FUNCTIONS: dict[str, Callable] = {"euclidean": euclidean_loss, "sigmoid-xent": sigmoid_xent_loss}


class Classifier(Protocol):
    n_attributes: int

    def predict(self, images) -> np.ndarray:
        """Scores of shape (N, A) for images of shape (N, H, W, C)."""


class ReferenceNet:
    """Grayscale 32x32 input, one tanh hidden layer, linear attribute scores.

    Inputs larger than 32x32 are block-averaged when the size is a multiple of
    32 (224 -> 32 uses 7x7 blocks) and bilinearly rescaled otherwise.
    """

    def __init__(self, n_attributes: int, hidden: int = 64, input_size: int = 32, seed: int = 0):
        self.n_attributes = int(n_attributes)
        self.hidden = int(hidden)
        self.input_size = int(input_size)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
        n_in = self.input_size ** 2
        self.params = {
            "w1": rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, self.hidden)),
            "b1": np.zeros(self.hidden),
            "w2": rng.normal(0.0, 1.0 / math.sqrt(self.hidden), (self.hidden, self.n_attributes)),
            "b2": np.zeros(self.n_attributes),
        }

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.input_size ** 2, self.hidden, self.n_attributes

    def copy(self) -> "ReferenceNet":
        other = ReferenceNet.__new__(ReferenceNet)
        other.n_attributes, other.hidden, other.input_size = self.n_attributes, self.hidden, self.input_size
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def features(self, images) -> np.ndarray:
        """Flattened, centered grayscale inputs of shape (N, input_size**2)."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        n, h, w, c = images.shape
        gray = images if c == 1 else (images @ np.array([0.299, 0.587, 0.114]))[..., None]
        s = self.input_size
        if (h, w) != (s, s):
            if h % s == 0 and w % s == 0:
                gray = gray.reshape(n, s, h // s, s, w // s).mean(axis=(2, 4))
            else:
                gray = np.stack([rescale(to_gray(g), s, s) for g in gray])
        return 2.0 * gray.reshape(n, s * s) - 1.0

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        h = np.tanh(x @ p["w1"] + p["b1"])
        return h, h @ p["w2"] + p["b2"]

    def backward(self, x: np.ndarray, h: np.ndarray, grad_out: np.ndarray) -> dict:
        p = self.params
        grad_h = (grad_out @ p["w2"].T) * (1.0 - h * h)
        return {
            "w1": x.T @ grad_h,
            "b1": grad_h.sum(axis=0),
            "w2": h.T @ grad_out,
            "b2": grad_out.sum(axis=0),
        }

    def predict(self, images) -> np.ndarray:
        return self.forward(self.features(images))[1]


class Ensemble:
    """Averages member scores; members are evaluated in parallel."""

    def __init__(self, members: Sequence[Classifier], workers: int = 1):
        if not members:
            raise ValueError("an ensemble needs at least one member")
        sizes = {m.n_attributes for m in members}
        if len(sizes) != 1:
            raise ValueError(f"members disagree on the attribute count: {sorted(sizes)}")
        self.members = list(members)
        self.n_attributes = sizes.pop()
        self.workers = workers

    def predict(self, images) -> np.ndarray:
        return ensemble_scores(self.members, images, self.workers)


def ensemble_scores(models: Sequence[Classifier], images, workers: int = 1) -> np.ndarray:
    if not models:
        raise ValueError("an ensemble needs at least one member")
    if workers > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda m: m.predict(images), models))
    else:
        scores = [m.predict(images) for m in models]
    return np.mean(np.stack(scores), axis=0)


def predict_batched(model: Classifier, images, batch_size: int = 256) -> np.ndarray:
    """Predict in fixed-size chunks so results never depend on the caller's grouping."""
    images = np.asarray(images)
    out = [model.predict(images[i:i + batch_size]) for i in range(0, len(images), batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.n_attributes))


# -- optimization ----------------------------------------------------------


@dataclass
class TrainPlan:
    loss: str = "sigmoid-xent"
    learning_rate: float = 1e-3
    decay_factor: float = 0.1
    patience: int = 5
    max_drops: int = 2
    batch_size: int = 64
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    max_epochs: int = 30
    eval_every: int = 0  # iterations between validations; 0 = once per epoch

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        if self.patience < 1 or self.max_drops < 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("patience, batch_size must be >= 1; max_drops, max_epochs >= 0")


class RMSProp:
    def __init__(self, params: dict, learning_rate: float, decay: float = 0.9, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.cache = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            c = self.cache[k]
            c *= self.decay
            c += (1.0 - self.decay) * g * g
            params[k] -= self.learning_rate * g / (np.sqrt(c) + self.epsilon)


@dataclass
class CurvePoint:
    epoch: int
    iteration: int
    learning_rate: float
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: ReferenceNet
    curve: list = field(default_factory=list)
    best_val_loss: float = math.inf
    drops: int = 0

    def curve_csv(self) -> str:
        lines = ["epoch,iteration,learning_rate,train_loss,val_loss"]
        lines += [f"{p.epoch},{p.iteration},{p.learning_rate!r},{p.train_loss!r},{p.val_loss!r}" for p in self.curve]
        return "\n".join(lines) + "\n"


def mean_loss(model: ReferenceNet, features: np.ndarray, labels: np.ndarray, loss: str,
              batch_size: int = 256) -> float:
    fn = LOSS_FUNCTIONS[loss]
    total = 0.0
    for i in range(0, len(features), batch_size):
        total += fn(model.forward(features[i:i + batch_size])[1], labels[i:i + batch_size])[0]
    return total / len(features)


def train(model: ReferenceNet, stream, plan: TrainPlan, val_images, val_labels) -> TrainResult:
    """RMSProp training with staged learning-rate drops on validation plateaus.

    ``stream(epoch)`` yields batches with ``images`` and ``labels``. After
    ``patience`` validations without improvement the learning rate is
    multiplied by ``decay_factor``; the next plateau after ``max_drops`` drops
    ends training. The snapshot with the lowest validation loss is returned.
    """
    fn = LOSS_FUNCTIONS[plan.loss]
    val_x = model.features(val_images)
    val_y = np.asarray(val_labels, dtype=np.float64)
    opt = RMSProp(model.params, plan.learning_rate, plan.rms_decay, plan.epsilon)
    result = TrainResult(model.copy(), best_val_loss=mean_loss(model, val_x, val_y, plan.loss))
    result.curve.append(CurvePoint(0, 0, opt.learning_rate, math.nan, result.best_val_loss))
    stale, iteration, running, seen = 0, 0, 0.0, 0

    def validate(epoch: int) -> bool:
        nonlocal stale, running, seen
        val = mean_loss(model, val_x, val_y, plan.loss)
        if not math.isfinite(val):
            raise TrainingDiverged(f"validation loss is {val} at iteration {iteration}")
        result.curve.append(CurvePoint(epoch, iteration, opt.learning_rate, running / max(seen, 1), val))
        running, seen = 0.0, 0
        if val < result.best_val_loss:
            result.best_val_loss, result.model, stale = val, model.copy(), 0
            return False
        stale += 1
        if stale < plan.patience:
            return False
        if result.drops >= plan.max_drops:
            return True
        result.drops += 1
        opt.learning_rate *= plan.decay_factor
        stale = 0
        log.info("validation plateau: learning rate -> %g", opt.learning_rate)
        return False

    for epoch in range(1, plan.max_epochs + 1):
        for batch in stream(epoch):
            x = model.features(batch.images)
            y = np.asarray(batch.labels, dtype=np.float64)
            h, out = model.forward(x)
            loss, grad = fn(out, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"training loss is {loss} at iteration {iteration}")
            opt.step(model.params, model.backward(x, h, grad / len(x)))
            iteration += 1
            running += loss
            seen += len(x)
            if plan.eval_every and iteration % plan.eval_every == 0 and validate(epoch):
                return result
        if not plan.eval_every and validate(epoch):
            return result
    return result


# -- checkpoints -----------------------------------------------------------

_HEADER = struct.Struct("<8sIIIIII")  # magic, version, A, n_layers, input, hidden, input_size


def save_checkpoint(model: ReferenceNet, path, plan: Optional[TrainPlan] = None, extra: Optional[dict] = None) -> None:
    """Binary weights (little-endian float64) plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    n_in, hidden, n_out = model.dims
    blob = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, n_out, 2, n_in, hidden, model.input_size)
    for k in ("w1", "b1", "w2", "b2"):
        blob += np.ascontiguousarray(model.params[k], dtype="<f8").tobytes()
    path.write_bytes(blob)
    sidecar = {"format_version": CHECKPOINT_VERSION, "n_attributes": n_out, "hidden": hidden,
               "input_size": model.input_size, "plan": asdict(plan) if plan else None}
    sidecar.update(extra or {})
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> ReferenceNet:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, n_out, n_layers, n_in, hidden, input_size = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    if version != CHECKPOINT_VERSION or n_layers != 2 or n_in != input_size ** 2:
        raise ValueError(f"{path}: unsupported checkpoint layout")
    shapes = {"w1": (n_in, hidden), "b1": (hidden,), "w2": (hidden, n_out), "b2": (n_out,)}
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    model = ReferenceNet(n_out, hidden, input_size)
    offset = _HEADER.size
    for k, shape in shapes.items():
        count = int(np.prod(shape))
        model.params[k] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    return model
