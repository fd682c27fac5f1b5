"""Minibatch training of gate logits: losses, Adam, metrics, convergence rule."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .compiler import CompiledGraph
from .data import Dataset
from .engine import ParameterStore, backward, evaluate, forward, sigmoid
from .errors import DataError, NumericError

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-7
EXCLUSIVE_DELTA = 1e-6


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 128
    max_epochs: int = 100
    beta: float = 1.0
    temperature: float = 1.0
    temp_decay: float = 1.0  # multiplier applied every 10 epochs
    seed: int = 0
    loss: str = "bce"
    multiclass: str = "independent"
    convergence: str = "epochs-only"
    max_steps: int = 384
    plateau: int = 64
    monitor: str = "train"
    noise: bool = True
    noise_sharing: str = "batch"  # one Gumbel draw per step ("batch") or per example ("sample")

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 < self.temp_decay <= 1:
            raise ValueError("temp_decay must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.loss not in ("bce", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.multiclass not in ("independent", "exclusive-top2"):
            raise ValueError(f"unknown multiclass mode {self.multiclass!r}")
        if self.convergence not in ("epochs-only", "accuracy-plateau"):
            raise ValueError(f"unknown convergence mode {self.convergence!r}")
        if self.noise_sharing not in ("batch", "sample"):
            raise ValueError("noise_sharing must be 'batch' or 'sample'")
        if self.monitor not in ("train", "val"):
            raise ValueError("monitor must be 'train' or 'val'")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_f1: float
    val_loss: Optional[float] = None
    val_f1: Optional[float] = None


@dataclass
class TrainReport:
    history: list
    steps: int
    converged: bool = False
    steps_to_convergence: Optional[int] = None
    step_accuracy: list = field(default_factory=list)
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Losses


def loss_bce(outputs, targets):
    """Mean binary cross-entropy on outputs clamped to [1e-7, 1 - 1e-7]."""
    o = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if o.shape != t.shape:
        raise DataError(f"outputs {o.shape} and targets {t.shape} differ in shape")
    oc = np.clip(o, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -np.mean(t * np.log(oc) + (1.0 - t) * np.log(1.0 - oc))
    inside = (o >= BCE_CLAMP) & (o <= 1.0 - BCE_CLAMP)
    grad = np.where(inside, (oc - t) / (oc * (1.0 - oc)), 0.0) / o.size
    return float(loss), grad


def loss_mse(outputs, targets):
    o = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if o.shape != t.shape:
        raise DataError(f"outputs {o.shape} and targets {t.shape} differ in shape")
    d = o - t
    return float(np.mean(d * d)), 2.0 * d / o.size


LOSSES = {"bce": loss_bce, "mse": loss_mse}


@dataclass
class _ExclusiveCache:
    inside: np.ndarray
    clamped: np.ndarray
    shifted: np.ndarray
    top2: np.ndarray


def exclusive_output_reparam(outputs, delta: float = EXCLUSIVE_DELTA, return_cache: bool = False):
    """Shift output logits by the mean of the two largest, then sigmoid.

    Exactly one value per row ends up above 0.5 whenever the two largest
    outputs differ. No noise is involved.
    """
    o = np.asarray(outputs, dtype=np.float64)
    if o.ndim != 2 or o.shape[1] < 2:
        raise ValueError("need at least two outputs per sample")
    oc = np.clip(o, delta, 1.0 - delta)
    z = np.log(oc) - np.log1p(-oc)
    top = np.argsort(-z, axis=1, kind="stable")[:, :2]
    zbar = np.take_along_axis(z, top, axis=1).mean(axis=1, keepdims=True)
    s = sigmoid(z - zbar)
    if return_cache:
        inside = (o >= delta) & (o <= 1.0 - delta)
        return s, _ExclusiveCache(inside, oc, s, top)
    return s


def exclusive_output_backward(cache: _ExclusiveCache, grad):
    gu = np.asarray(grad, dtype=np.float64) * cache.shifted * (1.0 - cache.shifted)
    gz = gu.copy()
    rows = np.arange(gz.shape[0])[:, None]
    np.add.at(gz, (np.broadcast_to(rows, cache.top2.shape), cache.top2), -0.5 * gu.sum(axis=1, keepdims=True))
    return np.where(cache.inside, gz / (cache.clamped * (1.0 - cache.clamped)), 0.0)


# ---------------------------------------------------------------------------
# Metrics


def confusion_matrix(pred, true, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def macro_f1(pred_labels, true_labels, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with 2TP+FP+FN = 0 scores 0."""
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.size == 0:
        raise ValueError("macro_f1 of an empty label set")
    if pred.shape != true.shape:
        raise ValueError("prediction and truth differ in length")
    cm = confusion_matrix(pred, true, n_classes)
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # = 2TP + FP + FN
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    return float(f1.mean())


def targets_for(y, n_classes: int, n_outputs: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if n_outputs == 1 and n_classes == 2:
        return y[:, None].astype(np.float64)
    if n_outputs == n_classes:
        return np.eye(n_classes)[y]
    raise DataError(f"{n_outputs} outputs cannot represent {n_classes} classes")


def predict_labels(outputs) -> np.ndarray:
    """Single output: threshold at 0.5. Several outputs: first maximal index."""
    o = np.asarray(outputs)
    if o.shape[1] == 1:
        return (o[:, 0] > 0.5).astype(np.int64)
    return np.argmax(o, axis=1)


def convergence_check(history: Sequence[float], plateau: int = 64, max_steps: int = 384):
    """Three-way stopping rule over per-step accuracies.

    ``history[i]`` is the accuracy after step ``i + 1``. Converged at the first
    step with accuracy 1, or after ``plateau`` consecutive unchanged values, or
    at ``max_steps``. Returns ``(converged, step)``; when not yet converged the
    step is the number of steps seen.
    """
    same = 0
    for i, acc in enumerate(history):
        step = i + 1
        if acc >= 1.0:
            return True, step
        if i > 0 and acc == history[i - 1]:
            same += 1
        else:
            same = 0
        if same >= plateau or step >= max_steps:
            return True, step
    return False, len(history)


# ---------------------------------------------------------------------------
# Training


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in sorted(grads):
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def model_outputs(g: CompiledGraph, params: ParameterStore, X, multiclass: str = "independent",
                  threads: Optional[int] = None) -> np.ndarray:
    out = evaluate(g, params, X, threads=threads)
    if multiclass == "exclusive-top2" and out.shape[1] >= 2:
        out = exclusive_output_reparam(out)
    return out


def score(g: CompiledGraph, params: ParameterStore, data: Dataset, cfg: TrainConfig,
          threads: Optional[int] = None):
    """(loss, macro-F1, accuracy) of the noise-free model on a dataset."""
    if len(data) == 0:
        raise DataError("cannot score an empty dataset")
    out = model_outputs(g, params, data.columns(g.input_names), cfg.multiclass, threads)
    loss, _ = LOSSES[cfg.loss](out, targets_for(data.y, data.n_classes, out.shape[1]))
    pred = predict_labels(out)
    return loss, macro_f1(pred, data.y, data.n_classes), float(np.mean(pred == data.y))


def train(
    g: CompiledGraph,
    params: ParameterStore,
    data: Dataset,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    val: Optional[Dataset] = None,
    threads: Optional[int] = None,
) -> TrainReport:
    """Optimise ``params`` in place and report per-epoch metrics.

    Minibatches are drawn with ``rng`` (default: seeded from ``cfg.seed``);
    Gumbel noise comes from ``params.rng``. Metrics are computed noise-free.
    """
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, 1])
    X = data.columns(g.input_names)
    targets = targets_for(data.y, data.n_classes, len(g.outputs))
    loss_fn = LOSSES[cfg.loss]
    exclusive = cfg.multiclass == "exclusive-top2" and len(g.outputs) >= 2
    params.beta = cfg.beta
    params.temperature = cfg.temperature
    opt = Adam(cfg.learning_rate)
    monitor = val if (cfg.monitor == "val" and val is not None) else data
    monitor_X = monitor.columns(g.input_names)

    def metrics(epoch):
        tl, tf, _ = score(g, params, data, cfg, threads)
        if val is not None and len(val):
            vl, vf, _ = score(g, params, val, cfg, threads)
        else:
            vl = vf = None
        return EpochMetrics(epoch, tl, tf, vl, vf)

    history = [metrics(0)]
    step_acc: list = []
    steps = 0
    converged, conv_step = False, None
    n = len(data)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            out, tape = forward(g, params, X[rows], noise=cfg.noise,
                                 per_sample_noise=cfg.noise_sharing == "sample")
            if exclusive:
                out, cache = exclusive_output_reparam(out, return_cache=True)
            loss, grad = loss_fn(out, targets[rows])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {steps + 1}")
            if exclusive:
                grad = exclusive_output_backward(cache, grad)
            grads = backward(tape, g, params, grad)
            opt.step(params.z, {cid: grads[cid] for cid in params.trainable_ids})
            params.touch()
            steps += 1
            if cfg.convergence == "accuracy-plateau":
                pred = predict_labels(model_outputs(g, params, monitor_X, cfg.multiclass, threads))
                step_acc.append(float(np.mean(pred == monitor.y)))
                converged, conv_step = convergence_check(step_acc, cfg.plateau, cfg.max_steps)
                if converged:
                    break
        if epoch % 10 == 0:
            params.temperature *= cfg.temp_decay
        history.append(metrics(epoch))
        log.debug("epoch %d: %s", epoch, history[-1])
        if converged:
            break
    if cfg.convergence == "accuracy-plateau" and not converged:
        conv_step = steps
    return TrainReport(history, steps, converged, conv_step, step_acc, params.to_json())
