"""Loss, optimizers, learning-rate schedules and the epoch training loop."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as tt
from .data import WindowBatch
from .errors import ConfigError, ContractError, NumericError, TrainingDiverged
from .tensor import Tensor

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam", "adamw")
SCHEDULERS = ("plateau", "cosine")


def mse_loss(pred: Tensor, target, mask) -> Tensor:
    """Mean squared error over masked positions and all channels.

    ``pred`` and ``target`` are ``[B, L, F]``; ``mask`` is ``[B, L]``.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape:
        raise ContractError(f"prediction {pred.shape} and target {target.shape} differ")
    if mask.shape != pred.shape[:-1]:
        raise ContractError(f"mask {mask.shape} does not match {pred.shape[:-1]}")
    count = int(mask.sum()) * pred.shape[-1]
    if count == 0:
        raise ContractError("mask selects no positions")
    weights = np.broadcast_to(mask[..., None], pred.shape).astype(np.float64)
    sq = tt.square(tt.sub(pred, Tensor(target)))
    if not mask.all():
        sq = tt.mul(sq, Tensor(weights))
    return tt.tsum(sq) / count


# ---------------------------------------------------------------- optimizers

class Optimizer:
    """SGD with momentum, Adam, or AdamW with decoupled weight decay."""

    def __init__(self, kind: str = "adamw", lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: Optional[float] = None,
                 momentum: float = 0.9):
        if kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        if weight_decay is None:
            weight_decay = 0.01 if kind == "adamw" else 0.0
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict):
        for name, p in params.items():
            if p.grad is None:
                raise ContractError(f"parameter {name} has no gradient")
            if not np.all(np.isfinite(p.grad)):
                bad = int((~np.isfinite(p.grad)).sum())
                raise NumericError(f"non-finite gradient in {name}: {bad} of {p.grad.size} "
                                   f"entries (step {self.t + 1}, lr {self.lr:g})")
        self.t += 1
        for name, p in params.items():
            g = p.grad
            if self.kind == "sgd":
                if self.weight_decay:
                    g = g + self.weight_decay * p.data
                buf = self.m.get(name)
                buf = g.copy() if buf is None else self.momentum * buf + g
                self.m[name] = buf
                p.data = p.data - self.lr * buf
                continue
            if self.kind == "adam" and self.weight_decay:
                g = g + self.weight_decay * p.data
            m = self.m.get(name, np.zeros_like(p.data))
            v = self.v.get(name, np.zeros_like(p.data))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            data = p.data
            if self.kind == "adamw" and self.weight_decay:
                data = data - self.lr * self.weight_decay * data
            p.data = data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_grad_norm(params: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params.values()))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params.values():
            p.grad = p.grad * factor
    return total


# ---------------------------------------------------------------- schedulers

class PlateauScheduler:
    """Multiply the rate by ``factor`` once the metric has failed to improve
    (by more than ``threshold``) for more than ``patience`` epochs."""

    def __init__(self, lr: float, patience: int = 10, factor: float = 0.5,
                 threshold: float = 1e-8):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.threshold = threshold
        self.best = math.inf
        self.epochs_since_best = 0

    def epoch_end(self, val_metric: float) -> float:
        if val_metric < self.best - self.threshold:
            self.best = val_metric
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        if self.epochs_since_best > self.patience:
            self.lr *= self.factor
            self.epochs_since_best = 0
        return self.lr


class CosineScheduler:
    def __init__(self, base_lr: float, t_max: int, eta_min: float = 0.0):
        if t_max < 1:
            raise ConfigError("cosine schedule needs t_max >= 1")
        self.base_lr = base_lr
        self.t_max = t_max
        self.eta_min = eta_min
        self.epoch = 0
        self.lr = base_lr

    def lr_at(self, epoch: int) -> float:
        return self.eta_min + (self.base_lr - self.eta_min) * (1 + math.cos(math.pi * epoch / self.t_max)) / 2

    def epoch_end(self, val_metric: float = None) -> float:
        self.epoch += 1
        self.lr = self.lr_at(self.epoch)
        return self.lr


def make_scheduler(kind: str, lr: float, epochs: int, patience: int = 10, factor: float = 0.5):
    if kind == "plateau":
        return PlateauScheduler(lr, patience=patience, factor=factor)
    if kind == "cosine":
        return CosineScheduler(lr, t_max=epochs)
    raise ConfigError(f"unknown scheduler {kind!r}")


# ------------------------------------------------------------------ training

@dataclass
class TrainRun:
    epochs: int = 200
    lr: float = 1e-4
    batch_size: int = 512
    seed: int = 0
    optimizer: str = "adamw"
    scheduler: str = "plateau"
    weight_decay: Optional[float] = None
    momentum: float = 0.9
    patience: int = 10
    factor: float = 0.5
    max_grad_norm: Optional[float] = None
    max_steps: Optional[int] = None
    # filled in by train()
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)
    initial_val: float = math.nan
    best_val: float = math.inf
    best_epoch: int = 0
    steps: int = 0
    seconds: float = 0.0

    @property
    def completed_epochs(self) -> int:
        return len(self.train_history)


def snapshot(params: dict) -> dict:
    return {k: Tensor(p.data.copy(), requires_grad=True) for k, p in params.items()}


def as_float_batch(batch: WindowBatch) -> WindowBatch:
    return WindowBatch(np.asarray(batch.x, dtype=np.float64), np.asarray(batch.y, dtype=np.float64),
                       batch.times, batch.grids, batch.score_mask)


def predict(model, params: dict, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    outs = []
    with tt.no_grad():
        for i in range(0, len(x), batch_size):
            outs.append(model.forward(params, x[i:i + batch_size]).data)
    return np.concatenate(outs, axis=0)


def evaluate_mse(model, params: dict, batch: WindowBatch, batch_size: int = 1024) -> float:
    """Masked MSE over a whole batch (no shuffling, no dropout)."""
    total, count = 0.0, 0
    with tt.no_grad():
        for i in range(0, len(batch), batch_size):
            pred = model.forward(params, batch.x[i:i + batch_size]).data
            m = batch.score_mask[i:i + batch_size]
            diff = (pred - batch.y[i:i + batch_size])[m]
            total += float((diff * diff).sum())
            count += diff.size
    return total / count


def train(model, train_batch: WindowBatch, val_batch: WindowBatch, run: TrainRun,
          params: Optional[dict] = None, log: Optional[Callable[[dict], None]] = None):
    """Epoch loop with seeded shuffling; returns (best-val params, run).

    Raises :class:`TrainingDiverged` carrying the best snapshot so far when
    the loss turns non-finite.
    """
    if run.batch_size < 1 or run.epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")
    if train_batch.window != model.window or val_batch.window != model.window:
        raise ContractError(f"model expects windows of {model.window}, got "
                            f"{train_batch.window}/{val_batch.window}")
    train_batch = as_float_batch(train_batch)
    val_batch = as_float_batch(val_batch)
    if params is None:
        params = model.init_params(run.seed)
    opt = Optimizer(run.optimizer, run.lr, weight_decay=run.weight_decay, momentum=run.momentum)
    sched = make_scheduler(run.scheduler, run.lr, max(run.epochs, 1), run.patience, run.factor)

    run.initial_val = evaluate_mse(model, params, val_batch)
    best = snapshot(params)
    run.best_val = run.initial_val
    n = len(train_batch)
    start = time.perf_counter()
    for epoch in range(1, run.epochs + 1):
        t_epoch = time.perf_counter()
        rng = np.random.default_rng([run.seed & 0xFFFFFFFF, epoch])
        order = rng.permutation(n)
        sse, count = 0.0, 0
        lr_used = opt.lr
        for i in range(0, n, run.batch_size):
            if run.max_steps is not None and run.steps >= run.max_steps:
                break
            idx = order[i:i + run.batch_size]
            mask = train_batch.score_mask[idx]
            for p in params.values():
                p.grad = None
            pred = model.forward(params, train_batch.x[idx], train=True, rng=rng)
            loss = mse_loss(pred, train_batch.y[idx], mask)
            value = loss.item()
            if not math.isfinite(value):
                run.seconds = time.perf_counter() - start
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}", best, run)
            loss.backward()
            if run.max_grad_norm:
                clip_grad_norm(params, run.max_grad_norm)
            opt.step(params)
            run.steps += 1
            k = int(mask.sum()) * pred.shape[-1]
            sse += value * k
            count += k
        if count == 0:
            break
        val = evaluate_mse(model, params, val_batch)
        run.train_history.append(sse / count)
        run.val_history.append(val)
        run.lr_history.append(lr_used)
        if not math.isfinite(val):
            run.seconds = time.perf_counter() - start
            raise TrainingDiverged(f"validation loss became {val} at epoch {epoch}", best, run)
        if val < run.best_val:
            run.best_val, run.best_epoch = val, epoch
            best = snapshot(params)
        opt.lr = sched.epoch_end(val)
        if log is not None:
            log({"epoch": epoch, "lr": lr_used, "train_mse": sse / count,
                 "val_mse": val, "seconds": round(time.perf_counter() - t_epoch, 4)})
        logger.debug("epoch %d train %.6g val %.6g", epoch, sse / count, val)
    run.seconds = time.perf_counter() - start
    return best, run


def jsonl_logger(path):
    """Append-per-epoch JSON lines writer; returns (callback, close)."""
    fh = open(path, "w", encoding="utf-8")

    def write(record: dict):
        fh.write(json.dumps(record) + "\n")
        fh.flush()
    return write, fh.close
