"""Desk-scale Paraformer vs MLP comparison on synthetic data with known memory."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import data as D
from .metrics import channel_pooled_r2
from .nn import Mlp, MlpConfig, ModelConfig, Paraformer
from .optim import TrainRun, evaluate_mse, predict, train


@dataclass
class MemoryTrialSetup:
    T: int = 4096
    G: int = 16
    preset: str = "v1_small"
    window: int = 5
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_hidden: list = field(default_factory=lambda: [256] * 3)
    epochs: int = 12
    batch: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    scheduler: str = "cosine"
    train_frac: float = 0.7
    val_frac: float = 0.1


@dataclass
class MemoryTrialResult:
    seed: int
    alpha: float
    beta: float
    r2_paraformer: float
    r2_mlp: float
    seconds: float

    @property
    def gap(self) -> float:
        return self.r2_paraformer - self.r2_mlp


def _fit(model, train_d, val_d, mode, setup, seed):
    tr = D.make_windows(train_d, model.window, mode)
    va = D.make_windows(val_d, model.window, mode)
    run = TrainRun(epochs=setup.epochs, lr=setup.lr, batch_size=setup.batch, seed=seed,
                   optimizer=setup.optimizer, scheduler=setup.scheduler, weight_decay=0.0)
    params, _ = train(model, tr, va, run)
    return params


def memory_trial(seed: int, alpha: float, beta: float, rho: float = 0.9,
                 setup: MemoryTrialSetup | None = None) -> MemoryTrialResult:
    """Train both models on one synthetic draw; pooled test R^2 in normalized units.

    Both models are scored on the same (t, g) test positions: those covered
    by the Paraformer's non-overlapping windows.
    """
    setup = setup or MemoryTrialSetup()
    start = time.perf_counter()
    d = D.generate_synthetic(setup.preset, T=setup.T, G=setup.G, seed=seed,
                             alpha=alpha, rho=rho, beta=beta)
    tr, va, te = D.split_by_time(d, setup.train_frac, setup.val_frac)
    stats = D.compute_norm_stats(tr)
    tr, va, te = (D.normalize(s, stats) for s in (tr, va, te))

    f_in, f_out = d.f_in, d.f_out
    para = Paraformer(ModelConfig(setup.d_model, setup.n_layers, setup.n_heads, f_in, f_out,
                                  dropout=0.0, window=setup.window))
    mlp = Mlp(MlpConfig(f_in, f_out, hidden_widths=list(setup.mlp_hidden)))

    p_params = _fit(para, tr, va, "nonoverlap", setup, seed)
    m_params = _fit(mlp, tr, va, "nonoverlap", setup, seed)

    wb = D.make_nonoverlapping_windows(te, setup.window)
    p_pred, covered = D.unwindow(predict(para, p_params, wb.x), wb, te.T, te.G)
    m_pred = predict(mlp, m_params, np.asarray(te.inputs, dtype=np.float64)[:, :, None, :]
                     .reshape(te.T * te.G, 1, f_in)).reshape(te.T, te.G, f_out)
    truth = np.asarray(te.targets, dtype=np.float64)
    r2_p = channel_pooled_r2(p_pred[covered], truth[covered])
    r2_m = channel_pooled_r2(m_pred[covered], truth[covered])
    return MemoryTrialResult(seed, alpha, beta, r2_p, r2_m, time.perf_counter() - start)


@dataclass
class OverfitResult:
    train_mse: float
    steps: int
    windows: int
    seconds: float


def overfit_capacity(seed: int = 0, max_steps: int = 2000) -> OverfitResult:
    """Fit 512 sliding windows (32 steps x 16 cells) as closely as possible.

    Memory-driven, noise-light data (alpha=1, beta=0); the model is the
    desk-scale encoder (64 wide, 2 layers, 4 heads, L=5) without dropout.
    Train MSE is re-evaluated on every window after training.
    """
    start = time.perf_counter()
    d = D.generate_synthetic("v1_small", T=36, G=16, seed=seed, alpha=1.0, beta=0.0)
    n = D.normalize(d, D.compute_norm_stats(d))
    wb = D.make_windows(n, 5, "sliding")
    model = Paraformer(ModelConfig(64, 2, 4, d.f_in, d.f_out, dropout=0.0, window=5))
    run = TrainRun(epochs=250, lr=5e-3, batch_size=64, seed=seed, optimizer="adam",
                   scheduler="cosine", weight_decay=0.0, max_steps=max_steps)
    params, run = train(model, wb, wb, run)
    return OverfitResult(evaluate_mse(model, params, wb), run.steps, len(wb),
                         time.perf_counter() - start)
