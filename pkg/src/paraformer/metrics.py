"""Regression metrics and their spatial / vertical / zonal aggregations.

Undefined R^2 (constant truth with non-zero error) is ``None`` from the
scalar :func:`r_squared` and ``NaN`` inside arrays. Inputs are always finite,
so a NaN entry can only mean "undefined".
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError

SS_EPS = 1e-12


def convert_units(values: np.ndarray, energy_scale) -> np.ndarray:
    """Multiply the last (channel) axis by per-channel energy scales."""
    scale = np.asarray(energy_scale, dtype=np.float64).reshape(-1)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != scale.shape[0]:
        raise ContractError(f"{values.shape[-1]} channels but {scale.shape[0]} energy scales")
    if np.any(scale <= 0):
        raise ContractError("energy scales must be positive")
    return values * scale


def pointwise_metrics(pred, truth) -> tuple[float, float]:
    """(MAE, RMSE) over all elements."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise ContractError(f"pred has {pred.size} values, truth has {truth.size}")
    if pred.size == 0:
        raise ContractError("metrics need at least one value")
    diff = pred - truth
    return float(np.abs(diff).mean()), float(math.sqrt((diff * diff).mean()))


def _r2_from_sums(ss_res, ss_tot):
    if ss_tot < SS_EPS:
        return 1.0 if ss_res < SS_EPS else None
    return 1.0 - ss_res / ss_tot


def r_squared(pred, truth) -> Optional[float]:
    """Coefficient of determination; ``None`` when it is undefined."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise ContractError(f"pred has {pred.size} values, truth has {truth.size}")
    if truth.size < 2:
        raise ContractError("R^2 needs at least two samples")
    ss_res = float(((truth - pred) ** 2).sum())
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    return _r2_from_sums(ss_res, ss_tot)


def _r2_columns(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Column-wise R^2 of ``[N, K]`` arrays, NaN where undefined."""
    ss_res = ((truth - pred) ** 2).sum(axis=0)
    ss_tot = ((truth - truth.mean(axis=0)) ** 2).sum(axis=0)
    out = np.full(ss_res.shape, np.nan)
    ok = ss_tot >= SS_EPS
    out[ok] = 1.0 - ss_res[ok] / ss_tot[ok]
    out[~ok & (ss_res < SS_EPS)] = 1.0
    return out


def channel_pooled_r2(pred, truth) -> Optional[float]:
    """1 - sum_c SS_res,c / sum_c SS_tot,c for ``[N, C]`` arrays.

    Each channel is centred on its own mean, so channels with different
    offsets do not inflate the total variance.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    ss_res = float(((truth - pred) ** 2).sum())
    ss_tot = float(((truth - truth.mean(axis=0)) ** 2).sum())
    return _r2_from_sums(ss_res, ss_tot)


def level_profile(pred, truth) -> dict:
    """Per-level MAE, RMSE and R^2 for ``[N, levels]`` samples of a profile."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[1] < 2:
        raise ContractError(f"level_profile needs [N, levels] profile data, got {pred.shape}")
    if pred.shape != truth.shape:
        raise ContractError(f"pred {pred.shape} and truth {truth.shape} differ")
    if pred.shape[0] < 2:
        raise ContractError("level_profile needs at least two samples")
    diff = pred - truth
    return {
        "mae": np.abs(diff).mean(axis=0),
        "rmse": np.sqrt((diff * diff).mean(axis=0)),
        "r2": _r2_columns(pred, truth),
    }


@dataclass
class LatBinning:
    n_bins: int = 24

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-90.0, 90.0, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def assign(self, lats) -> np.ndarray:
        lats = np.asarray(lats, dtype=np.float64)
        idx = np.floor((lats + 90.0) / 180.0 * self.n_bins).astype(int)
        return np.clip(idx, 0, self.n_bins - 1)


def steps_per_day(step_minutes: int) -> int:
    return int(math.ceil(1440 / step_minutes))


def zonal_daily_r2(pred, truth, lats, binning: LatBinning, steps_per_day: int,
                   mask=None) -> np.ndarray:
    """R^2 of daily-mean, zonal-mean series for every (latitude bin, level).

    ``pred``/``truth`` are ``[T, G, levels]``. Days are consecutive blocks of
    ``steps_per_day`` steps from the first one; a trailing partial day is
    dropped. Within a (bin, day) cell only positions allowed by ``mask``
    (``[T, G]``) are averaged; days without data for a bin are skipped.
    Bins with no grid cell get NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim == 2:
        pred, truth = pred[..., None], truth[..., None]
    if steps_per_day < 1:
        raise ContractError("steps_per_day must be >= 1")
    T, G, K = pred.shape
    n_days = T // steps_per_day
    if n_days < 2:
        raise ContractError(f"{T} steps hold fewer than 2 complete days of {steps_per_day} steps")
    mask = np.ones((T, G), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    bins = binning.assign(lats)
    out = np.full((binning.n_bins, K), np.nan)
    Td = n_days * steps_per_day
    w = mask[:Td].reshape(n_days, steps_per_day, G).astype(np.float64)
    p = np.where(mask[..., None], pred, 0.0)[:Td].reshape(n_days, steps_per_day, G, K)
    t = np.where(mask[..., None], truth, 0.0)[:Td].reshape(n_days, steps_per_day, G, K)
    for b in range(binning.n_bins):
        cells = bins == b
        if not cells.any():
            continue
        count = w[:, :, cells].sum(axis=(1, 2))
        days = count > 0
        if days.sum() < 2:
            continue
        pm = p[:, :, cells].sum(axis=(1, 2))[days] / count[days, None]
        tm = t[:, :, cells].sum(axis=(1, 2))[days] / count[days, None]
        out[b] = _r2_columns(pm, tm)
    return out


def spatial_r2_map(pred, truth, mask=None) -> np.ndarray:
    """Per-grid R^2 across time: ``[T, G]`` -> ``[G]``, ``[T, G, K]`` -> ``[G, K]``.

    Grid cells with fewer than two scored steps, or constant truth with
    errors, are NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    squeeze = pred.ndim == 2
    if squeeze:
        pred, truth = pred[..., None], truth[..., None]
    T, G, K = pred.shape
    mask = np.ones((T, G), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out = np.full((G, K), np.nan)
    for g in range(G):
        sel = mask[:, g]
        if sel.sum() < 2:
            continue
        out[g] = _r2_columns(pred[sel, g], truth[sel, g])
    return out[:, 0] if squeeze else out


@dataclass
class ScatterDensity:
    x_centers: np.ndarray   # truth axis
    y_centers: np.ndarray   # prediction axis
    counts: np.ndarray      # [nx, ny]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        for i, xc in enumerate(self.x_centers):
            for j, yc in enumerate(self.y_centers):
                yield float(xc), float(yc), int(self.counts[i, j])

    def diagonal_fraction(self) -> float:
        return float(np.trace(self.counts) / max(self.total, 1))


def scatter_density(pred, truth, bins: int = 80) -> ScatterDensity:
    """2-D histogram of (truth, prediction) on a shared square range."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    lo = min(pred.min(), truth.min())
    hi = max(pred.max(), truth.max())
    if hi - lo < 1e-12 * max(1.0, abs(lo)):
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts, _, _ = np.histogram2d(truth, pred, bins=[edges, edges])
    centers = 0.5 * (edges[:-1] + edges[1:])
    return ScatterDensity(centers, centers.copy(), counts.astype(np.int64))


def write_scatter_csv(density: ScatterDensity, path, skip_empty: bool = True) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_x_center", "bin_y_center", "count"])
        for x, y, c in density.rows():
            if c or not skip_empty:
                w.writerow([repr(x), repr(y), c])
