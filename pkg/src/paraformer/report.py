"""Assemble per-variable metric reports and write them as JSON and CSV."""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics as M
from .data import DatasetMeta
from .errors import ContractError
from .variables import channel_slices

DEFAULT_LEVELS = (1, 25, 40, 59)


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "", name) or "var"


@dataclass
class VariableReport:
    name: str
    unit: str
    levels: int
    mae: float
    rmse: float
    r2: Optional[float]
    n_samples: int
    profile: Optional[dict] = None          # mae/rmse/r2 arrays per level
    zonal: Optional[np.ndarray] = None      # [n_bins, levels]
    spatial: Optional[np.ndarray] = None    # [G] or [G, levels]
    scatter: dict = field(default_factory=dict)   # key -> ScatterDensity

    @property
    def is_profile(self) -> bool:
        return self.levels > 1


@dataclass
class MetricReport:
    variables: list
    lat_centers: np.ndarray
    grid: np.ndarray
    selected_levels: tuple
    split: str = "test"

    def variable(self, name: str) -> VariableReport:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {"split": self.split, "units": "W/m2 after energy conversion",
               "lat_bin_centers": _list(self.lat_centers),
               "selected_levels": list(self.selected_levels), "variables": []}
        for v in self.variables:
            entry = {"name": v.name, "native_unit": v.unit, "levels": v.levels,
                     "n_samples": v.n_samples, "mae": v.mae, "rmse": v.rmse,
                     "r2": _num(v.r2), "skipped": {}}
            if v.profile is not None:
                r2 = v.profile["r2"]
                entry["profile"] = {k: _list(a) for k, a in v.profile.items()}
                entry["skipped"]["profile_r2"] = int(np.isnan(r2).sum())
                entry["profile_r2_mean"] = _num(np.nanmean(r2)) if np.isfinite(r2).any() else None
            if v.zonal is not None:
                entry["zonal_r2"] = _list(v.zonal)
                entry["skipped"]["zonal_r2"] = int(np.isnan(v.zonal).sum())
            if v.spatial is not None:
                if v.is_profile:
                    entry["spatial_r2"] = {str(lv): _list(v.spatial[:, lv])
                                           for lv in self.selected_levels if lv < v.levels}
                    sel = [lv for lv in self.selected_levels if lv < v.levels]
                    entry["skipped"]["spatial_r2"] = int(np.isnan(v.spatial[:, sel]).sum())
                else:
                    entry["spatial_r2"] = _list(v.spatial)
                    entry["skipped"]["spatial_r2"] = int(np.isnan(v.spatial).sum())
            entry["scatter_files"] = [f"scatter_{slug(v.name)}{k}.csv" for k in v.scatter]
            out["variables"].append(entry)
        return out


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _list(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return _num(a)
    return [_list(x) if a.ndim > 1 else _num(x) for x in a]


def build_report(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray, meta: DatasetMeta,
                 n_lat_bins: int = 24, selected_levels=DEFAULT_LEVELS, scatter_bins: int = 80,
                 split: str = "test") -> MetricReport:
    """Metrics for native-unit ``[T, G, f_out]`` predictions on scored (t, g) points."""
    if pred.shape != truth.shape or pred.shape[:2] != mask.shape:
        raise ContractError(f"pred {pred.shape}, truth {truth.shape}, mask {mask.shape} disagree")
    if not mask.any():
        raise ContractError("no scored samples")
    binning = M.LatBinning(n_lat_bins)
    spd = M.steps_per_day(meta.step_minutes)
    reports = []
    for var, sl in zip(meta.out_vars, channel_slices(meta.out_vars)):
        p = M.convert_units(np.where(mask[..., None], pred[..., sl], 0.0), var.energy_scale)
        t = M.convert_units(np.where(mask[..., None], truth[..., sl], 0.0), var.energy_scale)
        ps, ts = p[mask], t[mask]          # [N, levels]
        mae, rmse = M.pointwise_metrics(ps, ts)
        rep = VariableReport(var.name, var.unit, var.levels, mae, rmse,
                             M.r_squared(ps, ts) if ps.size >= 2 else None, int(ps.shape[0]))
        if var.is_profile:
            rep.profile = M.level_profile(ps, ts)
            try:
                rep.zonal = M.zonal_daily_r2(p, t, meta.lats, binning, spd, mask)
            except ContractError:
                rep.zonal = None
            rep.spatial = M.spatial_r2_map(p, t, mask)
            for lv in selected_levels:
                if lv < var.levels:
                    rep.scatter[f"_L{lv}"] = M.scatter_density(ps[:, lv], ts[:, lv], scatter_bins)
        else:
            rep.spatial = M.spatial_r2_map(p[..., 0], t[..., 0], mask)
            rep.scatter[""] = M.scatter_density(ps[:, 0], ts[:, 0], scatter_bins)
        reports.append(rep)
    return MetricReport(reports, binning.centers, meta.grid, tuple(selected_levels), split)


def write_report(report: MetricReport, path, csv_dir=None) -> list:
    """Write report.json and the per-figure CSVs; returns written paths."""
    path = Path(path)
    csv_dir = Path(csv_dir) if csv_dir is not None else path.parent
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_dir.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    written = [path]
    for v in report.variables:
        s = slug(v.name)
        if v.profile is not None:
            f = csv_dir / f"profile_{s}.csv"
            with open(f, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["level", "mae", "rmse", "r2"])
                for lv in range(v.levels):
                    w.writerow([lv, v.profile["mae"][lv], v.profile["rmse"][lv],
                                _csv(v.profile["r2"][lv])])
            written.append(f)
        if v.zonal is not None:
            f = csv_dir / f"zonal_{s}.csv"
            with open(f, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["lat_center", "level", "r2"])
                for b, lat in enumerate(report.lat_centers):
                    for lv in range(v.levels):
                        w.writerow([lat, lv, _csv(v.zonal[b, lv])])
            written.append(f)
        if v.spatial is not None:
            f = csv_dir / f"map_{s}.csv"
            with open(f, "w", newline="") as fh:
                w = csv.writer(fh)
                cols = ([f"r2_L{lv}" for lv in report.selected_levels if lv < v.levels]
                        if v.is_profile else ["r2"])
                w.writerow(["grid", "lat", "lon"] + cols)
                for g, (lat, lon) in enumerate(report.grid):
                    vals = ([v.spatial[g, lv] for lv in report.selected_levels if lv < v.levels]
                            if v.is_profile else [v.spatial[g]])
                    w.writerow([g, lat, lon] + [_csv(x) for x in vals])
            written.append(f)
        for key, dens in v.scatter.items():
            f = csv_dir / f"scatter_{s}{key}.csv"
            M.write_scatter_csv(dens, f)
            written.append(f)
    return written


def _csv(x):
    return "" if x is None or not np.isfinite(x) else repr(float(x))


def format_table(report: MetricReport) -> str:
    """Variable | MAE | RMSE | R2 table, one row per output variable."""
    lines = [f"{'Variable':<10} {'MAE':>12} {'RMSE':>12} {'R2':>10}"]
    for v in report.variables:
        r2 = "-" if v.r2 is None else f"{v.r2:.3f}"
        lines.append(f"{v.name:<10} {v.mae:>12.4g} {v.rmse:>12.4g} {r2:>10}")
    return "\n".join(lines)
