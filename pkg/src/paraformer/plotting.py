"""SVG figures for a MetricReport: level profiles, zonal heatmaps, R^2 maps, scatter.

Negative R^2 is kept as-is in report files; only the figures clip their
colour/axis range to [0, 1].
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import MetricReport, slug  # noqa: E402

plt.rcParams.update({"svg.hashsalt": "paraformer", "font.size": 8,
                     "axes.linewidth": 0.6, "lines.linewidth": 1.0})
CONTOURS = (0.7, 0.9)


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_profile(v, path: Path) -> Path:
    levels = np.arange(v.levels)
    fig, axes = plt.subplots(1, 3, figsize=(7.5, 3.2), sharey=True)
    for ax, key, label in zip(axes, ("mae", "rmse", "r2"), ("MAE [W/m2]", "RMSE [W/m2]", "R2")):
        vals = np.asarray(v.profile[key], dtype=np.float64)
        if key == "r2":
            vals = np.clip(vals, 0.0, 1.0)
            ax.set_xlim(0, 1)
        ax.plot(vals, levels, color="tab:blue")
        ax.set_xlabel(label)
    axes[0].set_ylabel("level index")
    axes[0].invert_yaxis()   # top of the column first
    fig.suptitle(v.name)
    fig.tight_layout()
    return _save(fig, path)


def plot_zonal(v, lat_centers, path: Path) -> Path:
    z = np.asarray(v.zonal, dtype=np.float64)     # [bins, levels]
    shown = np.ma.masked_invalid(np.clip(z, 0.0, 1.0)).T
    fig, ax = plt.subplots(figsize=(5, 3.4))
    mesh = ax.pcolormesh(lat_centers, np.arange(v.levels), shown, vmin=0, vmax=1,
                         cmap="viridis", shading="nearest")
    if np.isfinite(z).sum() >= 4 and len(lat_centers) > 1 and v.levels > 1:
        ax.contour(lat_centers, np.arange(v.levels), np.nan_to_num(z, nan=0.0).T,
                   levels=list(CONTOURS), colors=["white", "yellow"], linewidths=0.8)
    ax.invert_yaxis()
    ax.set_xlabel("latitude")
    ax.set_ylabel("level index")
    ax.set_title(f"{v.name} daily zonal R2")
    fig.colorbar(mesh, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_map(values, grid, title: str, path: Path) -> Path:
    values = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(values)
    fig, ax = plt.subplots(figsize=(5.5, 3))
    sc = ax.scatter(grid[ok, 1], grid[ok, 0], c=np.clip(values[ok], 0, 1), vmin=0, vmax=1,
                    s=18, cmap="viridis")
    if (~ok).any():
        ax.scatter(grid[~ok, 1], grid[~ok, 0], s=18, marker="x", color="grey")
    ax.set_xlim(0, 360)
    ax.set_ylim(-90, 90)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    fig.colorbar(sc, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_scatter(density, title: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(3.6, 3.4))
    counts = np.ma.masked_equal(density.counts.T, 0)
    mesh = ax.pcolormesh(density.x_centers, density.y_centers, counts, cmap="magma_r",
                         shading="nearest")
    lo, hi = density.x_centers[0], density.x_centers[-1]
    ax.plot([lo, hi], [lo, hi], color="grey", linewidth=0.6)
    ax.set_xlabel("truth [W/m2]")
    ax.set_ylabel("prediction [W/m2]")
    ax.set_title(title)
    fig.colorbar(mesh, ax=ax, label="count")
    fig.tight_layout()
    return _save(fig, path)


def render_figures(report: MetricReport, out_dir) -> list:
    """Write every figure for ``report`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = np.asarray(report.grid, dtype=np.float64)
    written = []
    for v in report.variables:
        s = slug(v.name)
        if v.profile is not None:
            written.append(plot_profile(v, out / f"profile_{s}.svg"))
        if v.zonal is not None:
            written.append(plot_zonal(v, report.lat_centers, out / f"zonal_{s}.svg"))
        if v.spatial is not None:
            if v.is_profile:
                for lv in report.selected_levels:
                    if lv < v.levels:
                        written.append(plot_map(v.spatial[:, lv], grid, f"{v.name} level {lv} R2",
                                                out / f"map_{s}_L{lv}.svg"))
            else:
                written.append(plot_map(v.spatial, grid, f"{v.name} R2", out / f"map_{s}.svg"))
        for key, dens in v.scatter.items():
            written.append(plot_scatter(dens, f"{v.name}{key.replace('_', ' ')}",
                                        out / f"scatter_{s}{key}.svg"))
    return written
