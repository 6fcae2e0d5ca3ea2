"""Gridded datasets: schema, binary I/O, subsampling, splits, normalization,
temporal windowing and a synthetic generator with tunable temporal memory.

Arrays are laid out ``[time, grid, channel]``. Channels are the concatenated
levels of the variables listed in the metadata, in catalog order.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (BadMagicError, ConfigError, ContractError, EmptyResultError, FormatError,
                     NumericError, SizeMismatchError, TruncatedFileError,
                     UnsupportedVersionError)
from .variables import VariableSpec, catalog, channel_slices, total_channels

MAGIC = b"CPSD"
VERSION = 1
_HEADER = struct.Struct("<4sIQQII")
CONST_STD = 1e-12


@dataclass
class DatasetMeta:
    grid: np.ndarray                  # [G, 2] (lat_deg, lon_deg)
    in_vars: list
    out_vars: list
    t0: str = "0001-02-01T00:00:00"
    step_minutes: int = 20

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64).reshape(-1, 2)
        if self.step_minutes < 1:
            raise ConfigError("step_minutes must be positive")
        lat, lon = self.grid[:, 0], self.grid[:, 1]
        if np.any(np.abs(lat) > 90) or np.any(lon < 0) or np.any(lon >= 360):
            raise ConfigError("grid coordinates out of range")

    @property
    def lats(self) -> np.ndarray:
        return self.grid[:, 0]

    @property
    def lons(self) -> np.ndarray:
        return self.grid[:, 1]

    @property
    def f_in(self) -> int:
        return total_channels(self.in_vars)

    @property
    def f_out(self) -> int:
        return total_channels(self.out_vars)

    def to_dict(self) -> dict:
        return {
            "grid": [[float(a), float(b)] for a, b in self.grid],
            "in_vars": [v.to_dict() for v in self.in_vars],
            "out_vars": [v.to_dict() for v in self.out_vars],
            "t0": self.t0,
            "step_minutes": int(self.step_minutes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        return cls(
            grid=np.asarray(d["grid"], dtype=np.float64).reshape(-1, 2),
            in_vars=[VariableSpec.from_dict(v) for v in d["in_vars"]],
            out_vars=[VariableSpec.from_dict(v) for v in d["out_vars"]],
            t0=d["t0"],
            step_minutes=int(d["step_minutes"]),
        )


@dataclass
class DatasetTensor:
    inputs: np.ndarray   # [T, G, f_in]
    targets: np.ndarray  # [T, G, f_out]
    meta: DatasetMeta

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ContractError("inputs and targets must be [T, G, F] arrays")
        T, G, f_in = self.inputs.shape
        if self.targets.shape[:2] != (T, G):
            raise ContractError(f"inputs {self.inputs.shape} and targets "
                                f"{self.targets.shape} disagree on (T, G)")
        if T < 1 or G < 1:
            raise EmptyResultError("dataset has no time steps or no grid cells")
        if len(self.meta.grid) != G:
            raise ContractError(f"metadata lists {len(self.meta.grid)} grid cells, data has {G}")
        if self.meta.f_in != f_in or self.meta.f_out != self.targets.shape[2]:
            raise ContractError(
                f"variable levels sum to ({self.meta.f_in}, {self.meta.f_out}) but data "
                f"has ({f_in}, {self.targets.shape[2]}) channels")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.targets).all()):
            raise NumericError("dataset contains non-finite values")

    @property
    def T(self) -> int:
        return self.inputs.shape[0]

    @property
    def G(self) -> int:
        return self.inputs.shape[1]

    @property
    def f_in(self) -> int:
        return self.inputs.shape[2]

    @property
    def f_out(self) -> int:
        return self.targets.shape[2]

    def time_slice(self, start: int, stop: int) -> "DatasetTensor":
        return DatasetTensor(self.inputs[start:stop], self.targets[start:stop], self.meta)


# ---------------------------------------------------------------- windowing

@dataclass
class WindowBatch:
    x: np.ndarray            # [B, L, f_in]
    y: np.ndarray            # [B, L, f_out]
    times: np.ndarray        # [B, L] source time index
    grids: np.ndarray        # [B] source grid index
    score_mask: np.ndarray   # [B, L] bool

    def __len__(self):
        return self.x.shape[0]

    @property
    def window(self) -> int:
        return self.x.shape[1]

    @property
    def provenance(self) -> np.ndarray:
        """``[B, L, 2]`` array of (t, g) pairs."""
        g = np.broadcast_to(self.grids[:, None], self.times.shape)
        return np.stack([self.times, g], axis=-1)

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(self.x[idx], self.y[idx], self.times[idx],
                           self.grids[idx], self.score_mask[idx])


def _per_grid(arr: np.ndarray) -> np.ndarray:
    """[n, L, G, F] -> [G*n, L, F], ordered by grid then window index."""
    n, L, G, F = arr.shape
    return np.ascontiguousarray(arr.transpose(2, 0, 1, 3)).reshape(G * n, L, F)


def make_nonoverlapping_windows(d: DatasetTensor, L: int) -> WindowBatch:
    if L < 1:
        raise ConfigError("window length must be >= 1")
    n = d.T // L
    if n == 0:
        raise EmptyResultError(f"T={d.T} is shorter than the window length {L}")
    x = d.inputs[:n * L].reshape(n, L, d.G, d.f_in)
    y = d.targets[:n * L].reshape(n, L, d.G, d.f_out)
    starts = np.arange(n) * L
    times = np.tile(starts[:, None] + np.arange(L)[None, :], (d.G, 1))
    grids = np.repeat(np.arange(d.G), n)
    return WindowBatch(_per_grid(x), _per_grid(y), times, grids,
                       np.ones((d.G * n, L), dtype=bool))


def make_sliding_windows(d: DatasetTensor, L: int) -> WindowBatch:
    """Stride-1 windows; only the final position of each window is scored."""
    if L < 1:
        raise ConfigError("window length must be >= 1")
    n = d.T - L + 1
    if n < 1:
        raise EmptyResultError(f"T={d.T} is shorter than the window length {L}")
    # sliding_window_view appends the window axis last: [n, G, F, L]
    x = sliding_window_view(d.inputs, L, axis=0).transpose(0, 3, 1, 2)
    y = sliding_window_view(d.targets, L, axis=0).transpose(0, 3, 1, 2)
    times = np.tile(np.arange(n)[:, None] + np.arange(L)[None, :], (d.G, 1))
    grids = np.repeat(np.arange(d.G), n)
    mask = np.zeros((d.G * n, L), dtype=bool)
    mask[:, -1] = True
    return WindowBatch(_per_grid(x), _per_grid(y), times, grids, mask)


def make_windows(d: DatasetTensor, L: int, mode: str) -> WindowBatch:
    if mode == "nonoverlap":
        return make_nonoverlapping_windows(d, L)
    if mode == "sliding":
        return make_sliding_windows(d, L)
    raise ConfigError(f"unknown window mode {mode!r}")


def unwindow(values: np.ndarray, batch: WindowBatch, T: int, G: int,
             scored_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Scatter per-position values ``[B, L, F]`` back onto a ``[T, G, F]`` grid.

    Returns the filled array (NaN where uncovered) and the coverage mask.
    """
    F = values.shape[-1]
    out = np.full((T, G, F), np.nan)
    covered = np.zeros((T, G), dtype=bool)
    sel = batch.score_mask if scored_only else np.ones_like(batch.score_mask)
    b, l = np.nonzero(sel)
    t = batch.times[b, l]
    g = batch.grids[b]
    out[t, g] = values[b, l]
    covered[t, g] = True
    return out, covered


# ------------------------------------------------------ subsampling & splits

def temporal_subsample(d: DatasetTensor, stride: int) -> DatasetTensor:
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if stride == 1:
        return d
    if stride >= d.T:
        raise EmptyResultError(f"stride {stride} >= T={d.T} leaves a single step")
    meta = replace(d.meta, step_minutes=d.meta.step_minutes * stride)
    return DatasetTensor(d.inputs[::stride], d.targets[::stride], meta)


def split_by_time(d: DatasetTensor, train_frac: float, val_frac: float):
    """Chronological train/val/test blocks; test takes whatever remains."""
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac > 1 + 1e-12:
        raise ConfigError(f"invalid split fractions {train_frac}/{val_frac}")
    # round away float noise such as 10 * 0.7 = 7.000000000000001
    n_train = int(math.floor(round(d.T * train_frac, 9)))
    n_trval = int(math.floor(round(d.T * (train_frac + val_frac), 9)))
    blocks = [(0, n_train), (n_train, n_trval), (n_trval, d.T)]
    for name, (a, b) in zip(("train", "val", "test"), blocks):
        if b <= a:
            raise ConfigError(f"{name} split is empty for T={d.T} with fractions "
                              f"{train_frac}/{val_frac}")
    return tuple(d.time_slice(a, b) for a, b in blocks)


# ------------------------------------------------------------ normalization

@dataclass
class NormStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @property
    def x_const(self) -> np.ndarray:
        return self.x_std < CONST_STD

    @property
    def y_const(self) -> np.ndarray:
        return self.y_std < CONST_STD


def _channel_stats(a: np.ndarray):
    flat = a.reshape(-1, a.shape[-1]).astype(np.float64)
    mu = flat.mean(axis=0)
    return mu, np.sqrt(((flat - mu) ** 2).mean(axis=0))


def compute_norm_stats(train: DatasetTensor) -> NormStats:
    xm, xs = _channel_stats(train.inputs)
    ym, ys = _channel_stats(train.targets)
    return NormStats(xm, xs, ym, ys)


def _standardize(a, mean, std):
    if a.shape[-1] != mean.shape[0]:
        raise ContractError(f"array has {a.shape[-1]} channels, stats have {mean.shape[0]}")
    const = std < CONST_STD
    safe = np.where(const, 1.0, std)
    out = (a.astype(np.float64) - mean) / safe
    out[..., const] = 0.0
    return out


def normalize_inputs(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return _standardize(x, stats.x_mean, stats.x_std)


def normalize_targets(y: np.ndarray, stats: NormStats) -> np.ndarray:
    return _standardize(y, stats.y_mean, stats.y_std)


def normalize(d: DatasetTensor, stats: NormStats) -> DatasetTensor:
    """Per-channel z-score; the result is held in float64."""
    return DatasetTensor(normalize_inputs(d.inputs, stats),
                         normalize_targets(d.targets, stats), d.meta)


def denormalize(pred: np.ndarray, stats: NormStats) -> np.ndarray:
    if pred.shape[-1] != stats.y_mean.shape[0]:
        raise ContractError(f"prediction has {pred.shape[-1]} channels, "
                            f"stats have {stats.y_mean.shape[0]}")
    std = np.where(stats.y_const, 0.0, stats.y_std)
    return pred * std + stats.y_mean


@dataclass
class Splits:
    train: DatasetTensor      # normalized
    val: DatasetTensor
    test: DatasetTensor
    stats: NormStats
    raw_test: DatasetTensor   # native units, same time range as ``test``


def prepare_splits(d: DatasetTensor, stride: int = 1, train_frac: float = 0.7,
                   val_frac: float = 0.1) -> Splits:
    """Subsample, split chronologically and normalize with train-split statistics."""
    d = temporal_subsample(d, stride)
    tr, va, te = split_by_time(d, train_frac, val_frac)
    stats = compute_norm_stats(tr)
    return Splits(normalize(tr, stats), normalize(va, stats), normalize(te, stats), stats, te)


# ---------------------------------------------------------------- synthetic

PRESETS = ("v1_small", "v2_small", "custom")
INPUT_PERSISTENCE = 0.5
MODES_PER_PROFILE = 3
N_LATENT = 4
LAG_GAIN = 2.0
NONLINEAR_GAIN = 0.5
NOISE_STD = 0.05
TARGET_WM2 = 10.0
MAX_LAG = 4

# (offset, scale) applied to the standardized input field
_INPUT_UNITS = {
    "Temperature": (250.0, 10.0),
    "Specific humidity": (5e-3, 2e-3),
    "Surface pressure": (9.8e4, 1.0e3),
    "Insolation": (340.0, 100.0),
    "Surface latent heat flux": (80.0, 30.0),
    "Surface sensible heat flux": (15.0, 10.0),
}


def fibonacci_grid(G: int) -> np.ndarray:
    """Near-uniform points on the sphere as ``[G, 2]`` (lat, lon) degrees."""
    i = np.arange(G) + 0.5
    lat = np.degrees(np.arcsin(1.0 - 2.0 * i / G))
    lon = np.mod(np.degrees(np.pi * (1.0 + 5 ** 0.5) * i), 360.0)
    return np.stack([lat, lon], axis=1)


def _mode_matrix(in_vars) -> np.ndarray:
    """Block-diagonal map from latent drivers to input channels.

    Profiles get a few cosine modes across levels (smooth in the vertical);
    scalars get one driver each. Rows are unit-norm so every channel has unit
    variance before the seasonal term is added.
    """
    blocks = []
    for v in in_vars:
        if v.is_profile:
            k = np.arange(v.levels) + 0.5
            blocks.append(np.stack([np.cos(np.pi * m * k / v.levels)
                                    for m in range(MODES_PER_PROFILE)], axis=1))
        else:
            blocks.append(np.ones((1, 1)))
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    M = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        M[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def _ar1(rng, shape, phi, n_steps):
    out = np.empty((n_steps,) + shape)
    out[0] = rng.standard_normal(shape)
    innov = math.sqrt(1.0 - phi * phi)
    for t in range(1, n_steps):
        out[t] = phi * out[t - 1] + innov * rng.standard_normal(shape)
    return out


def generate_synthetic(preset: str = "v1_small", T: int = 256, G: int = 16, seed: int = 0,
                       alpha: float = 1.0, rho: float = 0.9, beta: float = 0.5,
                       step_minutes: int = 140, variables: Optional[tuple] = None) -> DatasetTensor:
    """Synthetic ClimSim-shaped data whose targets remember past inputs.

    Per grid cell, with x the standardized input field and z a latent AR(1)
    process of persistence ``rho``::

        y_t = tanh(A x_t) + alpha (B x_{t-2} + C x_{t-4}) + beta D z_t + eps_t

    ``eps ~ N(0, 0.05^2)``. A..D are random projections fixed by ``seed``.
    Signals are expressed at roughly ``TARGET_WM2`` W/m^2 and stored in the
    native unit of each output variable (divided by its energy scale).

    ``preset="custom"`` takes ``variables=(in_vars, out_vars)``.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if T < 16 or G < 1:
        raise ConfigError(f"need T >= 16 and G >= 1, got T={T}, G={G}")
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"latent persistence rho must be in [0, 1), got {rho}")
    if preset == "custom":
        if variables is None:
            raise ConfigError("custom preset needs variables=(in_vars, out_vars)")
        in_vars, out_vars = variables
    else:
        in_vars, out_vars = catalog(preset)

    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    f_in, f_out = total_channels(in_vars), total_channels(out_vars)
    grid = fibonacci_grid(G)
    lat = np.radians(grid[:, 0])
    n_steps = T + MAX_LAG

    M = _mode_matrix(in_vars)
    A = NONLINEAR_GAIN * rng.standard_normal((f_out, f_in)) / math.sqrt(f_in)
    B = LAG_GAIN * rng.standard_normal((f_out, f_in)) / math.sqrt(f_in)
    C = LAG_GAIN * rng.standard_normal((f_out, f_in)) / math.sqrt(f_in)
    D = rng.standard_normal((f_out, N_LATENT)) / math.sqrt(N_LATENT)
    season_amp = rng.uniform(0.2, 0.4, f_in) * rng.choice([-1.0, 1.0], f_in)
    season_phase = rng.uniform(0, 2 * np.pi, f_in)
    lat_amp = rng.uniform(-0.3, 0.3, f_in)

    drivers = _ar1(rng, (G, M.shape[1]), INPUT_PERSISTENCE, n_steps)
    latent = _ar1(rng, (G, N_LATENT), rho, n_steps)
    noise = NOISE_STD * rng.standard_normal((T, G, f_out))

    day = (np.arange(n_steps) - MAX_LAG) * step_minutes / 1440.0
    seasonal = (np.sin(2 * np.pi * day[:, None, None] / 365.0 + season_phase)
                * np.sin(lat)[None, :, None] * season_amp
                + np.cos(2 * lat)[None, :, None] * lat_amp)
    x = drivers @ M.T + seasonal  # [n_steps, G, f_in]

    now = slice(MAX_LAG, None)
    y = (np.tanh(x[now] @ A.T)
         + alpha * (x[MAX_LAG - 2:-2] @ B.T + x[:-MAX_LAG] @ C.T)
         + beta * latent[now] @ D.T
         + noise)

    offsets = np.zeros(f_in)
    scales = np.ones(f_in)
    for v, sl in zip(in_vars, channel_slices(in_vars)):
        offsets[sl], scales[sl] = _INPUT_UNITS.get(v.name, (0.0, 1.0))
    escale = np.concatenate([v.energy_scale for v in out_vars])

    inputs = (offsets + scales * x[now]).astype(np.float32)
    targets = (y * TARGET_WM2 / escale).astype(np.float32)
    meta = DatasetMeta(grid=grid, in_vars=in_vars, out_vars=out_vars,
                       t0="0001-02-01T00:00:00", step_minutes=step_minutes)
    return DatasetTensor(inputs, targets, meta)


# ---------------------------------------------------------------- binary I/O

def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_dataset(d: DatasetTensor, path) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, d.T, d.G, d.f_in, d.f_out)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(d.inputs, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(d.targets, dtype="<f4").tobytes())
    sidecar_path(path).write_text(json.dumps(d.meta.to_dict(), indent=1), encoding="utf-8")


def read_dataset(path) -> DatasetTensor:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(raw)} bytes)")
    _, version, T, G, f_in, f_out = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    n_in, n_out = T * G * f_in, T * G * f_out
    expected = _HEADER.size + 4 * (n_in + n_out)
    if expected >= 2 ** 63:
        raise SizeMismatchError(f"{path}: declared sizes T={T} G={G} F={f_in}+{f_out} overflow")
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: header declares {expected} bytes, file has {len(raw)}")
    if len(raw) > expected:
        raise SizeMismatchError(f"{path}: {len(raw) - expected} bytes beyond the declared payload")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    inputs = body[:n_in].reshape(T, G, f_in).astype(np.float32)
    targets = body[n_in:].reshape(T, G, f_out).astype(np.float32)
    side = sidecar_path(path)
    try:
        meta = DatasetMeta.from_dict(json.loads(side.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{side}: unreadable metadata ({exc})") from None
    return DatasetTensor(inputs, targets, meta)
