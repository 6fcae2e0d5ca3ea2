"""Grid search over encoder hyperparameters with resumable, per-trial result files."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .config import RunConfig
from .data import DatasetTensor, make_windows
from .errors import ConfigError, EmptyResultError, TrainingDiverged
from .nn import ModelConfig, Paraformer
from .optim import OPTIMIZERS, SCHEDULERS, train

logger = logging.getLogger(__name__)

AXES = ("n_layers", "d_model", "n_heads", "batch", "optimizer", "scheduler")
DIVERGENCE_FACTOR = 10.0
DEFAULT_EPOCH_CAP = 20


@dataclass
class SearchSpace:
    n_layers: list = field(default_factory=lambda: [2, 4, 6, 8, 10, 12])
    d_model: list = field(default_factory=lambda: [64, 128, 256, 512])
    n_heads: list = field(default_factory=lambda: [4, 8])
    batch: list = field(default_factory=lambda: [64, 128, 256, 512])
    optimizer: list = field(default_factory=lambda: ["sgd", "adam", "adamw"])
    scheduler: list = field(default_factory=lambda: ["cosine", "plateau"])
    window: Optional[list] = None   # extra axis, appended last when given

    def __post_init__(self):
        self.validate()

    @property
    def axis_names(self) -> tuple:
        return AXES + (("window",) if self.window is not None else ())

    def validate(self):
        for name in self.axis_names:
            values = getattr(self, name)
            if not isinstance(values, list) or not values:
                raise ConfigError(f"search axis {name!r} must be a non-empty list")
            if len(set(values)) != len(values):
                raise ConfigError(f"search axis {name!r} has duplicate values")
        for name in ("n_layers", "d_model", "n_heads", "batch") + (
                ("window",) if self.window is not None else ()):
            if any(isinstance(v, bool) or not isinstance(v, int) or v < 1
                   for v in getattr(self, name)):
                raise ConfigError(f"search axis {name!r} needs positive integers")
        if not set(self.optimizer) <= set(OPTIMIZERS):
            raise ConfigError(f"optimizer axis must be drawn from {OPTIMIZERS}")
        if not set(self.scheduler) <= set(SCHEDULERS):
            raise ConfigError(f"scheduler axis must be drawn from {SCHEDULERS}")
        bad = [(d, h) for d in self.d_model for h in self.n_heads if d % h]
        if bad:
            raise ConfigError(f"d_model {bad[0][0]} is not divisible by n_heads {bad[0][1]}")

    @classmethod
    def from_dict(cls, doc) -> "SearchSpace":
        if not isinstance(doc, dict) or not doc:
            raise ConfigError("search space must be a non-empty JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown search axis {unknown[0]!r}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SearchSpace":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)


def enumerate_grid(space: SearchSpace) -> list:
    """Cartesian product in axis order, last axis varying fastest."""
    return list(itertools.product(*(getattr(space, a) for a in space.axis_names)))


@dataclass
class TrialResult:
    index: int
    config: dict
    status: str                 # done | diverged | skipped
    best_val: float = math.nan
    final_val: float = math.nan
    epochs: int = 0
    seconds: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("best_val", "final_val"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        d = dict(d)
        for k in ("best_val", "final_val"):
            d[k] = math.nan if d.get(k) is None else float(d[k])
        return cls(**d)


def trial_path(results_dir, index: int) -> Path:
    return Path(results_dir) / f"trial-{index}.json"


def run_trial(index: int, combo: tuple, axis_names: tuple, train_d: DatasetTensor,
              val_d: DatasetTensor, base: RunConfig, epoch_cap: int) -> TrialResult:
    """Train one configuration; the outcome depends only on its arguments."""
    cfg = dict(zip(axis_names, combo))
    window = cfg.get("window", base.model.window)
    start = time.perf_counter()
    try:
        model = Paraformer(ModelConfig(d_model=cfg["d_model"], n_layers=cfg["n_layers"],
                                       n_heads=cfg["n_heads"], f_in=train_d.f_in,
                                       f_out=train_d.f_out, ffn_mult=base.model.ffn_mult,
                                       dropout=base.model.dropout, window=window))
        tr = make_windows(train_d, window, base.data.window_mode)
        va = make_windows(val_d, window, base.data.window_mode)
    except (ConfigError, EmptyResultError) as exc:
        return TrialResult(index, cfg, "skipped", message=str(exc))
    run = base.train_run()
    run.epochs = min(run.epochs, epoch_cap)
    run.batch_size, run.optimizer, run.scheduler = cfg["batch"], cfg["optimizer"], cfg["scheduler"]
    try:
        _, run = train(model, tr, va, run)
    except TrainingDiverged as exc:
        r = exc.run
        return TrialResult(index, cfg, "diverged", epochs=r.completed_epochs if r else 0,
                           seconds=time.perf_counter() - start, message=str(exc))
    final = run.val_history[-1] if run.val_history else run.initial_val
    status = "done"
    if not math.isfinite(run.best_val) or final > DIVERGENCE_FACTOR * run.initial_val:
        status = "diverged"
    return TrialResult(index, cfg, status, run.best_val, final, run.completed_epochs,
                       time.perf_counter() - start)


_WORKER: dict = {}


def _init_worker(train_d, val_d, base, epoch_cap, axis_names):
    _WORKER.update(train_d=train_d, val_d=val_d, base=base, epoch_cap=epoch_cap,
                   axis_names=axis_names)


def _worker(item):
    index, combo = item
    w = _WORKER
    return run_trial(index, combo, w["axis_names"], w["train_d"], w["val_d"], w["base"],
                     w["epoch_cap"])


def worker_count() -> int:
    raw = os.environ.get("PARAFORMER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PARAFORMER_THREADS must be an integer, got {raw!r}") from None


def _load_existing(path: Path, combo_cfg: dict) -> Optional[TrialResult]:
    if not path.exists():
        return None
    try:
        result = TrialResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, KeyError):
        logger.warning("ignoring unreadable %s", path)
        return None
    if result.config != combo_cfg:
        raise ConfigError(f"{path} holds a different configuration; use a fresh results dir")
    return result


def run_search(space: SearchSpace, train_d: DatasetTensor, val_d: DatasetTensor,
               results_dir, budget: int, base: Optional[RunConfig] = None,
               epoch_cap: int = DEFAULT_EPOCH_CAP, workers: Optional[int] = None) -> list:
    """Run (or resume) the first ``budget`` grid points; returns the leaderboard."""
    if budget < 1 or epoch_cap < 1:
        raise ConfigError("budget and epoch cap must be >= 1")
    base = base or RunConfig()
    results_dir = Path(results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    names = space.axis_names
    combos = enumerate_grid(space)[:budget]
    results, pending = {}, []
    for i, combo in enumerate(combos):
        found = _load_existing(trial_path(results_dir, i), dict(zip(names, combo)))
        if found is None:
            pending.append((i, combo))
        else:
            results[i] = found
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(min(workers, len(pending)), initializer=_init_worker,
                                 initargs=(train_d, val_d, base, epoch_cap, names)) as pool:
            done = pool.map(_worker, pending)
            for r in done:
                _write_trial(results_dir, r)
                results[r.index] = r
    else:
        for i, combo in pending:
            r = run_trial(i, combo, names, train_d, val_d, base, epoch_cap)
            _write_trial(results_dir, r)
            results[i] = r
    board = sort_leaderboard(list(results.values()))
    if not any(r.status == "done" for r in board):
        raise EmptyResultError("no trial completed")
    return board


def _write_trial(results_dir: Path, r: TrialResult):
    path = trial_path(results_dir, r.index)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(r.to_dict(), indent=1), encoding="utf-8")
    tmp.replace(path)
    logger.info("trial %d %s best_val=%s", r.index, r.status, r.best_val)


def _rank_key(r: TrialResult):
    done = r.status == "done"
    return (0 if done else 1 if r.status == "diverged" else 2,
            r.best_val if done else math.inf, r.index)


def sort_leaderboard(results: list) -> list:
    """Done trials by best val MSE, then diverged, then skipped; ties by index."""
    return sorted(results, key=_rank_key)


def read_results(results_dir) -> list:
    return [TrialResult.from_dict(json.loads(p.read_text(encoding="utf-8")))
            for p in sorted(Path(results_dir).glob("trial-*.json"))]


def select_best(board: list) -> TrialResult:
    for r in board:
        if r.status == "done":
            return r
    raise EmptyResultError("every trial diverged or was skipped")


def write_leaderboard(board: list, path) -> None:
    names = list(board[0].config) if board else list(AXES)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "index"] + names + ["val_mse", "status", "epochs"])
        for rank, r in enumerate(board, 1):
            val = "" if not math.isfinite(r.best_val) else repr(r.best_val)
            w.writerow([rank, r.index] + [r.config[n] for n in names] + [val, r.status, r.epochs])


def as_run_config(base: RunConfig, r: TrialResult) -> RunConfig:
    """Base config with a trial's axis values filled in."""
    doc = base.to_dict()
    for k in ("n_layers", "d_model", "n_heads", "window"):
        if k in r.config:
            doc["model"][k] = r.config[k]
    doc["train"].update(batch=r.config["batch"], optimizer=r.config["optimizer"],
                        scheduler=r.config["scheduler"])
    return RunConfig.from_dict(doc)

