"""Command-line entry point: gen, train, eval, search.

Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
3 numeric failure (divergence, no completed trial).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig
from .errors import (ConfigError, ContractError, EmptyResultError, FormatError, NumericError,
                     ShapeError, TrainingDiverged)
from .nn import build_model
from .optim import jsonl_logger, predict, train
from .report import build_report, format_table, write_report

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("paraformer")


class NoCompletedTrials(Exception):
    pass


# ------------------------------------------------------------------ commands

def cmd_gen(args) -> int:
    d = D.generate_synthetic(args.preset, T=args.t, G=args.g, seed=args.seed, alpha=args.alpha,
                             rho=args.rho, beta=args.beta)
    D.write_dataset(d, args.out)
    print(f"wrote {args.out}: T={d.T} G={d.G} f_in={d.f_in} f_out={d.f_out} "
          f"step={d.meta.step_minutes}min")
    return EXIT_OK


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    data_path = args.data or cfg.data.path
    if not data_path:
        raise ConfigError("no dataset: pass --data or set data.path")
    cfg.data.path = str(data_path)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    print("# resolved config")
    print(cfg.to_json())
    d = D.read_dataset(cfg.data.path)
    s = D.prepare_splits(d, cfg.data.stride, cfg.data.train_frac, cfg.data.val_frac)
    model = build_model(cfg.model_config(d.f_in, d.f_out))
    tr = D.make_windows(s.train, cfg.window, cfg.data.window_mode)
    va = D.make_windows(s.val, cfg.window, cfg.data.window_mode)
    write, close = jsonl_logger(args.log) if args.log else (None, lambda: None)
    try:
        params, run = train(model, tr, va, cfg.train_run(), log=write)
    except TrainingDiverged as exc:
        if exc.params is not None:
            write_checkpoint(args.out_ckpt, cfg, exc.params)
        raise
    finally:
        close()
    write_checkpoint(args.out_ckpt, cfg, params)
    print(f"epochs={run.completed_epochs} steps={run.steps} best_val={run.best_val:.6g} "
          f"(epoch {run.best_epoch}) seconds={run.seconds:.1f}")
    print(f"checkpoint -> {args.out_ckpt}")
    return EXIT_OK


def _check_widths(cfg: RunConfig, params: dict, d) -> None:
    first = params.get("embed.weight", params.get("fc0.weight"))
    head = [k for k in params if k.endswith(".weight")][-1]
    f_in, f_out = first.shape[0], params[head].shape[1]
    if (f_in, f_out) != (d.f_in, d.f_out):
        raise ContractError(f"checkpoint expects f_in={f_in}, f_out={f_out} but dataset has "
                            f"f_in={d.f_in}, f_out={d.f_out}")


def cmd_eval(args) -> int:
    cfg, params = read_checkpoint(args.ckpt)
    data_path = args.data or cfg.data.path
    if not data_path:
        raise ConfigError("no dataset: pass --data")
    d = D.read_dataset(data_path)
    _check_widths(cfg, params, d)
    model = build_model(cfg.model_config(d.f_in, d.f_out))
    expected = model.init_params(0)
    if {k: v.shape for k, v in expected.items()} != {k: v.shape for k, v in params.items()}:
        raise ContractError("checkpoint parameters do not match the model in its config")

    sub = D.temporal_subsample(d, cfg.data.stride)
    raw = dict(zip(("train", "val", "test"),
                   D.split_by_time(sub, cfg.data.train_frac, cfg.data.val_frac)))[args.split]
    stats = D.compute_norm_stats(D.split_by_time(sub, cfg.data.train_frac, cfg.data.val_frac)[0])
    norm = D.normalize(raw, stats)
    wb = D.make_windows(norm, cfg.window, cfg.data.window_mode)
    pred_n, covered = D.unwindow(predict(model, params, wb.x), wb, norm.T, norm.G)
    pred = D.denormalize(np.where(covered[..., None], pred_n, 0.0), stats)
    truth = np.asarray(raw.targets, dtype=np.float64)

    e = cfg.eval
    report = build_report(pred, truth, covered, raw.meta, n_lat_bins=e.lat_bins,
                          selected_levels=tuple(e.levels), scatter_bins=e.scatter_bins,
                          split=args.split)
    report_path = Path(args.report or e.report)
    write_report(report, report_path)
    print(format_table(report))
    print(f"report -> {report_path}")
    svg_dir = args.svg_dir or e.svg_dir
    if svg_dir:
        from .plotting import render_figures
        figs = render_figures(report, svg_dir)
        print(f"{len(figs)} figures -> {svg_dir}")
    return EXIT_OK


def cmd_search(args) -> int:
    from .search import (SearchSpace, read_results, run_search, select_best, sort_leaderboard,
                         write_leaderboard)
    cfg = _load_config(args)
    space = SearchSpace.load(args.space) if args.space else SearchSpace()
    d = D.read_dataset(cfg.data.path)
    s = D.prepare_splits(d, cfg.data.stride, cfg.data.train_frac, cfg.data.val_frac)
    try:
        run_search(space, s.train, s.val, args.results, args.budget, base=cfg,
                   epoch_cap=args.epoch_cap)
    except EmptyResultError as exc:
        raise NoCompletedTrials(str(exc)) from None
    # aggregate from the trial files so resumed and fresh runs agree
    board = sort_leaderboard(read_results(args.results))
    out = Path(args.results) / "leaderboard.csv"
    write_leaderboard(board, out)
    best = select_best(board)
    print(f"{len(board)} trials; best #{best.index} {best.config} val_mse={best.best_val:.6g}")
    print(f"leaderboard -> {out}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paraformer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--preset", default="v1_small", choices=D.PRESETS[:2])
    g.add_argument("--t", type=int, default=2048)
    g.add_argument("--g", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--beta", type=float, default=0.5)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model from a run config")
    t.add_argument("--data")
    t.add_argument("--config")
    t.add_argument("--out-ckpt", required=True)
    t.add_argument("--log")
    t.add_argument("--epochs", type=int, help="override train.epochs")
    t.add_argument("--seed", type=int, help="override train.seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint and write the report")
    e.add_argument("--data")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--report")
    e.add_argument("--svg-dir")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("search", help="grid search over encoder hyperparameters")
    s.add_argument("--data")
    s.add_argument("--config")
    s.add_argument("--space")
    s.add_argument("--budget", type=int, default=1)
    s.add_argument("--epoch-cap", type=int, default=20)
    s.add_argument("--results", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_search)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, ShapeError, EmptyResultError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, NumericError, NoCompletedTrials) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
