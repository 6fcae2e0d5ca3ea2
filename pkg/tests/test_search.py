import csv
import json
import math

import numpy as np
import pytest

from paraformer import data as D
from paraformer import search as S
from paraformer.config import RunConfig
from paraformer.errors import ConfigError, EmptyResultError
from paraformer.search import SearchSpace, TrialResult

TINY = dict(n_layers=[1], d_model=[8], n_heads=[2], batch=[16], optimizer=["adam"],
            scheduler=["cosine"])
BASE = RunConfig.from_dict({"model": {"dropout": 0.0, "window": 3}, "train": {"lr": 1e-3}})


@pytest.fixture(scope="module")
def splits():
    d = D.generate_synthetic("v1_small", T=120, G=3, seed=0, alpha=1.0)
    return D.prepare_splits(d)


def grid_and_determinism(tmp_path, splits) -> bool:
    """1152 unique default tuples, and two identical searches give identical leaderboards."""
    grid = S.enumerate_grid(SearchSpace())
    ok = len(grid) == 1152 == len(set(grid))
    space = SearchSpace(**{**TINY, "batch": [8, 16], "optimizer": ["adam", "sgd"]})
    boards = []
    for name in ("a", "b"):
        board = S.run_search(space, splits.train, splits.val, tmp_path / name, budget=4,
                             base=BASE, epoch_cap=2)
        S.write_leaderboard(board, tmp_path / name / "leaderboard.csv")
        boards.append((tmp_path / name / "leaderboard.csv").read_bytes())
    return ok and boards[0] == boards[1]


# ---------------------------------------------------------------- enumeration

def test_default_grid_count_and_order():
    grid = S.enumerate_grid(SearchSpace())
    assert len(grid) == 6 * 4 * 2 * 4 * 3 * 2 == 1152
    assert len(set(grid)) == 1152
    assert grid[0] == (2, 64, 4, 64, "sgd", "cosine")
    assert grid[1] == (2, 64, 4, 64, "sgd", "plateau")
    assert grid[-1] == (12, 512, 8, 512, "adamw", "plateau")


def test_singleton_axes_give_one_tuple():
    assert S.enumerate_grid(SearchSpace(**TINY)) == [(1, 8, 2, 16, "adam", "cosine")]


def test_window_axis_is_appended_last():
    space = SearchSpace(**TINY, window=[1, 5])
    assert space.axis_names[-1] == "window"
    assert [g[-1] for g in S.enumerate_grid(space)] == [1, 5]


def test_reported_winner_is_representable():
    assert (6, 256, 4, 512, "adamw", "plateau") in S.enumerate_grid(SearchSpace())


@pytest.mark.parametrize("doc", [{}, {"depth": [2]}, {"n_layers": []}, {"n_heads": [3]},
                                 {"optimizer": ["lion"]}, {"batch": [0]}, {"d_model": [64, 64]}])
def test_bad_spaces_rejected(doc):
    with pytest.raises(ConfigError):
        SearchSpace.from_dict(doc)


def test_space_overrides_from_file(tmp_path):
    p = tmp_path / "space.json"
    p.write_text(json.dumps({"n_layers": [2, 4], "optimizer": ["adamw"]}))
    space = SearchSpace.load(p)
    assert len(S.enumerate_grid(space)) == 2 * 4 * 2 * 4 * 1 * 2


# ------------------------------------------------------------------ execution

def test_budget_one_runs_first_tuple(tmp_path, splits):
    space = SearchSpace(**{**TINY, "batch": [8, 16]})
    board = S.run_search(space, splits.train, splits.val, tmp_path, budget=1, base=BASE,
                         epoch_cap=2)
    assert len(board) == 1 and board[0].index == 0 and board[0].config["batch"] == 8
    assert board[0].status == "done" and math.isfinite(board[0].best_val)
    assert board[0].epochs == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["trial-0.json"]


def test_grid_and_leaderboard_determinism(tmp_path, splits):
    assert grid_and_determinism(tmp_path, splits)


def test_trial_is_hermetic(tmp_path, splits):
    space = SearchSpace(**{**TINY, "batch": [8, 16]})
    board = S.run_search(space, splits.train, splits.val, tmp_path, budget=2, base=BASE,
                         epoch_cap=2)
    alone = S.run_trial(1, S.enumerate_grid(space)[1], space.axis_names, splits.train,
                        splits.val, BASE, 2)
    assert [r for r in board if r.index == 1][0].best_val == alone.best_val


def test_resume_skips_finished_trials(tmp_path, splits):
    space = SearchSpace(**{**TINY, "batch": [8, 16, 32]})
    S.run_search(space, splits.train, splits.val, tmp_path, budget=2, base=BASE, epoch_cap=1)
    marker = S.trial_path(tmp_path, 0)
    doc = json.loads(marker.read_text())
    doc["message"] = "kept"
    marker.write_text(json.dumps(doc))
    board = S.run_search(space, splits.train, splits.val, tmp_path, budget=3, base=BASE,
                         epoch_cap=1)
    assert len(board) == 3
    assert [r for r in board if r.index == 0][0].message == "kept"


def test_resume_with_other_space_is_refused(tmp_path, splits):
    S.run_search(SearchSpace(**TINY), splits.train, splits.val, tmp_path, budget=1, base=BASE,
                 epoch_cap=1)
    other = SearchSpace(**{**TINY, "batch": [32]})
    with pytest.raises(ConfigError):
        S.run_search(other, splits.train, splits.val, tmp_path, budget=1, base=BASE, epoch_cap=1)


def test_diverged_trials_are_recorded(tmp_path, splits):
    base = RunConfig.from_dict({"model": {"dropout": 0.0, "window": 3},
                                "train": {"lr": 1e6}})
    space = SearchSpace(**{**TINY, "optimizer": ["sgd", "adam"]})
    with pytest.raises(EmptyResultError), np.errstate(all="ignore"):
        S.run_search(space, splits.train, splits.val, tmp_path, budget=2, base=base, epoch_cap=3)
    assert {r.status for r in S.read_results(tmp_path)} == {"diverged"}


def test_all_skipped_is_an_error(tmp_path, splits):
    # a window longer than the validation split cannot be formed
    space = SearchSpace(**TINY, window=[64])
    with pytest.raises(EmptyResultError):
        S.run_search(space, splits.train, splits.val, tmp_path, budget=1, base=BASE, epoch_cap=1)
    assert json.loads(S.trial_path(tmp_path, 0).read_text())["status"] == "skipped"


def test_bad_budget(tmp_path, splits):
    with pytest.raises(ConfigError):
        S.run_search(SearchSpace(**TINY), splits.train, splits.val, tmp_path, budget=0)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("PARAFORMER_THREADS", "3")
    assert S.worker_count() == 3
    monkeypatch.setenv("PARAFORMER_THREADS", "many")
    with pytest.raises(ConfigError):
        S.worker_count()


def test_parallel_matches_serial(tmp_path, splits):
    space = SearchSpace(**{**TINY, "batch": [8, 16]})
    a = S.run_search(space, splits.train, splits.val, tmp_path / "a", 2, BASE, 1, workers=1)
    b = S.run_search(space, splits.train, splits.val, tmp_path / "b", 2, BASE, 1, workers=2)
    assert [(r.index, r.best_val) for r in a] == [(r.index, r.best_val) for r in b]


# ------------------------------------------------------------- leaderboard

def _r(i, status, val):
    return TrialResult(i, {"batch": i}, status, val, val, 1)


def test_sort_is_total_and_breaks_ties_by_index():
    rs = [_r(3, "done", 0.5), _r(1, "diverged", math.nan), _r(0, "done", 0.5),
          _r(2, "skipped", math.nan), _r(4, "done", 0.1)]
    want = [4, 0, 3, 1, 2]
    assert [r.index for r in S.sort_leaderboard(rs)] == want
    assert [r.index for r in S.sort_leaderboard(rs[::-1])] == want


def test_select_best():
    assert S.select_best([_r(7, "done", 1.0)]).index == 7
    assert S.select_best(S.sort_leaderboard([_r(2, "done", 0.3), _r(1, "done", 0.3)])).index == 1
    with pytest.raises(EmptyResultError):
        S.select_best([_r(0, "diverged", math.nan)])


def test_result_json_round_trip():
    r = _r(0, "diverged", math.nan)
    back = TrialResult.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.index == 0 and math.isnan(back.best_val)


def test_leaderboard_csv(tmp_path):
    board = [TrialResult(0, dict(zip(S.AXES, (2, 64, 4, 64, "sgd", "cosine"))), "done", 0.25)]
    S.write_leaderboard(board, tmp_path / "lb.csv")
    rows = list(csv.reader(open(tmp_path / "lb.csv")))
    assert rows[0] == ["rank", "index", *S.AXES, "val_mse", "status", "epochs"]
    assert rows[1][:3] == ["1", "0", "2"] and rows[1][-3:] == ["0.25", "done", "0"]


def test_as_run_config():
    r = TrialResult(0, {"n_layers": 4, "d_model": 128, "n_heads": 8, "batch": 64,
                        "optimizer": "sgd", "scheduler": "cosine", "window": 3}, "done", 0.1)
    cfg = S.as_run_config(RunConfig(), r)
    assert (cfg.model.n_layers, cfg.model.d_model, cfg.model.window, cfg.train.batch,
            cfg.train.optimizer) == (4, 128, 3, 64, "sgd")


# ---------------------------------------------------------------- directional

def test_memory_window_wins_small_search(tmp_path):
    d = D.generate_synthetic("v1_small", T=1024, G=8, seed=0, alpha=1.0, rho=0.9)
    s = D.prepare_splits(d)
    space = SearchSpace(n_layers=[2], d_model=[32], n_heads=[4], batch=[32, 64],
                        optimizer=["sgd", "adam", "adamw"], scheduler=["cosine"], window=[1, 5])
    base = RunConfig.from_dict({"model": {"dropout": 0.0}, "train": {"lr": 1e-3}})
    board = S.run_search(space, s.train, s.val, tmp_path, budget=12, base=base, epoch_cap=8)
    assert len(board) == 12
    assert S.select_best(board).config["window"] == 5
