"""The nine acceptance criteria, each reported as one PASS/FAIL line."""
import json
import time

import numpy as np

from paraformer import data as D
from paraformer import nn
from paraformer import tensor as tt
from paraformer.checkpoint import read_checkpoint
from paraformer.cli import main
from paraformer.errors import FormatError, NumericError
from paraformer.experiments import memory_trial, overfit_capacity
from paraformer.nn import MlpConfig, ModelConfig, Paraformer
from paraformer.optim import CosineScheduler, PlateauScheduler
from paraformer.tensor import Tensor
from paraformer.variables import catalog

from test_checkpoint import checkpoint_round_trip
from test_data import check_window_invariants
from test_metrics import metric_oracle_case
from test_search import grid_and_determinism
from test_tensor import OPS


def test_1_gradient_correctness(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {}
    for name, op in OPS.items():
        a = Tensor(rng.standard_normal((3, 4)) + 0.1, requires_grad=True)
        b, m, u, v = (Tensor(rng.standard_normal(s), requires_grad=True)
                      for s in [(3, 4), (4, 4), (4,), (4,)])
        w = Tensor(rng.standard_normal((3, 4)))
        worst[name] = tt.gradient_check(lambda: (op(a, b, m, u, v) * w).sum(), [a, b, m, u, v])

    q, k, v = (Tensor(rng.standard_normal((1, 2, 3, 4)), requires_grad=True) for _ in range(3))
    wa = Tensor(rng.standard_normal((1, 2, 3, 4)))
    worst["attention"] = tt.gradient_check(
        lambda: (nn.scaled_dot_product_attention(q, k, v)[0] * wa).sum(), [q, k, v])

    cfg = ModelConfig(8, 1, 2, 5, 3, dropout=0.0, window=3)
    p = nn.init_params(cfg, 1)
    x = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True)
    we = Tensor(rng.standard_normal((2, 3, 8)))
    layer = [x] + [t for n_, t in p.items() if n_.startswith("layers.0.")]
    worst["encoder_layer"] = tt.gradient_check(
        lambda: (nn.encoder_layer_forward(x, p, "layers.0", 2) * we).sum(), layer)

    mcfg = MlpConfig(4, 2, [6, 5])
    mp = nn.init_params(mcfg, 2)
    xm, ym = rng.standard_normal((3, 4)), rng.standard_normal((3, 2))
    worst["mlp"] = tt.gradient_check(
        lambda: tt.square(nn.mlp_forward(xm, mp, mcfg) - Tensor(ym)).mean(), list(mp.values()))

    model = Paraformer(ModelConfig(8, 1, 1, 5, 3, dropout=0.0, window=3))
    params = model.init_params(4)
    xs, ys = rng.standard_normal((2, 3, 5)), rng.standard_normal((2, 3, 3))
    worst["paraformer(d=8,1 layer,1 head,L=3)"] = tt.gradient_check(
        lambda: tt.square(model.forward(params, xs) - Tensor(ys)).mean(), list(params.values()))

    seconds = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = worst[top] < 1e-4 and seconds < 60
    verdict(1, "gradient correctness", ok,
            f"{len(worst)} checks, max rel err {worst[top]:.2e} ({top}), {seconds:.1f}s")


def test_2_metric_oracle_equivalence(verdict):
    bad = [v for seed in range(1000, 1050) for v in metric_oracle_case(seed)]
    verdict(2, "metric oracle equivalence", not bad,
            f"50 cases, {len(bad)} violations" + (f"; first: {bad[0]}" if bad else ""))


def test_3_windowing_invariants(verdict):
    rng = np.random.default_rng(3)
    violations = 0
    for i in range(200):
        L = int(rng.integers(1, 8))
        T = int(rng.integers(L, 65))
        G = int(rng.integers(1, 9))
        violations += check_window_invariants(T, G, L, seed=i)
    verdict(3, "windowing invariants", violations == 0, f"200 instances, {violations} violations")


def test_4_overfit_capacity(verdict):
    r = overfit_capacity()
    ok = r.train_mse < 1e-3 and r.steps <= 2000 and r.windows == 512 and r.seconds < 600
    verdict(4, "overfit capacity", ok,
            f"train MSE {r.train_mse:.2e} after {r.steps} steps on {r.windows} windows, "
            f"{r.seconds:.0f}s")


def test_5_memory_advantage(verdict):
    start = time.perf_counter()
    memory = [memory_trial(s, alpha=1.0, beta=0.5, rho=0.9) for s in range(3)]
    control = [memory_trial(s, alpha=0.0, beta=0.0, rho=0.9) for s in range(3)]
    seconds = time.perf_counter() - start
    gap = float(np.mean([r.gap for r in memory]))
    ctrl = float(np.mean([r.gap for r in control]))
    ok = gap >= 0.10 and abs(ctrl) <= 0.03 and seconds < 1800
    verdict(5, "memory advantage", ok,
            f"alpha=1 gap {gap:+.3f} (per seed {[round(r.gap, 3) for r in memory]}), "
            f"alpha=0 gap {ctrl:+.3f}, {seconds:.0f}s")


def test_6_scheduler_semantics(verdict):
    s = PlateauScheduler(1e-4, patience=10, factor=0.5)
    s.epoch_end(1.0)
    lrs = [s.epoch_end(1.0) for _ in range(11)]
    first_halving = lrs.index(5e-5) + 1
    c = CosineScheduler(1e-3, t_max=40, eta_min=1e-6)
    err = max(abs(c.lr_at(0) - 1e-3), abs(c.lr_at(40) - 1e-6),
              abs(c.lr_at(20) - (1e-3 + 1e-6) / 2))
    ok = first_halving == 11 and lrs[:10] == [1e-4] * 10 and err <= 1e-12
    verdict(6, "scheduler semantics", ok,
            f"plateau halves after {first_halving} flat epochs, cosine endpoint err {err:.1e}")


def test_7_grid_and_leaderboard(verdict, tmp_path):
    d = D.generate_synthetic("v1_small", T=120, G=3, seed=0, alpha=1.0)
    ok = grid_and_determinism(tmp_path, D.prepare_splits(d))
    verdict(7, "grid enumeration and leaderboard determinism", ok,
            "1152 unique tuples, identical leaderboards across two runs")


def test_8_format_round_trips(verdict, tmp_path):
    d = D.generate_synthetic("v2_small", T=20, G=3, seed=8)
    D.write_dataset(d, tmp_path / "d.cpsd")
    back = D.read_dataset(tmp_path / "d.cpsd")
    ok = (back.inputs.tobytes() == d.inputs.tobytes()
          and back.targets.tobytes() == d.targets.tobytes()
          and back.meta.to_dict() == d.meta.to_dict())
    ok = ok and checkpoint_round_trip(tmp_path / "m.cpkt")

    raw_d = (tmp_path / "d.cpsd").read_bytes()
    raw_c = (tmp_path / "m.cpkt").read_bytes()
    header_end = {"d.cpsd": 32, "m.cpkt": 12 + int.from_bytes(raw_c[8:12], "little")}
    crashes, handled = [], 0
    for name, raw in {"d.cpsd": raw_d, "m.cpkt": raw_c}.items():
        reader = D.read_dataset if name.endswith("cpsd") else read_checkpoint
        for cut in (0, 3, 4, 8, 12, 20, 31, len(raw) // 2, len(raw) - 1):
            for blob in (raw[:cut], raw[:cut] + b"\xff" * 4 + raw[cut + 4:]):
                if blob == raw:
                    continue
                # a payload overwrite can decode to NaN, which the finite-values
                # invariant reports as a numeric error
                allowed = FormatError if cut < header_end[name] else (FormatError, NumericError)
                (tmp_path / name).write_bytes(blob)
                try:
                    reader(tmp_path / name)
                except allowed:
                    handled += 1
                except Exception as exc:  # anything else is a crash
                    crashes.append(f"{name}[{cut}]: {type(exc).__name__}")
                else:
                    if len(blob) != len(raw) or cut < header_end[name]:
                        crashes.append(f"{name}[{cut}]: accepted corrupt file")
    ok = ok and not crashes
    verdict(8, "format round trips", ok,
            f"bit-exact CPSD and CPKT; {handled} corrupt files raised designated errors, "
            f"{len(crashes)} crashes" + (f" ({crashes[0]})" if crashes else ""))


def test_9_cli_end_to_end(verdict, tmp_path):
    start = time.perf_counter()
    cfg = {"model": {"d_model": 64, "n_layers": 2, "n_heads": 4},
           "train": {"lr": 1e-3, "batch": 64}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    codes = [
        main(["gen", "--out", str(tmp_path / "d.cpsd")]),
        main(["train", "--data", str(tmp_path / "d.cpsd"), "--config", str(tmp_path / "c.json"),
              "--epochs", "5", "--out-ckpt", str(tmp_path / "m.cpkt")]),
        main(["eval", "--data", str(tmp_path / "d.cpsd"), "--ckpt", str(tmp_path / "m.cpkt"),
              "--report", str(tmp_path / "out" / "report.json"),
              "--svg-dir", str(tmp_path / "out" / "svg")]),
    ]
    seconds = time.perf_counter() - start
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    names = [v["name"] for v in doc["variables"]]
    finite = all(np.isfinite(v["mae"]) and np.isfinite(v["rmse"]) for v in doc["variables"])
    ok = codes == [0, 0, 0] and names == [v.name for v in catalog("v1")[1]] and finite
    ok = ok and seconds < 300
    verdict(9, "end-to-end CLI", ok,
            f"exit codes {codes}, {len(names)} variables in catalog order, {seconds:.0f}s")
