"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear even without ``-s``).
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from anyloss.approx import TABLE_LEVELS, approximate, valid_L_range
from anyloss.cli import main as cli_main
from anyloss.confusion import Accuracy, hard_confusion, soft_confusion, threshold_labels
from anyloss.data import synth_imbalanced
from anyloss.evaluation import achievement_rate, bayesian_sign_test, cross_validate
from anyloss.gradcheck import LOSS_TOL, NET_TOL, run_suite
from anyloss.losses import LossSpec, loss_from_name
from anyloss.network import NetworkConfig, TrainConfig, init, loss_and_grads, train

DATA = Path(__file__).resolve().parent.parent / "data"

TABLE = {
    0.1: (5.50, 91.84),
    0.01: (9.38, 74.97),
    0.001: (13.85, 73.62),
    1e-14: (64.48, 73.47),
    1e-15: (69.08, 73.47),
    1e-16: (73.69, 73.47),
}


@pytest.fixture
def verdict(capsys):
    def _verdict(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return _verdict


def test_criterion_1_l_range_table(verdict, capsys):
    start = time.perf_counter()
    code = cli_main(["lrange"])
    out = capsys.readouterr().out
    elapsed = time.perf_counter() - start
    rows = [line.split() for line in out.strip().splitlines()[1:]]
    got = {float(r[0]): (float(r[1]), float(r[2]), r[-1] == "empty") for r in rows}
    bad = []
    for t in TABLE_LEVELS:
        lo, hi = TABLE[t]
        glo, ghi, empty = got[t]
        if abs(glo - lo) > 0.01 + 1e-9 or abs(ghi - hi) > 0.01 + 1e-9 or empty != (t == 1e-16):
            bad.append(t)
        assert valid_L_range(t).empty == (t == 1e-16)
    ok = code == 0 and not bad and elapsed < 1.0
    verdict(1, ok, f"{len(TABLE) - len(bad)}/{len(TABLE)} rows match to 0.01, {elapsed:.3f} s")


def test_criterion_2_gradient_suite(verdict):
    start = time.perf_counter()
    results = run_suite(instances=100, seed=0)
    elapsed = time.perf_counter() - start
    loss_worst = max(r.max_rel_err for r in results if r.level == "loss")
    net_worst = max(r.max_rel_err for r in results if r.level == "network")
    ok = loss_worst <= LOSS_TOL and net_worst <= NET_TOL and elapsed < 30
    verdict(2, ok, f"{len(results)} checks x 100 instances, worst loss-level {loss_worst:.2e}, "
                   f"worst end-to-end {net_worst:.2e}, {elapsed:.1f} s")


def test_criterion_3_soft_hard_bound(verdict):
    bound_per_row = 1.0 / (1.0 + math.exp(7.3))
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        y = rng.integers(0, 2, n)
        p = rng.uniform(0.6, 1.0, n)
        p = np.where(rng.random(n) < 0.5, p, 1.0 - p)
        soft = soft_confusion(y, approximate(p, 73.0))
        hard = hard_confusion(y, threshold_labels(p))
        for f in ("tn", "fn", "fp", "tp"):
            worst = max(worst, abs(getattr(soft, f) - getattr(hard, f)) / n)
    ok = worst <= 6.8e-4
    verdict(3, ok, f"worst per-row gap {worst:.3e} vs bound 6.8e-4 ({bound_per_row:.3e} exact)")


def test_criterion_4_saturation(verdict):
    saturated = approximate(0.9, 100.0)
    grads = {}
    for L in (100.0, 73.0):
        net = init(NetworkConfig(input_dim=1))
        net.params["W"] = np.array([math.log(9.0)])
        spec = LossSpec(Accuracy(), L, allow_any_L=True)
        _, g, cache = loss_and_grads(net, [[1.0]], [0.0], spec)
        grads[L] = (float(g["W"][0]), float(cache.YH[0]), float(cache.P[0]))
    ok = (saturated == 1.0 and grads[100.0][0] == 0.0 and grads[100.0][1] == 1.0
          and 0.0 < grads[73.0][1] < 1.0 and grads[73.0][0] != 0.0)
    verdict(4, ok, f"A(0.9; 100) = {saturated!r}, dW at L=100 = {grads[100.0][0]!r}, "
                   f"yh at L=73 = {grads[73.0][1]!r}, dW at L=73 = {grads[73.0][0]:.3e}")


@pytest.fixture(scope="module")
def imbalanced_cv():
    d = synth_imbalanced(10_000, 2, 0.1, 2.0, seed=0)
    nc = NetworkConfig(input_dim=2)
    start = time.perf_counter()
    reports = {}
    for name in ("bce", "f1", "bacc"):
        spec = loss_from_name(name)
        reports[name] = cross_validate(d, spec, nc, TrainConfig.defaults("slp", spec), k=10, seed=0)
    return reports, time.perf_counter() - start


def test_criterion_5_imbalanced_direction(verdict, imbalanced_cv):
    reports, elapsed = imbalanced_cv
    f1_gap = reports["f1"].means["f1"] - reports["bce"].means["f1"]
    bacc_gap = reports["bacc"].means["bacc"] - reports["bce"].means["bacc"]
    ok = f1_gap >= 0.03 and bacc_gap >= 0.05 and elapsed <= 600
    verdict(5, ok, f"F1 {reports['f1'].means['f1']:.4f} vs BCE {reports['bce'].means['f1']:.4f} "
                   f"(gap {f1_gap:+.4f}); bacc {reports['bacc'].means['bacc']:.4f} vs BCE "
                   f"{reports['bce'].means['bacc']:.4f} (gap {bacc_gap:+.4f}); {elapsed:.1f} s")


def test_criterion_6_achievement_rate(verdict):
    worked = achievement_rate([1.0, 0.7, 0.4], 1)
    last = achievement_rate([1.0, 0.7, 0.4], 2)
    ok = worked == 0.5 and last == 1.0
    verdict(6, ok, f"worked example {worked!r}, final epoch {last!r}")


def test_criterion_7_sign_test(verdict):
    win = bayesian_sign_test([0.2] * 30, rope=0.01, seed=0)
    rope = bayesian_sign_test([0.0] * 30, rope=0.01, seed=0)
    mixed = [0.2] * 9 + [-0.2]
    a = bayesian_sign_test(mixed, 0.01, mc_samples=10**6, seed=11)
    b = bayesian_sign_test(mixed, 0.01, mc_samples=10**6, seed=12)
    spread = max(abs(a.p_win - b.p_win), abs(a.p_rope - b.p_rope), abs(a.p_lose - b.p_lose))
    ok = win.p_win >= 0.999 and rope.p_rope >= 0.999 and spread <= 0.005
    verdict(7, ok, f"all-positive p_win {win.p_win:.5f}, all-zero p_rope {rope.p_rope:.5f}, "
                   f"mixed case seed spread {spread:.5f}")


def test_criterion_8_learning_speed(verdict):
    d = synth_imbalanced(10_000, 2, 0.1, 2.0, seed=0)
    X = (d.X - d.X.mean(axis=0)) / d.X.std(axis=0)
    names = ("bce", "acc", "f1", "gmean", "bacc")
    per_epoch = {n: [] for n in names}
    # interleave repeats so drift in machine load hits every loss alike
    for rep in range(5):
        for name in names:
            spec = loss_from_name(name)
            net = init(NetworkConfig(input_dim=2, seed=rep))
            tc = TrainConfig(loss=spec, epochs=200, learning_rate=1e-2, seed=rep)
            per_epoch[name].append(train(net, X, d.Y, tc).wall_time_per_epoch)
    base = float(np.median(per_epoch["bce"]))
    ratios = {n: float(np.median(per_epoch[n])) / base for n in names[1:]}
    mean_ratio = float(np.mean(list(ratios.values())))
    ok = 0.8 <= mean_ratio <= 1.3
    verdict(8, ok, f"mean AnyLoss/BCE per-epoch ratio {mean_ratio:.3f} "
                   f"({', '.join(f'{k} {v:.3f}' for k, v in ratios.items())})")


def test_criterion_9_bench_smoke(verdict, tmp_path, capsys):
    argv = ["bench", "--data", str(DATA), "--epochs", "200", "--folds", "5", "--workers", "1"]
    codes = [cli_main(argv + ["--out", str(tmp_path / run)]) for run in ("a", "b")]
    capsys.readouterr()
    raw = [(tmp_path / run / "bench.json").read_bytes() for run in ("a", "b")]
    doc = json.loads(raw[0])
    signs = json.loads((tmp_path / "a" / "sign_tests.json").read_text())
    n = len(list(DATA.glob("*.csv")))
    sums_ok = n >= 3 and all(sum(t.values()) == n for t in doc["tallies"].values())
    sums_ok = sums_ok and set(doc["tallies"]) == {"accuracy", "f1", "gmean", "bacc"}
    sign_ok = True
    for metric in signs.values():
        for comparison in metric.values():
            for res in comparison.values():
                probs = (res["p_win"], res["p_rope"], res["p_lose"])
                sign_ok &= all(0.0 <= p <= 1.0 for p in probs) and abs(sum(probs) - 1.0) < 1e-9
                sign_ok &= res["n_win"] + res["n_rope"] + res["n_lose"] == n
    stable = raw[0] == raw[1]
    ok = codes == [0, 0] and sums_ok and sign_ok and stable
    verdict(9, ok, f"{n} datasets; tallies sum to {n}: {sums_ok}; sign-test JSON valid: {sign_ok}; "
                   f"score grid byte-identical on rerun: {stable}")
