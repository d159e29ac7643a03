"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines
as they are produced; the lines are also echoed when output is captured.
"""

import csv
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import random_profile
from iesched import neural as nn
from iesched.benchmark import benchmark_schedule, build_day_ahead_lp, lp_solution_to_schedule
from iesched.core import (SOC_KINDS, DayProfile, ErrorSample, PriceBook, Schedule, SystemConfig,
                          check_feasibility)
from iesched.data import apply_errors, build_dataset
from iesched.lp import OPTIMAL, solve
from iesched.sim import METHODS, adjust_soc, compare, run_experiment, settle_day, write_reports
from oracles import brute_force_tiny, central_difference, relative_errors, tiny_config

# settings for the training-efficacy run
TRAIN_LR = 1e-3
TRAIN_EPOCHS = 50
TRAIN_BATCHES = 500
TRAIN_DECAY = "cosine"


def report(capsys, n, ok, detail, seconds, budget=None):
    within = budget is None or seconds <= budget
    limit = "no time limit" if budget is None else f"budget {budget:.0f} s"
    line = f"criterion {n}: {'PASS' if ok and within else 'FAIL'} | {detail} | {seconds:.1f} s ({limit})"
    with capsys.disabled():
        print("\n" + line)
    return ok and within


@pytest.fixture(scope="module")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="module")
def prices():
    return PriceBook()


def random_forecasts(n, seed):
    rng = np.random.default_rng(seed)
    return [random_profile(rng, scale=rng.uniform(0.6, 1.1)) for _ in range(n)]


def random_errors(n, seed, cap=0.45):
    rng = np.random.default_rng(seed)
    return [ErrorSample(*rng.uniform(-cap, cap, (4, 24))) for _ in range(n)]


def test_c1_zero_error_identity(capsys, cfg, prices):
    t0 = time.perf_counter()
    worst = 0.0
    for f in random_forecasts(100, 101):
        led = settle_day(cfg, prices, benchmark_schedule(cfg, f, prices).schedule, f, f).ledger
        worst = max(worst, abs(led.total_extra) / max(1.0, abs(led.total_sch)))
    dt = time.perf_counter() - t0
    assert report(capsys, 1, worst <= 1e-9, f"100 schedules, worst relative extra cost {worst:.2e}", dt, 10)


def test_c2_cost_decomposition(capsys, cfg, prices):
    t0 = time.perf_counter()
    ledgers = []
    fs, es = random_forecasts(40, 201), random_errors(40, 202)
    params = nn.NetworkParams.init(cfg, np.random.default_rng(203))
    neural_s = nn.schedule_batch(params, cfg, fs)
    for f, e, s_nn in zip(fs, es, neural_s):
        a = apply_errors(f, e)
        ledgers.append(settle_day(cfg, prices, benchmark_schedule(cfg, f, prices).schedule, f, a).ledger)
        ledgers.append(settle_day(cfg, prices, s_nn, f, a).ledger)
        ledgers.append(settle_day(cfg, prices, s_nn, f, a, adjust=False).ledger)
    ds = build_dataset(n_days=20, pool_size=20, n_errors=20, test_days=5, seed=204)
    for m in METHODS:
        rep = run_experiment(cfg, prices, ds.test_forecasts, ds.test_actuals, m, params=params)
        ledgers += [r.result.ledger for r in rep.settled()]
    worst = max(float(np.max(np.abs(led.C_All - (led.C_Sch + led.C_Extra)))) for led in ledgers)
    dt = time.perf_counter() - t0
    assert report(capsys, 2, worst <= 1e-12, f"{len(ledgers)} settlements, worst slot residual {worst:.1e}", dt)


def test_c3_lp_matches_brute_force(capsys):
    t0 = time.perf_counter()
    c = tiny_config()
    gaps, infeasible = [], 0
    for seed in range(24):
        rng = np.random.default_rng(300 + seed)
        p = PriceBook(T=4, C_E_DA=rng.uniform(0.02, 0.05, 4), C_G_DA=rng.uniform(0.008, 0.02, 4), C_E_plus=0.06,
                      C_G_plus=0.03, C_E_minus=0.005, C_G_minus=0.005)
        f = random_profile(rng, T=4)
        best, _ = brute_force_tiny(c, p, f, points=10)
        r = solve(build_day_ahead_lp(c, f, p))
        assert r.status == OPTIMAL
        gaps.append(r.objective - best)
        infeasible += bool(check_feasibility(c, f, lp_solution_to_schedule(c, r), tol=1e-6))
    dt = time.perf_counter() - t0
    ok = max(gaps) <= 1e-6 and infeasible == 0
    assert report(capsys, 3, ok, f"24 instances, max(LP - grid best) {max(gaps):.3g}, infeasible {infeasible}",
                  dt, 120)


def test_c4_enforcement_safety(capsys, cfg):
    t0 = time.perf_counter()
    worst_net, bad, draws = 0.0, 0, 0
    mask = cfg.window_mask()
    fs = random_forecasts(200, 401)
    for k in range(100):
        rng = np.random.default_rng(400 + k)
        p = nn.NetworkParams.init(cfg, rng)
        p = p.with_flat(p.flat * rng.uniform(0.1, 30.0))
        inputs = [DayProfile.from_array(fs[i].as_array() * rng.uniform(0.0, 3.0, (4, 24)))
                  for i in rng.choice(len(fs), 10, replace=False)]
        for s in nn.schedule_batch(p, cfg, inputs):
            draws += 1
            worst_net = max(worst_net, float(np.abs((s.storage() * mask).sum(axis=1)).max()))
            viol = check_feasibility(cfg, DayProfile.zeros(), s, tol=1e-9, check_balance=False)
            bad += any(v.kind not in SOC_KINDS for v in viol)
    dt = time.perf_counter() - t0
    ok = draws >= 1000 and worst_net <= 1e-9 and bad == 0
    assert report(capsys, 4, ok, f"{draws} draws, worst net flow {worst_net:.1e} kWh, bound breaches {bad}", dt, 60)


def test_c5_gradient_check(capsys, cfg, prices):
    t0 = time.perf_counter()
    ds = build_dataset(n_days=20, pool_size=40, n_errors=30, test_days=1, seed=3)
    rates = []
    for k in range(5):
        rng = np.random.default_rng(100 + k)
        p = nn.NetworkParams.init(cfg, rng)
        F = [ds.pool[i] for i in rng.choice(len(ds.pool), 4, replace=False)]
        E = [ds.errors[i] for i in rng.choice(len(ds.errors), 8, replace=False)]
        g = nn.gradient(p, cfg, prices, F, E, lam=1.0)
        idx = rng.choice(p.n_params, 500, replace=False)

        def f(x):
            return nn.loss(p.with_flat(x), cfg, prices, F, E, 1.0)

        num = np.array([central_difference(f, p.flat, i, rel_step=1e-5) for i in idx])
        rates.append(float(np.mean(relative_errors(g[idx], num) <= 1e-4)))
    dt = time.perf_counter() - t0
    ok = min(rates) >= 0.95
    detail = "share within 1e-4 per point " + ", ".join(f"{r:.3f}" for r in rates) + f" ({p.n_params} params)"
    assert report(capsys, 5, ok, detail, dt, 300)


def test_c6_training_efficacy(capsys, cfg, prices):
    t0 = time.perf_counter()
    ds = build_dataset(seed=0)
    validation = (np.stack([d.as_array() for d in ds.base_days[::12]]), ds.errors_array())
    tc = nn.TrainConfig(lr=TRAIN_LR, epochs=TRAIN_EPOCHS, batches_per_epoch=TRAIN_BATCHES, seed=0,
                        lr_decay=TRAIN_DECAY, lr_final=1e-5)
    _, best = nn.train(cfg, prices, ds.pool_array(), ds.errors_array(), tc, validation=validation,
                       dataset_hash=ds.hash)
    reps = {m: run_experiment(cfg, prices, ds.test_forecasts, ds.test_actuals, m, params=best.params)
            for m in METHODS}
    c = compare(reps["ideal"], reps["neural"], reps["benchmark"])
    dt = time.perf_counter() - t0
    ratio = c.extra_gap["neural"] / c.extra_gap["benchmark"]
    ok = len(c.days) == 31 and ratio <= 0.7 and c.ordered
    detail = (f"gap ratio {ratio:.3f} (reduction {100 * c.reduction:.1f}%), mean daily ideal {c.mean['ideal']:.2f} "
              f"proposed {c.mean['neural']:.2f} benchmark {c.mean['benchmark']:.2f}, best epoch {best.epoch}")
    assert report(capsys, 6, ok, detail, dt, 1800)


def test_c7_inference_latency(capsys, cfg):
    p = nn.NetworkParams.init(cfg, np.random.default_rng(7))
    days = random_forecasts(100, 701)
    nn.schedule(p, cfg, days[0])
    t0 = time.perf_counter()
    times = []
    for d in days:
        s = time.perf_counter()
        nn.schedule(p, cfg, d)
        times.append(time.perf_counter() - s)
    dt = time.perf_counter() - t0
    med = 1000 * float(np.median(times))
    assert report(capsys, 7, med < 50, f"median {med:.2f} ms over 100 calls", dt, 60)


def soc_violations(cfg, s):
    return [v for v in check_feasibility(cfg, DayProfile.zeros(), s, tol=1e-9, check_balance=False)
            if v.kind in SOC_KINDS]


def test_c8_soc_adjustment(capsys, tmp_path, cfg, prices):
    t0 = time.perf_counter()
    mask = cfg.window_mask()
    rng = np.random.default_rng(800)
    raw = rng.normal(0, 1, (200, nn.n_outputs(cfg))) * rng.uniform(0.05, 6.0, (200, 1))
    enf = nn.enforce_batch(cfg, raw)
    fails = {"idempotence": 0, "identity": 0, "violations": 0, "net flow": 0}
    n_feasible = n_flagged = 0
    for i in range(200):
        s = enf.schedule(cfg, i)
        if i % 2:
            # shrink until SOC-feasible; uniform scaling keeps every window sum at zero
            while soc_violations(cfg, s):
                s = s.with_storage(s.storage() * 0.5)
        fixed, log = adjust_soc(cfg, s)
        again, log2 = adjust_soc(cfg, fixed)
        fails["idempotence"] += not np.allclose(again.storage(), fixed.storage(), rtol=0, atol=1e-9)
        if not soc_violations(cfg, s):
            n_feasible += 1
            fails["identity"] += not (fixed is s and len(log) == 0)
        fails["violations"] += bool(soc_violations(cfg, fixed))
        if log.clean:
            fails["net flow"] += float(np.abs((fixed.storage() * mask).sum(axis=1)).max()) > 1e-9
        else:
            n_flagged += 1
    _, zlog = adjust_soc(cfg, Schedule.zeros(cfg))
    fails["identity"] += len(zlog) != 0
    # the adjustment cost must appear in the category breakdown
    ds = build_dataset(n_days=12, pool_size=12, n_errors=12, test_days=3, seed=801)
    p = nn.NetworkParams.init(cfg, np.random.default_rng(802))
    rep = run_experiment(cfg, prices, ds.test_forecasts, ds.test_actuals, "neural", params=p)
    write_reports(tmp_path, [rep])
    with open(tmp_path / "categories.csv", newline="") as fh:
        rows = {r["category"]: float(r["mean_daily"]) for r in csv.DictReader(fh)}
    reported = rows.get("adjustment_cost") == pytest.approx(rep.category_means()["adjustment_cost"], abs=1e-12)
    dt = time.perf_counter() - t0
    ok = not any(fails.values()) and reported
    detail = (f"200 schedules ({n_feasible} already SOC-feasible, {n_flagged} flagged residuals), failures {fails}, "
              f"adjustment cost in report: {reported}")
    assert report(capsys, 8, ok, detail, dt, 60)


def run_pipeline(root, config):
    cmd = [sys.executable, "-m", "iesched.cli"]
    data, run = root / "data", root / "run"
    steps = [
        ["gen-data", "--seed", "5", "--out", str(data)],
        ["train", "--seed", "5", "--config", str(config), "--data", str(data), "--out", str(run), "--epochs", "1"],
        ["simulate", "--seed", "5", "--data", str(data), "--out", str(run), "--checkpoint",
         str(run / "checkpoint.json")],
        ["report", "--seed", "5", "--out", str(run)],
    ]
    for step in steps:
        r = subprocess.run(cmd + step, capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
    return run


def test_c9_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    config = tmp_path / "run.yaml"
    config.write_text("train:\n  batches_per_epoch: 40\n  lr: 0.001\n")
    a = run_pipeline(tmp_path / "a", config)
    b = run_pipeline(tmp_path / "b", config)
    names = ["checkpoint.json", "hourly.csv", "daily.csv", "monthly.csv", "categories.csv", "comparison.csv",
             "report.txt"]
    differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    dt = time.perf_counter() - t0
    assert report(capsys, 9, not differ, f"{len(names)} artefacts compared, differing: {differ or 'none'}", dt, 600)
