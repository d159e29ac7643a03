import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from iesched import cli
from iesched.core import DayProfile
from iesched.data import load_csv, save_profiles_csv


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert cli.main(["gen-data", "--days", "31", "--pool", "1000", "--out", str(d), "--seed", "4"]) == 0
    return d


def test_gen_data_small(data_dir):
    ds = load_csv(data_dir)
    assert len(ds.base_days) == 31 and len(ds.pool) == 1000
    assert len(ds.errors) == 233 and len(ds.test_forecasts) == 31
    man = json.loads((data_dir / "manifest.json").read_text())
    assert man["hash"] == ds.hash


def test_error_cap_flag(tmp_path):
    assert cli.main(["gen-data", "--days", "8", "--pool", "10", "--error-cap", "0.3", "--out", str(tmp_path)]) == 0
    assert np.abs(load_csv(tmp_path).errors_array()).max() <= 0.3 + 1e-12


def test_gen_data_is_seeded(tmp_path, data_dir):
    assert cli.main(["gen-data", "--days", "31", "--pool", "1000", "--out", str(tmp_path), "--seed", "4"]) == 0
    for name in ("forecast_pool.csv", "errors.csv", "manifest.json"):
        assert (tmp_path / name).read_bytes() == (data_dir / name).read_bytes()


def test_train_zero_epochs_writes_checkpoint(tmp_path, data_dir):
    out = tmp_path / "run"
    assert cli.main(["train", "--data", str(data_dir), "--out", str(out), "--epochs", "0"]) == 0
    assert (out / "checkpoint.json").exists() and (out / "loss_trace.csv").exists()


def test_schedule_zero_load_day(tmp_path):
    f = tmp_path / "f.csv"
    save_profiles_csv(f, [DayProfile.zeros(24, day=1)])
    assert cli.main(["schedule", "--method", "benchmark", "--forecast", str(f), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "schedule_benchmark.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24
    assert all(abs(float(r["S_E"])) < 1e-6 and abs(float(r["S_G"])) < 1e-6 for r in rows)


def test_schedule_infeasible_day_exits_3(tmp_path, capsys):
    f = tmp_path / "f.csv"
    save_profiles_csv(f, [DayProfile(np.full(24, 5000.0), np.zeros(24), np.zeros(24), np.zeros(24), day=1)])
    assert cli.main(["schedule", "--forecast", str(f), "--out", str(tmp_path)]) == 3
    assert "slots" in capsys.readouterr().err


def test_missing_data_exits_2(tmp_path):
    assert cli.main(["simulate", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


def test_malformed_csv_exits_2(tmp_path):
    f = tmp_path / "f.csv"
    f.write_text("day,slot,L_E_kwh,L_H_kwh,S_W_kwh,S_PV_kwh\n1,1,1,1,1\n")
    assert cli.main(["schedule", "--forecast", str(f), "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["schedule", "--method", "magic"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1
    cfg = tmp_path / "c.yaml"
    cfg.write_text("system.not_a_field: 3\n")
    assert cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert cli.main(["simulate", "--method", "neural", "--data", str(tmp_path), "--out", str(tmp_path)]) in (1, 2)


def test_yaml_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 7\ntrain:\n  lr: 0.002\n  epochs: 3\n  lr_decay: cosine\ndata.days: 12\nsystem.eta_B: 0.85\n")
    rc = cli.load_run_config(str(cfg))
    assert rc.seed == 7 and rc.train["lr"] == 0.002 and rc.data["days"] == 12
    assert rc.system_config().eta_B == 0.85 and rc.train_config().lr_decay == "cosine"
    args = cli.build_parser().parse_args(["train", "--config", str(cfg), "--epochs", "5", "--seed", "1"])
    rc = cli._apply_flags(rc, args)
    assert rc.train_config().epochs == 5 and rc.seed == 1


def test_large_flag(tmp_path):
    rc = cli._apply_flags(cli.load_run_config(None), cli.build_parser().parse_args(["gen-data", "--large"]))
    c = rc.system_config()
    assert (c.K_EV, c.K_TES) == (6, 4) and rc.data_options()["heat_scale"] == pytest.approx(1.2)


def test_simulate_and_report(tmp_path, data_dir):
    run = tmp_path / "run"
    assert cli.main(["train", "--data", str(data_dir), "--out", str(run), "--epochs", "0"]) == 0
    ck = str(run / "checkpoint.json")
    assert cli.main(["simulate", "--data", str(data_dir), "--out", str(run), "--checkpoint", ck]) == 0
    assert cli.main(["report", "--out", str(run)]) == 0
    assert (run / "comparison.csv").exists()
    text = (run / "report.txt").read_text()
    assert "reduction" in text.lower()
    daily = list(csv.DictReader(open(run / "daily.csv")))
    means = {}
    for m in ("ideal", "neural", "benchmark"):
        vals = [float(r["total"]) for r in daily if r["method"] == m and r["total"]]
        means[m] = sum(vals) / len(vals)
    red = 1 - (means["neural"] - means["ideal"]) / (means["benchmark"] - means["ideal"])
    assert f"reduction: {100 * red:.2f}%" in text


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "iesched.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-data" in r.stdout
