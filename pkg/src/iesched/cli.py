"""Command-line entry point: gen-data, train, schedule, simulate, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 infeasible day-ahead problem.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import neural, sim
from .benchmark import InfeasibleScheduleError, benchmark_schedule
from .core import ConfigError, PriceBook, SystemConfig, check_feasibility
from .data import DataError, ErrorSpec, ProfileSpec, build_dataset, load_csv, load_profiles_csv, profiles_array, save_csv

log = logging.getLogger("iesched")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

DATA_DEFAULTS = {"days": 365, "pool": 56172, "errors": 233, "error_cap": 0.45, "test_days": 31, "test_start": 121,
                 "heat_scale": 1.0}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a command needs; file values are overridden by flags."""

    seed: int = 0
    scenario: str = "default"
    large: bool = False
    data_dir: str = "data"
    checkpoint: str | None = None
    out: str = "out"
    system: dict = field(default_factory=dict)
    prices: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def system_config(self) -> SystemConfig:
        return SystemConfig.large(**self.system) if self.large else SystemConfig(**self.system)

    def price_book(self) -> PriceBook:
        kw = dict(self.prices)
        kw.setdefault("T", self.system_config().T)
        return PriceBook(**kw)

    def train_config(self) -> neural.TrainConfig:
        kw = dict(self.train)
        kw.setdefault("seed", self.seed)
        return neural.TrainConfig(**kw)

    def data_options(self) -> dict:
        opts = {**DATA_DEFAULTS, **self.data}
        if self.large and "heat_scale" not in self.data:
            opts["heat_scale"] = 1.2
        return opts


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


_SECTIONS = {
    "system": {f.name: f.default for f in fields(SystemConfig)},
    "prices": {f.name: f.default for f in fields(PriceBook)},
    "train": {f.name: f.default for f in fields(neural.TrainConfig)},
    "data": DATA_DEFAULTS,
}
_TOP = {"seed": 0, "scenario": "default", "large": False, "paths.data": "data", "paths.checkpoint": "",
        "paths.out": "out"}


def load_run_config(path: str | None) -> RunConfig:
    """Read a YAML file of flat dotted keys (nested mappings are flattened too)."""
    rc = RunConfig()
    if not path:
        return rc
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {p} not found")
    doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    for key, value in _flatten(doc).items():
        section, _, name = key.partition(".")
        if section in _SECTIONS and name:
            if name not in _SECTIONS[section]:
                raise ConfigError(f"{p}: unknown key {key}")
            default = _SECTIONS[section][name]
            if section == "prices" and name in ("C_E_DA", "C_G_DA") and isinstance(value, list):
                getattr(rc, section)[name] = [float(v) for v in value]
            else:
                getattr(rc, section)[name] = _coerce(key, value, default)
        elif key in _TOP:
            v = _coerce(key, value, _TOP[key])
            attr = {"paths.data": "data_dir", "paths.checkpoint": "checkpoint", "paths.out": "out"}.get(key, key)
            setattr(rc, attr, (v or None) if attr == "checkpoint" else v)
        else:
            raise ConfigError(f"{p}: unknown key {key}")
    return rc


def _apply_flags(rc: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        rc.seed = args.seed
    if args.large:
        rc.large = True
    if args.out is not None:
        rc.out = args.out
    if getattr(args, "data", None):
        rc.data_dir = args.data
    if getattr(args, "checkpoint", None):
        rc.checkpoint = args.checkpoint
    if getattr(args, "epochs", None) is not None:
        rc.train["epochs"] = args.epochs
    if getattr(args, "batches", None) is not None:
        rc.train["batches_per_epoch"] = args.batches
    if getattr(args, "lr", None) is not None:
        rc.train["lr"] = args.lr
    for flag, key in (("days", "days"), ("pool", "pool"), ("error_cap", "error_cap")):
        if getattr(args, flag, None) is not None:
            rc.data[key] = getattr(args, flag)
    return rc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(rc: RunConfig, args) -> int:
    o = rc.data_options()
    out = Path(args.out or rc.data_dir)
    profile = ProfileSpec()
    if o["heat_scale"] != 1.0:
        profile = profile.scaled(L_H=o["heat_scale"])
    ds = build_dataset(profile, ErrorSpec(cap=float(o["error_cap"])), n_days=int(o["days"]), pool_size=int(o["pool"]),
                       n_errors=int(o["errors"]), test_days=int(o["test_days"]), test_start=int(o["test_start"]),
                       seed=rc.seed)
    save_csv(ds, out)
    print(f"wrote dataset to {out} ({len(ds.pool)} forecasts, {len(ds.errors)} error days, "
          f"{len(ds.test_forecasts)} test days); hash {ds.hash}")
    return EXIT_OK


def _write_trace(path: Path, trace: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for row in trace:
            w.writerow([row["epoch"]] + ["" if row[k] is None else repr(float(row[k])) for k in ("train_loss", "val_loss")])


def cmd_train(rc: RunConfig, args) -> int:
    config, prices, tc = rc.system_config(), rc.price_book(), rc.train_config()
    ds = load_csv(rc.data_dir, config.T)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    val_f = profiles_array(ds.base_days[::12] or ds.pool[:32])
    validation = (val_f, ds.errors_array())

    def on_epoch(ck):
        neural.save_checkpoint(ck, out / "checkpoint_last.json")

    try:
        last, best = neural.train(config, prices, ds.pool_array(), ds.errors_array(), tc, validation=validation,
                                  dataset_hash=ds.hash, on_epoch=on_epoch)
    except neural.TrainingDiverged as exc:
        neural.save_checkpoint(exc.checkpoint, out / "checkpoint_diverged.json")
        print(f"error: {exc}; diagnostic checkpoint in {out / 'checkpoint_diverged.json'}", file=sys.stderr)
        return EXIT_DATA
    path = neural.save_checkpoint(best, out / "checkpoint.json")
    if tc.epochs == 0:
        neural.save_checkpoint(last, out / "checkpoint_last.json")
    _write_trace(out / "loss_trace.csv", best.trace)
    print(f"trained {tc.epochs} epoch(s) x {tc.batches_per_epoch} batches; best epoch {best.epoch}; "
          f"checkpoint {path}")
    return EXIT_OK


def _load_params(rc: RunConfig, config: SystemConfig) -> neural.NetworkParams:
    if not rc.checkpoint:
        raise UsageError("the neural method needs --checkpoint")
    p = Path(rc.checkpoint)
    if not p.exists():
        raise DataError(f"checkpoint {p} not found")
    ck = neural.load_checkpoint(p)
    if ck.config != config:
        raise UsageError(f"checkpoint {p} was trained for a different system configuration")
    return ck.params


def cmd_schedule(rc: RunConfig, args) -> int:
    config, prices = rc.system_config(), rc.price_book()
    src = Path(args.forecast) if args.forecast else Path(rc.data_dir) / "test_forecasts.csv"
    if not src.exists():
        raise DataError(f"forecast file {src} not found")
    days = load_profiles_csv(src, config.T)
    method = args.method or "benchmark"
    if method == "ideal":
        act = Path(args.actuals) if args.actuals else Path(rc.data_dir) / "test_actuals.csv"
        if not act.exists():
            raise DataError(f"actuals file {act} not found")
        days = load_profiles_csv(act, config.T)
    params = _load_params(rc, config) if method == "neural" else None
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    devs = [d.name for d in config.devices()]
    rows, timings, n_viol = [], [], 0
    for i, day in enumerate(days):
        label = day.day if day.day is not None else i + 1
        t0 = time.perf_counter()
        if method == "neural":
            s = neural.schedule(params, config, day)
        else:
            try:
                s = benchmark_schedule(config, day, prices).schedule
            except InfeasibleScheduleError as exc:
                print(f"error: day {label}: {exc}; offending slots {exc.slots}", file=sys.stderr)
                return EXIT_INFEASIBLE
        timings.append(time.perf_counter() - t0)
        viol = check_feasibility(config, day, s, check_balance=(method != "neural"))
        n_viol += sum(v.kind not in sim.SOC_KINDS for v in viol)
        flows = s.storage()
        for t in range(config.T):
            rows.append([label, t + 1] + [repr(float(x)) for x in (s.S_E[t], s.S_G[t], s.v_CHP[t], s.v_B[t])]
                        + [repr(float(x)) for x in flows[:, t]])
    path = out / f"schedule_{method}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "slot", "S_E", "S_G", "v_CHP", "v_B", *devs])
        w.writerows(rows)
    print(f"wrote {path}: {len(days)} day(s); non-SOC violations {n_viol}")
    print(f"median scheduling time per day: {1000 * float(np.median(timings)):.2f} ms")
    return EXIT_OK


def cmd_simulate(rc: RunConfig, args) -> int:
    config, prices = rc.system_config(), rc.price_book()
    ds = load_csv(rc.data_dir, config.T)
    if not ds.test_forecasts:
        raise DataError(f"{rc.data_dir}: no test forecasts/actuals to simulate")
    methods = [args.method] if args.method else list(sim.METHODS)
    params = _load_params(rc, config) if "neural" in methods else None
    reports = [sim.run_experiment(config, prices, ds.test_forecasts, ds.test_actuals, m, params=params)
               for m in methods]
    written = sim.write_reports(rc.out, reports)
    for r in reports:
        ex = r.excluded()
        print(f"{r.method:10s} mean daily cost {r.mean_daily():.4f} over {len(r.settled())} day(s)"
              + (f"; {len(ex)} excluded" if ex else ""))
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def read_daily(path: Path) -> tuple[dict, list[int]]:
    tables: dict[str, dict[int, dict[str, float]]] = {}
    order: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                day = int(row["day"])
                if day not in order:
                    order.append(day)
                if not row["total"]:
                    continue
                tables.setdefault(row["method"], {})[day] = {
                    k: float(row[k]) for k in ("total", *sim.CATEGORY_KEYS)}
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
    return tables, order


def cmd_report(rc: RunConfig, args) -> int:
    src = Path(args.source or rc.out)
    daily = src / "daily.csv"
    if not daily.exists():
        raise DataError(f"{daily} not found; run simulate first")
    tables, order = read_daily(daily)
    missing = [m for m in sim.METHODS if m not in tables]
    if missing:
        raise DataError(f"{daily} lacks results for {', '.join(missing)}")
    comp = sim.compare_tables(tables, order)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    sim.write_comparison(out / "comparison.csv", comp)
    text = sim.format_comparison(comp)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "schedule": cmd_schedule, "simulate": cmd_simulate,
            "report": cmd_report}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of flat dotted keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--large", action="store_true", help="6 EVs, 4 thermal stores, heat load +20%%")
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="dataset directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="iesched", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--days", type=int, help="number of base days")
    g.add_argument("--pool", type=int, help="augmented forecast pool size")
    g.add_argument("--error-cap", type=float, dest="error_cap")
    t = sub.add_parser("train", parents=[common], help="train the neural scheduler")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batches", type=int, help="batches per epoch")
    t.add_argument("--lr", type=float)
    s = sub.add_parser("schedule", parents=[common], help="write day-ahead schedules")
    s.add_argument("--method", choices=sim.METHODS)
    s.add_argument("--checkpoint")
    s.add_argument("--forecast", help="forecast CSV (default: the dataset's test forecasts)")
    s.add_argument("--actuals", help="actuals CSV for --method ideal")
    m = sub.add_parser("simulate", parents=[common], help="settle the test month")
    m.add_argument("--method", choices=sim.METHODS, help="default: all three")
    m.add_argument("--checkpoint")
    r = sub.add_parser("report", parents=[common], help="three-way comparison from simulate output")
    r.add_argument("--from", dest="source", help="simulate output directory (default: --out)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = _apply_flags(load_run_config(args.config), args)
        return COMMANDS[args.command](rc, args)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InfeasibleScheduleError, sim.ScheduleError) as exc:
        slots = getattr(exc, "slots", None)
        print(f"error: {exc}" + (f"; offending slots {slots}" if slots else ""), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
