"""Real-time settlement, SOC repair and evaluation reports."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .benchmark import InfeasibleScheduleError, benchmark_schedule
from .core import (SOC_KINDS, CostLedger, DayProfile, PriceBook, Schedule, SystemConfig, Violation,
                   check_feasibility, mismatch_series, total_cost_day)
from .neural import schedule_batch

log = logging.getLogger(__name__)

METHODS = ("ideal", "neural", "benchmark")
SOC_EPS = 1e-9


class ScheduleError(ValueError):
    """A schedule handed to settlement breaks a non-SOC constraint."""

    def __init__(self, msg: str, violations: list[Violation]):
        super().__init__(msg)
        self.violations = violations


class Adjustment(NamedTuple):
    device: str
    slot: int
    before: float
    after: float


@dataclass
class AdjustmentLog:
    entries: list[Adjustment] = field(default_factory=list)
    # devices whose leftover imbalance had to be pushed past a flow bound
    stretched: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.stretched

    def __len__(self) -> int:
        return len(self.entries)


def adjust_soc(config: SystemConfig, schedule: Schedule) -> tuple[Schedule, AdjustmentLog]:
    """Clip flows that would leave the SOC band and carry the clipped amount forward.

    Each device's window is walked in time order. A flow is kept when no
    imbalance is pending and the next SOC stays in band; otherwise the flow
    plus the pending imbalance is clipped to the tightest of the flow and SOC
    limits, and whatever was cut is carried to the next slot. The last slot
    absorbs any remainder so the window still nets to zero; if that needs
    more than the flow limit the device is listed in ``log.stretched``.
    """
    flows = schedule.storage().copy()
    out = AdjustmentLog()
    sgn = config.soc_sign
    for i, d in enumerate(config.devices()):
        f = flows[i]
        soc, pending = d.soc0, 0.0
        for t in range(d.t_in - 1, d.t_out):
            a, b = (d.soc_min - soc) * sgn, (d.soc_max - soc) * sgn
            lo, hi = min(a, b), max(a, b)
            want = f[t] + pending
            if t == d.t_out - 1:
                g = want
                if g > d.dch_limit * (1 + SOC_EPS) or g < -d.ch_limit * (1 + SOC_EPS):
                    out.stretched.append(d.name)
            elif pending == 0.0 and lo - SOC_EPS <= f[t] <= hi + SOC_EPS:
                g = f[t]
            else:
                g = min(max(want, max(lo, -d.ch_limit)), min(hi, d.dch_limit))
            if g != f[t]:
                out.entries.append(Adjustment(d.name, t + 1, float(f[t]), float(g)))
            pending = want - g
            f[t] = g
            soc += sgn * g
    if not out.entries:
        return schedule, out
    return schedule.with_storage(flows), out


@dataclass
class SettlementResult:
    ledger: CostLedger
    dE: np.ndarray
    dG: np.ndarray
    schedule: Schedule
    log: AdjustmentLog
    unadjusted_total: float

    @property
    def total(self) -> float:
        return self.ledger.total


def settle_day(config: SystemConfig, prices: PriceBook, schedule: Schedule, forecast: DayProfile,
               actual: DayProfile, *, adjust: bool = True) -> SettlementResult:
    """Repair SOC, then settle against ``actual``.

    The adjustment cost is the adjusted schedule's total minus the
    unadjusted one's, both under the same actuals.
    """
    bad = [v for v in check_feasibility(config, forecast, schedule, check_balance=False)
           if v.kind not in SOC_KINDS]
    if bad:
        raise ScheduleError(f"schedule breaks {len(bad)} non-SOC constraint(s), first: {bad[0]}", bad)
    fixed, alog = adjust_soc(config, schedule) if adjust else (schedule, AdjustmentLog())
    raw = total_cost_day(config, schedule, forecast, actual, prices)
    ledger = total_cost_day(config, fixed, forecast, actual, prices) if fixed is not schedule else raw
    ledger.adjustment_cost = ledger.total - raw.total
    dE, dG = mismatch_series(config, fixed, actual)
    return SettlementResult(ledger, dE, dG, fixed, alog, raw.total)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class DayRecord:
    day: int
    method: str
    result: SettlementResult | None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass
class EvaluationReport:
    method: str
    records: list[DayRecord]

    def settled(self) -> list[DayRecord]:
        return [r for r in self.records if r.ok]

    def excluded(self) -> list[DayRecord]:
        return [r for r in self.records if not r.ok]

    def totals(self) -> dict[int, float]:
        return {r.day: r.result.total for r in self.settled()}

    def mean_daily(self, days: Sequence[int] | None = None) -> float:
        tot = self.totals()
        keys = list(tot) if days is None else list(days)
        return float(np.mean([tot[k] for k in keys])) if keys else float("nan")

    def category_means(self, days: Sequence[int] | None = None) -> dict[str, float]:
        recs = self.settled() if days is None else [r for r in self.settled() if r.day in set(days)]
        out: dict[str, float] = {}
        for r in recs:
            for k, v in r.result.ledger.categories().items():
                out[k] = out.get(k, 0.0) + v
            out["adjustment_cost"] = out.get("adjustment_cost", 0.0) + r.result.ledger.adjustment_cost
        return {k: v / len(recs) for k, v in out.items()} if recs else {}

    def adjustment_total(self) -> float:
        return float(sum(r.result.ledger.adjustment_cost for r in self.settled()))


def day_labels(forecasts: Sequence[DayProfile]) -> list[int]:
    return [f.day if f.day is not None else i + 1 for i, f in enumerate(forecasts)]


def run_experiment(config: SystemConfig, prices: PriceBook, forecasts: Sequence[DayProfile],
                   actuals: Sequence[DayProfile], scheduler: str, *, params=None,
                   day_range: slice | None = None, lp_method: str = "highs") -> EvaluationReport:
    """Schedule and settle each day with ``scheduler`` (``ideal``, ``neural`` or ``benchmark``).

    Days whose LP is infeasible are kept in the report as excluded records.
    """
    if scheduler not in METHODS:
        raise ValueError(f"unknown scheduler {scheduler!r}")
    if len(forecasts) != len(actuals):
        raise ValueError("forecasts and actuals differ in length")
    idx = range(len(forecasts))[day_range] if day_range is not None else range(len(forecasts))
    labels = day_labels(forecasts)
    schedules: dict[int, Schedule] = {}
    if scheduler == "neural":
        if params is None:
            raise ValueError("neural scheduler needs network parameters")
        chosen = list(idx)
        if chosen:
            schedules = dict(zip(chosen, schedule_batch(params, config, [forecasts[i] for i in chosen])))
    records = []
    for i in idx:
        f, a = forecasts[i], actuals[i]
        try:
            if scheduler == "neural":
                sched, basis = schedules[i], f
            elif scheduler == "benchmark":
                sched, basis = benchmark_schedule(config, f, prices, method=lp_method).schedule, f
            else:
                sched, basis = benchmark_schedule(config, a, prices, method=lp_method).schedule, a
        except InfeasibleScheduleError as exc:
            log.warning("day %s excluded: %s (slots %s)", labels[i], exc, exc.slots)
            records.append(DayRecord(labels[i], scheduler, None, f"infeasible LP, slots {exc.slots}"))
            continue
        records.append(DayRecord(labels[i], scheduler, settle_day(config, prices, sched, basis, a)))
    return EvaluationReport(scheduler, records)


CATEGORY_KEYS = ("grid", "gas", "ev_reward", "tes_reward", "renewable_reward", "extra_E", "extra_G",
                 "adjustment_cost")


def day_table(report: EvaluationReport) -> dict[int, dict[str, float]]:
    """Per settled day: total cost plus every category, keyed by day label."""
    out = {}
    for r in report.settled():
        row = dict(r.result.ledger.categories())
        row["adjustment_cost"] = r.result.ledger.adjustment_cost
        row["total"] = r.result.total
        out[r.day] = row
    return out


@dataclass
class Comparison:
    days: list[int]
    mean: dict[str, float]
    extra_gap: dict[str, float]
    reduction: float
    adjustment: dict[str, float]
    categories: dict[str, dict[str, float]]

    @property
    def ordered(self) -> bool:
        m = self.mean
        return m["ideal"] <= m["neural"] <= m["benchmark"]


def compare_tables(tables: dict[str, dict[int, dict[str, float]]], order: Sequence[int] | None = None) -> Comparison:
    """Three-way comparison on the days every method settled.

    The extra-cost reduction is ``1 - (proposed - ideal) / (benchmark - ideal)``.
    """
    missing = [m for m in METHODS if m not in tables]
    if missing:
        raise ValueError(f"comparison needs results for {missing}")
    shared = set.intersection(*(set(tables[m]) for m in METHODS))
    days = [d for d in (order if order is not None else sorted(shared)) if d in shared]
    n = len(days)
    mean, cats, adj = {}, {}, {}
    for m in METHODS:
        rows = [tables[m][d] for d in days]
        mean[m] = sum(r["total"] for r in rows) / n if n else float("nan")
        cats[m] = {k: sum(r[k] for r in rows) / n if n else float("nan") for k in CATEGORY_KEYS}
        adj[m] = cats[m]["adjustment_cost"]
    gap = {m: mean[m] - mean["ideal"] for m in METHODS}
    red = 1.0 - gap["neural"] / gap["benchmark"] if gap["benchmark"] != 0 else float("nan")
    return Comparison(days, mean, gap, red, adj, cats)


def compare(ideal: EvaluationReport, proposed: EvaluationReport, bench: EvaluationReport) -> Comparison:
    order = [r.day for r in ideal.records]
    return compare_tables({"ideal": day_table(ideal), "neural": day_table(proposed),
                           "benchmark": day_table(bench)}, order)


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def _f(x: float) -> str:
    return repr(float(x))


def _month(day: int) -> int:
    return (_dt.date(2019, 1, 1) + _dt.timedelta(days=(int(day) - 1) % 365)).month


def _write(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def hourly_rows(report: EvaluationReport):
    for r in report.settled():
        led = r.result.ledger
        for t in range(led.C_All.shape[0]):
            yield [r.day, t + 1, report.method, _f(led.C_Sch[t]), _f(led.C_Extra[t]), _f(led.C_All[t]),
                   _f(r.result.dE[t]), _f(r.result.dG[t])]


def daily_rows(report: EvaluationReport):
    for r in report.records:
        if not r.ok:
            yield [r.day, report.method] + [""] * (len(DAILY_HEADER) - 3) + [r.note]
            continue
        led = r.result.ledger
        c = led.categories()
        yield ([r.day, report.method, _f(led.total), _f(led.total_sch), _f(led.total_extra)]
               + [_f(c[k]) for k in CATEGORY_KEYS[:-1]] + [_f(led.adjustment_cost), len(r.result.log), ""])


DAILY_HEADER = ["day", "method", "total", "C_Sch", "C_Extra", *CATEGORY_KEYS, "n_adjustments", "note"]


def monthly_rows(report: EvaluationReport):
    by: dict[int, list[float]] = {}
    for r in report.settled():
        by.setdefault(_month(r.day), []).append(r.result.total)
    for m in sorted(by):
        yield [m, report.method, len(by[m]), _f(sum(by[m])), _f(sum(by[m]) / len(by[m]))]


def write_reports(out_dir, reports: Sequence[EvaluationReport], comparison: Comparison | None = None) -> list[Path]:
    """Hourly, daily, monthly and category tables, plus the three-way comparison when given."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    tables = {
        "hourly.csv": (["day", "slot", "method", "C_Sch", "C_Extra", "C_All", "dS_E", "dS_G"], hourly_rows),
        "daily.csv": (DAILY_HEADER, daily_rows),
        "monthly.csv": (["month", "method", "days", "total", "mean_daily"], monthly_rows),
    }
    for name, (header, fn) in tables.items():
        _write(d / name, header, [row for rep in reports for row in fn(rep)])
        written.append(d / name)
    cat_rows = []
    for rep in reports:
        for k, v in rep.category_means().items():
            cat_rows.append([rep.method, k, _f(v)])
    _write(d / "categories.csv", ["method", "category", "mean_daily"], cat_rows)
    written.append(d / "categories.csv")
    if comparison is not None:
        write_comparison(d / "comparison.csv", comparison)
        written.append(d / "comparison.csv")
    return written


def write_comparison(path, c: Comparison) -> None:
    rows = [["days", len(c.days), ""]]
    for prefix, values in (("mean_daily", c.mean), ("extra_gap", c.extra_gap), ("adjustment_cost", c.adjustment)):
        rows.extend([f"{prefix}_{k}", _f(values[k]), ""] for k in METHODS)
    rows.append(["extra_cost_reduction", _f(c.reduction), "1 - (proposed - ideal)/(benchmark - ideal)"])
    rows.append(["ordered_ideal_le_proposed_le_benchmark", str(c.ordered), ""])
    _write(Path(path), ["metric", "value", "note"], rows)


def format_comparison(c: Comparison) -> str:
    lines = [f"{'':28s}{'ideal':>12s}{'proposed':>12s}{'benchmark':>12s}"]
    names = ["grid", "gas", "ev_reward", "tes_reward", "renewable_reward", "extra_E", "extra_G", "adjustment_cost"]
    for n in names:
        lines.append(f"{n:28s}" + "".join(f"{c.categories[k].get(n, 0.0):12.4f}" for k in METHODS))
    lines.append(f"{'mean daily cost':28s}" + "".join(f"{c.mean[k]:12.4f}" for k in METHODS))
    lines.append(f"{'gap to ideal':28s}" + "".join(f"{c.extra_gap[k]:12.4f}" for k in METHODS))
    lines.append(f"extra-cost reduction: {100 * c.reduction:.2f}% over {len(c.days)} days")
    return "\n".join(lines)
