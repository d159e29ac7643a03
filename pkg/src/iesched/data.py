"""Synthetic forecast/error worlds, augmentation and CSV interchange."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ERROR_SERIES, SERIES, DayProfile, ErrorSample

PROFILE_HEADER = ["day", "slot", "L_E_kwh", "L_H_kwh", "S_W_kwh", "S_PV_kwh"]
ERROR_HEADER = ["day", "slot", "delta_E", "delta_H", "delta_W", "delta_PV"]


class DataError(ValueError):
    """Malformed input file or inconsistent data."""


@dataclass(frozen=True)
class SeriesShape:
    """Parametric day shape: ``base * (1 + sum_h amp_h cos(2 pi h (t - peak_h) / T))``.

    Harmonic amplitudes are relative to ``base``; each harmonic is
    ``(order, amplitude, peak_hour)``. Seasonal scaling is
    ``1 + seasonal_amp * cos(2 pi (doy - seasonal_peak_day) / 365)``.
    """

    base: float
    harmonics: tuple = ()
    weekend_scale: float = 1.0
    seasonal_amp: float = 0.0
    seasonal_peak_day: float = 15.0
    noise: float = 0.0
    day_noise: float = 0.0
    cap: float = float("inf")

    def mean_shape(self, T: int, doy: int) -> np.ndarray:
        hours = np.arange(T) * 24.0 / T
        shape = np.ones(T)
        for order, amp, peak in self.harmonics:
            shape += amp * np.cos(2 * np.pi * order * (hours - peak) / 24.0)
        season = 1.0 + self.seasonal_amp * np.cos(2 * np.pi * (doy - self.seasonal_peak_day) / 365.0)
        weekday = (doy - 1) % 7  # day 1 is a Tuesday in 2019; Saturday/Sunday are 4 and 5
        scale = self.weekend_scale if weekday in (4, 5) else 1.0
        return self.base * shape * season * scale


def _default_profile():
    return {
        # domestic-and-commercial electricity: evening peak, morning shoulder
        "L_E": SeriesShape(520.0, ((1, 0.22, 18.5), (2, 0.08, 9.0)), weekend_scale=0.92, seasonal_amp=0.12,
                           noise=0.03, day_noise=0.04, cap=900.0),
        # two-peak domestic hot water demand, higher in winter
        "L_H": SeriesShape(260.0, ((2, 0.35, 7.5), (1, 0.15, 7.5)), weekend_scale=1.05, seasonal_amp=0.25,
                           noise=0.04, day_noise=0.05, cap=600.0),
        "S_W": SeriesShape(85.0, ((1, 0.15, 3.0),), seasonal_amp=0.25, noise=0.10, day_noise=0.35, cap=200.0),
        "S_PV": SeriesShape(30.0, ((1, 2.2, 13.0),), seasonal_amp=0.45, seasonal_peak_day=172.0,
                            noise=0.08, day_noise=0.25, cap=200.0),
    }


@dataclass(frozen=True)
class ProfileSpec:
    L_E: SeriesShape = field(default_factory=lambda: _default_profile()["L_E"])
    L_H: SeriesShape = field(default_factory=lambda: _default_profile()["L_H"])
    S_W: SeriesShape = field(default_factory=lambda: _default_profile()["S_W"])
    S_PV: SeriesShape = field(default_factory=lambda: _default_profile()["S_PV"])
    T: int = 24

    def series(self):
        return [getattr(self, s) for s in SERIES]

    def scaled(self, **factors: float) -> "ProfileSpec":
        """Copy with series base levels multiplied, e.g. ``scaled(L_H=1.2)``."""
        kw = {}
        for s in SERIES:
            shp = getattr(self, s)
            f = factors.get(s, 1.0)
            kw[s] = SeriesShape(**{**asdict(shp), "base": shp.base * f, "cap": shp.cap * f})
        return ProfileSpec(T=self.T, **kw)


@dataclass(frozen=True)
class SeriesError:
    """Relative-error law for one series.

    ``family="gaussian"`` uses ``loc``/``scale``; ``family="beta"`` maps a
    Beta(a, b) draw affinely onto ``[-cap, cap]``.
    """

    family: str = "gaussian"
    loc: float = 0.0
    scale: float = 0.1
    a: float = 2.0
    b: float = 2.0
    correlation: float = 0.0

    def __post_init__(self):
        if self.family not in ("gaussian", "beta"):
            raise ValueError(f"unknown error family {self.family!r}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must be in [0, 1)")


def _default_errors():
    # Forecasts that under-call load and over-call renewables, with modest
    # slot noise; the systematic part is what a learned scheduler can absorb.
    return {
        "delta_E": SeriesError("gaussian", loc=0.10, scale=0.05, correlation=0.7),
        "delta_H": SeriesError("beta", a=16.0, b=10.0, correlation=0.6),
        "delta_W": SeriesError("gaussian", loc=-0.12, scale=0.12, correlation=0.8),
        "delta_PV": SeriesError("gaussian", loc=-0.08, scale=0.10, correlation=0.8),
    }


@dataclass(frozen=True)
class ErrorSpec:
    delta_E: SeriesError = field(default_factory=lambda: _default_errors()["delta_E"])
    delta_H: SeriesError = field(default_factory=lambda: _default_errors()["delta_H"])
    delta_W: SeriesError = field(default_factory=lambda: _default_errors()["delta_W"])
    delta_PV: SeriesError = field(default_factory=lambda: _default_errors()["delta_PV"])
    cap: float = 0.45
    T: int = 24

    def series(self):
        return [getattr(self, s) for s in ERROR_SERIES]


def generate_base_days(spec: ProfileSpec, n_days: int, seed: int, start_day: int = 1) -> list[DayProfile]:
    """``n_days`` consecutive days starting at day-of-year ``start_day``.

    Each day draws from its own stream keyed by (seed, day index), so any
    day can be regenerated alone.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    days = []
    for i in range(n_days):
        doy = (start_day - 1 + i) % 365 + 1
        rng = np.random.default_rng([seed, i])
        rows = []
        for shp in spec.series():
            mean = shp.mean_shape(spec.T, doy)
            day_f = 1.0 + shp.day_noise * rng.standard_normal()
            slot_f = 1.0 + shp.noise * rng.standard_normal(spec.T)
            v = mean * max(day_f, 0.0) * slot_f
            rows.append(np.clip(v, 0.0, shp.cap))
        days.append(DayProfile.from_array(np.array(rows), day=doy))
    return days


def augment_forecasts(base: Sequence[DayProfile], pool_size: int = 56172, seed: int = 0,
                      max_parents: int = 4) -> list[DayProfile]:
    """Random convex combinations of 2 to ``max_parents`` base days."""
    if len(base) < 2:
        raise ValueError("need at least two base days")
    rng = np.random.default_rng(seed)
    stack = np.stack([d.as_array() for d in base])
    hi = min(max_parents, len(base))
    out = []
    for _ in range(pool_size):
        k = int(rng.integers(2, hi + 1))
        parents = rng.choice(len(base), size=k, replace=False)
        w = rng.dirichlet(np.ones(k))
        out.append(DayProfile.from_array(combine(stack[parents], w)))
    return out


def combine(parents: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of stacked (k, 4, T) profiles; weights are nonnegative and sum to 1."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a convex combination")
    return np.tensordot(weights, parents, axes=1)


def sample_errors(spec: ErrorSpec, n: int = 233, seed: int = 0) -> list[ErrorSample]:
    """Draw ``n`` error days, AR(1)-correlated in time and clipped to ``|delta| <= cap``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    T, cap = spec.T, spec.cap
    out = np.zeros((n, 4, T))
    for s, law in enumerate(spec.series()):
        if law.family == "gaussian":
            mean = law.loc
            raw = mean + law.scale * rng.standard_normal((n, T))
        else:
            mean = cap * (2 * law.a / (law.a + law.b) - 1.0)
            raw = cap * (2 * rng.beta(law.a, law.b, size=(n, T)) - 1.0)
        innov = np.clip(raw, -cap, cap) - mean
        rho = law.correlation
        c = np.empty_like(innov)
        c[:, 0] = innov[:, 0]
        for t in range(1, T):
            c[:, t] = rho * c[:, t - 1] + np.sqrt(1.0 - rho * rho) * innov[:, t]
        out[:, s, :] = np.clip(mean + c, -cap, cap)
    return [ErrorSample.from_array(e) for e in out]


def apply_errors(forecast: DayProfile, err: ErrorSample) -> DayProfile:
    """Realized values ``(1 + delta) * forecast``, floored at zero."""
    if forecast.T != err.T:
        raise ValueError("forecast and error sample lengths differ")
    return DayProfile.from_array(np.maximum((1.0 + err.as_array()) * forecast.as_array(), 0.0), day=forecast.day)


def apply_errors_array(forecasts: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Broadcast form of :func:`apply_errors` on (..., 4, T) arrays."""
    return np.maximum((1.0 + deltas) * forecasts, 0.0)


def hash_arrays(*arrays: np.ndarray, meta: dict | None = None) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    if meta:
        h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()


def profiles_array(days: Sequence[DayProfile]) -> np.ndarray:
    return np.stack([d.as_array() for d in days]) if days else np.zeros((0, 4, 0))


def errors_array(errs: Sequence[ErrorSample]) -> np.ndarray:
    return np.stack([e.as_array() for e in errs]) if errs else np.zeros((0, 4, 0))


@dataclass
class Dataset:
    """Training and evaluation material for one synthetic (or ingested) world.

    ``test_forecasts``/``test_actuals`` form the held-out evaluation month.
    """

    base_days: list[DayProfile]
    pool: list[DayProfile]
    errors: list[ErrorSample]
    test_forecasts: list[DayProfile] = field(default_factory=list)
    test_actuals: list[DayProfile] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.pool or not self.errors:
            raise DataError("forecast pool and error pool must be non-empty")
        if len(self.test_forecasts) != len(self.test_actuals):
            raise DataError("test forecasts and actuals differ in length")

    @property
    def hash(self) -> str:
        return hash_arrays(profiles_array(self.base_days), profiles_array(self.pool), errors_array(self.errors),
                           profiles_array(self.test_forecasts), profiles_array(self.test_actuals))

    def pool_array(self) -> np.ndarray:
        return profiles_array(self.pool)

    def errors_array(self) -> np.ndarray:
        return errors_array(self.errors)


def build_dataset(profile: ProfileSpec | None = None, errors: ErrorSpec | None = None, *, n_days: int = 365,
                  pool_size: int = 56172, n_errors: int = 233, test_days: int = 31, test_start: int = 121,
                  seed: int = 0) -> Dataset:
    """Synthetic training year plus a held-out month from an independent year.

    Streams: base days use ``seed``, augmentation ``seed + 1``, training
    errors ``seed + 2``; the test month uses ``seed + 1000`` and ``seed + 1001``.
    """
    profile = profile or ProfileSpec()
    errors = errors or ErrorSpec()
    base = generate_base_days(profile, n_days, seed)
    pool = augment_forecasts(base, pool_size, seed + 1)
    errs = sample_errors(errors, n_errors, seed + 2)
    test_f = generate_base_days(profile, test_days, seed + 1000, start_day=test_start) if test_days else []
    test_e = sample_errors(errors, test_days, seed + 1001) if test_days else []
    test_a = [apply_errors(f, e) for f, e in zip(test_f, test_e)]
    meta = {"seed": seed, "n_days": n_days, "pool_size": pool_size, "n_errors": n_errors,
            "test_days": test_days, "test_start": test_start, "error_cap": errors.cap}
    return Dataset(base, pool, errs, test_f, test_a, meta)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_profiles_csv(path, days: Sequence[DayProfile]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for i, d in enumerate(days):
            label = d.day if d.day is not None else i + 1
            a = d.as_array()
            for t in range(d.T):
                w.writerow([label, t + 1] + [_fmt(v) for v in a[:, t]])


def save_errors_csv(path, errs: Sequence[ErrorSample]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERROR_HEADER)
        for i, e in enumerate(errs):
            a = e.as_array()
            for t in range(e.T):
                w.writerow([i + 1, t + 1] + [_fmt(v) for v in a[:, t]])


def _read_grouped(path, header: list[str], T: int):
    """Yield (day label, (4, T) array) in file order, validating the schema."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [h for h in header if h not in head]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        cols = [head.index(h) for h in header]
        groups: dict[str, dict[int, list[float]]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                day = row[cols[0]].strip()
                slot = int(row[cols[1]])
                vals = [float(row[c]) for c in cols[2:]]
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if not 1 <= slot <= T:
                raise DataError(f"{path}:{lineno}: slot {slot} outside 1..{T}")
            if day not in groups:
                groups[day] = {}
                order.append(day)
            if slot in groups[day]:
                raise DataError(f"{path}:{lineno}: duplicate slot {slot} for day {day}")
            groups[day][slot] = vals
    for day in order:
        g = groups[day]
        if len(g) != T:
            raise DataError(f"{path}: day {day} has {len(g)} slots, expected {T}")
        yield day, np.array([g[t] for t in range(1, T + 1)]).T


def load_profiles_csv(path, T: int = 24) -> list[DayProfile]:
    out = []
    for day, a in _read_grouped(path, PROFILE_HEADER, T):
        if a.min() < 0:
            raise DataError(f"{path}: day {day} has negative values")
        try:
            label = int(day)
        except ValueError:
            label = None
        out.append(DayProfile.from_array(a, day=label))
    return out


def load_errors_csv(path, T: int = 24) -> list[ErrorSample]:
    return [ErrorSample.from_array(a) for _, a in _read_grouped(path, ERROR_HEADER, T)]


FILES = {
    "base_days": "base_days.csv",
    "pool": "forecast_pool.csv",
    "errors": "errors.csv",
    "test_forecasts": "test_forecasts.csv",
    "test_actuals": "test_actuals.csv",
}


def save_csv(dataset: Dataset, directory) -> Path:
    """Write every table of ``dataset`` plus ``manifest.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_profiles_csv(d / FILES["base_days"], dataset.base_days)
    save_profiles_csv(d / FILES["pool"], dataset.pool)
    save_errors_csv(d / FILES["errors"], dataset.errors)
    save_profiles_csv(d / FILES["test_forecasts"], dataset.test_forecasts)
    save_profiles_csv(d / FILES["test_actuals"], dataset.test_actuals)
    manifest = {
        "hash": dataset.hash,
        "meta": dataset.meta,
        "files": {k: {"name": v, "sha256": hashlib.sha256((d / v).read_bytes()).hexdigest()}
                  for k, v in FILES.items()},
        "counts": {"base_days": len(dataset.base_days), "pool": len(dataset.pool), "errors": len(dataset.errors),
                   "test_days": len(dataset.test_forecasts)},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def load_csv(directory, T: int = 24) -> Dataset:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: dataset directory not found")
    meta = {}
    if (d / "manifest.json").exists():
        meta = json.loads((d / "manifest.json").read_text(encoding="utf-8")).get("meta", {})

    def opt(key, loader):
        p = d / FILES[key]
        return loader(p, T) if p.exists() else []

    for key in ("pool", "errors"):
        if not (d / FILES[key]).exists():
            raise DataError(f"{d / FILES[key]}: required file missing")
    return Dataset(opt("base_days", load_profiles_csv), opt("pool", load_profiles_csv), opt("errors", load_errors_csv),
                   opt("test_forecasts", load_profiles_csv), opt("test_actuals", load_profiles_csv), meta)
