"""Domain model of the multi-vector energy system.

Types, constraint checks, SOC dynamics and the two-stage cost arithmetic.
Slots are 1-based in every public signature (``t in [1, T]``) and in the
service windows stored on :class:`SystemConfig`; arrays are 0-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for inconsistent configuration or mismatched dimensions."""


def _arr(x, shape=None) -> np.ndarray:
    a = np.array(x, dtype=float)
    if shape is not None and a.shape != shape:
        raise ConfigError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Device counts, efficiencies, limits and service windows.

    Defaults are the case-study parameters: 4 EVs, 2 TESs, T = 24. Service
    windows and initial SOC values are not part of the published table and
    are chosen here as overnight / workplace / evening / all-day EVs and
    all-day thermal stores.
    """

    T: int = 24
    K_W: int = 1
    K_PV: int = 1
    K_EV: int = 4
    K_TES: int = 2
    eta_TF: float = 0.98
    eta_CHP_E: float = 0.404
    eta_CHP_H: float = 0.566
    eta_B: float = 0.9
    eta_EV_ch: float = 0.9
    eta_EV_dch: float = 0.9
    eta_TES_ch: float = 0.9
    eta_TES_dch: float = 0.9
    S_TF_max: float = 1000.0
    S_G_max: float = 1200.0
    S_W_max: float = 200.0
    S_PV_max: float = 200.0
    S_CHP_max: float = 300.0
    S_B_max: float = 800.0
    S_EV_ch_max: float = 80.0
    S_EV_dch_max: float = 80.0
    S_TES_ch_max: float = 50.0
    S_TES_dch_max: float = 50.0
    SOC_EV_min: float = 40.0
    SOC_EV_max: float = 80.0
    SOC_TES_min: float = 40.0
    SOC_TES_max: float = 200.0
    ev_windows: tuple = ((1, 7), (8, 17), (17, 24), (1, 24))
    tes_windows: tuple = ((1, 24), (1, 24))
    ev_soc0: tuple = (60.0, 50.0, 70.0, 60.0)
    tes_soc0: tuple = (120.0, 100.0)
    # Add the signed flow to SOC as printed in the source model instead of
    # subtracting it (positive flow = discharge).
    soc_sign_literal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ev_windows", tuple(tuple(int(v) for v in w) for w in self.ev_windows))
        object.__setattr__(self, "tes_windows", tuple(tuple(int(v) for v in w) for w in self.tes_windows))
        object.__setattr__(self, "ev_soc0", tuple(float(v) for v in self.ev_soc0))
        object.__setattr__(self, "tes_soc0", tuple(float(v) for v in self.tes_soc0))
        self.validate()

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        for name in ("K_W", "K_PV", "K_EV", "K_TES"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for f in fields(self):
            if f.name.startswith("eta_"):
                v = getattr(self, f.name)
                if not 0.0 < v <= 1.0:
                    raise ConfigError(f"{f.name}={v} outside (0, 1]")
            if f.name.startswith("S_") and getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name} must be >= 0")
        if self.SOC_EV_min > self.SOC_EV_max or self.SOC_TES_min > self.SOC_TES_max:
            raise ConfigError("SOC_min must not exceed SOC_max")
        for kind, k, windows, soc0 in (
            ("EV", self.K_EV, self.ev_windows, self.ev_soc0),
            ("TES", self.K_TES, self.tes_windows, self.tes_soc0),
        ):
            if len(windows) != k or len(soc0) != k:
                raise ConfigError(f"need {k} {kind} windows and initial SOC values")
            lo, hi = (self.SOC_EV_min, self.SOC_EV_max) if kind == "EV" else (self.SOC_TES_min, self.SOC_TES_max)
            for i, ((t_in, t_out), s0) in enumerate(zip(windows, soc0)):
                if not 1 <= t_in <= t_out <= self.T:
                    raise ConfigError(f"{kind}{i + 1} window [{t_in}, {t_out}] not within [1, {self.T}]")
                if not lo <= s0 <= hi:
                    raise ConfigError(f"{kind}{i + 1} initial SOC {s0} outside [{lo}, {hi}]")

    @classmethod
    def large(cls, **overrides) -> "SystemConfig":
        """Six EVs and four thermal stores (the enlarged case study)."""
        kw = dict(
            K_EV=6,
            K_TES=4,
            ev_windows=((1, 7), (8, 17), (17, 24), (1, 24), (6, 14), (12, 22)),
            ev_soc0=(60.0, 50.0, 70.0, 60.0, 55.0, 65.0),
            tes_windows=((1, 24), (1, 24), (1, 24), (1, 24)),
            tes_soc0=(120.0, 100.0, 140.0, 110.0),
        )
        kw.update(overrides)
        return cls(**kw)

    @property
    def soc_sign(self) -> float:
        """Coefficient of the cumulative flow in the SOC update."""
        return 1.0 if self.soc_sign_literal else -1.0

    def devices(self) -> list["Device"]:
        """EVs first, then thermal stores."""
        out = []
        for k in range(self.K_EV):
            out.append(Device("EV", k, self.ev_windows[k], self.ev_soc0[k], self.SOC_EV_min, self.SOC_EV_max,
                              self.eta_EV_ch * self.S_EV_ch_max, self.eta_EV_dch * self.S_EV_dch_max,
                              self.eta_EV_ch, self.eta_EV_dch, self.S_EV_ch_max, self.S_EV_dch_max))
        for k in range(self.K_TES):
            out.append(Device("TES", k, self.tes_windows[k], self.tes_soc0[k], self.SOC_TES_min, self.SOC_TES_max,
                              self.eta_TES_ch * self.S_TES_ch_max, self.eta_TES_dch * self.S_TES_dch_max,
                              self.eta_TES_ch, self.eta_TES_dch, self.S_TES_ch_max, self.S_TES_dch_max))
        return out

    def window_mask(self) -> np.ndarray:
        """(K_EV + K_TES, T) boolean mask of service windows."""
        devs = self.devices()
        m = np.zeros((len(devs), self.T), dtype=bool)
        for i, d in enumerate(devs):
            m[i, d.t_in - 1 : d.t_out] = True
        return m


@dataclass(frozen=True)
class Device:
    """Flattened view of one storage device."""

    kind: str
    k: int
    window: tuple
    soc0: float
    soc_min: float
    soc_max: float
    ch_limit: float  # largest charging magnitude of the signed flow, eta_ch * S_ch_max
    dch_limit: float  # largest discharging flow, eta_dch * S_dch_max
    eta_ch: float
    eta_dch: float
    S_ch_max: float
    S_dch_max: float

    @property
    def name(self) -> str:
        return f"{self.kind}{self.k + 1}"

    @property
    def t_in(self) -> int:
        return self.window[0]

    @property
    def t_out(self) -> int:
        return self.window[1]


@dataclass(frozen=True)
class PriceBook:
    C_E_DA: np.ndarray = 0.031
    C_G_DA: np.ndarray = 0.013
    C_E_plus: float = 0.058
    C_E_minus: float = 0.025
    C_G_plus: float = 0.022
    C_G_minus: float = 0.011
    C_W: float = 0.02
    C_PV: float = 0.02
    C_EV: float = 0.03
    C_TES: float = 0.01
    T: int = 24

    def __post_init__(self):
        for name in ("C_E_DA", "C_G_DA"):
            v = np.array(getattr(self, name), dtype=float)
            if v.ndim == 0:
                v = np.full(self.T, float(v))
            if v.shape != (self.T,):
                raise ConfigError(f"{name} must have length T={self.T}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        scalars = [getattr(self, n) for n in ("C_E_plus", "C_E_minus", "C_G_plus", "C_G_minus",
                                               "C_W", "C_PV", "C_EV", "C_TES")]
        if min(scalars) < 0 or self.C_E_DA.min() < 0 or self.C_G_DA.min() < 0:
            raise ConfigError("prices must be nonnegative")
        for msg in self.spread_warnings():
            warnings.warn(msg, stacklevel=3)

    def spread_warnings(self) -> list[str]:
        out = []
        if np.any(self.C_E_plus < self.C_E_DA) or np.any(self.C_E_minus > self.C_E_DA):
            out.append("electricity real-time prices do not bracket the day-ahead price")
        if np.any(self.C_G_plus < self.C_G_DA) or np.any(self.C_G_minus > self.C_G_DA):
            out.append("gas real-time prices do not bracket the day-ahead price")
        return out


SERIES = ("L_E", "L_H", "S_W", "S_PV")
ERROR_SERIES = ("delta_E", "delta_H", "delta_W", "delta_PV")


@dataclass(frozen=True)
class DayProfile:
    """One day of per-slot loads and aggregate renewable generation (kWh).

    ``day`` is an optional day-of-year label used for reporting.
    """

    L_E: np.ndarray
    L_H: np.ndarray
    S_W: np.ndarray
    S_PV: np.ndarray
    day: int | None = None

    def __post_init__(self):
        n = len(np.atleast_1d(self.L_E))
        for name in SERIES:
            a = _arr(getattr(self, name))
            if a.shape != (n,):
                raise ConfigError(f"{name} has shape {a.shape}, expected ({n},)")
            if not np.all(np.isfinite(a)) or a.min(initial=0.0) < 0:
                raise ConfigError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, a)

    @property
    def T(self) -> int:
        return self.L_E.shape[0]

    def as_array(self) -> np.ndarray:
        """(4, T) array in the order L_E, L_H, S_W, S_PV."""
        return np.stack([self.L_E, self.L_H, self.S_W, self.S_PV])

    @classmethod
    def from_array(cls, a, day=None) -> "DayProfile":
        a = np.asarray(a, dtype=float)
        return cls(a[0], a[1], a[2], a[3], day=day)

    @classmethod
    def zeros(cls, T: int = 24, day=None) -> "DayProfile":
        return cls.from_array(np.zeros((4, T)), day=day)


@dataclass(frozen=True)
class ErrorSample:
    """Relative forecast errors; actual = (1 + delta) * forecast."""

    delta_E: np.ndarray
    delta_H: np.ndarray
    delta_W: np.ndarray
    delta_PV: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.delta_E))
        for name in ERROR_SERIES:
            a = _arr(getattr(self, name))
            if a.shape != (n,):
                raise ConfigError(f"{name} has shape {a.shape}, expected ({n},)")
            object.__setattr__(self, name, a)

    @property
    def T(self) -> int:
        return self.delta_E.shape[0]

    def as_array(self) -> np.ndarray:
        return np.stack([self.delta_E, self.delta_H, self.delta_W, self.delta_PV])

    @classmethod
    def from_array(cls, a) -> "ErrorSample":
        a = np.asarray(a, dtype=float)
        return cls(a[0], a[1], a[2], a[3])

    @classmethod
    def zeros(cls, T: int = 24) -> "ErrorSample":
        return cls.from_array(np.zeros((4, T)))


@dataclass(frozen=True)
class Schedule:
    """Day-ahead decisions. Storage flows are signed: positive = discharge into the system."""

    S_E: np.ndarray
    S_G: np.ndarray
    S_EV: np.ndarray
    S_TES: np.ndarray
    v_CHP: np.ndarray
    v_B: np.ndarray

    def __post_init__(self):
        T = len(np.atleast_1d(self.S_E))
        for name in ("S_E", "S_G", "v_CHP", "v_B"):
            object.__setattr__(self, name, _arr(getattr(self, name), (T,)))
        for name in ("S_EV", "S_TES"):
            a = np.array(getattr(self, name), dtype=float)
            if a.size == 0:
                a = a.reshape(0, T)
            if a.ndim != 2 or a.shape[1] != T:
                raise ConfigError(f"{name} must have shape (K, {T})")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def T(self) -> int:
        return self.S_E.shape[0]

    @property
    def G_CHP(self) -> np.ndarray:
        return self.v_CHP * self.S_G

    @property
    def G_B(self) -> np.ndarray:
        return self.v_B * self.S_G

    def storage(self) -> np.ndarray:
        """(K_EV + K_TES, T) signed flows, EVs first."""
        return np.vstack([self.S_EV, self.S_TES])

    def with_storage(self, flows: np.ndarray) -> "Schedule":
        k = self.S_EV.shape[0]
        return replace(self, S_EV=flows[:k], S_TES=flows[k:])

    @classmethod
    def zeros(cls, config: SystemConfig) -> "Schedule":
        T = config.T
        z = np.zeros(T)
        return cls(z, z, np.zeros((config.K_EV, T)), np.zeros((config.K_TES, T)), z, z)

    def charge_indicator(self) -> np.ndarray:
        """Indicator of charging (signed flow < 0) for every device and slot."""
        return (1 - np.sign(self.storage())) / 2 * (self.storage() != 0)

    def discharge_indicator(self) -> np.ndarray:
        return (1 + np.sign(self.storage())) / 2 * (self.storage() != 0)


@dataclass
class CostLedger:
    """Per-slot settlement costs in pounds.

    ``C_Sch`` is the day-ahead scheduling cost; its components are kept so
    category reports add up. Rewards are stored as positive amounts.
    """

    grid: np.ndarray
    gas: np.ndarray
    ev_reward: np.ndarray
    tes_reward: np.ndarray
    renewable_reward: np.ndarray
    C_Extra_E: np.ndarray
    C_Extra_G: np.ndarray
    C_Penalty: np.ndarray
    adjustment_cost: float = 0.0

    @property
    def C_Sch(self) -> np.ndarray:
        return self.grid + self.gas - self.ev_reward - self.tes_reward - self.renewable_reward

    @property
    def C_Extra(self) -> np.ndarray:
        return self.C_Extra_E + self.C_Extra_G

    @property
    def C_All(self) -> np.ndarray:
        return self.C_Sch + self.C_Extra_E + self.C_Extra_G

    @property
    def total(self) -> float:
        return float(np.sum(self.C_All))

    @property
    def total_sch(self) -> float:
        return float(np.sum(self.C_Sch))

    @property
    def total_extra(self) -> float:
        return float(np.sum(self.C_Extra))

    @property
    def total_penalty(self) -> float:
        return float(np.sum(self.C_Penalty))

    def categories(self) -> dict[str, float]:
        return {
            "grid": float(self.grid.sum()),
            "gas": float(self.gas.sum()),
            "ev_reward": float(self.ev_reward.sum()),
            "tes_reward": float(self.tes_reward.sum()),
            "renewable_reward": float(self.renewable_reward.sum()),
            "extra_E": float(self.C_Extra_E.sum()),
            "extra_G": float(self.C_Extra_G.sum()),
        }


class Violation(NamedTuple):
    kind: str
    slot: int | None
    device: str | None
    magnitude: float


# Violation kinds
BALANCE_E = "electricity_balance"
BALANCE_H = "heat_balance"
FLOW_BOUND = "flow_bound"
DISPATCH = "dispatch_factor"
STORAGE_BOUND = "storage_flow_bound"
WINDOW = "outside_window"
NET_FLOW = "net_flow"
SOC_BOUND = "soc_bound"

BALANCE_KINDS = frozenset({BALANCE_E, BALANCE_H})
SOC_KINDS = frozenset({SOC_BOUND})


def _check_dims(config: SystemConfig, *, profile: DayProfile | None = None, schedule: Schedule | None = None):
    if profile is not None and profile.T != config.T:
        raise ConfigError(f"profile has {profile.T} slots, config expects {config.T}")
    if schedule is not None:
        if schedule.T != config.T:
            raise ConfigError(f"schedule has {schedule.T} slots, config expects {config.T}")
        if schedule.S_EV.shape[0] != config.K_EV or schedule.S_TES.shape[0] != config.K_TES:
            raise ConfigError("schedule device counts do not match config")


def _slot(t: int, T: int) -> int:
    if not 1 <= t <= T:
        raise ConfigError(f"slot {t} outside [1, {T}]")
    return t - 1


def renewables(config: SystemConfig, profile: DayProfile) -> tuple[np.ndarray, np.ndarray]:
    """Non-dispatchable wind and PV, clipped to [0, S_max]."""
    return (np.clip(profile.S_W, 0.0, config.S_W_max), np.clip(profile.S_PV, 0.0, config.S_PV_max))


def soc_trajectory(config: SystemConfig, flows, window, soc0: float) -> np.ndarray:
    """SOC after each slot's flow. Before ``t_in`` the value is ``soc0``.

    With the default sign convention a positive (discharging) flow lowers
    the state of charge.
    """
    flows = np.asarray(flows, dtype=float)
    t_in, t_out = window
    soc = np.full(flows.shape[-1], float(soc0))
    cum = np.cumsum(flows[..., t_in - 1 : t_out], axis=-1)
    soc = np.broadcast_to(soc, flows.shape).copy()
    soc[..., t_in - 1 : t_out] = soc0 + config.soc_sign * cum
    soc[..., t_out:] = soc[..., t_out - 1 : t_out]
    return soc


def soc_matrix(config: SystemConfig, storage: np.ndarray) -> np.ndarray:
    """SOC trajectories for all devices, shape (K_EV + K_TES, T)."""
    return np.stack([soc_trajectory(config, storage[i], d.window, d.soc0)
                     for i, d in enumerate(config.devices())]) if len(storage) else np.zeros((0, config.T))


def check_feasibility(config: SystemConfig, forecast: DayProfile, schedule: Schedule, tol: float = 1e-6,
                      *, check_balance: bool = True) -> list[Violation]:
    """Every constraint the schedule breaks against ``forecast``.

    Balance rows are tested within ``tol * max(1, |L|)``; bounds within
    ``tol * max(1, |bound|)``. ``check_balance=False`` skips the two load
    balances, which day-ahead schedules that defer the mismatch to the
    real-time settlement do not satisfy by design.
    """
    _check_dims(config, profile=forecast, schedule=schedule)
    out: list[Violation] = []
    T = config.T

    def bound(kind, values, lo, hi, device=None):
        for t in range(T):
            v = values[t]
            if v < lo - tol * max(1.0, abs(lo)):
                out.append(Violation(kind, t + 1, device, float(lo - v)))
            elif v > hi + tol * max(1.0, abs(hi)):
                out.append(Violation(kind, t + 1, device, float(v - hi)))

    W, PV = renewables(config, forecast)
    G_CHP, G_B = schedule.G_CHP, schedule.G_B
    if check_balance:
        res_e = (config.eta_TF * schedule.S_E + config.eta_CHP_E * G_CHP + W + PV
                 + schedule.S_EV.sum(axis=0) - forecast.L_E)
        res_h = config.eta_CHP_H * G_CHP + config.eta_B * G_B + schedule.S_TES.sum(axis=0) - forecast.L_H
        for kind, res, load in ((BALANCE_E, res_e, forecast.L_E), (BALANCE_H, res_h, forecast.L_H)):
            for t in range(T):
                if abs(res[t]) > tol * max(1.0, abs(load[t])):
                    out.append(Violation(kind, t + 1, None, float(abs(res[t]))))

    bound(FLOW_BOUND, schedule.S_E, 0.0, config.S_TF_max, "TF")
    bound(FLOW_BOUND, schedule.S_G, 0.0, config.S_G_max, "G")
    bound(FLOW_BOUND, G_CHP, 0.0, config.S_CHP_max, "CHP")
    bound(FLOW_BOUND, G_B, 0.0, config.S_B_max, "B")
    bound(DISPATCH, schedule.v_CHP, 0.0, 1.0, "v_CHP")
    bound(DISPATCH, schedule.v_B, 0.0, 1.0, "v_B")
    bound(DISPATCH, schedule.v_CHP + schedule.v_B, 0.0, 1.0, "v_sum")

    storage = schedule.storage()
    socs = soc_matrix(config, storage)
    for i, d in enumerate(config.devices()):
        f = storage[i]
        inside = np.zeros(T, dtype=bool)
        inside[d.t_in - 1 : d.t_out] = True
        for t in np.flatnonzero(~inside & (np.abs(f) > tol)):
            out.append(Violation(WINDOW, int(t) + 1, d.name, float(abs(f[t]))))
        # efficiency-weighted flow seen by the system
        weighted = np.where(f > 0, f / d.eta_dch, f / d.eta_ch)
        bound(STORAGE_BOUND, np.where(inside, weighted, 0.0), -d.S_ch_max, d.S_dch_max, d.name)
        net = f[inside].sum()
        if abs(net) > tol * max(1.0, d.dch_limit):
            out.append(Violation(NET_FLOW, None, d.name, float(abs(net))))
        bound(SOC_BOUND, np.where(inside, socs[i], d.soc0), d.soc_min, d.soc_max, d.name)
    return out


def scheduling_cost(schedule: Schedule, forecast: DayProfile, prices: PriceBook, t: int,
                    config: SystemConfig | None = None) -> float:
    """Day-ahead cost of slot ``t``: energy purchases minus storage and renewable rewards."""
    i = _slot(t, schedule.T)
    W, PV = (forecast.S_W, forecast.S_PV) if config is None else renewables(config, forecast)
    return float(prices.C_E_DA[i] * schedule.S_E[i] + prices.C_G_DA[i] * schedule.S_G[i]
                 - prices.C_TES * np.abs(schedule.S_TES[:, i]).sum()
                 - prices.C_EV * np.abs(schedule.S_EV[:, i]).sum()
                 - prices.C_PV * PV[i] - prices.C_W * W[i])


def mismatch_series(config: SystemConfig, schedule: Schedule, actual: DayProfile) -> tuple[np.ndarray, np.ndarray]:
    W, PV = renewables(config, actual)
    dE = (actual.L_E - config.eta_TF * schedule.S_E - config.eta_CHP_E * schedule.G_CHP
          - W - PV - schedule.S_EV.sum(axis=0)) / config.eta_TF
    dG = (actual.L_H - config.eta_CHP_H * schedule.G_CHP - config.eta_B * schedule.G_B
          - schedule.S_TES.sum(axis=0)) / config.eta_B
    return dE, dG


def mismatch(config: SystemConfig, schedule: Schedule, actual: DayProfile, t: int) -> tuple[float, float]:
    """Electricity and gas shortfall (positive) or surplus (negative) at slot ``t``."""
    i = _slot(t, config.T)
    dE, dG = mismatch_series(config, schedule, actual)
    return float(dE[i]), float(dG[i])


def extra_cost_series(prices: PriceBook, dE, dG) -> tuple[np.ndarray, np.ndarray]:
    dE = np.asarray(dE, dtype=float)
    dG = np.asarray(dG, dtype=float)
    e = np.where(dE >= 0, prices.C_E_plus * dE, (prices.C_E_DA - prices.C_E_minus) * dE)
    g = np.where(dG >= 0, prices.C_G_plus * dG, (prices.C_G_DA - prices.C_G_minus) * dG)
    return e, g


def extra_cost(prices: PriceBook, dE: float, dG: float, t: int) -> tuple[float, float]:
    """Real-time settlement of the mismatch at slot ``t``.

    Shortfalls are bought at the real-time price; surpluses are charged
    ``(C_DA - C_minus) * delta``, which is a credit since delta < 0.
    """
    i = _slot(t, prices.T)
    e = prices.C_E_plus * dE if dE >= 0 else (prices.C_E_DA[i] - prices.C_E_minus) * dE
    g = prices.C_G_plus * dG if dG >= 0 else (prices.C_G_DA[i] - prices.C_G_minus) * dG
    return float(e), float(g)


def penalty_series(config: SystemConfig, schedule: Schedule) -> np.ndarray:
    socs = soc_matrix(config, schedule.storage())
    pen = np.zeros(config.T)
    for i, d in enumerate(config.devices()):
        s = socs[i, d.t_in - 1 : d.t_out]
        pen[d.t_in - 1 : d.t_out] += np.maximum.reduce([d.soc_min - s, s - d.soc_max, np.zeros_like(s)])
    return pen


def penalty_cost(config: SystemConfig, schedule: Schedule, t: int) -> float:
    """SOC-bound excursion at slot ``t`` summed over every EV and thermal store."""
    return float(penalty_series(config, schedule)[_slot(t, config.T)])


def total_cost_day(config: SystemConfig, schedule: Schedule, forecast: DayProfile, actual: DayProfile,
                   prices: PriceBook) -> CostLedger:
    """Settle a day-ahead schedule against realized loads and generation.

    Renewable rewards are paid on the realized (clipped) generation; the
    forecast only fixes the day's dimensions.
    """
    _check_dims(config, profile=forecast, schedule=schedule)
    _check_dims(config, profile=actual)
    W, PV = renewables(config, actual)
    dE, dG = mismatch_series(config, schedule, actual)
    e, g = extra_cost_series(prices, dE, dG)
    return CostLedger(
        grid=prices.C_E_DA * schedule.S_E,
        gas=prices.C_G_DA * schedule.S_G,
        ev_reward=prices.C_EV * np.abs(schedule.S_EV).sum(axis=0),
        tes_reward=prices.C_TES * np.abs(schedule.S_TES).sum(axis=0),
        renewable_reward=prices.C_W * W + prices.C_PV * PV,
        C_Extra_E=e,
        C_Extra_G=g,
        C_Penalty=penalty_series(config, schedule),
    )


def make_schedule(config: SystemConfig, S_E, G_CHP, G_B, storage, S_G=None, tol: float = 1e-9) -> Schedule:
    """Build a schedule from gas routed to CHP and boiler rather than dispatch factors."""
    S_E = np.asarray(S_E, dtype=float)
    G_CHP = np.asarray(G_CHP, dtype=float)
    G_B = np.asarray(G_B, dtype=float)
    S_G = G_CHP + G_B if S_G is None else np.asarray(S_G, dtype=float)
    safe = np.where(S_G > tol, S_G, 1.0)
    v_CHP = np.where(S_G > tol, G_CHP / safe, 0.0)
    v_B = np.where(S_G > tol, G_B / safe, 0.0)
    storage = np.asarray(storage, dtype=float).reshape(config.K_EV + config.K_TES, config.T)
    return Schedule(S_E, S_G, storage[: config.K_EV], storage[config.K_EV :], v_CHP, v_B)


def sum_ledgers(ledgers: Iterable[CostLedger]) -> dict[str, float]:
    tot: dict[str, float] = {}
    for led in ledgers:
        for k, v in led.categories().items():
            tot[k] = tot.get(k, 0.0) + v
    return tot


__all__: Sequence[str] = (
    "ConfigError", "SystemConfig", "Device", "PriceBook", "DayProfile", "ErrorSample", "Schedule",
    "CostLedger", "Violation", "check_feasibility", "soc_trajectory", "soc_matrix", "scheduling_cost",
    "mismatch", "mismatch_series", "extra_cost", "extra_cost_series", "penalty_cost", "penalty_series",
    "total_cost_day", "renewables", "make_schedule",
)
