"""Feed-forward day-ahead scheduler trained on expected settlement cost.

The network maps a flattened forecast (4 series x T slots, channel-major)
to ``(3 + K) * T`` raw outputs, laid out channel-major as
``[S_E, S_G, v_CHP, storage_1 .. storage_K]``. A differentiable output
stage turns raw outputs into a schedule that meets every physical
constraint except the SOC bounds, which the training loss penalizes.

Gradients are hand-derived (reverse mode over numpy arrays). Kink
conventions: PReLU'(0) = 1, d|x|/dx at 0 is 0, the extra-cost slope at a
zero mismatch is the shortfall slope, and ties in max/min pick the first
argument.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import DayProfile, ErrorSample, PriceBook, Schedule, SystemConfig

log = logging.getLogger(__name__)

FORMAT = "iesched-checkpoint"
FORMAT_VERSION = 1
HIDDEN = (768, 576, 384)
SLOPE = 0.25


def prelu(x: np.ndarray, slope: float = SLOPE) -> np.ndarray:
    return np.maximum(x, 0.0) + slope * np.minimum(x, 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split form avoids overflow warnings for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def n_outputs(config: SystemConfig) -> int:
    return (3 + config.K_EV + config.K_TES) * config.T


def input_scales(config: SystemConfig) -> np.ndarray:
    """Per-input divisors: device limits bounding each series."""
    per = [config.S_TF_max, config.S_B_max * config.eta_B, config.S_W_max, config.S_PV_max]
    return np.repeat(np.array(per, dtype=float), config.T)


@dataclass
class NetworkParams:
    """Weights stored in one flat vector; ``layers()`` returns views into it.

    Weight matrices are (fan_in, fan_out) so a batch propagates as ``x @ W + b``.
    """

    sizes: tuple
    flat: np.ndarray
    in_scale: np.ndarray
    slope: float = SLOPE

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.flat = np.asarray(self.flat, dtype=float)
        self.in_scale = np.asarray(self.in_scale, dtype=float)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if self.flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {self.flat.shape}")
        if self.in_scale.shape != (self.sizes[0],) or np.any(self.in_scale <= 0):
            raise ValueError("input scales must be positive, one per input")
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("parameters must be finite")

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def layers(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            W = flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, flat[pos : pos + b]))
            pos += b
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.sizes, self.flat.copy(), self.in_scale.copy(), self.slope)

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        return NetworkParams(self.sizes, flat, self.in_scale, self.slope)

    @classmethod
    def init(cls, config: SystemConfig, rng: np.random.Generator, hidden: Sequence[int] = HIDDEN) -> "NetworkParams":
        """Uniform in +-1/sqrt(fan_in) for weights and biases."""
        sizes = (4 * config.T, *hidden, n_outputs(config))
        parts = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            r = 1.0 / np.sqrt(a)
            parts.append(rng.uniform(-r, r, size=a * b))
            parts.append(rng.uniform(-r, r, size=b))
        return cls(sizes, np.concatenate(parts), input_scales(config))

    @classmethod
    def zeros(cls, config: SystemConfig, hidden: Sequence[int] = HIDDEN) -> "NetworkParams":
        sizes = (4 * config.T, *hidden, n_outputs(config))
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        return cls(sizes, np.zeros(n), input_scales(config))


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def flatten_forecasts(forecasts) -> np.ndarray:
    """(B, 4T) network inputs from DayProfiles or a (B, 4, T) array."""
    if isinstance(forecasts, DayProfile):
        forecasts = [forecasts]
    if isinstance(forecasts, np.ndarray):
        return forecasts.reshape(forecasts.shape[0], -1)
    return np.stack([f.as_array().ravel() for f in forecasts])


def _forward(params: NetworkParams, X: np.ndarray, flat: np.ndarray | None = None):
    h = X / params.in_scale
    acts, pres = [h], []
    layers = params.layers(flat)
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i == len(layers) - 1:
            return z, acts, pres
        pres.append(z)
        h = prelu(z, params.slope)
        acts.append(h)
    raise AssertionError("unreachable")


def forward_raw(params: NetworkParams, forecast_vec) -> np.ndarray:
    """Unconstrained network output for one (4T,) input or a (B, 4T) batch of kWh values."""
    X, single = _as_batch(forecast_vec)
    if X.shape[1] != params.sizes[0]:
        raise ValueError(f"input has {X.shape[1]} entries, network expects {params.sizes[0]}")
    out, _, _ = _forward(params, X)
    return out[0] if single else out


def _backward(params: NetworkParams, acts, pres, g_out: np.ndarray, flat: np.ndarray | None = None) -> np.ndarray:
    layers = params.layers(flat)
    grads = []
    g = g_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((acts[i].T @ g).ravel())
        grads.append(g.sum(axis=0))
        if i > 0:
            g = g @ W.T
            g = g * np.where(pres[i - 1] >= 0, 1.0, params.slope)
    # reverse into forward layout: W1, b1, W2, b2, ...
    ordered = []
    for i in range(len(layers)):
        j = 2 * (len(layers) - 1 - i)
        ordered.extend([grads[j], grads[j + 1]])
    return np.concatenate(ordered)


# ---------------------------------------------------------------------------
# Constraint enforcement
# ---------------------------------------------------------------------------


@dataclass
class Enforced:
    """Batch of enforced schedules plus what the backward pass needs."""

    S_E: np.ndarray  # (B, T)
    S_G: np.ndarray
    v_CHP: np.ndarray
    G_CHP: np.ndarray
    G_B: np.ndarray
    flows: np.ndarray  # (B, K, T)
    cache: dict = field(repr=False, default_factory=dict)

    def schedule(self, config: SystemConfig, i: int = 0) -> Schedule:
        return Schedule(self.S_E[i], self.S_G[i], self.flows[i, : config.K_EV], self.flows[i, config.K_EV :],
                        self.v_CHP[i], 1.0 - self.v_CHP[i])


def _device_arrays(config: SystemConfig):
    devs = config.devices()
    ch = np.array([d.ch_limit for d in devs]).reshape(-1, 1)
    dch = np.array([d.dch_limit for d in devs]).reshape(-1, 1)
    return ch, dch, config.window_mask().astype(float)


def enforce_batch(config: SystemConfig, raw: np.ndarray) -> Enforced:
    raw = np.asarray(raw, dtype=float)
    B = raw.shape[0]
    T, K = config.T, config.K_EV + config.K_TES
    if raw.shape[1] != (3 + K) * T:
        raise ValueError(f"raw output has {raw.shape[1]} entries, expected {(3 + K) * T}")
    r = raw.reshape(B, 3 + K, T)

    s_e = _sigmoid(r[:, 0])
    s_g = _sigmoid(r[:, 1])
    v = _sigmoid(r[:, 2])
    S_E = config.S_TF_max * s_e
    S_G0 = config.S_G_max * s_g
    # largest gas stream keeping both converters within their own caps
    with np.errstate(divide="ignore", over="ignore"):
        cap_chp = np.where(v > 0, config.S_CHP_max / np.where(v > 0, v, 1.0), np.inf)
        cap_b = np.where(v < 1, config.S_B_max / np.where(v < 1, 1.0 - v, 1.0), np.inf)
    cand = np.stack([S_G0, cap_chp, cap_b])
    which = np.argmin(cand, axis=0)  # first index on ties
    S_G = np.take_along_axis(cand, which[None], axis=0)[0]
    G_CHP = v * S_G
    G_B = (1.0 - v) * S_G

    ch, dch, mask = _device_arrays(config)
    a = np.tanh(r[:, 3:])
    scale = np.where(a > 0, dch, ch)
    f2 = a * scale * mask
    n = mask.sum(axis=1, keepdims=True)
    f3 = (f2 - f2.sum(axis=2, keepdims=True) / np.maximum(n, 1.0)) * mask
    ratio = np.where(f3 > 0, f3 / dch, -f3 / ch) if K else np.zeros_like(f3)
    arg = np.argmax(ratio, axis=2) if K else np.zeros((B, 0), dtype=int)
    R = np.take_along_axis(ratio, arg[..., None], axis=2)[..., 0] if K else np.zeros((B, 0))
    shrink = np.where(R > 1.0, 1.0 / np.where(R > 1.0, R, 1.0), 1.0)
    flows = f3 * shrink[..., None]
    cache = dict(s_e=s_e, s_g=s_g, v=v, which=which, S_G0=S_G0, a=a, scale=scale, mask=mask, n=n, f3=f3,
                 arg=arg, R=R, shrink=shrink, ch=ch, dch=dch)
    return Enforced(S_E, S_G, v, G_CHP, G_B, flows, cache)


def enforce_constraints(config: SystemConfig, raw) -> Schedule:
    """Map one raw output vector onto a schedule meeting all non-SOC constraints."""
    raw = np.asarray(raw, dtype=float)
    return enforce_batch(config, raw.reshape(1, -1)).schedule(config)


def _enforce_backward(config: SystemConfig, enf: Enforced, g_SE, g_SG, g_GCHP, g_GB, g_flows) -> np.ndarray:
    c = enf.cache
    B, T = g_SE.shape
    K = enf.flows.shape[1]
    v, S_G, which = c["v"], enf.S_G, c["which"]

    g_SG_tot = g_SG + v * g_GCHP + (1.0 - v) * g_GB
    g_v = S_G * (g_GCHP - g_GB)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        dSG_dv = np.where(which == 1, -config.S_CHP_max / np.where(v > 0, v * v, 1.0),
                          np.where(which == 2, config.S_B_max / np.where(v < 1, (1 - v) ** 2, 1.0), 0.0))
    g_v = g_v + g_SG_tot * dSG_dv
    g_SG0 = np.where(which == 0, g_SG_tot, 0.0)

    g_raw = np.zeros((B, 3 + K, T))
    g_raw[:, 0] = g_SE * config.S_TF_max * c["s_e"] * (1 - c["s_e"])
    g_raw[:, 1] = g_SG0 * config.S_G_max * c["s_g"] * (1 - c["s_g"])
    g_raw[:, 2] = g_v * v * (1 - v)

    if K:
        f3, shrink, R, arg = c["f3"], c["shrink"], c["R"], c["arg"]
        g_f3 = g_flows * shrink[..., None]
        active = R > 1.0
        g_shrink = np.sum(g_flows * f3, axis=2)
        g_R = np.where(active, -g_shrink / np.where(active, R * R, 1.0), 0.0)
        f3_at = np.take_along_axis(f3, arg[..., None], axis=2)[..., 0]
        lim = np.where(f3_at > 0, 1.0 / c["dch"][:, 0], -1.0 / c["ch"][:, 0])
        np.put_along_axis(g_f3, arg[..., None],
                          np.take_along_axis(g_f3, arg[..., None], axis=2) + (g_R * lim)[..., None], axis=2)
        mask, n = c["mask"], c["n"]
        g_f3 = g_f3 * mask
        g_f2 = (g_f3 - g_f3.sum(axis=2, keepdims=True) / np.maximum(n, 1.0)) * mask
        a = c["a"]
        g_raw[:, 3:] = g_f2 * c["scale"] * (1 - a * a)
    return g_raw.reshape(B, -1)


def schedule(params: NetworkParams, config: SystemConfig, forecast: DayProfile) -> Schedule:
    """Day-ahead schedule for one forecast."""
    raw = forward_raw(params, forecast.as_array().ravel())
    return enforce_constraints(config, raw)


def schedule_batch(params: NetworkParams, config: SystemConfig, forecasts) -> list[Schedule]:
    enf = enforce_batch(config, forward_raw(params, flatten_forecasts(forecasts)))
    return [enf.schedule(config, i) for i in range(enf.S_E.shape[0])]


# ---------------------------------------------------------------------------
# Loss and gradient
# ---------------------------------------------------------------------------


def _stack(items, kind) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items
    if isinstance(items, kind):
        items = [items]
    return np.stack([x.as_array() for x in items])


def _loss_core(config: SystemConfig, prices: PriceBook, enf: Enforced, F: np.ndarray, D: np.ndarray, lam: float,
               want_grad: bool):
    """Mean over all (forecast, error) pairs of daily cost plus lam * daily SOC penalty."""
    B, E = F.shape[0], D.shape[0]
    A = np.maximum((1.0 + D[None]) * F[:, None], 0.0)  # (B, E, 4, T)
    L_E, L_H = A[:, :, 0], A[:, :, 1]
    W = np.clip(A[:, :, 2], 0.0, config.S_W_max)
    PV = np.clip(A[:, :, 3], 0.0, config.S_PV_max)
    kev = config.K_EV
    ev, tes = enf.flows[:, :kev], enf.flows[:, kev:]
    ev_sum = ev.sum(axis=1)[:, None]
    tes_sum = tes.sum(axis=1)[:, None]
    S_E, G_CHP, G_B = enf.S_E[:, None], enf.G_CHP[:, None], enf.G_B[:, None]

    dE = (L_E - config.eta_TF * S_E - config.eta_CHP_E * G_CHP - W - PV - ev_sum) / config.eta_TF
    dG = (L_H - config.eta_CHP_H * G_CHP - config.eta_B * G_B - tes_sum) / config.eta_B
    slope_E = np.where(dE >= 0, prices.C_E_plus, prices.C_E_DA - prices.C_E_minus)
    slope_G = np.where(dG >= 0, prices.C_G_plus, prices.C_G_DA - prices.C_G_minus)
    extra = (slope_E * dE + slope_G * dG).sum(axis=(1, 2)) / E  # (B,)

    sch = (prices.C_E_DA * enf.S_E + prices.C_G_DA * enf.S_G
           - prices.C_EV * np.abs(ev).sum(axis=1) - prices.C_TES * np.abs(tes).sum(axis=1)).sum(axis=1)
    ren = (prices.C_W * W + prices.C_PV * PV).sum(axis=(1, 2)) / E

    sgn = config.soc_sign
    devs = config.devices()
    soc0 = np.array([d.soc0 for d in devs]).reshape(-1, 1)
    lo = np.array([d.soc_min for d in devs]).reshape(-1, 1)
    hi = np.array([d.soc_max for d in devs]).reshape(-1, 1)
    mask = enf.cache["mask"] if devs else np.zeros((0, config.T))
    soc = soc0 + sgn * np.cumsum(enf.flows * mask, axis=2)
    under, over = lo - soc, soc - hi
    pen_terms = np.maximum(np.maximum(under, over), 0.0) * mask
    pen = pen_terms.sum(axis=(1, 2))

    per = sch + extra - ren + lam * pen
    loss = float(per.mean())
    if not want_grad:
        return loss, None
    w = 1.0 / (B * E)
    gE = slope_E * w  # d(loss)/d(dE) per pair
    gG = slope_G * w
    g_SE = prices.C_E_DA / B - gE.sum(axis=1)
    g_SG = np.broadcast_to(prices.C_G_DA / B, (B, config.T)).copy()
    g_GCHP = -(gE * (config.eta_CHP_E / config.eta_TF) + gG * (config.eta_CHP_H / config.eta_B)).sum(axis=1)
    g_GB = -gG.sum(axis=1)
    g_flow = np.zeros_like(enf.flows)
    g_flow[:, :kev] = -prices.C_EV / B * np.sign(ev) - (gE.sum(axis=1) / config.eta_TF)[:, None]
    g_flow[:, kev:] = -prices.C_TES / B * np.sign(tes) - (gG.sum(axis=1) / config.eta_B)[:, None]
    # penalty: first argument wins ties, so under >= over and under >= 0 selects the lower bound
    pick_under = (under >= over) & (under >= 0)
    pick_over = ~pick_under & (over >= 0)
    g_soc = (np.where(pick_under, -1.0, 0.0) + np.where(pick_over, 1.0, 0.0)) * mask * (lam / B)
    g_flow += sgn * np.cumsum(g_soc[..., ::-1], axis=2)[..., ::-1] * mask
    return loss, (g_SE, g_SG, g_GCHP, g_GB, g_flow)


def loss(params: NetworkParams, config: SystemConfig, prices: PriceBook, forecasts, errors,
         lam: float = 1.0) -> float:
    F = _stack(forecasts, DayProfile)
    D = _stack(errors, ErrorSample)
    if F.shape[0] == 0 or D.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    enf = enforce_batch(config, forward_raw(params, F.reshape(F.shape[0], -1)))
    return _loss_core(config, prices, enf, F, D, lam, False)[0]


def loss_and_gradient(params: NetworkParams, config: SystemConfig, prices: PriceBook, forecasts, errors,
                      lam: float = 1.0, flat: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    F = _stack(forecasts, DayProfile)
    D = _stack(errors, ErrorSample)
    if F.shape[0] == 0 or D.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    raw, acts, pres = _forward(params, F.reshape(F.shape[0], -1), flat)
    enf = enforce_batch(config, raw)
    value, g = _loss_core(config, prices, enf, F, D, lam, True)
    g_raw = _enforce_backward(config, enf, *g)
    return value, _backward(params, acts, pres, g_raw, flat)


def gradient(params: NetworkParams, config: SystemConfig, prices: PriceBook, forecasts, errors,
             lam: float = 1.0) -> np.ndarray:
    """Gradient of :func:`loss` as a flat vector in the layout of ``params.flat``."""
    return loss_and_gradient(params, config, prices, forecasts, errors, lam)[1]


# ---------------------------------------------------------------------------
# Optimizer and training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    lam: float = 1.0
    forecast_batch: int = 4
    error_batch: int = 55
    batches_per_epoch: int = 10000
    epochs: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: tuple = HIDDEN
    # "constant" keeps lr fixed; "cosine" anneals from lr to lr_final over the run
    lr_decay: str = "constant"
    lr_final: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.forecast_batch < 1 or self.error_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.batches_per_epoch < 0 or self.epochs < 0:
            raise ValueError("epoch and batch counts must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")
        if self.lr_decay not in ("constant", "cosine"):
            raise ValueError("lr_decay must be 'constant' or 'cosine'")
        if not 0 <= self.lr_final <= self.lr:
            raise ValueError("lr_final must lie in [0, lr]")


def learning_rate(tc: TrainConfig, progress: float) -> float:
    """Step size at ``progress`` in [0, 1] of the run."""
    if tc.lr_decay == "constant":
        return tc.lr
    return tc.lr_final + 0.5 * (tc.lr - tc.lr_final) * (1.0 + math.cos(math.pi * min(max(progress, 0.0), 1.0)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(flat: np.ndarray, state: AdamState, grad: np.ndarray, tc: TrainConfig,
              step_index: int, lr: float | None = None) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and moments."""
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    m = tc.beta1 * state.m + (1 - tc.beta1) * grad
    v = tc.beta2 * state.v + (1 - tc.beta2) * grad * grad
    m_hat = m / (1 - tc.beta1 ** step_index)
    v_hat = v / (1 - tc.beta2 ** step_index)
    step = tc.lr if lr is None else lr
    return flat - step * m_hat / (np.sqrt(v_hat) + tc.eps), AdamState(m, v, step_index)


@dataclass
class Checkpoint:
    params: NetworkParams
    train_config: TrainConfig
    config: SystemConfig
    epoch: int = 0
    dataset_hash: str = ""
    adam: AdamState | None = None
    trace: list = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, checkpoint: Checkpoint):
        super().__init__(msg)
        self.checkpoint = checkpoint


def _config_dict(config: SystemConfig) -> dict:
    d = asdict(config)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
    return d


def train(config: SystemConfig, prices: PriceBook, forecasts, errors, tc: TrainConfig, *,
          init: Checkpoint | None = None, validation: tuple | None = None, dataset_hash: str = "",
          on_epoch: Callable[[Checkpoint], None] | None = None, keep_best: bool = True) -> tuple[Checkpoint, Checkpoint]:
    """Unsupervised training on sampled (forecast, error) batches.

    ``validation`` is an optional ``(forecasts, errors)`` pair whose mean
    loss is tracked each epoch; with ``keep_best`` the returned second
    checkpoint holds the parameters of the best validation epoch (epoch 0
    is the initial network). Returns ``(last, best)``.
    """
    F = _stack(forecasts, DayProfile)
    D = _stack(errors, ErrorSample)
    if F.shape[0] == 0 or D.shape[0] == 0:
        raise ValueError("datasets must be non-empty")
    if init is None:
        params = NetworkParams.init(config, np.random.default_rng([tc.seed, 0]), tc.hidden)
        state = AdamState.zeros(params.n_params)
        start_epoch = 0
        trace: list = []
    else:
        params = init.params.copy()
        state = init.adam or AdamState.zeros(params.n_params)
        start_epoch = init.epoch
        trace = list(init.trace)
    rng = np.random.default_rng([tc.seed, 1, start_epoch])

    def val_loss(p):
        if validation is None:
            return None
        return loss(p, config, prices, validation[0], validation[1], tc.lam)

    flat = params.flat.copy()
    best_val = val_loss(params)
    if not trace:
        trace.append({"epoch": start_epoch, "train_loss": None, "val_loss": best_val})
    best = Checkpoint(params.copy(), tc, config, start_epoch, dataset_hash, None, list(trace))
    last = best
    n_steps = max(tc.epochs * tc.batches_per_epoch - 1, 1)
    for epoch in range(start_epoch + 1, start_epoch + tc.epochs + 1):
        total = 0.0
        for b in range(tc.batches_per_epoch):
            lr = learning_rate(tc, ((epoch - start_epoch - 1) * tc.batches_per_epoch + b) / n_steps)
            fi = rng.choice(F.shape[0], size=tc.forecast_batch, replace=F.shape[0] < tc.forecast_batch)
            ei = rng.choice(D.shape[0], size=tc.error_batch, replace=D.shape[0] < tc.error_batch)
            value, g = loss_and_gradient(params, config, prices, F[fi], D[ei], tc.lam, flat)
            if not (np.isfinite(value) and np.all(np.isfinite(g))):
                diag = Checkpoint(params.with_flat(flat.copy()), tc, config, epoch, dataset_hash, state, trace)
                raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch}, step {state.step + 1}", diag)
            flat, state = adam_step(flat, state, g, tc, state.step + 1, lr)
            total += value
        params = params.with_flat(flat.copy())
        v = val_loss(params)
        mean_train = total / tc.batches_per_epoch if tc.batches_per_epoch else None
        trace.append({"epoch": epoch, "train_loss": mean_train, "val_loss": v})
        log.info("epoch %d train %.6g val %s", epoch, mean_train if mean_train is not None else float("nan"), v)
        last = Checkpoint(params.copy(), tc, config, epoch, dataset_hash,
                          AdamState(state.m.copy(), state.v.copy(), state.step), list(trace))
        if v is not None and (best_val is None or v < best_val):
            best_val = v
            best = replace(last, adam=None)
        if on_epoch is not None:
            on_epoch(last)
    if not keep_best or validation is None:
        best = last
    best.trace = list(trace)
    return last, best


# ---------------------------------------------------------------------------
# Checkpoint files
# ---------------------------------------------------------------------------


def _floats(a: np.ndarray) -> list:
    return [float(x) for x in np.asarray(a).ravel()]


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Plain JSON; floats are written with round-trip precision."""
    p = ckpt.params
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "sizes": list(p.sizes),
        "slope": p.slope,
        "epoch": ckpt.epoch,
        "seed": ckpt.train_config.seed,
        "dataset_hash": ckpt.dataset_hash,
        "train_config": {**asdict(ckpt.train_config), "hidden": list(ckpt.train_config.hidden)},
        "system_config": _config_dict(ckpt.config),
        "trace": ckpt.trace,
        "in_scale": _floats(p.in_scale),
        "layers": [{"W": _floats(W), "b": _floats(b)} for W, b in p.layers()],
    }
    if ckpt.adam is not None:
        doc["adam"] = {"step": ckpt.adam.step, "m": _floats(ckpt.adam.m), "v": _floats(ckpt.adam.v)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> Checkpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a scheduler checkpoint")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    flat = np.concatenate([np.concatenate([np.array(l["W"], float), np.array(l["b"], float)]) for l in doc["layers"]])
    params = NetworkParams(tuple(doc["sizes"]), flat, np.array(doc["in_scale"], float), float(doc["slope"]))
    tc_doc = dict(doc["train_config"])
    tc_doc["hidden"] = tuple(tc_doc.get("hidden", HIDDEN))
    tc = TrainConfig(**tc_doc)
    config = SystemConfig(**doc["system_config"])
    adam = None
    if "adam" in doc:
        adam = AdamState(np.array(doc["adam"]["m"], float), np.array(doc["adam"]["v"], float), int(doc["adam"]["step"]))
    return Checkpoint(params, tc, config, int(doc["epoch"]), doc.get("dataset_hash", ""), adam, doc.get("trace", []))
