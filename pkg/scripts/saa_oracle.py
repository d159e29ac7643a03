"""Sample-average bound on what a forecast-only day-ahead plan can save.

For each held-out day the storage flows are taken from the deterministic
benchmark, and the grid and gas purchases of every slot are chosen by a
scenario LP that minimizes the expected settled cost over the whole error
pool. The resulting gap ratio ``(saa - ideal) / (benchmark - ideal)`` is a
reference point for how much extra cost a learned scheduler could remove in
a given synthetic error world.

    python3 scripts/saa_oracle.py                 # default error world
    python3 scripts/saa_oracle.py --legacy        # near-zero-mean noise world
    python3 scripts/saa_oracle.py --spec '{"delta_E": {"family": "gaussian", "loc": 0.1, "scale": 0.05}}'
"""

import argparse
import json

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from iesched.benchmark import benchmark_schedule
from iesched.core import PriceBook, SystemConfig, make_schedule, total_cost_day
from iesched.data import ErrorSpec, SeriesError, build_dataset

LEGACY = {
    "delta_E": dict(family="gaussian", loc=0.05, scale=0.07),
    "delta_H": dict(family="beta", a=9.0, b=7.0),
    "delta_W": dict(family="gaussian", loc=-0.06, scale=0.15),
    "delta_PV": dict(family="gaussian", loc=-0.04, scale=0.12),
}


def scenario_purchases(cfg, prices, forecast, deltas, storage):
    """Per-slot expected-cost grid and gas purchases with storage fixed."""
    n_sc = deltas.shape[0]
    ev, tes = storage[: cfg.K_EV].sum(0), storage[cfg.K_EV :].sum(0)
    S_E, G_CHP, G_B = np.zeros(cfg.T), np.zeros(cfg.T), np.zeros(cfg.T)
    eye = sp.identity(n_sc)
    zeros2 = sp.csr_matrix((n_sc, 2 * n_sc))
    for t in range(cfg.T):
        act = np.maximum((1 + deltas[:, :, t]) * forecast.as_array()[:, t], 0)
        wind, pv = np.clip(act[:, 2], 0, cfg.S_W_max), np.clip(act[:, 3], 0, cfg.S_PV_max)
        # variables: S_E, G_CHP, G_B, then shortfall/surplus pairs for electricity and gas per scenario
        c = np.zeros(3 + 4 * n_sc)
        c[0], c[1], c[2] = prices.C_E_DA[t], prices.C_G_DA[t], prices.C_G_DA[t]
        c[3 : 3 + n_sc] = prices.C_E_plus / n_sc
        c[3 + n_sc : 3 + 2 * n_sc] = -(prices.C_E_DA[t] - prices.C_E_minus) / n_sc
        c[3 + 2 * n_sc : 3 + 3 * n_sc] = prices.C_G_plus / n_sc
        c[3 + 3 * n_sc :] = -(prices.C_G_DA[t] - prices.C_G_minus) / n_sc
        rows_e = sp.hstack([sp.csr_matrix(np.tile([cfg.eta_TF, cfg.eta_CHP_E, 0.0], (n_sc, 1))),
                            cfg.eta_TF * eye, -cfg.eta_TF * eye, zeros2])
        rows_g = sp.hstack([sp.csr_matrix(np.tile([0.0, cfg.eta_CHP_H, cfg.eta_B], (n_sc, 1))),
                            zeros2, cfg.eta_B * eye, -cfg.eta_B * eye])
        a_eq = sp.vstack([rows_e, rows_g]).tocsr()
        b_eq = np.concatenate([act[:, 0] - wind - pv - ev[t], act[:, 1] - tes[t]])
        a_ub = sp.csr_matrix(np.concatenate([[0.0, 1.0, 1.0], np.zeros(4 * n_sc)])[None, :])
        bounds = [(0, cfg.S_TF_max), (0, cfg.S_CHP_max), (0, cfg.S_B_max)] + [(0, None)] * (4 * n_sc)
        r = linprog(c, A_ub=a_ub, b_ub=[cfg.S_G_max], A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if r.status != 0:
            raise RuntimeError(f"slot {t + 1}: scenario LP failed ({r.message})")
        S_E[t], G_CHP[t], G_B[t] = r.x[:3]
    return make_schedule(cfg, S_E, G_CHP, G_B, storage)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--legacy", action="store_true", help="use the near-zero-mean error world")
    ap.add_argument("--spec", help="JSON mapping series name -> SeriesError fields")
    args = ap.parse_args(argv)
    laws = dict(LEGACY) if args.legacy else {}
    if args.spec:
        laws.update(json.loads(args.spec))
    spec = ErrorSpec(**{k: SeriesError(**v) for k, v in laws.items()})
    cfg, prices = SystemConfig(), PriceBook()
    ds = build_dataset(errors=spec, seed=args.seed, pool_size=10)
    deltas = ds.errors_array()
    totals = {"ideal": [], "saa": [], "benchmark": []}
    for f, a in zip(ds.test_forecasts, ds.test_actuals):
        bench = benchmark_schedule(cfg, f, prices).schedule
        saa = scenario_purchases(cfg, prices, f, deltas, bench.storage())
        totals["benchmark"].append(total_cost_day(cfg, bench, f, a, prices).total)
        totals["saa"].append(total_cost_day(cfg, saa, f, a, prices).total)
        totals["ideal"].append(total_cost_day(cfg, benchmark_schedule(cfg, a, prices).schedule, a, a, prices).total)
    mean = {k: float(np.mean(v)) for k, v in totals.items()}
    ratio = (mean["saa"] - mean["ideal"]) / (mean["benchmark"] - mean["ideal"])
    for k, v in mean.items():
        print(f"{k:10s} mean daily cost {v:10.4f}")
    print(f"gap ratio {ratio:.4f} (extra-cost reduction {100 * (1 - ratio):.1f}%)")


if __name__ == "__main__":
    main()
