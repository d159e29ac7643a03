"""Train the neural scheduler on the default synthetic world and compare it
with the benchmark and the ideal schedule over the held-out month.

    python3 scripts/run_experiment.py --out runs/default
    python3 scripts/run_experiment.py --epochs 20 --lr 3e-4 --out runs/slow
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from iesched import neural as nn
from iesched.core import PriceBook, SystemConfig
from iesched.data import build_dataset
from iesched.sim import METHODS, compare, format_comparison, run_experiment, write_reports


def main(argv=None):
    ap = argparse.ArgumentParser(description="train and compare on the synthetic world")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--batches", type=int, default=500, help="batches per epoch")
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--decay", choices=("constant", "cosine"), default="cosine")
    ap.add_argument("--large", action="store_true")
    ap.add_argument("--out", default="runs/experiment")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)

    cfg = SystemConfig.large() if args.large else SystemConfig()
    prices = PriceBook()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    ds = build_dataset(seed=args.seed)
    print(f"dataset {ds.hash[:12]} built in {time.perf_counter() - t0:.1f} s")
    validation = (np.stack([d.as_array() for d in ds.base_days[::12]]), ds.errors_array())
    tc = nn.TrainConfig(lr=args.lr, lam=args.lam, epochs=args.epochs, batches_per_epoch=args.batches, seed=args.seed,
                         lr_decay=args.decay)

    def on_epoch(ck):
        row = ck.trace[-1]
        print(f"epoch {row['epoch']:3d}  train {row['train_loss']:.4f}  val {row['val_loss']:.4f}", flush=True)

    t0 = time.perf_counter()
    _, best = nn.train(cfg, prices, ds.pool_array(), ds.errors_array(), tc, validation=validation,
                       dataset_hash=ds.hash, on_epoch=on_epoch)
    print(f"trained in {time.perf_counter() - t0:.0f} s, best epoch {best.epoch}")
    nn.save_checkpoint(best, out / "checkpoint.json")

    reports = [run_experiment(cfg, prices, ds.test_forecasts, ds.test_actuals, m, params=best.params)
               for m in METHODS]
    comp = compare(*reports)
    write_reports(out, reports, comp)
    text = format_comparison(comp)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)


if __name__ == "__main__":
    main()
