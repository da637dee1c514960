"""k-step prediction RMSE of the five Chua predictors for each disturbance level.

Usage: python3 scripts/chua_tables.py [--stds 0.01,0.05] [--horizons 3,5,7] [--out runs/chua_tables]
Prints one table per disturbance level and writes ``rmse_k.csv``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
from pathlib import Path

from sobolev_sysid.config import PRESETS
from sobolev_sysid.runner import run


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--stds", default="0.01,0.05")
    p.add_argument("--horizons", default="3,5,7")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="runs/chua_tables")
    args = p.parse_args()

    stds = [float(s) for s in args.stds.split(",")]
    ks = tuple(int(k) for k in args.horizons.split(","))
    base = PRESETS["chua"]()
    bounds = dataclasses.replace(base.bounds, horizon=ks[0])
    out = Path(args.out)
    records = []
    for std in stds:
        cfg = base.replace(seed=args.seed, bounds=bounds,
                           chua=dataclasses.replace(base.chua, disturbance_std=std, horizons=ks))
        rmse_k = run(cfg, out / f"std{std:g}").metrics["rmse_k"]
        print(f"\ndisturbance std {std:g}")
        print(f"{'predictor':>10}" + "".join(f"{'RMSE_' + str(k):>12}" for k in ks))
        for name in (m.name for m in base.models):
            print(f"{name:>10}" + "".join(f"{rmse_k[name][str(k)]:>12.3e}" for k in ks))
            records.append({"std": std, "predictor": name, **{f"rmse_{k}": rmse_k[name][str(k)] for k in ks}})
    with open(out / "rmse_k.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(records[0]))
        w.writeheader()
        w.writerows(records)


if __name__ == "__main__":
    main()
