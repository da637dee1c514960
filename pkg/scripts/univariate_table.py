"""Validation RMSE of both univariate models over a range of seeds.

Usage: python3 scripts/univariate_table.py [--seeds 1-10] [--out runs/univariate_table]
Prints one row per seed plus the medians, and writes ``table.csv``.
"""

from __future__ import annotations

import argparse
import csv
import statistics
from pathlib import Path

from sobolev_sysid.config import PRESETS, load_config
from sobolev_sysid.runner import run

COLUMNS = ("rmse", "rmse_d1")


def seed_range(text: str) -> list[int]:
    lo, _, hi = text.partition("-")
    return list(range(int(lo), int(hi or lo) + 1))


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", default="1-10", help="inclusive range such as 1-10")
    p.add_argument("--config", help="YAML config (defaults to the univariate preset)")
    p.add_argument("--out", default="runs/univariate_table")
    args = p.parse_args()

    base = load_config(args.config) if args.config else PRESETS["univariate"]()
    out = Path(args.out)
    rows = []
    for seed in seed_range(args.seeds):
        models = run(base.replace(seed=seed), out / f"seed{seed}").metrics["models"]
        row = {"seed": seed}
        for name in sorted(models):
            for col in COLUMNS:
                row[f"{name}_{col}"] = models[name][col]
        rows.append(row)
    fields = list(rows[0])
    median = {"seed": "median", **{f: statistics.median(r[f] for r in rows) for f in fields[1:]}}
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows + [median])
    print("  ".join(f"{f:>16}" for f in fields))
    for r in rows + [median]:
        print("  ".join(f"{r[f]:>16}" if f == "seed" else f"{r[f]:>16.3e}" for f in fields))


if __name__ == "__main__":
    main()
