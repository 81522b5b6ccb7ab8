"""Tariff comparison on a synthetic feeder.

Writes a synthetic input set, runs the requested tariffs through the full
pipeline and prints the KPI table.

    python scripts/fixture_study.py --out runs/fixture --tariffs "Reference DT" "CT daily 30"
"""

import argparse
import logging
from pathlib import Path

import pandas as pd

from lvgrid.scenario import load_config, sweep
from lvgrid.synthetic import synth_fixture, write_fixture
from lvgrid.tariffs import TARIFF_IDS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/fixture"))
    ap.add_argument("--buildings", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--days", type=int, help="truncate the year (fast runs)")
    ap.add_argument("--tariffs", nargs="+", default=list(TARIFF_IDS))
    ap.add_argument("--calibrate", action="store_true", help="scale capacity prices to the reference recovery")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    extra = {"calibrate": "true"} if args.calibrate else {}
    if args.days:
        extra["days"] = args.days
    fx = synth_fixture(args.buildings, seed=args.seed)
    cfg = load_config(write_fixture(fx, args.out / "inputs", extra))
    sweep([cfg], args.out / "results", args.tariffs, args.threads)

    kpi = pd.read_csv(args.out / "results" / "kpi.csv")
    cols = ["tariff", "pv_penetration_pct", "battery_kwh", "curtailed_pct", "max_feedin_kw", "recovery", "profit"]
    with pd.option_context("display.width", 140, "display.float_format", "{:.2f}".format):
        print(kpi[cols].to_string(index=False))


if __name__ == "__main__":
    main()
