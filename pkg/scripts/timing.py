"""Wall time of one full-year design optimisation plus power flow.

    python scripts/timing.py --buildings 30 --threads 8
"""

import argparse
import time

from lvgrid.demand import build_profiles, with_estimates
from lvgrid.scenario import analyse, build_tariff, evaluate, inputs_from_records
from lvgrid.synthetic import INTENSITY, synth_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--buildings", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--tariff", default="Reference DT")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    fx = synth_fixture(args.buildings, seed=args.seed)
    bs = build_profiles(with_estimates(fx.buildings, INTENSITY), fx.reference_profiles)
    t0 = time.perf_counter()
    inputs = inputs_from_records("timing", fx.network, bs, fx.weather)
    outcome = evaluate(inputs, build_tariff(inputs, args.tariff), args.threads)
    t1 = time.perf_counter()
    run = analyse(inputs, outcome)
    t2 = time.perf_counter()
    print(f"{args.buildings} buildings, {len(inputs.index)} steps, {args.threads} worker(s)")
    print(f"design optimisation {t1 - t0:.1f} s, power flow + KPIs {t2 - t1:.1f} s, total {t2 - t0:.1f} s")
    print(f"penetration {run.report.row['pv_penetration_pct']:.1f}%, battery {run.report.row['battery_kwh']:.1f} kWh")


if __name__ == "__main__":
    main()
