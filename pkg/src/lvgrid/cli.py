"""Command line: ``lvgrid run|sweep|validate|synth``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import LvGridError
from .tariffs import LEVELS, TARIFF_IDS

log = logging.getLogger("lvgrid")


def _run(args) -> int:
    from .scenario import load_config, run_scenario

    cfg = load_config(args.scenario, level=args.level)
    run = run_scenario(cfg, args.out, threads=args.threads, dump_dispatch=args.dump_dispatch)
    row = run.report.row
    print(
        f"{row['network']} / {row['tariff']}: penetration {row['pv_penetration_pct']:.1f}%, "
        f"battery {row['battery_kwh']:.1f} kWh, recovery {row['recovery']:.0f}, outputs in {args.out or cfg.out}"
    )
    return 0


def _sweep(args) -> int:
    from .scenario import load_config, sweep

    cfgs = [load_config(p) for p in args.scenario]
    out = args.out or cfgs[0].out
    if out is None:
        raise SystemExit("sweep needs --out")
    runs = sweep(cfgs, out, args.tariffs or TARIFF_IDS, args.threads, args.level)
    print(f"{len(runs)} scenario runs written to {out}")
    return 0


def _validate(args) -> int:
    from .scenario import load_config, prepare_inputs

    for p in args.scenario:
        cfg = load_config(p, level=args.level)
        inputs = prepare_inputs(cfg)
        n = len(inputs.index)
        roof = sum(b.pv_bound_kw for b in inputs.buildings)
        print(f"{p}: ok ({len(inputs.buildings)} buildings, {len(inputs.network.buses)} buses, {n} steps, roof {roof:.1f} kW)")
    return 0


def _synth(args) -> int:
    from .synthetic import synth_fixture, write_fixture

    fx = synth_fixture(args.buildings, seed=args.seed, cloudy=not args.clear_sky, name=args.name)
    extra = {"days": args.days} if args.days else None
    path = write_fixture(fx, args.out, extra)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lvgrid", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--out", type=Path)
    r.add_argument("--level", choices=LEVELS)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--dump-dispatch", action="store_true", help="write per-building dispatch CSVs")
    r.set_defaults(func=_run)

    s = sub.add_parser("sweep", help="all tariffs on one or more networks")
    s.add_argument("--scenario", required=True, type=Path, action="append", help="repeat for several networks")
    s.add_argument("--out", type=Path)
    s.add_argument("--level", choices=LEVELS)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--tariffs", nargs="+", help="subset of tariff ids (default: all 14)")
    s.set_defaults(func=_sweep)

    v = sub.add_parser("validate", help="check inputs without optimising")
    v.add_argument("--scenario", required=True, type=Path, action="append")
    v.add_argument("--level", choices=LEVELS)
    v.set_defaults(func=_validate)

    g = sub.add_parser("synth", help="write a synthetic input set")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--buildings", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--days", type=int)
    g.add_argument("--name", default="synthetic")
    g.add_argument("--clear-sky", action="store_true")
    g.set_defaults(func=_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    if getattr(args, "threads", 1) < 1:
        print("error: [config] --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except LvGridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: [io] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
