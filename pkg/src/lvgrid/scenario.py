"""End-to-end scenario runs: demand -> (sharing) -> optimisation -> power flow -> KPIs.

A scenario file is INI-style key/value text::

    [scenario]
    network = network.txt
    buildings = buildings.csv
    roofs = roofs.csv
    profiles = profiles
    weather = weather.csv
    transformer_load = transformer.csv   # optional, enables reconciliation
    tariff = CT daily 30
    level = mid
    pv_mode = optimized                  # or max-roof
    sharing = false
    calibrate = false
    reference_recovery =                 # CHF over the horizon; empty = run Reference DT first
    days =                               # optional horizon truncation

    [intensity]                          # kWh/m2/yr per category
    house = 35

Optional ``[costs]`` and ``[battery]`` sections override the cost model and
battery parameters by field name. Relative paths resolve against the
scenario file's directory.
"""

from __future__ import annotations

import configparser
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .calibration import CalibrationResult, calibrate
from .demand import BuildingRecord, build_profiles, load_buildings, load_reference_profiles, reconcile, with_estimates
from .errors import CalibrationError, ConfigError, NetworkValidationError
from .grid import NetworkModel, attached_bus, load_network, validate_building_mapping
from .kpi import ScenarioReport, aggregate_report, building_kpis, buildings_frame, write_kpi_csv
from .optimize import BatterySpec, CostModel, DesignResult, DispatchResult, no_system, optimize_design
from .powerflow import (
    congestion_stats, duration_curve, run_timeseries, write_duration_curve, write_line_loading, write_voltage,
)
from .pv import USABLE_FRACTION, WeatherSeries, building_unit_profile, monthly_irradiance, read_weather_csv, with_pv_bounds
from .sharing import FusionRecord, merge_for_sharing, split_after_sharing
from .tariffs import LEVELS, TARIFF_IDS, TariffPolicy, canonical_id, make_tariff
from .timeseries import STEPS_PER_DAY, read_series_csv

log = logging.getLogger(__name__)

PV_MODES = ("optimized", "max-roof")


@dataclass(frozen=True)
class ScenarioConfig:
    network: Path
    buildings: Path
    profiles: Path
    weather: Path
    roofs: Path | None = None
    transformer_load: Path | None = None
    name: str | None = None
    tariff: str = "Reference DT"
    level: str = "mid"
    curtailment: float | None = None
    pv_mode: str = "optimized"
    sharing: bool = False
    calibrate: bool = False
    reference_recovery: float | None = None
    out: Path | None = None
    seed: int = 0
    days: int | None = None
    rating_kva: float | None = None
    usable_fraction: float = USABLE_FRACTION
    intensity: dict = field(default_factory=dict)
    cost: CostModel = CostModel()
    battery: BatterySpec = BatterySpec()

    def __post_init__(self):
        if self.pv_mode not in PV_MODES:
            raise ConfigError(f"pv_mode must be one of {', '.join(PV_MODES)}, got {self.pv_mode!r}")
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {', '.join(LEVELS)}, got {self.level!r}")
        if self.curtailment is not None and not 0 < self.curtailment <= 1:
            raise ConfigError(f"curtailment must lie in (0, 1], got {self.curtailment}")
        if self.days is not None and not 1 <= self.days <= 365:
            raise ConfigError(f"days must lie in 1..365, got {self.days}")
        for name in ("network", "buildings", "profiles", "weather", "roofs", "transformer_load"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} path {p} does not exist")
        canonical_id(self.tariff)

    @property
    def network_name(self) -> str:
        return self.name or Path(self.network).stem


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _overrides(cls, section) -> dict:
    known = {f.name for f in fields(cls)}
    out = {}
    for k, v in section.items():
        if k not in known:
            raise ConfigError(f"unknown {cls.__name__} parameter {k!r}")
        out[k] = float(v)
    return out


def load_config(path: str | Path, **override) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file {path} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "scenario" not in cp:
        raise ConfigError(f"{path}: missing [scenario] section")
    sc = cp["scenario"]
    base = path.parent

    def p(key, required=True):
        v = sc.get(key, "").strip()
        if not v:
            if required:
                raise ConfigError(f"{path}: missing key {key!r}")
            return None
        q = Path(v)
        return q if q.is_absolute() else base / q

    def opt(key, conv):
        v = sc.get(key, "").strip()
        try:
            return conv(v) if v else None
        except ValueError:
            raise ConfigError(f"{path}: bad value for {key!r}: {v!r}") from None

    known = {
        "name", "network", "buildings", "roofs", "profiles", "weather", "transformer_load", "tariff", "level",
        "curtailment", "pv_mode", "sharing", "calibrate", "reference_recovery", "out", "seed", "days", "rating_kva",
        "usable_fraction",
    }
    unknown = set(sc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown scenario keys {', '.join(sorted(unknown))}")
    try:
        cost = CostModel(**_overrides(CostModel, cp["costs"])) if "costs" in cp else CostModel()
        battery = BatterySpec(**_overrides(BatterySpec, cp["battery"])) if "battery" in cp else BatterySpec()
        intensity = {k: float(v) for k, v in cp["intensity"].items()} if "intensity" in cp else {}
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    kw = dict(
        network=p("network"), buildings=p("buildings"), profiles=p("profiles"), weather=p("weather"),
        roofs=p("roofs", False), transformer_load=p("transformer_load", False), out=p("out", False),
        name=sc.get("name", "").strip() or None,
        tariff=sc.get("tariff", "Reference DT").strip(),
        level=sc.get("level", "mid").strip(),
        curtailment=opt("curtailment", float),
        pv_mode=sc.get("pv_mode", "optimized").strip(),
        sharing=_bool(sc.get("sharing", "false")),
        calibrate=_bool(sc.get("calibrate", "false")),
        reference_recovery=opt("reference_recovery", float),
        seed=opt("seed", int) or 0,
        days=opt("days", int),
        rating_kva=opt("rating_kva", float),
        usable_fraction=opt("usable_fraction", float) or USABLE_FRACTION,
        intensity=intensity, cost=cost, battery=battery,
    )
    kw.update({k: v for k, v in override.items() if v is not None})
    return ScenarioConfig(**kw)


@dataclass
class ScenarioInputs:
    """Everything a tariff evaluation needs, prepared once per network."""

    name: str
    network: NetworkModel
    buildings: list[BuildingRecord]  # with loads and PV bounds
    unit_profiles: dict[str, np.ndarray]
    index: pd.DatetimeIndex
    irradiance: np.ndarray  # monthly kWh/m2, for the IRR tariff
    pv_mode: str = "optimized"
    sharing: bool = False
    cost: CostModel = CostModel()
    battery: BatterySpec = BatterySpec()


def prepare_inputs(cfg: ScenarioConfig) -> ScenarioInputs:
    net = load_network(cfg.network, rating_kva=cfg.rating_kva)
    buildings = load_buildings(cfg.buildings, cfg.roofs)
    declared = attached_bus(net)
    fixed = []
    for b in buildings:
        bus = b.bus or declared.get(b.id, "")
        if b.id in declared and declared[b.id] != bus:
            raise NetworkValidationError(
                f"building {b.id} is on bus {bus} in the buildings file but on {declared[b.id]} in the network file"
            )
        fixed.append(replace(b, bus=bus))
    validate_building_mapping(net, fixed)
    refs = load_reference_profiles(cfg.profiles)
    buildings = build_profiles(with_estimates(fixed, cfg.intensity), refs)
    if cfg.transformer_load is not None:
        tr = read_series_csv(cfg.transformer_load).to_numpy()
        buildings, diag = reconcile(buildings, tr)
        if diag.clamped_steps:
            log.warning("reconciliation clamped %d steps", diag.clamped_steps)
    weather = read_weather_csv(cfg.weather)
    irradiance = monthly_irradiance(weather)
    n = len(weather) if cfg.days is None else cfg.days * STEPS_PER_DAY
    weather = weather.head(n)
    buildings = [replace(b, load=np.asarray(b.load)[:n]) for b in buildings]
    return inputs_from_records(
        cfg.network_name, net, buildings, weather, cfg.pv_mode, cfg.sharing, cfg.cost, cfg.battery,
        cfg.usable_fraction, irradiance,
    )


def inputs_from_records(
    name: str,
    net: NetworkModel,
    buildings: Sequence[BuildingRecord],
    weather: WeatherSeries,
    pv_mode: str = "optimized",
    sharing: bool = False,
    cost: CostModel = CostModel(),
    battery: BatterySpec = BatterySpec(),
    usable_fraction: float = USABLE_FRACTION,
    irradiance: np.ndarray | None = None,
) -> ScenarioInputs:
    """Inputs from in-memory buildings whose loads already cover the weather horizon."""
    if pv_mode not in PV_MODES:
        raise ConfigError(f"unknown pv_mode {pv_mode!r}")
    buildings = with_pv_bounds(sorted(buildings, key=lambda b: b.id), usable_fraction)
    for b in buildings:
        if b.load is None or len(b.load) != len(weather):
            raise ConfigError(f"building {b.id}: load length does not match the weather horizon")
    units = {b.id: building_unit_profile(b, weather).values for b in buildings}
    irr = monthly_irradiance(weather) if irradiance is None else np.asarray(irradiance)
    return ScenarioInputs(name, net, list(buildings), units, weather.index, irr, pv_mode, sharing, cost, battery)


@dataclass
class Outcome:
    """Per-building optimisation results for one tariff."""

    tariff: TariffPolicy
    results: dict[str, DesignResult]
    baselines: dict[str, DispatchResult]
    fusion: FusionRecord | None

    @property
    def recovery(self) -> float:
        return float(sum(r.bill.recovery_chf for r in self.results.values()))

    def net_injections(self) -> dict[str, np.ndarray]:
        """Net injection (kW, export positive) per original building id."""
        out = {bid: r.dispatch.exp - r.dispatch.imp for bid, r in self.results.items()}
        if self.fusion is not None and not self.fusion.degenerate:
            out.pop(self.fusion.merged_id)
            out.update(split_after_sharing(self.results[self.fusion.merged_id].dispatch, self.fusion))
        return out


def _optimize_one(args):
    b, unit, tariff, inputs_meta = args
    pv_mode, cost, battery, index = inputs_meta
    res = optimize_design(b.load, unit, b.pv_bound_kw, tariff, cost, battery, index=index, pv_mode=pv_mode)
    base = no_system(index, np.asarray(b.load, dtype=float), unit, tariff, battery)
    return b.id, res, base


def evaluate(inputs: ScenarioInputs, tariff: TariffPolicy, threads: int = 1) -> Outcome:
    """Optimise every building (after the optional merge) under ``tariff``."""
    buildings = inputs.buildings
    units = dict(inputs.unit_profiles)
    fusion = None
    if inputs.sharing:
        buildings, fusion = merge_for_sharing(buildings)
        if not fusion.degenerate:
            units[fusion.merged_id] = units[fusion.producer_id]
    meta = (inputs.pv_mode, inputs.cost, inputs.battery, inputs.index)
    jobs = [(b, units[b.id], tariff, meta) for b in buildings]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            done = list(ex.map(_optimize_one, jobs))
    else:
        done = [_optimize_one(j) for j in jobs]
    results = {bid: res for bid, res, _ in done}
    baselines = {bid: base for bid, _, base in done}
    return Outcome(tariff, results, baselines, fusion)


def build_tariff(inputs: ScenarioInputs, name: str, level: str = "mid", curtailment: float | None = None) -> TariffPolicy:
    return make_tariff(name, level, curtailment, irradiance_by_month=tuple(float(x) for x in inputs.irradiance))


def calibrate_tariff(
    inputs: ScenarioInputs, tariff: TariffPolicy, reference: float, threads: int = 1, tolerance: float = 0.02,
    cache: dict | None = None,
) -> tuple[CalibrationResult, Outcome]:
    """Scale the tariff's capacity prices until the network's recovery matches ``reference``."""
    cache = {} if cache is None else cache

    def recovery(t: TariffPolicy) -> float:
        key = round(t.multiplier, 12)
        if key not in cache:
            cache[key] = evaluate(inputs, t, threads)
        return cache[key].recovery

    cal = calibrate(tariff, recovery, reference, tolerance=tolerance)
    return cal, cache[round(cal.multiplier, 12)]


@dataclass
class ScenarioRun:
    report: ScenarioReport
    outcome: Outcome
    powerflow: object
    line_stats: list
    bus_stats: list
    curve: object
    calibration: CalibrationResult | None = None


def analyse(inputs: ScenarioInputs, outcome: Outcome, calibration: CalibrationResult | None = None) -> ScenarioRun:
    """Power flow on the net injections and the KPI row."""
    inj_b = outcome.net_injections()
    bus_of = {b.id: b.bus for b in inputs.buildings}
    per_bus: dict[str, np.ndarray] = {}
    for bid in sorted(inj_b):
        bus = bus_of[bid]
        per_bus[bus] = per_bus.get(bus, 0.0) + inj_b[bid]
    pf = run_timeseries(inputs.network, per_bus)
    if pf.failed.any():
        log.warning("%s: %d load-flow steps failed", inputs.name, int(pf.failed.sum()))
    lines, buses = congestion_stats(pf)
    curve = duration_curve(pf.transformer_kw, inputs.network.transformer.rated_kva)
    records = [
        building_kpis(bid, outcome.results[bid].dispatch, outcome.results[bid].bill, _baseline(outcome, bid), inputs.cost)
        for bid in sorted(outcome.results)
    ]
    report = aggregate_report(
        records, inputs.name, outcome.tariff.id, curve.max_feedin_kw, curve.max_drawn_kw, outcome.recovery,
    )
    report.multiplier = outcome.tariff.multiplier
    return ScenarioRun(report, outcome, pf, lines, buses, curve, calibration)


def _baseline(outcome: Outcome, bid: str):
    return outcome.baselines[bid].bill


def run_inputs(
    inputs: ScenarioInputs,
    tariff_name: str,
    level: str = "mid",
    curtailment: float | None = None,
    calibrate_to: float | None = None,
    threads: int = 1,
    multiplier: float = 1.0,
) -> ScenarioRun:
    tariff = build_tariff(inputs, tariff_name, level, curtailment).scaled(multiplier)
    cal = None
    if calibrate_to is not None and tariff.has_capacity_component:
        cal, outcome = calibrate_tariff(inputs, tariff, calibrate_to, threads)
    else:
        outcome = evaluate(inputs, tariff, threads)
    return analyse(inputs, outcome, cal)


def write_outputs(run: ScenarioRun, out: str | Path, dump_dispatch: bool = False) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_kpi_csv(out / "kpi.csv", [run.report])
    bf = buildings_frame(run.report)
    designs = run.outcome.results
    bf.insert(1, "candidates", [";".join(f"{k}={v:.2f}" for k, v in sorted(designs[b].candidates.items())) for b in bf["building_id"]])
    bf.to_csv(out / "buildings.csv", index=False, float_format="%.6f")
    write_line_loading(out / "line_loading.csv", run.line_stats)
    write_voltage(out / "voltage.csv", run.bus_stats)
    write_duration_curve(out / "duration_curve.csv", run.curve)
    rows = [{
        "tariff": run.report.tariff,
        "multiplier": run.report.multiplier,
        "recovery": run.report.row["recovery"],
        "ratio": run.calibration.ratio if run.calibration else math.nan,
        "evaluations": run.calibration.evaluations if run.calibration else 0,
    }]
    pd.DataFrame(rows).to_csv(out / "calibration.csv", index=False, float_format="%.6f")
    if dump_dispatch:
        (out / "dispatch").mkdir(exist_ok=True)
        for bid, res in sorted(designs.items()):
            res.dispatch.to_csv(out / "dispatch" / f"{bid}.csv")


def run_scenario(cfg: ScenarioConfig, out: str | Path | None = None, threads: int = 1, dump_dispatch: bool = False) -> ScenarioRun:
    """Run one configured scenario and write its CSV outputs."""
    out = out or cfg.out
    if out is None:
        raise ConfigError("no output directory given")
    inputs = prepare_inputs(cfg)
    reference = cfg.reference_recovery
    if cfg.calibrate and reference is None:
        reference = evaluate(inputs, build_tariff(inputs, "Reference DT"), threads).recovery
    run = run_inputs(inputs, cfg.tariff, cfg.level, cfg.curtailment, reference if cfg.calibrate else None, threads)
    write_outputs(run, out, dump_dispatch)
    return run


def slug(tariff_id: str) -> str:
    return tariff_id.lower().replace(" ", "-")


def sweep(
    configs: Sequence[ScenarioConfig],
    out: str | Path,
    tariffs: Sequence[str] = TARIFF_IDS,
    threads: int = 1,
    level: str | None = None,
) -> list[ScenarioRun]:
    """All tariffs on every network. Reference DT fixes each network's recovery
    target; capacity tariffs are calibrated to it when the config asks for it."""
    out = Path(out)
    runs = []
    for cfg in configs:
        inputs = prepare_inputs(cfg)
        lvl = level or cfg.level
        ref_run = analyse(inputs, evaluate(inputs, build_tariff(inputs, "Reference DT", lvl), threads))
        reference = cfg.reference_recovery or ref_run.outcome.recovery
        for name in tariffs:
            tid = canonical_id(name)
            if tid == "Reference DT":
                run = ref_run
            else:
                try:
                    run = run_inputs(inputs, tid, lvl, None, reference if cfg.calibrate else None, threads)
                except CalibrationError as exc:
                    log.warning("%s / %s: %s; keeping the best multiplier", cfg.network_name, tid, exc)
                    run = run_inputs(inputs, tid, lvl, threads=threads, multiplier=exc.best_multiplier)
            write_outputs(run, out / cfg.network_name / slug(tid))
            runs.append(run)
            log.info("%s / %s done", cfg.network_name, tid)
    write_kpi_csv(out / "kpi.csv", [r.report for r in runs])
    pd.DataFrame([
        {"network": r.report.network, "tariff": r.report.tariff, "multiplier": r.report.multiplier,
         "recovery": r.report.row["recovery"], "ratio": r.calibration.ratio if r.calibration else math.nan}
        for r in runs
    ]).to_csv(out / "calibration.csv", index=False, float_format="%.6f")
    return runs


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))
