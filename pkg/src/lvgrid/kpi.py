"""Economic and penetration KPIs and the per-scenario report table."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .errors import KpiError
from .optimize import CostModel, DispatchSeries, SystemDesign
from .tariffs import Bill
from .timeseries import horizon_fraction

KPI_COLUMNS = [
    "network", "tariff", "pv_penetration_pct", "battery_kwh", "import_mwh", "export_mwh",
    "max_feedin_kw", "max_drawn_kw", "curtailed_pct", "lcoe", "irr_pct", "total_cost", "profit", "recovery",
]


def pv_penetration(pv_mwh: float, load_mwh: float) -> float:
    """Annual PV generation over annual consumption, in percent."""
    if not load_mwh > 0:
        raise KpiError("PV penetration undefined for zero consumption")
    return 100.0 * pv_mwh / load_mwh


def _discount(r: float, n: int) -> np.ndarray:
    if r <= -1:
        raise KpiError("discount rate must exceed -1")
    return (1.0 + r) ** -np.arange(1, n + 1, dtype=float)


def lcoe(costs: Sequence[float], energies: Sequence[float], rate: float) -> float:
    """Discounted cost over discounted energy, both summed over years 1..T."""
    c = np.asarray(costs, dtype=float)
    e = np.asarray(energies, dtype=float)
    if c.shape != e.shape or c.size < 1:
        raise KpiError("cost and energy series must be nonempty and of equal length")
    d = _discount(rate, c.size)
    den = float(e @ d)
    if not den > 0:
        raise KpiError("LCOE undefined: discounted energy is zero")
    return float(c @ d) / den


def npv(rate: float, flows: Sequence[float]) -> float:
    """Net present value of flows at t = 0..T."""
    f = np.asarray(flows, dtype=float)
    return float(np.sum(f / (1.0 + rate) ** np.arange(f.size)))


def irr(flows: Sequence[float], lo: float = -0.99, hi: float = 10.0) -> float | None:
    """Rate with zero NPV (Brent's method). ``None`` if there is no sign change."""
    f = np.asarray(flows, dtype=float)
    signs = np.sign(f[f != 0])
    if signs.size < 2 or np.all(signs == signs[0]):
        return None
    fa, fb = npv(lo, f), npv(hi, f)
    if fa * fb > 0:
        return None
    return float(brentq(npv, lo, hi, args=(f,), xtol=1e-14, rtol=1e-14, maxiter=500))


@dataclass(frozen=True)
class CashflowSeries:
    revenue: np.ndarray  # R_t, t = 0..T
    cost: np.ndarray  # C_t, t = 0..T
    energy: np.ndarray  # E_t, t = 0..T (E_0 = 0)
    rate: float

    def __post_init__(self):
        if len(self.revenue) < 2 or not len(self.revenue) == len(self.cost) == len(self.energy):
            raise KpiError("cashflow series need equal length and a horizon of at least one year")
        if self.rate <= -1:
            raise KpiError("discount rate must exceed -1")

    @property
    def years(self) -> int:
        return len(self.revenue) - 1

    @property
    def net(self) -> np.ndarray:
        return np.asarray(self.revenue) - np.asarray(self.cost)

    def lcoe(self) -> float:
        # investment at t = 0 is counted in year 1
        c = np.asarray(self.cost, dtype=float)[1:].copy()
        c[0] += self.cost[0]
        return lcoe(c, np.asarray(self.energy, dtype=float)[1:], self.rate)

    def irr(self) -> float | None:
        return irr(self.net)


def system_cashflows(design: SystemDesign, annual_savings: float, annual_energy_kwh: float, cost: CostModel) -> CashflowSeries:
    """Investment at t = 0, yearly bill savings and maintenance, battery replacements."""
    n = int(round(cost.lifetime_years))
    c = np.zeros(n + 1)
    c[0] = cost.pv_capex(design.pv_kw) + cost.battery_capex(design.battery_kwh)
    c[1:] += cost.annual_maintenance(design)
    if design.battery_kwh > 0 and cost.battery_lifetime_years > 0:
        life = cost.battery_lifetime_years
        k = 1
        while k * life < n:
            c[int(round(k * life))] += cost.battery_capex(design.battery_kwh)
            k += 1
    r = np.zeros(n + 1)
    r[1:] = annual_savings
    e = np.zeros(n + 1)
    e[1:] = annual_energy_kwh
    return CashflowSeries(r, c, e, cost.discount_rate)


def totals(bill: Bill, annual_fixed: float, baseline: Bill, fraction: float = 1.0) -> tuple[float, float]:
    """(total tariff cost C_power + C_energy, profit vs the no-system bill).

    ``annual_fixed`` (annualised capex + maintenance) is prorated by
    ``fraction`` of a year so it matches the bills' horizon.
    """
    total = bill.ox_pow_chf + bill.volumetric_chf
    profit = baseline.total_chf - (total + annual_fixed * fraction)
    return total, profit


@dataclass
class KpiRecord:
    building_id: str
    pv_kw: float
    battery_kwh: float
    load_mwh: float
    pv_mwh: float  # delivered PV energy (generation less curtailment)
    import_mwh: float
    export_mwh: float
    curtailed_mwh: float
    lcoe: float
    irr_pct: float
    total_cost: float
    profit: float
    recovery: float

    @property
    def pv_penetration_pct(self) -> float:
        return pv_penetration(self.pv_mwh, self.load_mwh)

    @property
    def curtailed_pct(self) -> float:
        gen = self.pv_mwh + self.curtailed_mwh
        return 100.0 * self.curtailed_mwh / gen if gen > 0 else 0.0


def building_kpis(
    building_id: str, dispatch: DispatchSeries, bill: Bill, baseline: Bill, cost: CostModel = CostModel()
) -> KpiRecord:
    """KPIs of one optimised building. Energies are over the simulated horizon;
    LCOE and IRR use the horizon scaled to a full year."""
    frac = horizon_fraction(len(dispatch))
    design = dispatch.design
    gen = dispatch.energy("pv")
    curt = dispatch.energy("curt")
    delivered = gen - curt
    total, profit = totals(bill, cost.annual_fixed_cost(design), baseline, frac)
    lc = irr_pct = math.nan
    if design.pv_kw > 0 and delivered > 0:
        savings = (baseline.total_chf - bill.total_chf) / frac
        flows = system_cashflows(design, savings, delivered / frac, cost)
        lc = flows.lcoe()
        rate = flows.irr()
        irr_pct = math.nan if rate is None else 100.0 * rate
    return KpiRecord(
        building_id, design.pv_kw, design.battery_kwh, dispatch.energy("load") / 1e3, delivered / 1e3,
        dispatch.energy("imp") / 1e3, dispatch.energy("exp") / 1e3, curt / 1e3, lc, irr_pct, total, profit,
        bill.recovery_chf,
    )


@dataclass
class ScenarioReport:
    network: str
    tariff: str
    buildings: list[KpiRecord]
    row: dict
    multiplier: float = 1.0
    extras: dict = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.row], columns=KPI_COLUMNS)


def aggregate_report(
    records: Sequence[KpiRecord],
    network: str,
    tariff: str,
    max_feedin_kw: float = math.nan,
    max_drawn_kw: float = math.nan,
    recovery: float | None = None,
    scenario_ids: Sequence[tuple[str, str]] | None = None,
) -> ScenarioReport:
    """One KPI row: economic KPIs averaged over buildings, energies summed.

    LCOE and IRR average over the buildings that have PV. ``scenario_ids``
    (network, tariff) per record, when given, must all match.
    """
    if not records:
        raise KpiError("no building KPIs to aggregate")
    if scenario_ids is not None and any(s != (network, tariff) for s in scenario_ids):
        raise KpiError(f"KPI records from different scenarios cannot be aggregated into {network}/{tariff}")
    load = sum(r.load_mwh for r in records)
    pv = sum(r.pv_mwh for r in records)
    curt = sum(r.curtailed_mwh for r in records)
    lc = [r.lcoe for r in records if not math.isnan(r.lcoe)]
    ir = [r.irr_pct for r in records if not math.isnan(r.irr_pct)]
    row = {
        "network": network,
        "tariff": tariff,
        "pv_penetration_pct": pv_penetration(pv, load),
        "battery_kwh": sum(r.battery_kwh for r in records),
        "import_mwh": sum(r.import_mwh for r in records),
        "export_mwh": sum(r.export_mwh for r in records),
        "max_feedin_kw": max_feedin_kw,
        "max_drawn_kw": max_drawn_kw,
        "curtailed_pct": 100.0 * curt / (pv + curt) if pv + curt > 0 else 0.0,
        "lcoe": float(np.mean(lc)) if lc else math.nan,
        "irr_pct": float(np.mean(ir)) if ir else math.nan,
        "total_cost": float(np.mean([r.total_cost for r in records])),
        "profit": float(np.mean([r.profit for r in records])),
        "recovery": sum(r.recovery for r in records) if recovery is None else recovery,
    }
    return ScenarioReport(network, tariff, list(records), row)


def write_kpi_csv(path: str | Path, reports: Sequence[ScenarioReport]) -> None:
    df = pd.concat([r.frame() for r in reports], ignore_index=True) if reports else pd.DataFrame(columns=KPI_COLUMNS)
    df.to_csv(path, index=False, float_format="%.6f")


def buildings_frame(report: ScenarioReport) -> pd.DataFrame:
    rows = []
    for r in report.buildings:
        d = asdict(r)
        d["pv_penetration_pct"] = r.pv_penetration_pct if r.load_mwh > 0 else math.nan
        d["curtailed_pct"] = r.curtailed_pct
        rows.append(d)
    return pd.DataFrame(rows)
