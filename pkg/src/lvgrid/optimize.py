"""PV/battery sizing and year-long dispatch for one building.

Dispatch is a linear program solved by an interior-point method (Clarabel).
The design variables (PV kW, battery kWh) enter the same LP as continuous
variables, so design and dispatch are optimised jointly; the fixed PV cost
is handled by comparing against the explicit no-PV candidate.

Per step ``t`` (powers in kW, ``TS`` = 0.25 h)::

    load_t        = pv_used_t + eta_dis * dis_t + imp_t
    pv_t * P_pv   = pv_used_t + ch_t + exp_t + curt_t
    soc_{t+1}     = soc_t + (eta_ch * ch_t - dis_t) * TS
    ch_t, dis_t  <= c_rate * E_bat,   soc_t <= E_bat
    exp_t        <= c * P_pv                     (curtailment tariffs)
    peak_k       >= imp_t (or exp_t), t in k     (capacity tariffs)

Charging comes only from PV and discharge only serves the building's load,
so the battery can neither charge from nor export to the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import clarabel
import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import OptimizationError
from .tariffs import Bill, TariffPolicy, compute_bill
from .timeseries import STEPS_PER_DAY, TS_H, horizon_fraction

log = logging.getLogger(__name__)

# tie-breakers in CHF/kWh: prefer exporting/self-consuming over curtailing,
# and no idle battery cycling
EPS_CURTAIL = 1e-5
EPS_BATTERY = 1e-5


def crf(rate: float, years: float) -> float:
    """Capital recovery factor."""
    if rate == 0:
        return 1.0 / years
    return rate / (1.0 - (1.0 + rate) ** -years)


@dataclass(frozen=True)
class CostModel:
    lifetime_years: float = 25.0
    discount_rate: float = 0.03
    pv_fixed: float = 10049.0
    pv_specific_per_kw: float = 1050.0  # 1.05 per W
    battery_fixed: float = 0.0
    battery_specific_per_kwh: float = 229.0
    battery_lifetime_years: float = 10.0
    pv_maintenance_fraction: float = 0.01  # of PV capex, per year

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise OptimizationError(f"cost parameter {name} must be >= 0")

    @property
    def crf_pv(self) -> float:
        return crf(self.discount_rate, self.lifetime_years)

    @property
    def crf_battery(self) -> float:
        return crf(self.discount_rate, self.battery_lifetime_years)

    def pv_capex(self, pv_kw: float) -> float:
        return self.pv_fixed + self.pv_specific_per_kw * pv_kw if pv_kw > 0 else 0.0

    def battery_capex(self, kwh: float) -> float:
        return self.battery_fixed + self.battery_specific_per_kwh * kwh if kwh > 0 else 0.0

    def annual_capex(self, design: "SystemDesign") -> float:
        return self.crf_pv * self.pv_capex(design.pv_kw) + self.crf_battery * self.battery_capex(design.battery_kwh)

    def annual_maintenance(self, design: "SystemDesign") -> float:
        return self.pv_maintenance_fraction * self.pv_capex(design.pv_kw)

    def annual_fixed_cost(self, design: "SystemDesign") -> float:
        return self.annual_capex(design) + self.annual_maintenance(design)

    def linear_rates(self) -> tuple[float, float]:
        """Annual cost per PV kW and per battery kWh, excluding fixed parts."""
        pv = (self.crf_pv + self.pv_maintenance_fraction) * self.pv_specific_per_kw
        return pv, self.crf_battery * self.battery_specific_per_kwh

    def fixed_rates(self) -> tuple[float, float]:
        pv = (self.crf_pv + self.pv_maintenance_fraction) * self.pv_fixed
        return pv, self.crf_battery * self.battery_fixed


@dataclass(frozen=True)
class BatterySpec:
    eta_ch: float = 0.95
    eta_dis: float = 0.95
    c_rate: float = 0.5  # max charge/discharge power per kWh of capacity


@dataclass(frozen=True)
class SystemDesign:
    pv_kw: float = 0.0
    battery_kwh: float = 0.0

    def __post_init__(self):
        if self.pv_kw < 0 or self.battery_kwh < 0:
            raise OptimizationError("design sizes must be nonnegative")


@dataclass
class DispatchSeries:
    index: pd.DatetimeIndex
    load: np.ndarray
    pv: np.ndarray  # available PV power, kW
    imp: np.ndarray
    exp: np.ndarray
    ch: np.ndarray
    dis: np.ndarray
    curt: np.ndarray
    soc: np.ndarray  # state of charge at the start of each step, kWh
    design: SystemDesign
    battery: BatterySpec = field(default_factory=BatterySpec)

    def __len__(self):
        return len(self.index)

    @property
    def pv_used(self) -> np.ndarray:
        return self.load - self.battery.eta_dis * self.dis - self.imp

    @property
    def net_injection(self) -> np.ndarray:
        return self.exp - self.imp

    @property
    def self_consumption(self) -> np.ndarray:
        """PV energy reaching the load, directly or through the battery (kW)."""
        return self.load - self.imp

    def energy(self, name: str) -> float:
        return float(np.sum(getattr(self, name)) * TS_H)

    def scaled(self, factor: float) -> "DispatchSeries":
        """All powers and sizes multiplied by ``factor``."""
        f = float(factor)
        return replace(
            self,
            load=self.load * f, pv=self.pv * f, imp=self.imp * f, exp=self.exp * f, ch=self.ch * f,
            dis=self.dis * f, curt=self.curt * f, soc=self.soc * f,
            design=SystemDesign(self.design.pv_kw * f, self.design.battery_kwh * f),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": np.arange(len(self)), "imp": self.imp, "exp": self.exp, "ch": self.ch,
             "dis": self.dis, "curt": self.curt, "soc": self.soc}
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().round(6).to_csv(path, index=False)


@dataclass
class DispatchResult:
    dispatch: DispatchSeries
    bill: Bill
    objective: float  # LP objective in CHF, tie-breakers included

    @property
    def opex(self) -> float:
        return self.bill.total_chf


@dataclass
class DesignResult:
    design: SystemDesign
    dispatch: DispatchSeries
    bill: Bill
    annual_fixed: float  # annualised capex + maintenance, CHF/yr
    total_cost: float  # annual_fixed scaled to the horizon + opex
    candidates: dict[str, float] = field(default_factory=dict)

    @property
    def opex(self) -> float:
        return self.bill.total_chf


class _Rows:
    """COO accumulator for ``A x (<= | ==) b`` blocks."""

    def __init__(self):
        self.r, self.c, self.v, self.b = [], [], [], []
        self.n = 0

    def add(self, n_rows: int, terms, rhs):
        base = self.n
        for cols, vals in terms:
            cols = np.broadcast_to(np.asarray(cols), (n_rows,))
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (n_rows,))
            keep = vals != 0
            self.r.append(base + np.arange(n_rows)[keep])
            self.c.append(cols[keep])
            self.v.append(vals[keep])
        self.b.append(np.broadcast_to(np.asarray(rhs, dtype=float), (n_rows,)))
        self.n += n_rows

    def matrix(self, n_cols: int):
        if not self.n:
            return sp.csc_matrix((0, n_cols)), np.zeros(0)
        a = sp.csc_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=(self.n, n_cols)
        )
        return a, np.concatenate(self.b)


def _check_inputs(load, pv_unit, index):
    load = np.asarray(load, dtype=float)
    pv_unit = np.asarray(pv_unit, dtype=float)
    if load.shape != pv_unit.shape or load.ndim != 1:
        raise OptimizationError("load and PV profiles must be 1-D and of equal length")
    if index is not None and len(index) != len(load):
        raise OptimizationError("time index length differs from profile length")
    if (load < 0).any() or (pv_unit < 0).any():
        raise OptimizationError("load and PV profiles must be nonnegative")
    return load, pv_unit


def solve_lp(
    index: pd.DatetimeIndex,
    load: np.ndarray,
    pv_unit: np.ndarray,
    tariff: TariffPolicy,
    pv_kw: tuple[float, float],
    battery_kwh: tuple[float, float],
    battery: BatterySpec = BatterySpec(),
    size_rates: tuple[float, float] = (0.0, 0.0),
    initial_soc: float | None = None,
) -> DispatchResult:
    """Solve the dispatch LP with PV and battery sizes bounded by the given intervals.

    ``size_rates`` are the per-unit costs of the size variables over the
    simulated horizon (CHF per kW and per kWh). With ``initial_soc`` the
    battery starts at that charge and the final charge is free; otherwise
    the state of charge is cyclic.
    """
    load, pv_unit = _check_inputs(load, pv_unit, index)
    T = len(load)
    eta_c, eta_d, crate = battery.eta_ch, battery.eta_dis, battery.c_rate
    tier_prices, tier_widths = tariff.export_tiers(index)
    n_tiers = tier_prices.shape[1]
    labels = tariff.period_labels(index)
    n_peaks = 0 if labels is None or not tariff.has_capacity_component else int(labels.max()) + 1

    # variable layout
    ar = np.arange(T)
    i_imp, i_ch, i_dis = ar, T + ar, 2 * T + ar
    i_soc = 3 * T + np.arange(T + 1)
    i_exp = [4 * T + 1 + k * T + ar for k in range(n_tiers)]
    i_pv = 4 * T + 1 + n_tiers * T
    i_bat = i_pv + 1
    i_peak = i_bat + 1 + np.arange(n_peaks)
    n = i_bat + 1 + n_peaks

    ub, eq = _Rows(), _Rows()
    exp_terms = [(i, 1.0) for i in i_exp]
    # curtailment is nonnegative
    ub.add(T, exp_terms + [(i_ch, 1.0), (i_imp, -1.0), (i_dis, -eta_d), (i_pv, -pv_unit)], -load)
    # PV used directly is nonnegative: discharge and import only cover load
    ub.add(T, [(i_dis, eta_d), (i_imp, 1.0)], load)
    ub.add(T, [(i_ch, 1.0), (i_bat, -crate)], 0.0)
    ub.add(T, [(i_dis, 1.0), (i_bat, -crate)], 0.0)
    ub.add(T + 1, [(i_soc, 1.0), (i_bat, -1.0)], 0.0)
    for k in range(n_tiers):
        if np.isfinite(tier_widths[k]):
            ub.add(T, [(i_exp[k], 1.0), (i_pv, -tier_widths[k])], 0.0)
    if tariff.curtailment is not None:
        ub.add(T, exp_terms + [(i_pv, -tariff.curtailment)], 0.0)
    if n_peaks:
        if tariff.import_capacity_price > 0:
            ub.add(T, [(i_imp, 1.0), (i_peak[labels], -1.0)], 0.0)
        if tariff.export_capacity_price > 0:
            ub.add(T, exp_terms + [(i_peak[labels], -1.0)], 0.0)
    # size bounds
    for col, (lo, hi) in ((i_pv, pv_kw), (i_bat, battery_kwh)):
        if lo == hi:
            eq.add(1, [(col, 1.0)], lo)
        else:
            ub.add(1, [(col, 1.0)], hi)
            ub.add(1, [(col, -1.0)], -lo)
    # nonnegativity of everything else
    rest = np.setdiff1d(np.arange(n), [i_pv, i_bat])
    ub.add(len(rest), [(rest, -1.0)], 0.0)

    eq.add(T, [(i_soc[1:], 1.0), (i_soc[:-1], -1.0), (i_ch, -eta_c * TS_H), (i_dis, TS_H)], 0.0)
    if initial_soc is None:
        eq.add(1, [(i_soc[T], 1.0), (i_soc[0], -1.0)], 0.0)
    else:
        eq.add(1, [(i_soc[0], 1.0)], float(initial_soc))

    c = np.zeros(n)
    c[i_imp] = tariff.import_prices(index) * TS_H / 100.0
    for k in range(n_tiers):
        c[i_exp[k]] = -tier_prices[:, k] * TS_H / 100.0
    if n_peaks:
        c[i_peak] = tariff.t_max_import + tariff.t_max_export
    c[i_pv] += size_rates[0]
    c[i_bat] += size_rates[1]
    # tie-breakers; curtailment expressed through the balance
    ec = EPS_CURTAIL * TS_H
    c[i_pv] += ec * pv_unit.sum()
    c[i_ch] += -ec + EPS_BATTERY * TS_H
    c[i_imp] += ec
    c[i_dis] += ec * eta_d + EPS_BATTERY * TS_H
    for k in range(n_tiers):
        c[i_exp[k]] -= ec

    a_eq, b_eq = eq.matrix(n)
    a_ub, b_ub = ub.matrix(n)
    a = sp.vstack([a_eq, a_ub]).tocsc()
    b = np.concatenate([b_eq, b_ub])
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 200
    solver = clarabel.DefaultSolver(
        sp.csc_matrix((n, n)), c, a, b,
        [clarabel.ZeroConeT(a_eq.shape[0]), clarabel.NonnegativeConeT(a_ub.shape[0])], settings,
    )
    sol = solver.solve()
    status = str(sol.status)
    if status not in ("Solved", "AlmostSolved"):
        raise OptimizationError(
            f"dispatch LP not solved: status {status} after {sol.iterations} iterations",
            log=f"status={status} iterations={sol.iterations} r_prim={sol.r_prim:.3e} "
                f"r_dual={sol.r_dual:.3e} obj={sol.obj_val:.6g}",
        )
    x = np.asarray(sol.x)
    design = SystemDesign(_snap(x[i_pv], pv_kw), _snap(x[i_bat], battery_kwh))
    exp_total = sum(x[i] for i in i_exp)
    dispatch = _repair(
        index, load, pv_unit, design, battery, tariff,
        x[i_imp], exp_total, x[i_ch], x[i_dis], x[i_soc[0]],
    )
    bill = compute_bill(index, dispatch.imp, dispatch.exp, tariff, design.pv_kw)
    return DispatchResult(dispatch, bill, float(sol.obj_val))


def _snap(value: float, bounds: tuple[float, float], tol: float = 1e-6) -> float:
    """Clip a size to its bounds, snapping values within solver tolerance onto them."""
    lo, hi = bounds
    v = min(max(float(value), lo), hi)
    scale = max(1.0, abs(hi))
    if v - lo <= tol * scale:
        return float(lo)
    if hi - v <= tol * scale:
        return float(hi)
    return v


def _repair(index, load, pv_unit, design, battery, tariff, imp, exp, ch, dis, soc0) -> DispatchSeries:
    """Project an interior-point solution onto the exact balance identities.

    Moves are of solver-tolerance size. PV serves the load before anything is
    exported, which also removes simultaneous import and export.
    """
    eta_c, eta_d = battery.eta_ch, battery.eta_dis
    pv = pv_unit * design.pv_kw
    pmax = battery.c_rate * design.battery_kwh
    ch = np.clip(ch, 0.0, np.minimum(pmax, pv))
    dis = np.clip(dis, 0.0, np.minimum(pmax, load / eta_d))
    deficit = np.maximum(load - eta_d * dis, 0.0)
    direct = np.minimum(pv - ch, deficit)
    imp = deficit - direct
    surplus = pv - ch - direct
    cap = np.full_like(pv, np.inf) if tariff.curtailment is None else tariff.curtailment * design.pv_kw
    exp = np.minimum(np.clip(exp, 0.0, None), np.minimum(surplus, cap))
    curt = surplus - exp
    # keep the dispatch consistent with the battery's energy limits
    soc = np.empty(len(load) + 1)
    soc[0] = min(max(soc0, 0.0), design.battery_kwh)
    delta = (eta_c * ch - dis) * TS_H
    soc[1:] = soc[0] + np.cumsum(delta)
    soc = np.clip(soc, 0.0, design.battery_kwh)
    return DispatchSeries(index, load, pv, imp, exp, ch, dis, curt, soc[:-1], design, battery)


def default_index(n: int) -> pd.DatetimeIndex:
    from .timeseries import year_index

    return year_index()[:n] if n <= 35040 else pd.date_range("2025-01-01", periods=n, freq="15min")


def optimize_dispatch(
    load: np.ndarray,
    pv_unit: np.ndarray,
    design: SystemDesign,
    tariff: TariffPolicy,
    battery: BatterySpec = BatterySpec(),
    index: pd.DatetimeIndex | None = None,
    initial_soc: float | None = None,
) -> DispatchResult:
    """Cost-minimising dispatch for a fixed design under perfect foresight."""
    load, pv_unit = _check_inputs(load, pv_unit, index)
    index = default_index(len(load)) if index is None else index
    if design.pv_kw == 0 and design.battery_kwh == 0 and initial_soc in (None, 0.0):
        return no_system(index, load, pv_unit, tariff, battery)
    return solve_lp(
        index, load, pv_unit, tariff,
        (design.pv_kw, design.pv_kw), (design.battery_kwh, design.battery_kwh),
        battery, initial_soc=initial_soc,
    )


def no_system(index, load, pv_unit, tariff, battery=BatterySpec()) -> DispatchResult:
    """Everything imported: the baseline without PV or battery."""
    zeros = np.zeros_like(load)
    d = DispatchSeries(index, load, zeros, load.copy(), zeros, zeros, zeros, zeros, zeros, SystemDesign(), battery)
    b = compute_bill(index, d.imp, d.exp, tariff, 0.0)
    return DispatchResult(d, b, b.total_chf)


def battery_cap(load: np.ndarray) -> float:
    """Upper bound on battery size: three times the mean daily load energy."""
    days = len(load) / STEPS_PER_DAY
    return 3.0 * float(np.sum(load) * TS_H) / days


def optimize_design(
    load: np.ndarray,
    pv_unit: np.ndarray,
    roof_bound_kw: float,
    tariff: TariffPolicy,
    cost: CostModel = CostModel(),
    battery: BatterySpec = BatterySpec(),
    index: pd.DatetimeIndex | None = None,
    pv_mode: str = "optimized",
    battery_max_kwh: float | None = None,
) -> DesignResult:
    """Minimise annualised capex + maintenance + opex over PV and battery size.

    ``pv_mode="max-roof"`` pins PV at the roof bound and only sizes the
    battery. In ``optimized`` mode the no-PV design is always evaluated
    explicitly because the PV fixed cost makes the objective jump at zero.
    """
    load, pv_unit = _check_inputs(load, pv_unit, index)
    index = default_index(len(load)) if index is None else index
    if roof_bound_kw < 0:
        raise OptimizationError("roof bound must be >= 0")
    if pv_mode not in ("optimized", "max-roof"):
        raise OptimizationError(f"unknown pv_mode {pv_mode!r}")
    frac = horizon_fraction(len(load))
    e_max = battery_cap(load) if battery_max_kwh is None else battery_max_kwh
    rate_pv, rate_bat = cost.linear_rates()
    fixed_pv, fixed_bat = cost.fixed_rates()

    candidates: dict[str, tuple[float, DispatchResult]] = {}
    if pv_mode == "optimized" or roof_bound_kw == 0:
        base = no_system(index, load, pv_unit, tariff, battery)
        candidates["no-pv"] = (base.bill.total_chf, base)
    if roof_bound_kw > 0:
        lo = roof_bound_kw if pv_mode == "max-roof" else 0.0
        res = solve_lp(
            index, load, pv_unit, tariff, (lo, roof_bound_kw), (0.0, e_max), battery,
            size_rates=(rate_pv * frac, rate_bat * frac),
        )
        d = res.dispatch.design
        if d.pv_kw <= 1e-6 and pv_mode == "optimized":
            res = None  # collapses onto the no-PV candidate
        if res is not None:
            total = cost.annual_fixed_cost(d) * frac + res.bill.total_chf
            candidates["pv"] = (total, res)

    best = min(candidates, key=lambda k: (candidates[k][0], k != "no-pv"))
    total, res = candidates[best]
    design = res.dispatch.design
    log.debug("design %s: pv %.3f kW, battery %.3f kWh, cost %.2f", best, design.pv_kw, design.battery_kwh, total)
    return DesignResult(
        design, res.dispatch, res.bill, cost.annual_fixed_cost(design), total,
        {k: v[0] for k, v in candidates.items()},
    )


def evaluate_design(
    load, pv_unit, design: SystemDesign, tariff: TariffPolicy, cost: CostModel = CostModel(),
    battery: BatterySpec = BatterySpec(), index=None,
) -> float:
    """Total cost over the horizon of a given design (annualised fixed costs prorated)."""
    load, pv_unit = _check_inputs(load, pv_unit, index)
    res = optimize_dispatch(load, pv_unit, design, tariff, battery, index)
    return cost.annual_fixed_cost(design) * horizon_fraction(len(load)) + res.bill.total_chf
