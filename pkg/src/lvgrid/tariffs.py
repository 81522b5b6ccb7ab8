"""Tariff catalogue, per-step prices and bills.

Volumetric prices are centimes per kWh; capacity prices are CHF per kW and
billing period. All tariffs share the reference double-tariff import schedule
and differ on the export side (price shape, capacity component, curtailment).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import TariffError
from .timeseries import TS_H

IMPORT_PEAK = 21.95
IMPORT_OFFPEAK = 14.05
PEAK_HOURS = (6, 22)  # Mon-Fri, [start, end)
EXPORT_FLAT = 9.5
EXPORT_MIDDAY_SUMMER = 5.0
MIDDAY_HOURS = (9, 14)  # 09:00-13:59
IRR_EXPORT_MAX = 14.05
IRR_EXPORT_MIN = 3.6
SUMMER_MONTHS = (4, 5, 6, 7, 8)  # April 1st - August 31st

# marginal export prices per band of exported power / installed PV power
BLOCK_PRICES = (9.5, 4.79, 2.395)
BLOCK_BANDS = (0.25, 0.75, 1.0)

CT_EXPORT_DAILY = {"low": 0.8116, "mid": 1.0108, "high": 1.2400}
CT_IMPORT_DAILY = {"low": 0.040, "mid": 0.070, "high": 0.110}
CT_IMPORT_MONTHLY = {"low": 0.70, "mid": 0.70, "high": 0.70}

TARIFF_IDS = (
    "Reference DT",
    "Variable DT",
    "IRR monthly",
    "Curtailment 30",
    "Curtailment 50",
    "Curtailment 70",
    "CT export daily",
    "CT monthly 30",
    "CT monthly 50",
    "CT monthly 70",
    "CT daily 30",
    "CT daily 50",
    "CT daily 70",
    "Block rate",
)
LEVELS = ("low", "mid", "high")


@dataclass(frozen=True)
class TariffPolicy:
    id: str
    export_kind: str = "flat"  # flat | variable-dt | irr-monthly | block-rate
    import_capacity_price: float = 0.0  # CHF/kW per billing period, before multiplier
    export_capacity_price: float = 0.0
    period: str = "none"  # daily | monthly | none
    curtailment: float | None = None
    level: str = "mid"
    multiplier: float = 1.0
    irradiance_by_month: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.period not in ("daily", "monthly", "none"):
            raise TariffError(f"unknown billing period kind {self.period!r}")
        if self.import_capacity_price < 0 or self.export_capacity_price < 0 or self.multiplier < 0:
            raise TariffError("capacity prices and multiplier must be >= 0")
        if self.period == "none" and (self.import_capacity_price or self.export_capacity_price):
            raise TariffError(f"{self.id}: capacity price set but billing period is 'none'")
        if self.curtailment is not None and not 0 < self.curtailment <= 1:
            raise TariffError(f"curtailment fraction must lie in (0, 1], got {self.curtailment}")
        if self.export_kind not in ("flat", "variable-dt", "irr-monthly", "block-rate"):
            raise TariffError(f"unknown export price kind {self.export_kind!r}")

    @property
    def t_max_import(self) -> float:
        return self.import_capacity_price * self.multiplier

    @property
    def t_max_export(self) -> float:
        return self.export_capacity_price * self.multiplier

    @property
    def has_capacity_component(self) -> bool:
        return self.period != "none" and (self.import_capacity_price > 0 or self.export_capacity_price > 0)

    def scaled(self, multiplier: float) -> "TariffPolicy":
        return replace(self, multiplier=float(multiplier))

    def with_irradiance(self, monthly: Sequence[float]) -> "TariffPolicy":
        return replace(self, irradiance_by_month=tuple(float(v) for v in monthly))

    # -- vectorised schedules -------------------------------------------------

    def import_prices(self, index: pd.DatetimeIndex) -> np.ndarray:
        hours = index.hour.to_numpy()
        peak = (index.dayofweek.to_numpy() < 5) & (hours >= PEAK_HOURS[0]) & (hours < PEAK_HOURS[1])
        return np.where(peak, IMPORT_PEAK, IMPORT_OFFPEAK)

    def export_tiers(self, index: pd.DatetimeIndex) -> tuple[np.ndarray, np.ndarray]:
        """Marginal export prices ``(T, n)`` and tier widths as fractions of PV kW.

        Widths are ``inf`` for an unbounded tier. Prices are nonincreasing
        across tiers, so filling tiers in order is optimal.
        """
        n = len(index)
        if self.export_kind == "block-rate":
            summer = is_summer(index)
            prices = np.empty((n, 4))
            prices[:, :3] = np.where(summer[:, None], BLOCK_PRICES, EXPORT_FLAT)
            # exports beyond 100 % only occur when unit output exceeds 1
            prices[:, 3] = prices[:, 2]
            widths = np.diff((0.0,) + BLOCK_BANDS)
            return prices, np.append(widths, np.inf)
        return self.flat_export_prices(index)[:, None], np.array([np.inf])

    def flat_export_prices(self, index: pd.DatetimeIndex) -> np.ndarray:
        n = len(index)
        if self.export_kind == "variable-dt":
            hours = index.hour.to_numpy()
            midday = is_summer(index) & (hours >= MIDDAY_HOURS[0]) & (hours < MIDDAY_HOURS[1])
            return np.where(midday, EXPORT_MIDDAY_SUMMER, EXPORT_FLAT)
        if self.export_kind == "irr-monthly":
            per_month = irr_monthly_prices(self._irradiance())
            return per_month[index.month.to_numpy() - 1]
        if self.export_kind == "block-rate":
            raise TariffError("block rate export price depends on exported power; use export_tiers")
        return np.full(n, EXPORT_FLAT)

    def export_revenue_rate(self, index: pd.DatetimeIndex, exported_kw: np.ndarray, pv_kw: float | None) -> np.ndarray:
        """Export revenue per hour (ct/h) for the given exported power."""
        exported_kw = np.asarray(exported_kw, dtype=float)
        if self.export_kind != "block-rate":
            return exported_kw * self.flat_export_prices(index)
        if pv_kw is None:
            raise TariffError("block rate export price needs the installed PV capacity")
        prices, widths = self.export_tiers(index)
        w = widths.copy()
        w[np.isfinite(w)] *= pv_kw  # inf * 0 would give nan for the open tier
        bounds = np.concatenate(([0.0], np.cumsum(w)))
        revenue = np.zeros_like(exported_kw)
        for k in range(len(widths)):
            in_band = np.clip(exported_kw - bounds[k], 0.0, bounds[k + 1] - bounds[k])
            revenue += in_band * prices[:, k]
        return revenue

    def period_labels(self, index: pd.DatetimeIndex) -> np.ndarray | None:
        if self.period == "daily":
            key = index.normalize()
        elif self.period == "monthly":
            key = index.year * 12 + index.month
        else:
            return None
        return pd.factorize(np.asarray(key))[0]

    def _irradiance(self) -> np.ndarray:
        if self.irradiance_by_month is None:
            raise TariffError(f"{self.id}: monthly irradiance context required")
        return np.asarray(self.irradiance_by_month, dtype=float)


def is_summer(index: pd.DatetimeIndex) -> np.ndarray:
    return np.isin(index.month.to_numpy(), SUMMER_MONTHS)


def irr_monthly_prices(irradiance: Sequence[float]) -> np.ndarray:
    """Affine map: lowest-irradiance month pays the maximum, highest pays the minimum.

    Months given as NaN (absent from the simulation) keep a NaN price.
    """
    irr = np.asarray(irradiance, dtype=float)
    present = ~np.isnan(irr)
    if not present.any():
        raise TariffError("monthly irradiance context is empty")
    lo, hi = irr[present].min(), irr[present].max()
    out = np.full(irr.shape, np.nan)
    if hi == lo:
        out[present] = IRR_EXPORT_MAX
        return out
    frac = (irr[present] - lo) / (hi - lo)
    out[present] = IRR_EXPORT_MAX + (IRR_EXPORT_MIN - IRR_EXPORT_MAX) * frac
    # pin the extremes exactly
    out[present & (irr == lo)] = IRR_EXPORT_MAX
    out[present & (irr == hi)] = IRR_EXPORT_MIN
    return out


def _norm(name: str) -> str:
    return re.sub(r"[\s_\-]+", " ", name.strip().lower())


_ALIASES = {_norm(t): t for t in TARIFF_IDS}
_ALIASES.update({"dt reference": "Reference DT", "dt variable": "Variable DT", "reference": "Reference DT"})


def canonical_id(name: str) -> str:
    try:
        return _ALIASES[_norm(name)]
    except KeyError:
        raise TariffError(f"unknown tariff id {name!r}; known: {', '.join(TARIFF_IDS)}") from None


def make_tariff(
    name: str,
    level: str = "mid",
    curtailment: float | None = None,
    irradiance_by_month: Sequence[float] | None = None,
) -> TariffPolicy:
    """Build a catalogue tariff. ``curtailment`` overrides the catalogue fraction."""
    tid = canonical_id(name)
    if level not in LEVELS:
        raise TariffError(f"unknown capacity price level {level!r}")
    fam, _, pct = tid.rpartition(" ")
    cfrac = int(pct) / 100 if pct.isdigit() else None
    if tid == "Reference DT":
        kw = {}
    elif tid == "Variable DT":
        kw = dict(export_kind="variable-dt")
    elif tid == "IRR monthly":
        kw = dict(export_kind="irr-monthly")
    elif tid == "Block rate":
        kw = dict(export_kind="block-rate")
    elif tid == "CT export daily":
        kw = dict(export_capacity_price=CT_EXPORT_DAILY[level], period="daily")
    elif fam == "Curtailment":
        kw = dict(curtailment=cfrac)
    elif fam == "CT monthly":
        kw = dict(import_capacity_price=CT_IMPORT_MONTHLY[level], period="monthly", curtailment=cfrac)
    else:  # CT daily
        kw = dict(import_capacity_price=CT_IMPORT_DAILY[level], period="daily", curtailment=cfrac)
    if curtailment is not None:
        kw["curtailment"] = curtailment
    irr = tuple(irradiance_by_month) if irradiance_by_month is not None else None
    return TariffPolicy(id=tid, level=level, irradiance_by_month=irr, **kw)


def price_at(
    tariff: TariffPolicy,
    timestamp: datetime | str,
    exported_kw: float | None = None,
    pv_kw: float | None = None,
) -> tuple[float, float]:
    """Import and export price in ct/kWh at one timestamp.

    For the block rate the export price is the blended rate over the bands
    the exported power spans.
    """
    idx = pd.DatetimeIndex([pd.Timestamp(timestamp)])
    imp = float(tariff.import_prices(idx)[0])
    if tariff.export_kind == "block-rate":
        if pv_kw is None or exported_kw is None:
            raise TariffError("block rate export price needs exported power and PV capacity")
        if exported_kw <= 0:
            return imp, float(tariff.export_tiers(idx)[0][0, 0])
        rev = tariff.export_revenue_rate(idx, np.array([exported_kw]), pv_kw)[0]
        return imp, float(rev / exported_kw)
    return imp, float(tariff.flat_export_prices(idx)[0])


@dataclass(frozen=True)
class Bill:
    import_vol_ct: float
    export_vol_ct: float  # remuneration, counted positive
    import_cap_chf: float
    export_cap_chf: float
    peaks_kw: np.ndarray = field(repr=False, compare=False)

    @property
    def ox_vol_ct(self) -> float:
        return self.import_vol_ct - self.export_vol_ct

    @property
    def ox_pow_chf(self) -> float:
        return self.import_cap_chf + self.export_cap_chf

    @property
    def ox_pow_ct(self) -> float:
        return 100.0 * self.ox_pow_chf

    @property
    def volumetric_chf(self) -> float:
        return self.ox_vol_ct / 100.0

    @property
    def total_chf(self) -> float:
        return self.volumetric_chf + self.ox_pow_chf

    @property
    def recovery_chf(self) -> float:
        return self.import_vol_ct / 100.0 + self.ox_pow_chf


def compute_bill(
    index: pd.DatetimeIndex,
    imp: np.ndarray,
    exp: np.ndarray,
    tariff: TariffPolicy,
    pv_kw: float | None = None,
) -> Bill:
    """Volumetric and capacity cost of an import/export schedule."""
    imp = np.asarray(imp, dtype=float)
    exp = np.asarray(exp, dtype=float)
    if not (len(index) == len(imp) == len(exp)):
        raise TariffError("import/export series and index lengths differ")
    imp_ct = float(np.sum(imp * tariff.import_prices(index)) * TS_H)
    exp_ct = float(np.sum(tariff.export_revenue_rate(index, exp, pv_kw)) * TS_H)
    labels = tariff.period_labels(index)
    imp_cap = exp_cap = 0.0
    peaks = np.zeros(0)
    if labels is not None:
        k = labels.max() + 1
        if tariff.import_capacity_price > 0:
            peaks = np.zeros(k)
            np.maximum.at(peaks, labels, imp)
            imp_cap = float(np.sum(peaks * tariff.t_max_import))
        if tariff.export_capacity_price > 0:
            peaks = np.zeros(k)
            np.maximum.at(peaks, labels, exp)
            exp_cap = float(np.sum(peaks * tariff.t_max_export))
    return Bill(imp_ct, exp_ct, imp_cap, exp_cap, peaks)


def bill(dispatch, tariff: TariffPolicy) -> Bill:
    """Bill of a :class:`~lvgrid.optimize.DispatchSeries`."""
    return compute_bill(dispatch.index, dispatch.imp, dispatch.exp, tariff, dispatch.design.pv_kw)


def grid_cost_recovery(bills: Iterable[Bill]) -> float:
    """Network charges collected in CHF: import energy and all capacity charges."""
    return float(sum(b.recovery_chf for b in bills))
