"""Building demand allocation.

Three stages: an annual consumption estimate from floor area and a per-category
intensity, a reference smart-meter profile scaled to that estimate, and a
per-timestep proportional reconciliation against the measured transformer
load curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DemandError, ReconciliationError
from .timeseries import STEPS_PER_YEAR, TS_H, read_series_csv

CATEGORIES = ("apartment", "house", "non-residential")
CLAMP = (0.2, 5.0)


@dataclass(frozen=True)
class RoofSegment:
    area_m2: float
    tilt_deg: float
    azimuth_deg: float  # 180 = south
    orientation: str | None = None  # weather POA class, if one is supplied


@dataclass(frozen=True)
class BuildingRecord:
    id: str
    bus: str
    category: str
    floor_area_m2: float = 0.0
    annual_kwh: float | None = None
    load: np.ndarray | None = field(default=None, repr=False, compare=False)
    roof: tuple[RoofSegment, ...] = ()
    pv_bound_kw: float = 0.0

    def __post_init__(self):
        if self.pv_bound_kw < 0:
            raise DemandError(f"building {self.id}: PV capacity bound must be >= 0")
        if self.load is not None and (np.asarray(self.load) < 0).any():
            raise DemandError(f"building {self.id}: negative load values")

    @property
    def annual_energy_kwh(self) -> float:
        return float(np.sum(self.load) * TS_H) if self.load is not None else 0.0


def estimate_annual(category: str, floor_area_m2: float, intensity_table: Mapping[str, float]) -> float:
    """Annual consumption in kWh/yr from floor area and intensity (kWh/m2/yr)."""
    if not floor_area_m2 > 0:
        raise DemandError(f"floor area must be > 0, got {floor_area_m2}")
    if category not in intensity_table:
        raise ConfigError(f"no consumption intensity configured for category {category!r}")
    return float(floor_area_m2) * float(intensity_table[category])


def with_estimates(buildings: Iterable[BuildingRecord], intensity_table: Mapping[str, float]) -> list[BuildingRecord]:
    """Fill missing annual estimates from the intensity table."""
    out = []
    for b in buildings:
        if b.annual_kwh is None:
            b = replace(b, annual_kwh=estimate_annual(b.category, b.floor_area_m2, intensity_table))
        out.append(b)
    return out


def build_profiles(
    buildings: Iterable[BuildingRecord], reference_profiles: Mapping[str, Sequence[np.ndarray]]
) -> list[BuildingRecord]:
    """Assign each building a reference profile of its category, scaled to its estimate.

    Profiles of a category are handed out round-robin to that category's
    buildings taken in id order. The output keeps the input order.
    """
    buildings = list(buildings)
    refs = {}
    for cat, profiles in reference_profiles.items():
        arrs = [np.asarray(p, dtype=float) for p in profiles]
        for a in arrs:
            if (a < 0).any():
                raise ConfigError(f"reference profile for {cat!r} has negative values")
            if not a.sum() > 0:
                raise ConfigError(f"reference profile for {cat!r} has zero energy")
        refs[cat] = arrs
    assigned: dict[str, np.ndarray] = {}
    counters: dict[str, int] = {}
    for b in sorted(buildings, key=lambda r: r.id):
        pool = refs.get(b.category)
        if not pool:
            raise ConfigError(f"no reference profile for category {b.category!r} (building {b.id})")
        if b.annual_kwh is None:
            raise DemandError(f"building {b.id}: annual estimate missing")
        k = counters.get(b.category, 0)
        counters[b.category] = k + 1
        ref = pool[k % len(pool)]
        target = b.annual_kwh * len(ref) / STEPS_PER_YEAR
        assigned[b.id] = ref * (target / (ref.sum() * TS_H))
    return [replace(b, load=assigned[b.id]) for b in buildings]


@dataclass
class ReconcileDiagnostics:
    factors: np.ndarray
    clamped_steps: int
    residual_kw: np.ndarray  # transformer minus reconciled aggregate
    residual_energy_kwh: float


def reconcile(
    buildings: Sequence[BuildingRecord], transformer: np.ndarray, clamp: tuple[float, float] = CLAMP
) -> tuple[list[BuildingRecord], ReconcileDiagnostics]:
    """Scale all buildings by a common factor per step so they sum to the transformer curve."""
    transformer = np.asarray(transformer, dtype=float)
    if not buildings:
        raise DemandError("no buildings to reconcile")
    loads = np.vstack([np.asarray(b.load, dtype=float) for b in buildings])
    if loads.shape[1] != transformer.shape[0]:
        raise DemandError(
            f"profile length {loads.shape[1]} does not match transformer series length {transformer.shape[0]}"
        )
    total = loads.sum(axis=0)
    bad = np.flatnonzero((transformer > 0) & (total <= 0))
    if bad.size:
        raise ReconciliationError(
            f"transformer load {transformer[bad[0]]:.3f} kW at step {bad[0]} but buildings draw nothing",
            step=int(bad[0]),
        )
    raw = np.ones_like(total)
    pos = total > 0
    raw[pos] = transformer[pos] / total[pos]
    factors = np.clip(raw, *clamp)
    clamped = int(np.count_nonzero(pos & (factors != raw)))
    scaled = loads * factors
    residual = transformer - scaled.sum(axis=0)
    diag = ReconcileDiagnostics(factors, clamped, residual, float(np.abs(residual).sum() * TS_H))
    return [replace(b, load=row) for b, row in zip(buildings, scaled)], diag


def read_profile_csv(path: str | Path, expected_len: int | None = STEPS_PER_YEAR) -> np.ndarray:
    values = read_series_csv(path, "kw", expected_len).to_numpy()
    if (values < 0).any():
        raise ConfigError(f"{path}: negative load values")
    return values


def load_reference_profiles(directory: str | Path) -> dict[str, list[np.ndarray]]:
    """Reference profiles from ``<dir>/<category>/*.csv``, files in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"profiles directory {directory} does not exist")
    out = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.csv"))
        if files:
            out[sub.name] = [read_profile_csv(f) for f in files]
    if not out:
        raise ConfigError(f"no reference profiles found under {directory}")
    return out


def load_buildings(buildings_csv: str | Path, roofs_csv: str | Path | None = None) -> list[BuildingRecord]:
    """Read building metadata and optional roof segments.

    ``buildings.csv``: ``id,bus,category,floor_area_m2[,annual_kwh]``.
    ``roofs.csv``: ``building_id,area_m2,tilt_deg,azimuth_deg[,orientation]``.
    PV bounds are left at 0 here; the pv module fills them in.
    """
    roofs: dict[str, list[RoofSegment]] = {}
    if roofs_csv is not None:
        with open(roofs_csv, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                seg = RoofSegment(
                    float(row["area_m2"]),
                    float(row["tilt_deg"]),
                    float(row["azimuth_deg"]),
                    (row.get("orientation") or None),
                )
                roofs.setdefault(row["building_id"], []).append(seg)
    out = []
    try:
        fh = open(buildings_csv, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"missing buildings file {buildings_csv}") from None
    with fh:
        for row in csv.DictReader(fh):
            annual = row.get("annual_kwh")
            out.append(
                BuildingRecord(
                    id=row["id"],
                    bus=row.get("bus") or "",
                    category=row["category"],
                    floor_area_m2=float(row.get("floor_area_m2") or 0.0),
                    annual_kwh=float(annual) if annual not in (None, "") else None,
                    roof=tuple(roofs.get(row["id"], ())),
                )
            )
    return out
