"""Roof PV capacity and capacity-normalised generation profiles.

Output per kW installed follows an irradiance/temperature derate::

    T_cell = T_amb + (NOCT - 20) / 800 * G
    p      = G / 1000 * max(0, 1 + gamma * (T_cell - 25)),  clipped at 1.25

Plane-of-array irradiance is read from the weather file per orientation class
or, for synthetic runs, transposed from horizontal irradiance (Erbs split,
isotropic sky).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .demand import BuildingRecord, RoofSegment
from .errors import ConfigError, PvConfigError
from .timeseries import STEPS_PER_YEAR

MODULE_AREA_M2 = 1.6310
MODULE_KW = 0.315
USABLE_FRACTION = 0.7
TEMP_COEFF = -0.0035
NOCT_C = 45.0
MAX_UNIT_OUTPUT = 1.25

# Pully (VD) weather station, local standard time UTC+1
LATITUDE = 46.51
LONGITUDE = 6.67
UTC_OFFSET_H = 1.0
ALBEDO = 0.2


@dataclass(frozen=True)
class WeatherSeries:
    index: pd.DatetimeIndex
    ghi: np.ndarray
    temp_c: np.ndarray
    poa: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.index)
        for name, arr in [("ghi", self.ghi), ("temp_c", self.temp_c), *self.poa.items()]:
            if len(arr) != n:
                raise PvConfigError(f"weather column {name!r} has {len(arr)} values, index has {n}")
        if (self.ghi < 0).any() or any((a < 0).any() for a in self.poa.values()):
            raise PvConfigError("irradiance must be nonnegative")

    def __len__(self):
        return len(self.index)

    def head(self, n: int) -> "WeatherSeries":
        return WeatherSeries(self.index[:n], self.ghi[:n], self.temp_c[:n], {k: v[:n] for k, v in self.poa.items()})


@dataclass(frozen=True)
class PvUnitProfile:
    building_id: str
    values: np.ndarray  # kW per kW installed


def roof_capacity(
    segments: Iterable[RoofSegment | float],
    module_area_m2: float = MODULE_AREA_M2,
    module_kw: float = MODULE_KW,
    usable_fraction: float = USABLE_FRACTION,
) -> float:
    """Installable kW: whole modules per segment times module power."""
    if not (module_area_m2 > 0 and module_kw > 0):
        raise PvConfigError("module area and power must be positive")
    if not 0 < usable_fraction <= 1:
        raise PvConfigError(f"usable fraction must lie in (0, 1], got {usable_fraction}")
    total = 0.0
    for seg in segments:
        area = seg.area_m2 if isinstance(seg, RoofSegment) else float(seg)
        if area < 0:
            raise PvConfigError(f"negative roof area {area}")
        # tolerance keeps 16.31 * 0.7 / 1.631 at 7 modules despite rounding
        modules = math.floor(area * usable_fraction / module_area_m2 + 1e-9)
        total += modules * module_kw
    return total


def segment_capacities(segments: Sequence[RoofSegment], **module) -> np.ndarray:
    return np.array([roof_capacity([s], **module) for s in segments])


def cell_temperature(ghi_or_poa: np.ndarray, temp_c: np.ndarray, noct_c: float = NOCT_C) -> np.ndarray:
    return temp_c + (noct_c - 20.0) / 800.0 * ghi_or_poa


def unit_output(poa: np.ndarray, temp_c: np.ndarray, temp_coeff: float = TEMP_COEFF, noct_c: float = NOCT_C) -> np.ndarray:
    poa = np.asarray(poa, dtype=float)
    t_cell = cell_temperature(poa, np.asarray(temp_c, dtype=float), noct_c)
    derate = np.maximum(0.0, 1.0 + temp_coeff * (t_cell - 25.0))
    return np.minimum(poa / 1000.0 * derate, MAX_UNIT_OUTPUT)


def solar_position(index: pd.DatetimeIndex, lat: float = LATITUDE, lon: float = LONGITUDE, utc_offset_h: float = UTC_OFFSET_H):
    """Cosine of zenith and azimuth (deg from north, clockwise) at interval midpoints."""
    mid = index + pd.Timedelta(minutes=7.5)
    doy = mid.dayofyear.to_numpy()
    hours = mid.hour.to_numpy() + mid.minute.to_numpy() / 60.0
    b = 2 * np.pi * (doy - 1) / 365.0
    eot_min = 229.18 * (
        0.000075 + 0.001868 * np.cos(b) - 0.032077 * np.sin(b) - 0.014615 * np.cos(2 * b) - 0.040849 * np.sin(2 * b)
    )
    decl = (
        0.006918 - 0.399912 * np.cos(b) + 0.070257 * np.sin(b) - 0.006758 * np.cos(2 * b)
        + 0.000907 * np.sin(2 * b) - 0.002697 * np.cos(3 * b) + 0.00148 * np.sin(3 * b)
    )
    solar_time = hours + (4.0 * (lon - 15.0 * utc_offset_h) + eot_min) / 60.0
    omega = np.radians(15.0 * (solar_time - 12.0))
    phi = np.radians(lat)
    cos_z = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(omega)
    az = np.degrees(np.arctan2(np.sin(omega), np.cos(omega) * np.sin(phi) - np.tan(decl) * np.cos(phi))) + 180.0
    return np.clip(cos_z, -1.0, 1.0), az % 360.0


def extraterrestrial_horizontal(index: pd.DatetimeIndex, cos_z: np.ndarray) -> np.ndarray:
    doy = index.dayofyear.to_numpy()
    return 1367.0 * (1 + 0.033 * np.cos(2 * np.pi * doy / 365.0)) * np.maximum(cos_z, 0.0)


def transpose(weather: WeatherSeries, tilt_deg: float, azimuth_deg: float, albedo: float = ALBEDO) -> np.ndarray:
    """Plane-of-array irradiance from horizontal irradiance."""
    cos_z, sun_az = solar_position(weather.index)
    ghi = weather.ghi
    g0 = extraterrestrial_horizontal(weather.index, cos_z)
    up = cos_z > 0.01
    kt = np.zeros_like(ghi)
    kt[up] = np.clip(ghi[up] / np.maximum(g0[up], 1.0), 0.0, 1.0)
    kd = np.where(
        kt <= 0.22,
        1.0 - 0.09 * kt,
        np.where(kt <= 0.8, 0.9511 - 0.1604 * kt + 4.388 * kt**2 - 16.638 * kt**3 + 12.336 * kt**4, 0.165),
    )
    dhi = np.where(up, kd * ghi, ghi)
    dni = np.where(up, (ghi - dhi) / np.maximum(cos_z, 0.087), 0.0)
    beta = math.radians(tilt_deg)
    sin_z = np.sqrt(1.0 - cos_z**2)
    cos_aoi = cos_z * math.cos(beta) + sin_z * math.sin(beta) * np.cos(np.radians(sun_az - azimuth_deg))
    poa = dni * np.maximum(cos_aoi, 0.0) + dhi * (1 + math.cos(beta)) / 2 + ghi * albedo * (1 - math.cos(beta)) / 2
    return np.maximum(poa, 0.0)


def generation_profile(
    weather: WeatherSeries,
    orientation: str | RoofSegment | tuple[float, float],
    temp_coeff: float = TEMP_COEFF,
    noct_c: float = NOCT_C,
) -> np.ndarray:
    """Normalised output (kW/kW) for one orientation.

    ``orientation`` names a ``poa_<class>_wm2`` weather column, or gives
    ``(tilt, azimuth)`` / a roof segment to transpose horizontal irradiance.
    """
    if temp_coeff > 0:
        raise PvConfigError("temperature coefficient must be <= 0")
    if isinstance(orientation, RoofSegment):
        orientation = orientation.orientation or (orientation.tilt_deg, orientation.azimuth_deg)
    if isinstance(orientation, str):
        if orientation not in weather.poa:
            raise PvConfigError(f"weather input has no plane-of-array column for orientation class {orientation!r}")
        poa = weather.poa[orientation]
    else:
        tilt, az = orientation
        poa = transpose(weather, tilt, az)
    return unit_output(poa, weather.temp_c, temp_coeff, noct_c)


def building_unit_profile(building: BuildingRecord, weather: WeatherSeries, **model) -> PvUnitProfile:
    """Capacity-weighted blend of the building's roof segment profiles."""
    caps = segment_capacities(building.roof)
    if caps.sum() <= 0:
        return PvUnitProfile(building.id, np.zeros(len(weather)))
    cache: dict = {}
    acc = np.zeros(len(weather))
    for seg, cap in zip(building.roof, caps):
        if cap <= 0:
            continue
        key = seg.orientation or (round(seg.tilt_deg, 3), round(seg.azimuth_deg, 3))
        if key not in cache:
            cache[key] = generation_profile(weather, key, **model)
        acc += cap * cache[key]
    return PvUnitProfile(building.id, acc / caps.sum())


def with_pv_bounds(buildings: Iterable[BuildingRecord], usable_fraction: float = USABLE_FRACTION) -> list[BuildingRecord]:
    return [replace(b, pv_bound_kw=roof_capacity(b.roof, usable_fraction=usable_fraction)) for b in buildings]


def monthly_irradiance(weather: WeatherSeries) -> np.ndarray:
    """Horizontal irradiation per calendar month in kWh/m2 (12 values, NaN if month absent)."""
    months = weather.index.month.to_numpy()
    out = np.full(12, np.nan)
    for m in range(1, 13):
        sel = months == m
        if sel.any():
            out[m - 1] = weather.ghi[sel].sum() * 0.25 / 1000.0
    return out


def read_weather_csv(path: str | Path, expected_len: int | None = STEPS_PER_YEAR) -> WeatherSeries:
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"missing weather file {path}") from None
    if list(df.columns[:3]) != ["timestamp", "ghi_wm2", "temp_c"]:
        raise ConfigError(f"{path}: expected header 'timestamp,ghi_wm2,temp_c[,poa_<class>_wm2...]'")
    if expected_len is not None and len(df) != expected_len:
        raise ConfigError(f"{path}: expected {expected_len} rows, got {len(df)}")
    poa = {}
    for col in df.columns[3:]:
        if not (col.startswith("poa_") and col.endswith("_wm2")):
            raise ConfigError(f"{path}: unexpected weather column {col!r}")
        poa[col[4:-4]] = df[col].to_numpy(dtype=float)
    return WeatherSeries(
        pd.DatetimeIndex(pd.to_datetime(df["timestamp"])),
        df["ghi_wm2"].to_numpy(dtype=float),
        df["temp_c"].to_numpy(dtype=float),
        poa,
    )


def write_weather_csv(path: str | Path, weather: WeatherSeries) -> None:
    df = pd.DataFrame(
        {
            "timestamp": weather.index.strftime("%Y-%m-%dT%H:%M:%S"),
            "ghi_wm2": np.round(weather.ghi, 3),
            "temp_c": np.round(weather.temp_c, 3),
        }
    )
    for k, v in weather.poa.items():
        df[f"poa_{k}_wm2"] = np.round(v, 3)
    df.to_csv(path, index=False)
