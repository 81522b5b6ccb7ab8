"""Synthetic stand-ins for the measured inputs: feeder, buildings, weather, load shapes.

Everything is driven by a seeded ``numpy.random.Generator`` so a fixture is
reproducible from its seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .demand import BuildingRecord, RoofSegment, build_profiles, with_estimates
from .grid import Bus, Line, NetworkModel, Transformer, build_network, format_network
from .pv import WeatherSeries, extraterrestrial_horizontal, solar_position, write_weather_csv
from .timeseries import STEPS_PER_DAY, write_series_csv, year_index

# typical LV feeder cable (240 mm2 Al): ohm/km, ohm/km, A
FEEDER_CABLE = (0.125, 0.07, 270.0)

# kWh per m2 of floor area per year
INTENSITY = {"apartment": 30.0, "house": 35.0, "non-residential": 60.0}


def clear_sky_ghi(index: pd.DatetimeIndex) -> np.ndarray:
    """Haurwitz clear-sky global horizontal irradiance (W/m2)."""
    cos_z, _ = solar_position(index)
    cz = np.maximum(cos_z, 0.0)
    out = np.zeros_like(cz)
    up = cz > 0.01
    out[up] = 1098.0 * cz[up] * np.exp(-0.057 / cz[up])
    return out


def synth_weather(index: pd.DatetimeIndex, rng: np.random.Generator, cloudy: bool = True) -> WeatherSeries:
    """Clear-sky irradiance scaled by a daily clearness draw plus intraday flicker."""
    cs = clear_sky_ghi(index)
    days = len(index) // STEPS_PER_DAY
    doy = index.dayofyear.to_numpy()
    if cloudy:
        # winters are greyer: mean daily clearness ~0.45 in Dec, ~0.75 in Jul
        day_doy = doy[::STEPS_PER_DAY][:days]
        mean = 0.6 - 0.15 * np.cos(2 * np.pi * (day_doy + 10) / 365.0)
        daily = rng.beta(mean * 4.0, (1 - mean) * 4.0)
        k = np.repeat(daily, STEPS_PER_DAY)[: len(index)]
        flicker = np.clip(1.0 + 0.25 * (1.0 - k) * rng.standard_normal(len(index)), 0.2, 1.3)
        ghi = cs * np.clip(k * flicker, 0.05, 1.05)
    else:
        ghi = cs.copy()
    ghi = np.minimum(ghi, extraterrestrial_horizontal(index, solar_position(index)[0]))
    hours = index.hour.to_numpy() + index.minute.to_numpy() / 60.0
    temp = 10.0 - 9.0 * np.cos(2 * np.pi * (doy - 20) / 365.0) + 5.0 * np.sin(2 * np.pi * (hours - 9) / 24.0)
    if cloudy:
        temp = temp + np.repeat(rng.normal(0, 2.0, days + 1), STEPS_PER_DAY)[: len(index)]
    return WeatherSeries(index, np.round(ghi, 3), np.round(temp, 3))


def synth_load_shape(index: pd.DatetimeIndex, category: str, rng: np.random.Generator) -> np.ndarray:
    """Unscaled demand shape (kW-like) with daily/weekly/seasonal structure and noise."""
    h = index.hour.to_numpy() + index.minute.to_numpy() / 60.0
    dow = index.dayofweek.to_numpy()
    doy = index.dayofyear.to_numpy()
    season = 1.0 + 0.3 * np.cos(2 * np.pi * (doy - 15) / 365.0)

    def bump(center, width):
        return np.exp(-0.5 * ((h - center) / width) ** 2)

    if category == "non-residential":
        base = 0.35 + 1.2 * ((h >= 7) & (h < 18)) * (dow < 5) + 0.25 * bump(12, 1.5)
    elif category == "house":
        base = 0.3 + 0.5 * bump(7.5, 1.0) + 0.6 * bump(12.5, 1.2) + 1.1 * bump(19.5, 1.8)
    else:
        base = 0.35 + 0.4 * bump(7.0, 1.0) + 0.3 * bump(12.5, 1.0) + 0.9 * bump(20.0, 1.6)
    noise = np.exp(0.25 * rng.standard_normal(len(index)))
    return np.maximum(base * season * noise, 0.01)


@dataclass
class Fixture:
    network: NetworkModel
    buildings: list[BuildingRecord]
    weather: WeatherSeries
    reference_profiles: dict[str, list[np.ndarray]]
    transformer_kw: np.ndarray


def synth_fixture(
    n_buildings: int = 8,
    seed: int = 0,
    cloudy: bool = True,
    n_feeder_buses: int | None = None,
    rating_kva: float = 250.0,
    name: str = "synthetic",
) -> Fixture:
    """A radial feeder with rural-style prosumers.

    Roofs are gables (two opposite faces) or flat-ish single faces, sized so
    most buildings can host 15-60 kW; loads follow the category shapes.
    """
    rng = np.random.default_rng(seed)
    index = year_index()
    n_feeder = n_feeder_buses or max(2, (n_buildings + 1) // 2)
    buses = [Bus("TR", "slack", ())]
    lines = []
    # a main feeder with a branch every few buses
    for i in range(1, n_feeder + 1):
        parent = "TR" if i == 1 else (f"N{i - 1}" if i % 4 else f"N{max(1, i - 3)}")
        length = float(rng.uniform(0.04, 0.12))
        lines.append(Line(parent, f"N{i}", round(length, 4), *FEEDER_CABLE))
        buses.append(Bus(f"N{i}", "load", ()))
    buildings = []
    cats = ("house", "house", "apartment", "non-residential")
    for j in range(n_buildings):
        bid = f"B{j + 1:02d}"
        bus = f"N{1 + j % n_feeder}"
        cat = cats[j % len(cats)] if j % 5 else "house"
        area = float(rng.uniform(140, 260) if cat == "house" else rng.uniform(300, 700))
        roof_area = float(rng.uniform(120, 420))
        if j % 3 == 2:
            roof = (RoofSegment(round(roof_area, 1), 10.0, 180.0),)
        else:
            az = float(rng.choice([180.0, 135.0, 225.0, 90.0]))
            roof = (
                RoofSegment(round(roof_area / 2, 1), 30.0, az),
                RoofSegment(round(roof_area / 2, 1), 30.0, (az + 180.0) % 360.0),
            )
        buildings.append(BuildingRecord(bid, bus, cat, round(area, 1), None, None, roof))
    bus_map: dict[str, list[str]] = {}
    for b in buildings:
        bus_map.setdefault(b.bus, []).append(b.id)
    buses = [Bus(b.id, b.kind, tuple(bus_map.get(b.id, ()))) for b in buses]
    net = build_network(buses, lines, [Transformer(rating_kva, 400.0)], name=name)

    refs = {c: [synth_load_shape(year_index(), c, rng) for _ in range(2)] for c in ("apartment", "house", "non-residential")}
    weather = synth_weather(index, rng, cloudy)
    est = build_profiles(with_estimates(buildings, INTENSITY), refs)
    total = np.sum([b.load for b in est], axis=0)
    transformer = total * np.exp(0.05 * rng.standard_normal(len(index)))
    return Fixture(net, buildings, weather, refs, np.round(transformer, 6))


def write_fixture(fx: Fixture, directory: str | Path, scenario_extra: dict | None = None) -> Path:
    """Write the fixture as scenario input files and return the scenario path."""
    d = Path(directory)
    (d / "profiles").mkdir(parents=True, exist_ok=True)
    (d / "network.txt").write_text(format_network(fx.network), encoding="utf-8")
    pd.DataFrame(
        [{"id": b.id, "bus": b.bus, "category": b.category, "floor_area_m2": b.floor_area_m2} for b in fx.buildings]
    ).to_csv(d / "buildings.csv", index=False)
    pd.DataFrame(
        [{"building_id": b.id, "area_m2": s.area_m2, "tilt_deg": s.tilt_deg, "azimuth_deg": s.azimuth_deg}
         for b in fx.buildings for s in b.roof]
    ).to_csv(d / "roofs.csv", index=False)
    full = year_index()
    for cat, profs in fx.reference_profiles.items():
        (d / "profiles" / cat).mkdir(exist_ok=True)
        for k, p in enumerate(profs):
            write_series_csv(d / "profiles" / cat / f"ref{k + 1}.csv", pd.Series(p, index=full))
    write_weather_csv(d / "weather.csv", fx.weather)
    write_series_csv(d / "transformer.csv", pd.Series(fx.transformer_kw, index=full))
    lines = [
        "[scenario]",
        f"name = {fx.network.name}",
        "network = network.txt",
        "buildings = buildings.csv",
        "roofs = roofs.csv",
        "profiles = profiles",
        "weather = weather.csv",
        "transformer_load = transformer.csv",
        "tariff = Reference DT",
        "level = mid",
        "pv_mode = optimized",
        "sharing = false",
        "seed = 0",
    ]
    for k, v in (scenario_extra or {}).items():
        lines.append(f"{k} = {v}")
    lines += ["", "[intensity]"] + [f"{k} = {v}" for k, v in INTENSITY.items()]
    path = d / "scenario.ini"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
