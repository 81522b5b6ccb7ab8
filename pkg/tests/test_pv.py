import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvgrid.demand import BuildingRecord, RoofSegment
from lvgrid.errors import PvConfigError
from lvgrid.pv import (
    MAX_UNIT_OUTPUT, WeatherSeries, building_unit_profile, generation_profile, roof_capacity, unit_output,
)
from lvgrid.synthetic import synth_weather
from lvgrid.timeseries import year_index


def test_roof_capacity_examples():
    assert roof_capacity([16.31], usable_fraction=1.0) == pytest.approx(3.15)
    assert roof_capacity([16.31], usable_fraction=0.7) == pytest.approx(2.205)
    assert roof_capacity([0.0]) == 0.0
    assert roof_capacity([]) == 0.0
    with pytest.raises(PvConfigError):
        roof_capacity([10.0], usable_fraction=0.0)


def test_unit_output_examples():
    assert unit_output(np.array([0.0]), np.array([25.0]))[0] == 0.0
    # ambient chosen so the cell sits at 25 C
    t_amb = 25.0 - 25.0 / 800.0 * 1000.0
    assert unit_output(np.array([1000.0]), np.array([t_amb]))[0] == pytest.approx(1.0, abs=1e-12)
    assert unit_output(np.array([1000.0]), np.array([25.0]))[0] == pytest.approx(0.890625, abs=1e-12)


@given(st.floats(0, 1400), st.floats(0, 1400), st.floats(-20, 40))
def test_unit_output_monotone_and_bounded(g1, g2, t):
    lo, hi = sorted((g1, g2))
    a, b = unit_output(np.array([lo, hi]), np.array([t, t]))
    assert 0.0 <= a <= MAX_UNIT_OUTPUT and 0.0 <= b <= MAX_UNIT_OUTPUT
    # derating grows with irradiance too; monotone below ~1400 W/m2 for these temperatures
    assert b >= a - 1e-12


def test_profile_zero_at_night_and_bounded():
    idx = year_index(days=7)
    w = synth_weather(idx, np.random.default_rng(1))
    p = generation_profile(w, (30.0, 180.0))
    assert np.all(p[w.ghi == 0] == 0)
    assert p.min() >= 0 and p.max() <= MAX_UNIT_OUTPUT


def test_missing_orientation_class():
    idx = year_index(days=1)
    w = WeatherSeries(idx, np.zeros(len(idx)), np.zeros(len(idx)))
    with pytest.raises(PvConfigError, match="south"):
        generation_profile(w, "south")


def test_poa_column_used_directly():
    idx = year_index(days=1)
    poa = np.full(len(idx), 1000.0)
    w = WeatherSeries(idx, np.zeros(len(idx)), np.full(len(idx), 25.0), {"south": poa})
    np.testing.assert_allclose(generation_profile(w, "south"), 0.890625)


def test_south_beats_north():
    idx = year_index()
    w = synth_weather(idx, np.random.default_rng(2), cloudy=False)
    south = generation_profile(w, (30.0, 180.0)).sum()
    north = generation_profile(w, (30.0, 0.0)).sum()
    flat = generation_profile(w, (0.0, 180.0)).sum()
    assert south > flat > north


def test_building_profile_is_capacity_weighted():
    idx = year_index(days=3)
    w = synth_weather(idx, np.random.default_rng(3))
    east, west = RoofSegment(40.0, 30.0, 90.0), RoofSegment(20.0, 30.0, 270.0)
    b = BuildingRecord("x", "N1", "house", roof=(east, west))
    got = building_unit_profile(b, w).values
    ce, cw = roof_capacity([east]), roof_capacity([west])
    want = (ce * generation_profile(w, east) + cw * generation_profile(w, west)) / (ce + cw)
    np.testing.assert_allclose(got, want, rtol=1e-12)
