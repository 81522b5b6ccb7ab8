import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvgrid.grid import Bus, Line, Transformer, build_network
from lvgrid.powerflow import (
    PowerFlowResult, congestion_stats, duration_curve, kcl_residual, run_timeseries, solve_snapshot,
)

import oracles


def test_zero_injection(feeder):
    res = solve_snapshot(feeder, {})
    np.testing.assert_allclose(res.voltage, 1.0)
    np.testing.assert_allclose(res.current, 0.0)


@pytest.mark.parametrize("p,q", [(0.1, 0.0), (0.2, 0.05), (0.3, 0.1)])
def test_two_bus_closed_form(two_bus, p, q):
    res = solve_snapshot(two_bus, {"A": -p * 100.0}, {"A": -q * 100.0}, tol=1e-12)
    want = oracles.two_bus_voltage(p, q, 0.01, 0.01)
    assert abs(res.voltage[0, 1] - want) < 1e-9
    # slack supplies the load plus the line losses
    losses = abs(res.current[0, 0]) ** 2 * 0.01 * 100.0
    assert res.transformer_kw[0] == pytest.approx(p * 100.0 + losses, rel=1e-9)


def test_reverse_flow_raises_leaf_voltage(feeder):
    leaf = feeder.buses[-1].id
    res = solve_snapshot(feeder, {leaf: 40.0})
    assert res.vmag[0, feeder.bus_index[leaf]] > 1.0
    assert res.reverse_flow[0]


def test_timeseries_constant_and_consumption(feeder):
    p = pd.DataFrame({b.id: [-5.0] * 4 for b in feeder.buses[1:]})
    res = run_timeseries(feeder, p)
    assert len(res) == 4
    np.testing.assert_allclose(res.voltage, np.repeat(res.voltage[:1], 4, axis=0), atol=0)
    assert not res.reverse_flow.any()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kcl_and_conservation(seed):
    rng = np.random.default_rng(seed)
    n = 8
    buses = [Bus("S", "slack")] + [Bus(f"N{i}", "load") for i in range(1, n)]
    lines = [Line(f"N{j}" if (j := int(rng.integers(0, i))) else "S", f"N{i}", 0.1, 0.2, 0.08, 200.0) for i in range(1, n)]
    net = build_network(buses, lines, [Transformer(250.0, 400.0)])
    p = {f"N{i}": rng.uniform(-20, 20, 6) for i in range(1, n)}
    res = run_timeseries(net, p, tol=1e-12)
    assert kcl_residual(net, res, p).max() < 1e-8
    # slack power = net load + losses
    r_pu = np.array([net.line_z_pu[k].real for k in range(len(net.lines))])
    losses = (np.abs(res.current) ** 2 * r_pu).sum(axis=1) * net.s_base_kva
    load = -np.sum(list(p.values()), axis=0)
    np.testing.assert_allclose(res.transformer_kw, load + losses, atol=1e-7)


def test_zero_impedance_limit(feeder):
    stiff = build_network(
        feeder.buses, [Line(l.from_bus, l.to_bus, l.length_km, 1e-9, 1e-9, l.ampacity_a) for l in feeder.lines],
        [feeder.transformer],
    )
    res = solve_snapshot(stiff, {b.id: -10.0 for b in feeder.buses[1:]})
    np.testing.assert_allclose(res.vmag, 1.0, atol=1e-9)


def _result(loading_pct, vmag):
    t = len(loading_pct)
    return PowerFlowResult(
        pd.RangeIndex(t), ["S", "A"], ["L1"], np.column_stack([np.ones(t), vmag]).astype(complex),
        np.asarray(loading_pct, float)[:, None].astype(complex), np.zeros(t), np.ones(t, int),
        np.zeros(t, bool), 1.0, np.array([100.0]),
    )


def test_line_stats_constant():
    lines, _ = congestion_stats(_result(np.full(40, 80.0), np.ones(40)))
    assert lines[0].p95 == pytest.approx(80.0) and lines[0].overloaded_hours == 0


def test_line_stats_overload():
    loading = np.full(40, 50.0)
    loading[:3] = 105.0
    lines, _ = congestion_stats(_result(loading, np.ones(40)))
    assert lines[0].max == pytest.approx(105.0)
    assert lines[0].p95 == pytest.approx(oracles.percentile_linear(loading, 95))
    assert lines[0].overloaded_hours == pytest.approx(0.75)


def test_voltage_percentile():
    v = 1.0 + np.linspace(-0.06, 0.12, 20)
    _, buses = congestion_stats(_result(np.zeros(20), v))
    a = buses[1]
    assert a.p95_high == pytest.approx(1.0 + oracles.percentile_linear(np.maximum(v - 1, 0), 95), abs=1e-12)
    assert a.p95_low == pytest.approx(1.0 - oracles.percentile_linear(np.maximum(1 - v, 0), 95), abs=1e-12)
    assert a.violations_high == int(np.sum(v > 1.1))


def test_duration_curve():
    c = duration_curve(np.full(96, 100.0), 630.0)
    assert c.hours_above_rating == 0 and c.max_drawn_kw == 100.0
    sq = np.tile([700.0, -700.0], 48)
    c = duration_curve(sq, 630.0)
    assert c.hours_above_rating == 24.0 and c.reverse_hours_above_rating == 12.0
    day = -250.0 * np.clip(np.sin(np.linspace(0, np.pi, 96)), 0, None) + 80.0
    c = duration_curve(day, 630.0)
    assert c.max_feedin_kw == pytest.approx(-day.min())
    assert np.all(np.diff(np.abs(c.kw)) <= 0)
