"""Radial AC load flow by backward/forward sweep, plus grid-impact statistics.

All timesteps are swept together: voltages and currents are ``(T, n_bus)``
arrays and the loop runs over buses in breadth-first order. Loads are
constant power; injections are positive for generation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import PowerFlowError
from .grid import NetworkModel
from .timeseries import TS_H

log = logging.getLogger(__name__)

V_HIGH = 1.1
V_LOW = 0.9


@dataclass
class PowerFlowResult:
    index: pd.Index
    bus_ids: list[str]
    line_ids: list[str]
    voltage: np.ndarray  # (T, n_bus) complex p.u., network bus order
    current: np.ndarray  # (T, n_line) complex p.u., from -> to direction of the tree
    transformer_kw: np.ndarray  # (T,), positive = drawn from MV
    iterations: np.ndarray  # (T,)
    failed: np.ndarray  # (T,) bool
    i_base_a: float
    ampacity_a: np.ndarray
    residual: np.ndarray | None = None  # last max voltage update per step

    def __len__(self):
        return len(self.index)

    @property
    def current_a(self) -> np.ndarray:
        return np.abs(self.current) * self.i_base_a

    @property
    def loading(self) -> np.ndarray:
        """|I| / ampacity, shape (T, n_line)."""
        return self.current_a / self.ampacity_a

    @property
    def vmag(self) -> np.ndarray:
        return np.abs(self.voltage)

    @property
    def reverse_flow(self) -> np.ndarray:
        return self.transformer_kw < 0


def _injection_matrix(net: NetworkModel, injections, n_steps: int | None = None) -> tuple[pd.Index, np.ndarray]:
    """Per-bus kW (or complex kVA) as a (T, n_bus) array in network bus order."""
    if isinstance(injections, pd.DataFrame):
        index = injections.index
        cols = {c: injections[c].to_numpy() for c in injections.columns}
    else:
        cols = {k: np.atleast_1d(np.asarray(v)) for k, v in dict(injections).items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise PowerFlowError("injection series differ in length")
        n = lengths.pop() if lengths else (n_steps or 1)
        index = pd.RangeIndex(n)
    out = np.zeros((len(index), len(net.buses)), dtype=complex)
    for bus, series in cols.items():
        if bus not in net.bus_index:
            raise PowerFlowError(f"injection for unknown bus {bus!r}")
        if len(series) != len(index):
            raise PowerFlowError(f"injection series for bus {bus!r} has {len(series)} values, expected {len(index)}")
        out[:, net.bus_index[bus]] += series
    return index, out


def _sweep(net: NetworkModel, s_pu: np.ndarray, tol: float, max_iter: int):
    """Backward/forward sweep on (T, n_bus) injections in network order.

    Returns voltages, branch currents in tree position order, iteration
    counts and a convergence mask.
    """
    topo = net.topology
    order, parent = topo.order, topo.parent
    z = net.line_z_pu[topo.line[1:]]
    s = s_pu[:, order]  # tree position order
    T, nb = s.shape
    v = np.ones((T, nb), dtype=complex)
    branch = np.zeros((T, nb), dtype=complex)  # current into position k from its parent
    iters = np.zeros(T, dtype=int)
    active = np.ones(T, dtype=bool)
    last = np.full(T, np.inf)
    for it in range(1, max_iter + 1):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        vs, ss = v[rows], s[rows]
        # current drawn by each bus; generation is a negative draw
        br = -np.conj(ss / vs)
        br[:, 0] = 0.0
        for k in range(nb - 1, 0, -1):
            br[:, parent[k]] += br[:, k]
        vn = vs.copy()
        for k in range(1, nb):
            vn[:, k] = vn[:, parent[k]] - z[k - 1] * br[:, k]
        delta = np.max(np.abs(vn - vs), axis=1)
        bad = ~np.isfinite(delta) | (np.min(np.abs(vn), axis=1) < 0.05)
        v[rows] = vn
        branch[rows] = br
        iters[rows] = it
        last[rows] = delta
        done = delta < tol
        active[rows[done | bad]] = False
        last[rows[bad]] = np.inf
    converged = np.isfinite(last) & (last < tol)
    # final backward sweep at the converged voltages makes KCL hold to roundoff
    br = -np.conj(s / v)
    br[:, 0] = 0.0
    for k in range(nb - 1, 0, -1):
        br[:, parent[k]] += br[:, k]
    branch = br
    return v, branch, iters, converged, last


def solve_snapshot(
    net: NetworkModel,
    p_kw: Mapping[str, float],
    q_kvar: Mapping[str, float] | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> PowerFlowResult:
    """One load-flow snapshot. Raises when the sweep does not converge."""
    res = run_timeseries(
        net,
        {k: [v] for k, v in p_kw.items()},
        None if q_kvar is None else {k: [v] for k, v in q_kvar.items()},
        tol=tol,
        max_iter=max_iter,
    )
    if res.failed[0]:
        raise PowerFlowError("load flow did not converge", residual=float(res.residual[0]))
    return res


def run_timeseries(
    net: NetworkModel,
    p_kw,
    q_kvar=None,
    power_factor: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> PowerFlowResult:
    """Solve every timestep of per-bus net injections (kW, positive = generation).

    Reactive power comes from ``q_kvar`` or from a fixed ``power_factor``
    (lagging for consumption); unity by default. Non-converged steps are
    recorded in ``failed`` and left as NaN.
    """
    index, p = _injection_matrix(net, p_kw)
    s = p.real.astype(complex)
    if q_kvar is not None:
        qi, q = _injection_matrix(net, q_kvar, len(index))
        if len(qi) != len(index):
            raise PowerFlowError("active and reactive series differ in length")
        s = s + 1j * q.real
    elif power_factor is not None:
        if not 0 < power_factor <= 1:
            raise PowerFlowError("power factor must lie in (0, 1]")
        tan = np.sqrt(1.0 - power_factor**2) / power_factor
        s = s + 1j * s.real * tan  # consumption (p < 0) draws reactive power too
    slack = net.bus_index[net.slack.id]
    s[:, slack] = 0.0
    v_pos, br_pos, iters, ok, last = _sweep(net, s / net.s_base_kva, tol, max_iter)

    topo = net.topology
    voltage = np.empty_like(v_pos)
    voltage[:, topo.order] = v_pos
    current = np.empty((len(index), len(net.lines)), dtype=complex)
    current[:, topo.line[1:]] = br_pos[:, 1:]
    # slack injection = sum of currents leaving the slack bus
    root_children = np.flatnonzero(topo.parent == 0)
    i_slack = br_pos[:, root_children].sum(axis=1)
    trafo = (v_pos[:, 0] * np.conj(i_slack)).real * net.s_base_kva
    failed = ~ok
    if failed.any():
        log.warning("%s: %d of %d load-flow steps did not converge", net.name, failed.sum(), len(index))
        voltage[failed] = np.nan
        current[failed] = np.nan
        trafo[failed] = np.nan
    res = PowerFlowResult(
        index, [b.id for b in net.buses], [ln.id for ln in net.lines], voltage, current, trafo,
        iters, failed, net.i_base_a, np.array([ln.ampacity_a for ln in net.lines]), last,
    )
    return res


def kcl_residual(net: NetworkModel, res: PowerFlowResult, p_kw, q_kvar=None) -> np.ndarray:
    """Max |current balance| per step in p.u. (independent of the sweep's bookkeeping)."""
    _, p = _injection_matrix(net, p_kw)
    s = p.real.astype(complex)
    if q_kvar is not None:
        s = s + 1j * _injection_matrix(net, q_kvar, len(p))[1].real
    s = s / net.s_base_kva
    idx = net.bus_index
    bal = np.zeros_like(res.voltage)
    for k, ln in enumerate(net.lines):
        # current sign follows the tree: positive from parent to child
        bal[:, idx[ln.from_bus]] -= res.current[:, k] * _orientation(net, k)
        bal[:, idx[ln.to_bus]] += res.current[:, k] * _orientation(net, k)
    bal += np.conj(s / res.voltage)
    slack = idx[net.slack.id]
    bal[:, slack] = 0.0
    return np.max(np.abs(bal), axis=1)


def _orientation(net: NetworkModel, k: int) -> float:
    """+1 if line k's from-bus is the parent in the slack-rooted tree."""
    topo = net.topology
    pos = int(np.flatnonzero(topo.line == k)[0])
    parent_bus = net.buses[topo.order[topo.parent[pos]]].id
    return 1.0 if net.lines[k].from_bus == parent_bus else -1.0


@dataclass
class LineStats:
    line_id: str
    p95: float  # percent
    max: float  # percent
    overloaded_hours: float


@dataclass
class BusStats:
    bus_id: str
    p95_high: float  # p.u.
    p95_low: float  # p.u.
    violations_high: int
    violations_low: int


def congestion_stats(result: PowerFlowResult) -> tuple[list[LineStats], list[BusStats]]:
    """Per-line loading and per-bus voltage statistics over converged steps.

    Voltage percentiles are of the deviation above (below) 1.0 p.u., reported
    back as voltages: ``p95_high = 1 + P95(max(V - 1, 0))``.
    """
    if len(result) == 0:
        raise PowerFlowError("empty load-flow result")
    ok = ~result.failed
    loading = result.loading[ok] * 100.0
    lines = [
        LineStats(lid, float(np.percentile(loading[:, k], 95)), float(loading[:, k].max()),
                  float(np.sum(loading[:, k] > 100.0) * TS_H))
        for k, lid in enumerate(result.line_ids)
    ]
    vm = result.vmag[ok]
    buses = []
    for k, bid in enumerate(result.bus_ids):
        x = vm[:, k]
        buses.append(BusStats(
            bid,
            1.0 + float(np.percentile(np.maximum(x - 1.0, 0.0), 95)),
            1.0 - float(np.percentile(np.maximum(1.0 - x, 0.0), 95)),
            int(np.sum(x > V_HIGH)),
            int(np.sum(x < V_LOW)),
        ))
    return lines, buses


@dataclass
class DurationCurve:
    kw: np.ndarray  # signed power ordered by descending magnitude
    rating_kva: float
    hours_above_rating: float
    reverse_hours_above_rating: float
    max_feedin_kw: float
    max_drawn_kw: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": np.arange(1, len(self.kw) + 1), "kW": self.kw})


def duration_curve(transformer_kw, rating_kva: float, ts_h: float = TS_H) -> DurationCurve:
    p = np.asarray(transformer_kw, dtype=float)
    p = p[np.isfinite(p)]
    if p.size == 0:
        raise PowerFlowError("empty transformer series")
    order = np.argsort(-np.abs(p), kind="stable")
    over = np.abs(p) > rating_kva
    return DurationCurve(
        p[order], float(rating_kva),
        float(over.sum() * ts_h), float((over & (p < 0)).sum() * ts_h),
        float(max(-p.min(), 0.0)), float(max(p.max(), 0.0)),
    )


def write_line_loading(path: str | Path, stats: list[LineStats]) -> None:
    pd.DataFrame(
        {"line_id": [s.line_id for s in stats], "p95": [s.p95 for s in stats],
         "max": [s.max for s in stats], "overloaded_hours": [s.overloaded_hours for s in stats]}
    ).round(6).to_csv(path, index=False)


def write_voltage(path: str | Path, stats: list[BusStats]) -> None:
    pd.DataFrame(
        {"bus_id": [s.bus_id for s in stats], "p95_high": [s.p95_high for s in stats],
         "p95_low": [s.p95_low for s in stats], "violations_high": [s.violations_high for s in stats],
         "violations_low": [s.violations_low for s in stats]}
    ).round(6).to_csv(path, index=False)


def write_duration_curve(path: str | Path, curve: DurationCurve) -> None:
    curve.to_frame().round(6).to_csv(path, index=False)
