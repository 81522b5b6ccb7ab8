"""Radial low-voltage network model and its text file format.

File layout (UTF-8, ``#`` starts a comment line, rows are comma separated)::

    [transformer]
    # rated_kva, lv_nominal_v
    630, 400
    [buses]
    # id, kind, attached buildings (';'-separated, optional)
    T, slack,
    B1, load, H1;H2
    [lines]
    # from_bus, to_bus, length_km, r_ohm_per_km, x_ohm_per_km, ampacity_a
    T, B1, 0.1, 0.3, 0.1, 200

Several ``[transformer]`` rows are aggregated into one slack with the summed
rating; their nominal voltages must agree.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import NetworkParseError, NetworkValidationError, TopologyError

SQRT3 = math.sqrt(3.0)
_SECTIONS = ("transformer", "buses", "lines")


@dataclass(frozen=True)
class Bus:
    id: str
    kind: str  # "slack" | "load"
    buildings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    length_km: float
    r_ohm_per_km: float
    x_ohm_per_km: float
    ampacity_a: float

    @property
    def id(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"

    @property
    def z_ohm(self) -> complex:
        return complex(self.r_ohm_per_km, self.x_ohm_per_km) * self.length_km


@dataclass(frozen=True)
class Transformer:
    rated_kva: float
    lv_nominal_v: float


@dataclass(frozen=True)
class Topology:
    """Slack-rooted tree in breadth-first order.

    ``order[0]`` is the slack. For every other position ``k`` the bus
    ``order[k]`` is fed by ``parent[k]`` (a position) through line ``line[k]``.
    """

    order: np.ndarray
    parent: np.ndarray
    line: np.ndarray
    depth: np.ndarray


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformer: Transformer
    s_base_kva: float
    v_base_v: float
    name: str = field(default="network", compare=False)

    @property
    def z_base_ohm(self) -> float:
        return self.v_base_v**2 / (self.s_base_kva * 1e3)

    @property
    def i_base_a(self) -> float:
        return self.s_base_kva * 1e3 / (SQRT3 * self.v_base_v)

    def to_pu(self, z_ohm: complex) -> complex:
        return z_ohm * (self.s_base_kva * 1e3) / self.v_base_v**2

    def to_ohm(self, z_pu: complex) -> complex:
        return z_pu * self.v_base_v**2 / (self.s_base_kva * 1e3)

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.kind == "slack")

    @cached_property
    def line_z_pu(self) -> np.ndarray:
        return np.array([self.to_pu(ln.z_ohm) for ln in self.lines], dtype=complex)

    @cached_property
    def line_ampacity_pu(self) -> np.ndarray:
        return np.array([ln.ampacity_a for ln in self.lines]) / self.i_base_a

    @cached_property
    def topology(self) -> Topology:
        return _build_topology(self)

    @property
    def load_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.kind != "slack"]


def _build_topology(net: NetworkModel) -> Topology:
    idx = net.bus_index
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(net.buses))}
    for k, ln in enumerate(net.lines):
        a, b = idx[ln.from_bus], idx[ln.to_bus]
        adj[a].append((b, k))
        adj[b].append((a, k))
    root = idx[net.slack.id]
    order, parent, line, depth = [root], [-1], [-1], [0]
    pos = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, k in adj[u]:
            if v not in pos:
                pos[v] = len(order)
                order.append(v)
                parent.append(pos[u])
                line.append(k)
                depth.append(depth[pos[u]] + 1)
                queue.append(v)
    return Topology(np.array(order), np.array(parent), np.array(line), np.array(depth))


def _check_topology(buses: Iterable[Bus], lines: Iterable[Line]) -> None:
    buses, lines = list(buses), list(lines)
    ids = [b.id for b in buses]
    slacks = [b.id for b in buses if b.kind == "slack"]
    if not slacks:
        raise NetworkValidationError("no slack bus (transformer LV busbar) declared")
    if len(slacks) > 1:
        raise NetworkValidationError(f"more than one slack bus: {', '.join(slacks)}")

    # union-find flags every edge that closes a cycle
    parent = {i: i for i in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    cycle_edges = []
    for ln in lines:
        ra, rb = find(ln.from_bus), find(ln.to_bus)
        if ra == rb:
            cycle_edges.append((ln.from_bus, ln.to_bus))
        else:
            parent[ra] = rb
    if cycle_edges:
        raise TopologyError("network is not radial, edges closing a cycle", cycle_edges)
    root = find(slacks[0])
    unreachable = [i for i in ids if find(i) != root]
    if unreachable:
        stray = [(ln.from_bus, ln.to_bus) for ln in lines if find(ln.from_bus) != root]
        raise TopologyError(
            f"network is disconnected, unreachable buses {', '.join(unreachable)}", stray
        )
    if len(lines) != len(buses) - 1:  # pragma: no cover - implied by the checks above
        raise TopologyError("edge count differs from bus count - 1")


def build_network(
    buses: Iterable[Bus],
    lines: Iterable[Line],
    transformers: Iterable[Transformer],
    name: str = "network",
    rating_kva: float | None = None,
) -> NetworkModel:
    """Validate components and assemble a :class:`NetworkModel`.

    ``rating_kva`` overrides the summed nameplate rating (a "virtual"
    transformer capacity).
    """
    buses, lines, transformers = tuple(buses), tuple(lines), tuple(transformers)
    if not transformers:
        raise NetworkValidationError("no transformer declared")
    volts = {t.lv_nominal_v for t in transformers}
    if len(volts) != 1:
        raise NetworkValidationError(f"transformers disagree on LV nominal voltage: {sorted(volts)}")
    for t in transformers:
        if not t.rated_kva > 0 or not t.lv_nominal_v > 0:
            raise NetworkValidationError("transformer rating and voltage must be positive")
    seen = set()
    for b in buses:
        if b.id in seen:
            raise NetworkValidationError(f"duplicate bus id {b.id!r}")
        if b.kind not in ("slack", "load"):
            raise NetworkValidationError(f"bus {b.id!r}: kind must be 'slack' or 'load', got {b.kind!r}")
        seen.add(b.id)
    for ln in lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in seen:
                raise NetworkValidationError(f"line {ln.id} references unknown bus {end!r}")
        if not ln.ampacity_a > 0:
            raise NetworkValidationError(f"line {ln.id}: ampacity must be > 0")
        if ln.r_ohm_per_km < 0 or ln.x_ohm_per_km < 0 or ln.length_km < 0:
            raise NetworkValidationError(f"line {ln.id}: length and impedance must be nonnegative")
    _check_topology(buses, lines)
    rating = sum(t.rated_kva for t in transformers) if rating_kva is None else float(rating_kva)
    agg = Transformer(rating, volts.pop())
    return NetworkModel(buses, lines, agg, s_base_kva=agg.rated_kva, v_base_v=agg.lv_nominal_v, name=name)


def _floats(cells, line_no, what):
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise NetworkParseError(f"{what}: {exc}", line_no) from None


def parse_network(text: str, name: str = "network", rating_kva: float | None = None) -> NetworkModel:
    """Parse the network file format into a validated :class:`NetworkModel`."""
    section = None
    buses: list[Bus] = []
    lines: list[Line] = []
    transformers: list[Transformer] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        row = raw.strip()
        if not row or row.startswith("#"):
            continue
        if row.startswith("["):
            if not row.endswith("]") or row[1:-1].strip().lower() not in _SECTIONS:
                raise NetworkParseError(f"unknown section header {row!r}", no)
            section = row[1:-1].strip().lower()
            continue
        cells = [c.strip() for c in row.split(",")]
        if section is None:
            raise NetworkParseError("row outside of any section", no)
        if section == "transformer":
            if len(cells) != 2:
                raise NetworkParseError("transformer rows need: rated_kva, lv_nominal_v", no)
            transformers.append(Transformer(*_floats(cells, no, "transformer")))
        elif section == "buses":
            if len(cells) not in (2, 3) or not cells[0]:
                raise NetworkParseError("bus rows need: id, kind[, buildings]", no)
            attached = ()
            if len(cells) == 3 and cells[2]:
                attached = tuple(s.strip() for s in cells[2].replace(" ", ";").split(";") if s.strip())
            buses.append(Bus(cells[0], cells[1].lower(), attached))
        else:
            if len(cells) != 6:
                raise NetworkParseError(
                    "line rows need: from_bus, to_bus, length_km, r_ohm_per_km, x_ohm_per_km, ampacity_a", no
                )
            nums = _floats(cells[2:], no, "line")
            lines.append(Line(cells[0], cells[1], *nums))
    for sec, items in (("transformer", transformers), ("buses", buses)):
        if not items:
            raise NetworkParseError(f"missing or empty [{sec}] section")
    return build_network(buses, lines, transformers, name=name, rating_kva=rating_kva)


def load_network(path: str | Path, rating_kva: float | None = None) -> NetworkModel:
    path = Path(path)
    return parse_network(path.read_text(encoding="utf-8"), name=path.stem, rating_kva=rating_kva)


def format_network(net: NetworkModel) -> str:
    out = ["[transformer]", f"{net.transformer.rated_kva:g}, {net.transformer.lv_nominal_v:g}", "[buses]"]
    for b in net.buses:
        out.append(f"{b.id}, {b.kind}, {';'.join(b.buildings)}")
    out.append("[lines]")
    for ln in net.lines:
        out.append(
            f"{ln.from_bus}, {ln.to_bus}, {ln.length_km:.6g}, {ln.r_ohm_per_km:.6g}, "
            f"{ln.x_ohm_per_km:.6g}, {ln.ampacity_a:.6g}"
        )
    return "\n".join(out) + "\n"


def validate_building_mapping(net: NetworkModel, buildings: Iterable) -> dict[str, list[str]]:
    """Map bus id to the ids of the buildings connected there.

    Buildings are any objects with ``id`` and ``bus`` attributes.
    """
    mapping: dict[str, list[str]] = {}
    known = net.bus_index
    for b in sorted(buildings, key=lambda r: r.id):
        if b.bus not in known:
            raise NetworkValidationError(f"building {b.id!r} references unknown bus {b.bus!r}")
        mapping.setdefault(b.bus, []).append(b.id)
    return mapping


def attached_bus(net: NetworkModel) -> Mapping[str, str]:
    """Building id -> bus id as declared in the network file."""
    return {bid: bus.id for bus in net.buses for bid in bus.buildings}
