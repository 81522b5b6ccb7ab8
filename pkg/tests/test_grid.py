import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvgrid.demand import BuildingRecord
from lvgrid.errors import NetworkParseError, NetworkValidationError, TopologyError
from lvgrid.grid import (
    Bus, Line, Transformer, build_network, format_network, parse_network, validate_building_mapping,
)

TWO_BUS = """
# minimal feeder
[transformer]
630, 400
[buses]
T, slack
A, load, h1;h2
[lines]
T, A, 0.1, 0.3, 0.1, 200
"""


def test_parse_two_bus_per_unit():
    net = parse_network(TWO_BUS)
    z = net.line_z_pu[0]
    expected = (0.03 + 0.01j) * 630e3 / 400**2
    assert abs(z - expected) < 1e-12
    assert abs(z - (0.1181 + 0.0394j)) < 1e-4
    assert net.s_base_kva == 630 and net.v_base_v == 400
    assert net.buses[1].buildings == ("h1", "h2")


def test_cycle_is_rejected():
    text = TWO_BUS.replace("[lines]", "B, load\nC, load\n[lines]") + "A, B, 0.1, 0.3, 0.1, 200\nB, C, 0.1, 0.3, 0.1, 200\nC, A, 0.1, 0.3, 0.1, 200\n"
    with pytest.raises(TopologyError) as err:
        parse_network(text)
    assert err.value.edges == [("C", "A")]


def test_disconnected_is_rejected():
    text = TWO_BUS.replace("[lines]", "B, load\nC, load\n[lines]") + "B, C, 0.1, 0.3, 0.1, 200\n"
    with pytest.raises(TopologyError, match="unreachable"):
        parse_network(text)


def test_missing_slack():
    with pytest.raises(NetworkValidationError, match="slack"):
        parse_network(TWO_BUS.replace("T, slack", "T, load"))


def test_parse_error_has_line_number():
    bad = TWO_BUS.replace("T, A, 0.1, 0.3, 0.1, 200", "T, A, 0.1, abc, 0.1, 200")
    with pytest.raises(NetworkParseError) as err:
        parse_network(bad)
    assert err.value.line == 9


def test_zero_ampacity_rejected():
    with pytest.raises(NetworkValidationError, match="ampacity"):
        parse_network(TWO_BUS.replace("0.1, 200", "0.1, 0"))


def test_parallel_transformers_are_summed():
    text = TWO_BUS.replace("630, 400", "630, 400\n630, 400")
    assert parse_network(text).transformer.rated_kva == 1260
    assert parse_network(text, rating_kva=1000).transformer.rated_kva == 1000


def test_format_round_trip():
    net = parse_network(TWO_BUS)
    again = parse_network(format_network(net))
    assert again.buses == net.buses and again.lines == net.lines


def test_rural_like_feeder_shape():
    # 24 injection points behind one 630 kVA transformer
    buses = [Bus("T", "slack")] + [Bus(f"N{i}", "load", (f"b{i}",)) for i in range(24)]
    lines = [Line("T" if i == 0 else f"N{(i - 1) // 2}", f"N{i}", 0.05, 0.2, 0.07, 250) for i in range(24)]
    net = build_network(buses, lines, [Transformer(630, 400)])
    assert len(net.buses) == len(net.lines) + 1
    assert sorted(net.topology.order) == list(range(25))


def test_building_mapping():
    net = parse_network(TWO_BUS.replace("[lines]", "B, load\n[lines]") + "A, B, 0.1, 0.3, 0.1, 200\n")
    bs = [BuildingRecord("x", "A", "house"), BuildingRecord("y", "A", "house"), BuildingRecord("z", "B", "house")]
    m = validate_building_mapping(net, bs)
    assert sorted(len(v) for v in m.values()) == [1, 2]
    assert validate_building_mapping(net, []) == {}
    with pytest.raises(NetworkValidationError, match="B99"):
        validate_building_mapping(net, [BuildingRecord("w", "B99", "house")])


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 2000), st.floats(100, 20000))
def test_per_unit_round_trip(r, x, s_kva, v):
    net = build_network([Bus("S", "slack"), Bus("A", "load")], [Line("S", "A", 1, 0, 0, 1)], [Transformer(s_kva, v)])
    z = complex(r, x)
    back = net.to_ohm(net.to_pu(z))
    assert abs(back - z) <= 1e-12 * max(abs(z), 1e-300)


@settings(max_examples=30)
@given(st.integers(2, 30), st.randoms(use_true_random=False))
def test_random_trees_are_radial(n, rnd):
    buses = [Bus("B0", "slack")] + [Bus(f"B{i}", "load") for i in range(1, n)]
    lines = [Line(f"B{rnd.randrange(i)}", f"B{i}", 0.1, 0.2, 0.1, 100) for i in range(1, n)]
    rnd.shuffle(lines)
    net = build_network(buses, lines, [Transformer(100, 400)])
    topo = net.topology
    assert len(net.lines) == len(net.buses) - 1
    assert sorted(topo.order) == list(range(n))
    assert np.all(topo.parent[1:] < np.arange(1, n))
