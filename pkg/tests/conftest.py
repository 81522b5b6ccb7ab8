import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lvgrid.grid import Bus, Line, Transformer, build_network  # noqa: E402


@pytest.fixture
def two_bus():
    """Slack plus one load bus; z = 0.01 + 0.01j p.u. on a 100 kVA / 400 V base."""
    zb = 400.0**2 / 100e3
    return build_network(
        [Bus("S", "slack"), Bus("A", "load", ("b1",))],
        [Line("S", "A", 1.0, 0.01 * zb, 0.01 * zb, 200.0)],
        [Transformer(100.0, 400.0)],
    )


@pytest.fixture
def feeder():
    """Ten-bus random radial network."""
    rng = np.random.default_rng(7)
    buses = [Bus("B0", "slack")] + [Bus(f"B{i}", "load") for i in range(1, 10)]
    lines = [
        Line(f"B{rng.integers(0, i)}", f"B{i}", float(rng.uniform(0.02, 0.2)), 0.3, 0.08, 200.0)
        for i in range(1, 10)
    ]
    return build_network(buses, lines, [Transformer(250.0, 400.0)])


@pytest.fixture
def june_week():
    return pd.date_range("2025-06-02", periods=7 * 96, freq="15min")
