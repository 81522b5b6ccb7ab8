import filecmp

import pandas as pd
import pytest

from lvgrid.cli import main
from lvgrid.kpi import KPI_COLUMNS
from lvgrid.scenario import load_config
from lvgrid.errors import ConfigError


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert main(["synth", "--out", str(d), "--buildings", "3", "--days", "7", "--seed", "3"]) == 0
    return d / "scenario.ini"


def test_validate(scenario, capsys):
    assert main(["validate", "--scenario", str(scenario)]) == 0
    assert "3 buildings" in capsys.readouterr().out


def test_run_outputs_and_determinism(scenario, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", str(scenario), "--out", str(a), "--dump-dispatch"]) == 0
    assert main(["run", "--scenario", str(scenario), "--out", str(b)]) == 0
    for name in ("kpi.csv", "buildings.csv", "line_loading.csv", "voltage.csv", "duration_curve.csv"):
        assert (a / name).exists()
    assert filecmp.cmp(a / "kpi.csv", b / "kpi.csv", shallow=False)
    kpi = pd.read_csv(a / "kpi.csv")
    assert list(kpi.columns) == KPI_COLUMNS and len(kpi) == 1
    assert len(list((a / "dispatch").glob("*.csv"))) == 3


def test_max_roof_curtailment(tmp_path):
    d = tmp_path / "sunny"
    assert main(["synth", "--out", str(d), "--buildings", "2", "--days", "150", "--clear-sky"]) == 0
    scenario = d / "scenario.ini"
    text = scenario.read_text().replace("pv_mode = optimized", "pv_mode = max-roof").replace(
        "tariff = Reference DT", "tariff = Curtailment 50")
    cfg = scenario.with_name("maxroof.ini")
    cfg.write_text(text)
    out = tmp_path / "m"
    assert main(["run", "--scenario", str(cfg), "--out", str(out)]) == 0
    row = pd.read_csv(out / "kpi.csv").iloc[0]
    b = pd.read_csv(out / "buildings.csv")
    assert row["curtailed_pct"] > 0
    assert row["max_feedin_kw"] <= 0.5 * b["pv_kw"].sum() + 1e-6


def test_config_errors(scenario, tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(scenario.read_text().replace("tariff = Reference DT", "tariff = nope"))
    assert main(["validate", "--scenario", str(bad)]) == 2
    assert capsys.readouterr().err.startswith("error: [")
    bad.write_text(scenario.read_text() + "\n[scenario_extra]\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    assert main(["validate", "--scenario", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", "--scenario", str(scenario), "--threads", "0"]) == 2
