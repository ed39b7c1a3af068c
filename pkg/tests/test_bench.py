import csv
import io
import json

import pytest

from chartbench.bench import (Cell, ExperimentError, PaperValue, ReportTable, default_config, emit,
                              list_experiments, load_paper_values, load_report, paper_tables, run_experiment)
from chartbench.bench.report import CSV_COLUMNS

FAST = dict(reps=2000, profile_reps=2000, calibration_reps=20_000, calibration_tolerance=0.03)


@pytest.fixture(scope="module")
def table1():
    return run_experiment(default_config("table1", **FAST))[0]


def test_table1_shape_and_emit(table1, tmp_path):
    assert table1.rows == ["k", "h"] and len(table1.cols) == 5
    csv_path, json_path = emit(table1, tmp_path, "csv")
    rows = list(csv.DictReader(io.StringIO(csv_path.read_text())))
    assert len(rows) == 10
    assert set(CSV_COLUMNS) <= set(rows[0])
    assert {r["method"] for r in rows if r["quantity"] == "k"} == {"ClosedForm"}
    meta = json.loads(json_path.read_text())["metadata"]
    assert {"master_seed", "version", "elapsed_seconds", "reps"} <= set(meta)


def test_json_roundtrip(table1, tmp_path):
    emit(table1, tmp_path, "json")
    again = load_report(tmp_path / "table1.json")
    assert again == table1
    assert again.to_csv() == table1.to_csv()


def test_deterministic_given_seed():
    cfg = default_config("table5", rows=("2of3 EWMA lambda=0.1 L_S=2.158",), **FAST)
    a = run_experiment(cfg)[0].to_csv()
    b = run_experiment(cfg)[0].to_csv()
    assert a == b


def test_profile_is_long_format_over_tau():
    cfg = default_config("fig_dtau05MEC", rows=("CUSUM k=0.5",), **FAST)
    t = run_experiment(cfg)[0]
    assert t.cols == [str(i) for i in range(1, 101)]
    assert t.rows == ["CUSUM k=0.5"]
    lines = t.to_csv().strip().splitlines()
    assert lines[0].split(",")[:3] == ["chart", "tau", "estimate"]
    assert len(lines) == 101


@pytest.mark.parametrize("field,value", [("deltas", ()), ("taus", ()), ("reps", 10)])
def test_invalid_configs_rejected(field, value):
    cfg = default_config("table3", **FAST)
    setattr(cfg, field, value)
    with pytest.raises(ValueError):
        run_experiment(cfg)


def test_unknown_experiment():
    with pytest.raises(ValueError):
        default_config("table99")


def test_every_experiment_is_listed_with_an_anchor():
    ids = dict(list_experiments())
    for eid in ("table1", "table3", "table_dpm_zARL", "fig_dtau05MEC", "fig_madma_optim", "fig_dpm_CED"):
        assert ids[eid]


def test_reference_dataset_is_shipped():
    assert "table_dpm_zARL" in paper_tables()
    ref = load_paper_values("table_dpm_zARL")
    assert ref[("PM p=0.35 L_P=6.415", "0.25")].value == 46.80
    assert ref[("PM p=0.35 L_P=6.415", "0.25")].half_unit == pytest.approx(0.005)


def test_paper_values_are_attached(table1):
    assert table1.get("k", "0.25").paper_value == "0.1890"


def test_stochastic_cell_without_stderr_is_invalid():
    t = ReportTable("x", "x", "r", "c", [], [])
    t.set("a", "b", Cell(1.0, None, 10, "MonteCarlo"))
    with pytest.raises(ValueError):
        t.validate()


def test_censored_cell_fails_loudly():
    t = ReportTable("x", "x", "r", "c", [], [])
    t.set("a", "b", Cell(1.0, 0.1, 10, "MonteCarlo", censored=3))
    with pytest.raises(ValueError, match="censored"):
        t.validate()


def test_unreachable_calibration_is_an_experiment_error():
    cfg = default_config("table2_alstar", target_arl=5000.0, rows=("2of2 WL=3.44",), **FAST)
    with pytest.raises(ExperimentError):
        run_experiment(cfg)


def test_paper_value_precision():
    assert PaperValue("4.0133").half_unit == pytest.approx(5e-5)
    assert PaperValue("17.4").half_unit == pytest.approx(0.05)
