import csv
import io
import json

import pytest

from ptbrpuf.core.errors import UsageError
from ptbrpuf.core.report import (
    CSV_COLUMNS, Cell, ExperimentReport, emit_report, environment_stamp, report_from_json, write_report,
)


def ok_cell(attacker, train_size, accuracy, **kwargs):
    cell = Cell(attacker, train_size, 64, config_hash="abc", **kwargs)
    cell.succeed(accuracy, 1000, {"stopReason": "plateau"}, threshold=0.9)
    cell.training_time = 1.5
    return cell


@pytest.fixture
def attack_report():
    failed = Cell("svm", 20000, 64, config_hash="def")
    failed.fail(RuntimeError("cap exceeded"))
    cells = [ok_cell("dl", 5000, 0.81), ok_cell("svm", 5000, 0.52), ok_cell("dl", 20000, 0.97), failed]
    return ExperimentReport("attack", "desk", 7, cells, datasets=[{"records": 40000}], environment=environment_stamp())


@pytest.fixture
def sweep_report():
    cells = [ok_cell(f"N={n},K={k}", 1000, acc, layers=n, neurons=k)
             for (n, k), acc in {(1, 64): 0.6, (1, 128): 0.62, (4, 64): 0.95, (4, 128): 0.97}.items()]
    winners = [{"stages": 64, "layers": 4, "neurons": 128, "accuracy": 0.97, "trainingTime": 1.5}]
    return ExperimentReport("sweep", "grid", 3, cells, winners=winners)


def test_cell_marks_broken_attacks():
    assert ok_cell("dl", 100, 0.95).broken
    assert not ok_cell("dl", 100, 0.85).broken


def test_json_is_canonical(attack_report):
    text = emit_report(attack_report, "json")
    assert text.endswith("\n")
    assert emit_report(report_from_json(text), "json") == text
    assert report_from_json(text) == attack_report


def test_body_without_timing(attack_report, sweep_report):
    body = attack_report.to_dict(include_timing=False)
    assert "environment" not in body
    assert all("training_time" not in cell for cell in body["cells"])
    assert "trainingTime" not in sweep_report.to_dict(include_timing=False)["winners"][0]


def test_table_has_a_row_per_train_size_and_a_column_per_attacker(attack_report):
    lines = emit_report(attack_report, "table").splitlines()
    header = next(line for line in lines if line.strip().startswith("CRPs"))
    assert header.split() == ["CRPs", "dl", "svm"]
    rows = [line.split() for line in lines if line.strip().split(" ")[0] in ("5000", "20000")]
    assert rows == [["5000", "81.00", "52.00"], ["20000", "97.00", "FAILED"]]
    assert any("cap exceeded" in line for line in lines)


def test_sweep_table_grid_and_winner(sweep_report):
    text = emit_report(sweep_report, "table")
    assert "N \\ K" in text
    assert "Best for m = 64: N = 4, K = 128 (97.00 %)" in text


def test_csv_has_one_line_per_cell(attack_report):
    text = emit_report(attack_report, "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert len(text.splitlines()) == len(attack_report.cells) + 1
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[-1][CSV_COLUMNS.index("status")] == "failed"


def test_unknown_format(attack_report):
    with pytest.raises(UsageError):
        emit_report(attack_report, "xml")


@pytest.mark.parametrize("text", ["{", "[]", json.dumps({"schemaVersion": 99}), json.dumps({"schemaVersion": 1})])
def test_invalid_report_json(text):
    with pytest.raises(UsageError):
        report_from_json(text)


def test_write_report_always_includes_json(attack_report, tmp_path):
    written = write_report(attack_report, tmp_path / "out", formats=("csv",))
    assert [path.name for path in written] == ["attack_report.json", "attack_report.csv"]
    assert not list((tmp_path / "out").glob("*.tmp"))
    assert report_from_json(written[0].read_text()) == attack_report
