"""
Experiment reports

A report holds one result cell per (train size, attacker) pair, or per
(stage size, layers, neurons) triple for a sweep, plus the dataset summary
and an environment stamp. It renders as JSON (lossless), a fixed-width table
or CSV.

Contains:
- Cell, ExperimentReport
- environment_stamp()
- emit_report(), report_from_json(), write_report()
"""

import csv
import io
import json
import os
import platform
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .._version import __version__
from .errors import UsageError

REPORT_SCHEMA_VERSION = 1
FORMATS = ("json", "table", "csv")
SUFFIXES = {"json": ".json", "table": ".txt", "csv": ".csv"}

CSV_COLUMNS = ("attacker", "stages", "layers", "neurons", "train_size", "accuracy", "training_time",
               "iterations_to_stop", "status", "broken", "config_hash", "error")


@dataclass
class Cell:
    attacker: str
    train_size: int
    stages: int
    layers: Optional[int] = None
    neurons: Optional[int] = None
    config_hash: str = ""
    accuracy: Optional[float] = None
    training_time: float = 0.0
    iterations_to_stop: int = 0
    status: str = "pending"
    error: str = ""
    broken: bool = False
    details: dict = field(default_factory=dict)

    def succeed(self, accuracy: float, iterations: int, details: dict, threshold: float) -> None:
        self.accuracy = float(accuracy)
        self.iterations_to_stop = int(iterations)
        self.details = {key: _plain(value) for key, value in details.items()}
        self.status = "ok"
        self.broken = self.accuracy >= threshold

    def fail(self, error: Exception) -> None:
        self.status = "failed"
        self.error = str(error)

    def to_dict(self, include_timing: bool = True) -> dict:
        data = asdict(self)
        if not include_timing:
            data.pop("training_time")
        return data


def _plain(value):
    """numpy scalars to builtin numbers so the report stays JSON-clean"""
    if isinstance(value, np.generic):
        return value.item()
    return value


def environment_stamp() -> dict:
    return {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


@dataclass
class ExperimentReport:
    kind: str
    name: str
    master_seed: int
    cells: list = field(default_factory=list)
    winners: list = field(default_factory=list)
    datasets: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self, include_timing: bool = True) -> dict:
        """include_timing=False drops wall-clock fields; what is left depends only on config and seed"""
        data = {
            "kind": self.kind,
            "name": self.name,
            "masterSeed": self.master_seed,
            "schemaVersion": self.schema_version,
            "cells": [cell.to_dict(include_timing) for cell in self.cells],
            "winners": [dict(winner) for winner in self.winners],
            "datasets": [dict(item) for item in self.datasets],
        }
        if include_timing:
            data["environment"] = dict(self.environment)
        else:
            for winner in data["winners"]:
                winner.pop("trainingTime", None)
        return data

    @property
    def broken(self) -> list:
        return [cell for cell in self.cells if cell.broken]

    @property
    def failed(self) -> list:
        return [cell for cell in self.cells if cell.status == "failed"]

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentReport) and self.to_dict() == other.to_dict()


def report_from_json(text: str) -> ExperimentReport:
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError("Not a valid report: top level is not an object")
        if data.get("schemaVersion") != REPORT_SCHEMA_VERSION:
            raise UsageError(f"Unsupported report schema version {data.get('schemaVersion')}")
        names = {item.name for item in fields(Cell)}
        return ExperimentReport(
            kind=data["kind"],
            name=data["name"],
            master_seed=data["masterSeed"],
            cells=[Cell(**{key: value for key, value in cell.items() if key in names}) for cell in data["cells"]],
            winners=data.get("winners", []),
            datasets=data.get("datasets", []),
            environment=data.get("environment", {}),
            schema_version=data["schemaVersion"],
        )
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(f"Not a valid report: {e}")


def _format_accuracy(cell: Optional[Cell]) -> str:
    if cell is None:
        return "-"
    if cell.status != "ok":
        return "FAILED"
    return f"{100 * cell.accuracy:.2f}"


def _grid(title: str, row_label: str, rows: list, columns: list, lookup) -> list[str]:
    header = [row_label] + [str(column) for column in columns]
    body = [[str(row)] + [_format_accuracy(lookup(row, column)) for column in columns] for row in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    render = lambda line: "  ".join(text.rjust(width) for text, width in zip(line, widths))
    return [title, render(header), "  ".join("-" * width for width in widths)] + [render(line) for line in body]


def _unique(values) -> list:
    return list(dict.fromkeys(values))


def _render_table(report: ExperimentReport) -> str:
    lines = [f"{report.kind.capitalize()} '{report.name}' (seed {report.master_seed}), test accuracy in %", ""]
    if report.kind == "sweep":
        for stages in _unique(cell.stages for cell in report.cells):
            cells = {(cell.layers, cell.neurons): cell for cell in report.cells if cell.stages == stages}
            lines += _grid(f"m = {stages}", "N \\ K", _unique(key[0] for key in cells),
                           _unique(key[1] for key in cells), lambda row, column: cells.get((row, column)))
            lines.append("")
        for winner in report.winners:
            lines.append(f"Best for m = {winner['stages']}: N = {winner['layers']}, K = {winner['neurons']} "
                         f"({100 * winner['accuracy']:.2f} %)")
    else:
        cells = {(cell.train_size, cell.attacker): cell for cell in report.cells}
        lines += _grid("", "CRPs", _unique(cell.train_size for cell in report.cells),
                       _unique(cell.attacker for cell in report.cells), lambda row, column: cells.get((row, column)))
        for cell in report.failed:
            lines.append(f"{cell.attacker} @ {cell.train_size}: {cell.error}")
    return "\n".join(lines).strip("\n") + "\n"


def _render_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for cell in report.cells:
        row = cell.to_dict()
        writer.writerow(["" if row[column] is None else row[column] for column in CSV_COLUMNS])
    return buffer.getvalue()


def emit_report(report: ExperimentReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "table":
        return _render_table(report)
    if fmt == "csv":
        return _render_csv(report)
    raise UsageError(f"Unknown report format '{fmt}', expected one of {', '.join(FORMATS)}")


def write_report(report: ExperimentReport, directory, formats=("json",)) -> list[Path]:
    """Writes <kind>_report.<suffix> for every format; JSON is always written. Each file is replaced atomically."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in _unique(("json", *formats)):
        text = emit_report(report, fmt)
        path = directory / f"{report.kind}_report{SUFFIXES[fmt]}"
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        written.append(path)
    return written
