"""
Helpers module for shared functionality used across subcommand modules.
"""

import json
import os
from pathlib import Path

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import ExperimentConfig, load_experiment_config, parse_experiment_config
from ptbrpuf.core.report import Cell


class Helpers:
    def __init__(self, args: object, ptjsonlib: object):
        """Helpers provides utility methods"""
        self.args = args
        self.ptjsonlib = ptjsonlib

    def print_header(self, test_label):
        ptprint(f"Running: {test_label}", "TITLE", not self.args.json, colortext=True)

    def load_config(self) -> ExperimentConfig:
        """
        Reads the experiment config named by --config, applying the --seed,
        --out and --full-grid overrides. Without --config the built-in
        defaults are used. A bad config ends the run with an error.
        """
        try:
            if self.args.config:
                return load_experiment_config(self.args.config, self.args.seed, self.args.out, self.args.full_grid)
            return parse_experiment_config("", self.args.seed, self.args.out, self.args.full_grid)
        except PufWorkbenchError as e:
            self.ptjsonlib.end_error(f"Cannot load config: {e}", self.args.json)

    def output_dir(self, cfg: ExperimentConfig) -> Path:
        path = Path(cfg.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def add_node(self, node_type: str, properties: dict) -> str:
        """Adds a result node to the JSON output and returns its key"""
        node = self.ptjsonlib.create_node_object(node_type, properties=properties)
        self.ptjsonlib.add_node(node)
        return node["key"]

    def check_node(self, node_type: str) -> str:
        """
        Goes through all result nodes and returns the key of the first node of the type.

        :param str node_type: Type of node to look for
        :return: Key of @node_type node. Empty string otherwise
        """
        for node in self.ptjsonlib.json_object["results"]["nodes"]:
            if node["type"] == node_type:
                return node["key"]
        return ""

    def report_cell(self, node_type: str, cell: Cell, indent: int = 4) -> None:
        """Prints one result cell and records it; a broken PUF is also recorded as a vulnerability"""
        self.add_node(node_type, {key: value for key, value in cell.to_dict().items() if value is not None})
        if cell.status != "ok":
            ptprint(f"{cell.attacker} @ {cell.train_size} CRPs failed: {cell.error}", "ERROR", not self.args.json, indent=indent)
            return
        text = f"{cell.attacker} @ {cell.train_size} CRPs (m={cell.stages}): accuracy {100 * cell.accuracy:.2f} %"
        if cell.broken:
            ptprint(text, "VULN", not self.args.json, indent=indent)
            self.ptjsonlib.add_vulnerability(f"PTV-PUF-MODELING-{_vulnerability_suffix(cell)}")
        else:
            ptprint(text, "OK", not self.args.json, indent=indent)
        ptprint(f"Training time {cell.training_time:.1f} s, {cell.iterations_to_stop} iterations",
                "ADDITIONS", self.args.verbose, indent=indent + 4, colortext=True)

    def write_json(self, path, data: dict) -> Path:
        """Writes sorted JSON through a temporary file so readers never see a partial file"""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path


def _vulnerability_suffix(cell: Cell) -> str:
    if cell.layers is not None and cell.attacker.startswith("N="):
        return "DL"
    return "".join(char if char.isalnum() else "-" for char in cell.attacker.upper())
