"""
Report re-rendering

This module reads a JSON report written by `attack` or `sweep` and renders
it again as a table, CSV or canonical JSON.

Contains:
- Report class
- run() function as an entry point for the subcommand
"""

from pathlib import Path

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.report import emit_report, report_from_json

__TESTLABEL__ = "Report rendering"


class Report:
    def __init__(self, args: object, ptjsonlib: object, helpers: object) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        if not self.args.input:
            self.ptjsonlib.end_error("The report command needs --input <report.json>", self.args.json)
        try:
            report = report_from_json(Path(self.args.input).read_text(encoding="utf-8"))
            rendered = emit_report(report, self.args.format)
        except (PufWorkbenchError, OSError) as e:
            ptprint(f"Cannot render {self.args.input}: {e}", "ERROR", not self.args.json, indent=4)
            return

        self.helpers.add_node("experimentReport", {"kind": report.kind, "name": report.name,
                                                   "cells": len(report.cells), "broken": len(report.broken),
                                                   "failed": len(report.failed)})
        ptprint(rendered, "TEXT", not self.args.json, end="")


def run(args, ptjsonlib, helpers, **kwargs):
    """Entry point for running the Report subcommand"""
    Report(args, ptjsonlib, helpers).run()
