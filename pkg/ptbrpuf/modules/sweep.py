"""
Network scalability sweep

This module trains a grid of network shapes (hidden layers x neurons per
layer) on one fixed dataset per stage size and reports the shape with the
best accuracy, the shorter training time breaking ties.

Contains:
- Sweep class for running the grid
- run() function as an entry point for the subcommand
"""

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import run_scalability_sweep
from ptbrpuf.core.report import emit_report, write_report

__TESTLABEL__ = "Network scalability sweep"


class Sweep:
    def __init__(self, args: object, ptjsonlib: object, helpers: object, stdout_proxy: object = None) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers
        self.stdout_proxy = stdout_proxy

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        cfg = self.helpers.load_config()
        grid = len(cfg.sweep.stages) * len(cfg.sweep.layers) * len(cfg.sweep.neurons)
        ptprint(f"{grid} cells on {self.args.threads} thread(s)", "INFO", not self.args.json, indent=4)
        out = self.helpers.output_dir(cfg)
        try:
            report = run_scalability_sweep(cfg, self.args.threads, self.args.verbose, self.stdout_proxy, artifacts_dir=out)
        except PufWorkbenchError as e:
            ptprint(f"Sweep aborted: {e}", "ERROR", not self.args.json, indent=4)
            return

        for cell in report.cells:
            self.helpers.report_cell("sweepCell", cell)
        for winner in report.winners:
            ptprint(f"Best shape for m={winner['stages']}: N={winner['layers']}, K={winner['neurons']} "
                    f"({100 * winner['accuracy']:.2f} %)", "INFO", not self.args.json, indent=4)
        write_report(report, out, cfg.formats)
        ptprint(emit_report(report, self.args.format), "TEXT", not self.args.json and self.args.format != "json")


def run(args, ptjsonlib, helpers, stdout_proxy=None, **kwargs):
    """Entry point for running the Sweep subcommand"""
    Sweep(args, ptjsonlib, helpers, stdout_proxy).run()
