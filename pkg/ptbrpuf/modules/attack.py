"""
Modeling attack

This module runs one attack experiment: every configured attacker (deep
networks, optionally the polynomial SVM and LDA) is trained on every train
size and scored on a shared held-out test set. A PUF whose responses are
predicted at or above the break threshold is reported as broken.

Contains:
- Attack class for running the experiment and writing its report
- run() function as an entry point for the subcommand
"""

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import run_attack_experiment
from ptbrpuf.core.report import emit_report, write_report

__TESTLABEL__ = "Modeling attack"


class Attack:
    def __init__(self, args: object, ptjsonlib: object, helpers: object) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        cfg = self.helpers.load_config()
        ptprint(f"Target: {cfg.puf.k}-input {cfg.puf.kind}, m={cfg.puf.stages}, obfuscation={cfg.puf.obfuscation}",
                "INFO", not self.args.json, indent=4)
        out = self.helpers.output_dir(cfg)
        try:
            report = run_attack_experiment(cfg, verbose=self.args.verbose, artifacts_dir=out)
        except PufWorkbenchError as e:
            ptprint(f"Experiment aborted: {e}", "ERROR", not self.args.json, indent=4)
            return

        for cell in report.cells:
            self.helpers.report_cell("attackCell", cell)
        paths = write_report(report, out, cfg.formats)
        ptprint(f"Report written to {paths[0].parent}", "INFO", not self.args.json, indent=4)
        ptprint(emit_report(report, self.args.format), "TEXT", not self.args.json and self.args.format != "json")


def run(args, ptjsonlib, helpers, **kwargs):
    """Entry point for running the Attack subcommand"""
    Attack(args, ptjsonlib, helpers).run()
