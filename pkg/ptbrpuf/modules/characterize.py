"""
PUF characterization

This module manufactures every chip of the experiment, applies one shared
LFSR challenge list to all of them and reports noise, bias, inter-chip
distance, bit influence and convergence.

Contains:
- Characterize class running the multi-chip protocol
- run() function as an entry point for the subcommand
"""

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import build_chip
from ptbrpuf.core.lfsr import GaloisLfsr, lfsr_generate
from ptbrpuf.core.metrics import characterize_chips, render_metrics_table

__TESTLABEL__ = "PUF characterization"

IDEAL_BIAS = (0.4, 0.6)


class Characterize:
    def __init__(self, args: object, ptjsonlib: object, helpers: object) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        cfg = self.helpers.load_config()
        try:
            chips = [build_chip(cfg, index, verbose=self.args.verbose) for index in range(cfg.puf.chips)]
            # every chip sees the challenges of the chip under attack; theta is that chip's too
            reference = chips[cfg.puf.chip]
            challenges = lfsr_generate(GaloisLfsr.from_spec(reference.lfsr), cfg.dataset.test_size, reference.puf.m)
            report = characterize_chips([chip.puf for chip in chips], challenges, cfg.dataset.iterations,
                                        [chip.noise for chip in chips], reference.theta, reference.obfuscation)
        except PufWorkbenchError as e:
            ptprint(f"Characterization failed: {e}", "ERROR", not self.args.json, indent=4)
            return

        label = f"{cfg.puf.k}-XOR {cfg.puf.kind.split('_')[-1].upper()}" if cfg.puf.kind.startswith("xor") else cfg.puf.kind.upper()
        table = render_metrics_table(report, label)
        out = self.helpers.output_dir(cfg)
        self.helpers.write_json(out / "metrics.json", report.to_dict())
        (out / "metrics.txt").write_text(table + "\n", encoding="utf-8")
        self.helpers.add_node("pufMetrics", {key: value for key, value in report.to_dict().items() if key != "influence"})

        ptprint(table, "TEXT", not self.args.json, indent=4)
        for index, value in enumerate(report.chip_bias):
            bullet = "OK" if IDEAL_BIAS[0] <= value <= IDEAL_BIAS[1] else "WARNING"
            ptprint(f"Chip {index} bias {100 * value:.1f} %", bullet, self.args.verbose, indent=4)


def run(args, ptjsonlib, helpers, **kwargs):
    """Entry point for running the Characterize subcommand"""
    Characterize(args, ptjsonlib, helpers).run()
