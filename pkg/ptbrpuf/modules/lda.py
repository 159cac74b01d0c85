"""
LDA separability analysis

This module projects a CRP dataset onto its linear discriminant and reports
how strongly the two response classes overlap. The dataset is read from
--input or, without it, collected from the chip under attack.

Contains:
- LdaAnalysis class
- run() function as an entry point for the subcommand
"""

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.crp import read_dataset
from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import build_chip, build_dataset
from ptbrpuf.core.lda import fit_lda, lda_accuracy

__TESTLABEL__ = "LDA separability analysis"

# overlap above this leaves no linear attack worth running
HEAVY_OVERLAP = 0.5


class LdaAnalysis:
    def __init__(self, args: object, ptjsonlib: object, helpers: object) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        cfg = self.helpers.load_config()
        try:
            if self.args.input:
                dataset = read_dataset(self.args.input)
            else:
                chip = build_chip(cfg, cfg.puf.chip, verbose=self.args.verbose)
                dataset = build_dataset(cfg, chip, cfg.dataset.test_size)
            result = fit_lda(dataset, cfg.lda_bins)
            linear_accuracy = lda_accuracy(result, dataset)
        except (PufWorkbenchError, OSError) as e:
            ptprint(f"LDA failed: {e}", "ERROR", not self.args.json, indent=4)
            return

        properties = {**result.to_dict(), "records": len(dataset), "linearAccuracy": linear_accuracy}
        self.helpers.write_json(self.helpers.output_dir(cfg) / "lda.json", properties)
        self.helpers.add_node("ldaAnalysis", {key: value for key, value in properties.items()
                                              if key not in ("binEdges", "histogram0", "histogram1")})

        bullet = "OK" if result.overlap_coefficient > HEAVY_OVERLAP else "VULN"
        ptprint(f"Class overlap {100 * result.overlap_coefficient:.1f} % on {len(dataset)} CRPs",
                bullet, not self.args.json, indent=4)
        ptprint(f"d' = {result.dprime:.3f}, accuracy of the discriminant itself {100 * linear_accuracy:.2f} %",
                "INFO", not self.args.json, indent=4)


def run(args, ptjsonlib, helpers, **kwargs):
    """Entry point for running the LDA subcommand"""
    LdaAnalysis(args, ptjsonlib, helpers).run()
