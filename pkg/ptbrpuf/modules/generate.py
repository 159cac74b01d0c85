"""
PUF instance and CRP generation

This module manufactures the simulated chips of an experiment and collects
a CRP dataset from each of them through the LFSR challenge stream.

Contains:
- Generate class writing instance, obfuscation and dataset files
- run() function as an entry point for the subcommand
"""

from ptlibs.ptprinthelper import ptprint

from ptbrpuf.core.crp import BINARY_SUFFIX, write_dataset
from ptbrpuf.core.errors import PufWorkbenchError
from ptbrpuf.core.experiment import build_chip, build_dataset
from ptbrpuf.core.obfuscation import save_config
from ptbrpuf.core.puf import instance_to_dict

__TESTLABEL__ = "PUF instance and CRP generation"


class Generate:
    """Writes chip<i>.json, chip<i>_crps.csv (or .crpd with -b) and obfuscation.json"""

    def __init__(self, args: object, ptjsonlib: object, helpers: object) -> None:
        self.args = args
        self.ptjsonlib = ptjsonlib
        self.helpers = helpers

        self.helpers.print_header(__TESTLABEL__)

    def run(self) -> None:
        cfg = self.helpers.load_config()
        out = self.helpers.output_dir(cfg)
        needed = max(0, max(cfg.dataset.train_sizes)) + cfg.dataset.test_size
        suffix = BINARY_SUFFIX if self.args.binary else ".csv"

        for index in range(cfg.puf.chips):
            try:
                chip = build_chip(cfg, index, verbose=self.args.verbose)
                dataset = build_dataset(cfg, chip, needed)
            except PufWorkbenchError as e:
                ptprint(f"Chip {index}: {e}", "ERROR", not self.args.json, indent=4)
                continue

            instance = {**instance_to_dict(chip.puf), "theta": chip.theta, "sigma": chip.noise.sigma,
                        "chipSeed": chip.seed}
            instance_path = self.helpers.write_json(out / f"chip{index}.json", instance)
            dataset_path = out / f"chip{index}_crps{suffix}"
            write_dataset(dataset, dataset_path)

            self.helpers.add_node("pufInstance", {"chip": index, "kind": chip.puf.kind, "stages": chip.puf.m,
                                                  "theta": chip.theta, "sigma": chip.noise.sigma,
                                                  "file": str(instance_path)})
            self.helpers.add_node("crpDataset", {"chip": index, "records": len(dataset), "file": str(dataset_path),
                                                 "obfuscation": dataset.meta.obfuscation})
            ptprint(f"Chip {index}: {len(dataset)} converged CRPs -> {dataset_path}", "INFO", not self.args.json, indent=4)

            if index == 0 and chip.obfuscation is not None:
                path = out / "obfuscation.json"
                save_config(chip.obfuscation, path)
                ptprint(f"Obfuscation front end ({chip.obfuscation.kind}) -> {path}", "INFO", not self.args.json, indent=4)


def run(args, ptjsonlib, helpers, **kwargs):
    """Entry point for running the Generate subcommand"""
    Generate(args, ptjsonlib, helpers).run()
