#!/usr/bin/python3
"""
Copyright (c) 2025 Penterep Security s.r.o.

ptbrpuf is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

ptbrpuf is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with ptbrpuf.  If not, see <https://www.gnu.org/licenses/>.
"""

import argparse
import importlib.util
import os
import sys
import threading

from types import ModuleType

from ptlibs import ptjsonlib
from ptlibs.ptprinthelper import ptprint, print_banner, help_print

from ptbrpuf._version import __version__
from ptbrpuf.core.report import FORMATS
from ptbrpuf.helpers._thread_local_stdout import ThreadLocalStdout
from ptbrpuf.helpers.helpers import Helpers

SCRIPTNAME = "ptbrpuf"


class PtBrPuf:
    def __init__(self, args):
        self.ptjsonlib = ptjsonlib.PtJsonLib()
        self._lock     = threading.Lock()
        self.args      = args
        self.helpers   = Helpers(args=self.args, ptjsonlib=self.ptjsonlib)

        # sweep cells on worker threads print through this proxy
        self.thread_local_stdout = ThreadLocalStdout(sys.stdout)

    def run(self) -> None:
        """Main method"""
        if self.args.command not in _get_all_available_modules():
            self.ptjsonlib.end_error(f"Unknown command '{self.args.command}'", self.args.json)

        self.thread_local_stdout.activate()
        try:
            self.run_single_module(self.args.command)
        finally:
            self.thread_local_stdout.deactivate()

        self.ptjsonlib.set_status("finished")
        ptprint(self.ptjsonlib.get_result_json(), "", self.args.json)

    def run_single_module(self, module_name: str) -> None:
        """
        Loads the subcommand module from the "modules" directory and executes its `run()` function.

        Errors the module does not handle itself are reported here so the JSON
        output is still produced.
        """
        try:
            with self._lock:
                module = _import_module_from_path(module_name)

            if hasattr(module, "run") and callable(module.run):
                module.run(
                    args=self.args,
                    ptjsonlib=self.ptjsonlib,
                    helpers=self.helpers,
                    stdout_proxy=self.thread_local_stdout,
                )
            else:
                ptprint(f"Module '{module_name}' does not have 'run' function", "WARNING", not self.args.json)

        except FileNotFoundError:
            ptprint(f"Module '{module_name}' not found", "ERROR", not self.args.json)
        except Exception as e:
            ptprint(f"Error running module '{module_name}': {e}", "ERROR", not self.args.json)


def _import_module_from_path(module_name: str) -> ModuleType:
    """
    Imports a subcommand module from the package's "modules" directory.

    Args:
        module_name (str): File name of the module without the `.py` extension.

    Raises:
        ImportError: If the module cannot be found or loaded.
    """
    module_path = os.path.join(os.path.dirname(__file__), "modules", f"{module_name}.py")

    qualified = f"ptbrpuf.modules.{module_name}"
    spec = importlib.util.spec_from_file_location(qualified, module_path)
    if spec is None:
        raise ImportError(f"Cannot find spec for {module_name} at {module_path}")
    module = importlib.util.module_from_spec(spec)
    sys.modules[qualified] = module
    spec.loader.exec_module(module)
    return module


def _get_all_available_modules() -> list:
    """Subcommand names: every .py file in 'modules' not starting with an underscore"""
    modules_folder = os.path.join(os.path.dirname(__file__), "modules")
    return [
        f.rsplit(".py", 1)[0]
        for f in sorted(os.listdir(modules_folder))
        if f.endswith(".py") and not f.startswith("_")
    ]


def get_help():
    """
    Generate structured help content for the CLI tool.

    The list of commands is built at runtime from the 'modules' directory,
    each described by the module's '__TESTLABEL__'.
    """
    def _get_available_modules_help() -> list:
        rows = []
        for module in _get_all_available_modules():
            mod = _import_module_from_path(module)
            label = getattr(mod, "__TESTLABEL__", f"{module} command")
            rows.append(["", "", f" {module}", label])
        return rows

    return [
        {"description": ["Bistable ring PUF simulation and machine-learning modeling workbench"]},
        {"usage": ["ptbrpuf <command> <options>"]},
        {"usage_example": [
            "ptbrpuf generate -c configs/desk.ini",
            "ptbrpuf attack -c configs/desk.ini -s 7 -o out/seed7",
            "ptbrpuf sweep -c configs/sweep.ini -t 4",
            "ptbrpuf report -i out/attack_report.json -f csv",
        ]},
        {"options": [
            ["",    "<command>",    "",             "Command to run:"],
            *_get_available_modules_help(),
            ["", "", "", ""],
            ["-c",  "--config",     "<path>",       "Experiment config file (INI)"],
            ["-s",  "--seed",       "<u64>",        "Master seed (overrides [experiment] seed)"],
            ["-o",  "--out",        "<dir>",        "Output directory (overrides [output] directory)"],
            ["-f",  "--format",     "<format>",     "Report rendering: json, table, csv (default table)"],
            ["-i",  "--input",      "<path>",       "Report or dataset file to re-render or analyse"],
            ["-b",  "--binary",     "",             "Write CRP datasets in the packed binary format"],
            ["-fg", "--full-grid",  "",             "Sweep the full 12 x 2048 network grid"],
            ["-t",  "--threads",    "<threads>",    "Set thread count for sweep cells (default 1)"],
            ["-vv", "--verbose",    "",             "Enable verbose mode"],
            ["-v",  "--version",    "",             "Show script version and exit"],
            ["-h",  "--help",       "",             "Show this help message and exit"],
            ["-j",  "--json",       "",             "Output in JSON format"],
        ]
        }]


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def parse_args(argv=None) -> argparse.Namespace:
    argv = sys.argv[1:] if argv is None else argv
    parser = argparse.ArgumentParser(add_help=False, description=f"{SCRIPTNAME} <command> <options>")
    parser.add_argument("command",                 type=str.lower)
    parser.add_argument("-c",  "--config",         type=str)
    parser.add_argument("-s",  "--seed",           type=_seed)
    parser.add_argument("-o",  "--out",            type=str)
    parser.add_argument("-f",  "--format",         type=str.lower, choices=FORMATS, default="table")
    parser.add_argument("-i",  "--input",          type=str)
    parser.add_argument("-b",  "--binary",         action="store_true")
    parser.add_argument("-fg", "--full-grid",      action="store_true")
    parser.add_argument("-t",  "--threads",        type=int, default=1)
    parser.add_argument("-vv", "--verbose",        action="store_true")
    parser.add_argument("-j",  "--json",           action="store_true")
    parser.add_argument("-v",  "--version",        action="version", version=f"{SCRIPTNAME} {__version__}")

    if len(argv) == 0 or "-h" in argv or "--help" in argv:
        ptprint(help_print(get_help(), SCRIPTNAME, __version__))
        sys.exit(0)

    args = parser.parse_args(argv)
    args.threads = max(1, args.threads)
    print_banner(SCRIPTNAME, __version__, args.json, 0)
    return args


def main():
    args = parse_args()
    script = PtBrPuf(args)
    script.run()


if __name__ == "__main__":
    main()
