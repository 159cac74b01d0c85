"""
Attack experiments and scalability sweeps

An experiment manufactures one simulated chip, collects a CRP corpus from an
LFSR challenge stream, and trains every configured attacker on every train
size against one shared held-out test set. A sweep trains a grid of network
shapes on one fixed dataset per stage size and picks the best shape.

Every random choice descends from the master seed through derive_seed(), so
two runs of the same config produce the same report body.

Contains:
- PufSpec, DatasetSpec, MlpSpec, SvmSpec, SweepSpec, ExperimentConfig
- load_experiment_config(), parse_experiment_config()
- build_chip(), build_dataset()
- run_attack_experiment(), run_scalability_sweep()
"""

import configparser
import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, fields, replace
from io import StringIO
from pathlib import Path
from typing import Optional

import numpy as np
from ptlibs.ptprinthelper import ptprint
from ptlibs.threads import ptthreads

from .crp import CrpDataset, collect_crps, split_dataset
from .errors import CellError, UsageError
from .lda import fit_lda, lda_accuracy
from .lfsr import DEFAULT_TAPS, DEFAULT_WIDTH, GaloisLfsr, LfsrSpec, lfsr_generate
from .mlp import MlpConfig, accuracy, build_mlp, save_model, train_mlp, write_trace
from .obfuscation import ObfuscationConfig, apply_obfuscation, new_obfuscation
from .puf import (
    BR, PUF_KINDS, TBR, XOR_BR, XOR_TBR, AnyPuf, NoiseModel, calibrate_noise, calibrate_threshold, new_instance,
)
from .report import FORMATS, Cell, ExperimentReport, environment_stamp
from .seeds import U64_MASK, derive_seed
from .svm import DEFAULT_CACHE_ROWS, DEFAULT_CAP, DEFAULT_TOL, grid_search_svm, svm_accuracy, train_svm_poly

FULL_GRID_LAYERS = (1, 4, 8, 12)
FULL_GRID_NEURONS = (64, 128, 256, 512, 1024, 2048)

SVM = "svm"
LDA = "lda"

# noise-free convergence rate each family is calibrated to unless the config says otherwise
DEFAULT_CONVERGENCE = {BR: 0.80, XOR_BR: 0.80, TBR: 0.72, XOR_TBR: 0.72}


@dataclass(frozen=True)
class PufSpec:
    kind: str = XOR_BR
    stages: int = 64
    k: int = 4
    chips: int = 3
    chip: int = 0
    obfuscation: str = "none"


@dataclass(frozen=True)
class DatasetSpec:
    train_sizes: tuple = (5000, 20000)
    test_size: int = 20000
    lfsr_width: int = DEFAULT_WIDTH
    lfsr_taps: int = DEFAULT_TAPS
    iterations: int = 3
    sigma: Optional[float] = None         # None calibrates sigma to noise_target
    noise_target: float = 0.02
    convergence_target: Optional[float] = DEFAULT_CONVERGENCE[XOR_BR]   # None disables the threshold
    calibration_samples: int = 10_000


@dataclass(frozen=True)
class MlpSpec:
    name: str = "dl"
    params: tuple = ()                     # sorted (field, value) overrides of MlpConfig

    def to_config(self, m: int, seed: int, **overrides) -> MlpConfig:
        return MlpConfig(m=m, seed=seed, **{**dict(self.params), **overrides})


@dataclass(frozen=True)
class SvmSpec:
    enabled: bool = False
    degrees: tuple = (4,)
    cs: tuple = (1.0,)
    cap: int = DEFAULT_CAP
    validation_fraction: float = 0.2
    tol: float = DEFAULT_TOL
    cache_rows: int = DEFAULT_CACHE_ROWS


@dataclass(frozen=True)
class SweepSpec:
    layers: tuple = (1, 4, 8)
    neurons: tuple = (64, 128, 256, 512)
    stages: tuple = (64,)
    train_size: int = 20000
    base: MlpSpec = MlpSpec("sweep")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    break_threshold: float = 0.90
    puf: PufSpec = PufSpec()
    dataset: DatasetSpec = DatasetSpec()
    mlps: tuple = (MlpSpec(),)
    svm: SvmSpec = SvmSpec()
    lda: bool = False
    lda_bins: int = 64
    sweep: SweepSpec = SweepSpec()
    output_dir: str = "out"
    formats: tuple = ("json", "table")

    def validate(self) -> None:
        if self.puf.kind not in PUF_KINDS:
            raise UsageError(f"[puf] kind must be one of {', '.join(PUF_KINDS)}, got '{self.puf.kind}'")
        if self.puf.obfuscation not in ("none", "mask", "shuffle"):
            raise UsageError(f"[puf] obfuscation must be none, mask or shuffle, got '{self.puf.obfuscation}'")
        if not 0 <= self.puf.chip < self.puf.chips:
            raise UsageError(f"[puf] chip must lie in 0..{self.puf.chips - 1}")
        if self.dataset.iterations % 2 == 0:
            raise UsageError("[dataset] iterations must be odd")
        if not self.dataset.train_sizes:
            raise UsageError("[dataset] train_sizes is empty")
        if not self.sweep.layers or not self.sweep.neurons or not self.sweep.stages:
            raise UsageError("[sweep] grid is empty")
        if unknown := [fmt for fmt in self.formats if fmt not in FORMATS]:
            raise UsageError(f"[output] unknown format {', '.join(unknown)}, expected one of {', '.join(FORMATS)}")


def _ints(text: str) -> tuple:
    return tuple(int(item, 0) for item in text.replace(",", " ").split())


def _floats(text: str) -> tuple:
    return tuple(float(item) for item in text.replace(",", " ").split())


def _words(text: str) -> tuple:
    return tuple(item for item in text.replace(",", " ").split())


_MLP_ALIASES = {"dropout": "dropout_rate"}


def _mlp_params(section, exclude: tuple = ()) -> tuple:
    types = {item.name: item.type for item in fields(MlpConfig) if item.name not in ("m", "seed")}
    params = {}
    for key, value in section.items():
        name = _MLP_ALIASES.get(key, key)
        if name not in types or key in exclude:
            continue
        if types[name] is int:
            params[name] = int(float(value))
        elif types[name] is float:
            params[name] = float(value)
        else:
            params[name] = value.strip()
    return tuple(sorted(params.items()))


def _convergence_target(text: str, kind: str) -> Optional[float]:
    """'auto' picks the family default, 'none' turns the convergence threshold off"""
    if text == "none":
        return None
    if text == "auto":
        return DEFAULT_CONVERGENCE.get(kind)
    return float(text)


def parse_experiment_config(text: str, seed: Optional[int] = None, out: Optional[str] = None,
                            full_grid: bool = False) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise UsageError(f"Unreadable config: {e}")

    def get(section: str, key: str, fallback=None):
        return parser.get(section, key, fallback=fallback) if parser.has_section(section) else fallback

    try:
        puf = PufSpec(
            kind=get("puf", "kind", XOR_BR),
            stages=int(get("puf", "stages", "64")),
            k=int(get("puf", "k", "4")),
            chips=int(get("puf", "chips", "3")),
            chip=int(get("puf", "chip", "0")),
            obfuscation=get("puf", "obfuscation", "none"),
        )
        sigma = get("dataset", "sigma", "auto")
        convergence = get("dataset", "convergence_target", "auto").strip().lower()
        dataset = DatasetSpec(
            train_sizes=_ints(get("dataset", "train_sizes", "5000, 20000")),
            test_size=int(get("dataset", "test_size", "20000")),
            lfsr_width=int(get("dataset", "lfsr_width", str(DEFAULT_WIDTH))),
            lfsr_taps=int(get("dataset", "lfsr_taps", hex(DEFAULT_TAPS)), 0),
            iterations=int(get("dataset", "iterations", "3")),
            sigma=None if sigma.strip().lower() == "auto" else float(sigma),
            noise_target=float(get("dataset", "noise_target", "0.02")),
            convergence_target=_convergence_target(convergence, puf.kind),
            calibration_samples=int(get("dataset", "calibration_samples", "10000")),
        )
        mlps = tuple(
            MlpSpec(name.split(":", 1)[1].strip(), _mlp_params(parser[name]))
            for name in parser.sections() if name.startswith("mlp:")
        ) or (MlpSpec(),)
        svm = SvmSpec(
            enabled=parser.getboolean("svm", "enabled", fallback=False) if parser.has_section("svm") else False,
            degrees=_ints(get("svm", "degrees", "4")),
            cs=_floats(get("svm", "cs", "1.0")),
            cap=int(get("svm", "cap", str(DEFAULT_CAP))),
            validation_fraction=float(get("svm", "validation_fraction", "0.2")),
            tol=float(get("svm", "tol", str(DEFAULT_TOL))),
            cache_rows=int(get("svm", "cache_rows", str(DEFAULT_CACHE_ROWS))),
        )
        sweep = SweepSpec(
            layers=FULL_GRID_LAYERS if full_grid else _ints(get("sweep", "layers", "1, 4, 8")),
            neurons=FULL_GRID_NEURONS if full_grid else _ints(get("sweep", "neurons", "64, 128, 256, 512")),
            stages=_ints(get("sweep", "stages", str(puf.stages))),
            train_size=int(get("sweep", "train_size", "20000")),
            base=MlpSpec("sweep", _mlp_params(parser["sweep"], exclude=("layers", "neurons")) if parser.has_section("sweep") else ()),
        )
        cfg = ExperimentConfig(
            name=get("experiment", "name", "experiment"),
            seed=(seed if seed is not None else int(get("experiment", "seed", "0"), 0)) & U64_MASK,
            break_threshold=float(get("experiment", "break_threshold", "0.90")),
            puf=puf,
            dataset=dataset,
            mlps=mlps,
            svm=svm,
            lda=parser.getboolean("lda", "enabled", fallback=False) if parser.has_section("lda") else False,
            lda_bins=int(get("lda", "bins", "64")),
            sweep=sweep,
            output_dir=out or get("output", "directory", "out"),
            formats=tuple(fmt.lower() for fmt in _words(get("output", "formats", "json, table"))),
        )
    except ValueError as e:
        raise UsageError(f"Invalid config value: {e}")
    cfg.validate()
    return cfg


def load_experiment_config(path, seed: Optional[int] = None, out: Optional[str] = None,
                           full_grid: bool = False) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"Cannot read config {path}: {e}")
    return parse_experiment_config(text, seed, out, full_grid)


def config_hash(*parts) -> str:
    text = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class Chip:
    """One simulated chip with its front end, operating point and challenge source"""
    puf: AnyPuf
    obfuscation: Optional[ObfuscationConfig]
    theta: float
    noise: NoiseModel
    lfsr: LfsrSpec
    seed: int


def build_chip(cfg: ExperimentConfig, chip: int, stages: Optional[int] = None, verbose: bool = False) -> Chip:
    """
    Manufactures chip number `chip` and calibrates its operating point.

    theta is calibrated to the convergence target and sigma to the noise target
    on a separate LFSR calibration stream. The obfuscation front end, when used,
    is shared by all chips of the experiment.
    """
    stages = stages or cfg.puf.stages
    spec = cfg.dataset
    chip_seed = derive_seed(cfg.seed, "chip", chip, stages)
    puf = new_instance(cfg.puf.kind, stages, cfg.puf.k, chip_seed)
    obfuscation = None
    if cfg.puf.obfuscation != "none":
        obfuscation = new_obfuscation(cfg.puf.obfuscation, stages, derive_seed(cfg.seed, "obfuscation", stages))

    width_mask = (1 << spec.lfsr_width) - 1
    lfsr = LfsrSpec(spec.lfsr_width, spec.lfsr_taps, (derive_seed(cfg.seed, "lfsr", chip, stages) & width_mask) or 1)

    theta = 0.0
    sample = None
    if spec.convergence_target is not None or spec.sigma is None:
        calibration = GaloisLfsr(spec.lfsr_width, spec.lfsr_taps,
                                 (derive_seed(cfg.seed, "calibration", chip, stages) & width_mask) or 1)
        sample = lfsr_generate(calibration, spec.calibration_samples, stages)
        if obfuscation is not None:
            sample = apply_obfuscation(obfuscation, sample)
    if spec.convergence_target is not None:
        theta = calibrate_threshold(puf, spec.convergence_target, sample)
    sigma = spec.sigma if spec.sigma is not None else calibrate_noise(puf, spec.noise_target, sample, theta)
    noise = NoiseModel(sigma, derive_seed(cfg.seed, "noise", chip, stages))
    ptprint(f"Chip {chip}: {cfg.puf.kind} m={stages} k={cfg.puf.k} theta={theta:.6g} sigma={sigma:.6g}",
            "ADDITIONS", verbose, indent=4, colortext=True)
    return Chip(puf, obfuscation, theta, noise, lfsr, chip_seed)


def part_noise(chip: Chip, part: int) -> NoiseModel:
    """Noise of the part-th collection batch; every batch draws from its own substream"""
    return replace(chip.noise, rng_seed=derive_seed(chip.noise.rng_seed, "part", part))


def build_dataset(cfg: ExperimentConfig, chip: Chip, needed: int) -> CrpDataset:
    """Collects at least `needed` converged CRPs from the chip's LFSR stream"""
    expected_rate = cfg.dataset.convergence_target or 1.0
    lfsr = GaloisLfsr.from_spec(chip.lfsr)
    parts = []
    collected = 0
    while collected < needed:
        count = int(np.ceil((needed - collected) / max(expected_rate * 0.95, 0.05))) + 64
        challenges = lfsr_generate(lfsr, count, chip.puf.m)
        part = collect_crps(chip.puf, challenges, chip.obfuscation, cfg.dataset.iterations,
                            part_noise(chip, len(parts)), chip.theta, chip_seed=chip.seed, lfsr=chip.lfsr)
        parts.append(part)
        collected += len(part)
    challenges = np.concatenate([part.challenges for part in parts])
    responses = np.concatenate([part.responses for part in parts])
    _, first = np.unique(challenges, axis=0, return_index=True)
    keep = np.sort(first)
    return CrpDataset(challenges[keep], responses[keep], parts[0].meta)


def _dataset_summary(chip: Chip, ds: CrpDataset) -> dict:
    return {"records": len(ds), "theta": chip.theta, "sigma": chip.noise.sigma,
            "chipSeed": chip.seed, "obfuscation": ds.meta.obfuscation, "stages": chip.puf.m}


def _run_mlp_cell(cfg: ExperimentConfig, mlp_cfg: MlpConfig, train: CrpDataset, test: CrpDataset,
                  verbose: bool, artifacts_dir: Optional[Path] = None, stem: str = "") -> tuple[float, int, dict]:
    """
    Trains one network and scores it. With artifacts_dir the trained model is
    saved as <stem>_model.npz and its checkpoint trace as <stem>_trace.csv.
    """
    model, trace = train_mlp(build_mlp(mlp_cfg), train, mlp_cfg, verbose=verbose)
    details = {
        "stopReason": trace.stop_reason,
        "trainAccuracy": trace.final_accuracy,
        "weights": model.weight_count(),
    }
    if artifacts_dir is not None:
        model_file, trace_file = f"{stem}_model.npz", f"{stem}_trace.csv"
        save_model(model, Path(artifacts_dir) / model_file)
        write_trace(trace, Path(artifacts_dir) / trace_file)
        details.update(modelFile=model_file, traceFile=trace_file)
    return accuracy(model, test), trace.iterations, details


def _run_svm_cell(cfg: ExperimentConfig, train: CrpDataset, test: CrpDataset, seed: int,
                  verbose: bool) -> tuple[float, int, dict]:
    spec = cfg.svm
    options = {"tol": spec.tol, "cap": spec.cap, "cache_rows": spec.cache_rows}
    degree, C = spec.degrees[0], spec.cs[0]
    if len(spec.degrees) * len(spec.cs) > 1:
        validation_size = max(1, int(len(train) * spec.validation_fraction))
        fit, validation = split_dataset(train, len(train) - validation_size, validation_size, seed)
        degree, C = grid_search_svm(fit, validation, spec.degrees, spec.cs, verbose=verbose, **options)
    model = train_svm_poly(train, degree, C, verbose=verbose, **options)
    return svm_accuracy(model, test), model.iterations, {"degree": degree, "C": C, "supportVectors": model.n_support}


def _run_lda_cell(cfg: ExperimentConfig, train: CrpDataset, test: CrpDataset) -> tuple[float, int, dict]:
    result = fit_lda(train, cfg.lda_bins)
    return lda_accuracy(result, test), 0, {"overlapCoefficient": result.overlap_coefficient, "dprime": result.dprime}


def _attackers(cfg: ExperimentConfig) -> list[str]:
    names = [spec.name for spec in cfg.mlps]
    if cfg.svm.enabled:
        names.append(SVM)
    if cfg.lda:
        names.append(LDA)
    return names


def run_attack_experiment(cfg: ExperimentConfig, verbose: bool = False,
                          artifacts_dir: Optional[Path] = None) -> ExperimentReport:
    """
    Runs every (train size, attacker) cell against one held-out test set.

    A failing cell is kept in the report with status "failed" and the error that
    stopped it; the remaining cells still run. With artifacts_dir every network
    cell also leaves <attacker>_<train size>_model.npz and _trace.csv there.
    """
    cfg.validate()
    chip = build_chip(cfg, cfg.puf.chip, verbose=verbose)
    needed = max(0, max(cfg.dataset.train_sizes)) + cfg.dataset.test_size
    ds = build_dataset(cfg, chip, needed)
    split_seed = derive_seed(cfg.seed, "split")
    mlp_specs = {spec.name: spec for spec in cfg.mlps}

    cells = []
    for train_size in cfg.dataset.train_sizes:
        for attacker in _attackers(cfg):
            spec = mlp_specs.get(attacker)
            mlp_cfg = spec.to_config(cfg.puf.stages, derive_seed(cfg.seed, "mlp", attacker, train_size)) if spec else None
            attacker_settings = asdict(mlp_cfg) if mlp_cfg else (asdict(cfg.svm) if attacker == SVM else {"bins": cfg.lda_bins})
            cell = Cell(
                attacker=attacker,
                train_size=train_size,
                stages=cfg.puf.stages,
                layers=mlp_cfg.layers if mlp_cfg else None,
                neurons=mlp_cfg.neurons if mlp_cfg else None,
                config_hash=config_hash(asdict(cfg.puf), asdict(cfg.dataset), attacker, attacker_settings,
                                        train_size, cfg.seed),
            )
            ptprint(f"Training {attacker} on {train_size} CRPs", "INFO", verbose, indent=4)
            started = time.perf_counter()
            try:
                train, test = split_dataset(ds, train_size, cfg.dataset.test_size, split_seed, min_train=1)
                if attacker == SVM:
                    result = _run_svm_cell(cfg, train, test, derive_seed(cfg.seed, "svm", train_size), verbose)
                elif attacker == LDA:
                    result = _run_lda_cell(cfg, train, test)
                else:
                    result = _run_mlp_cell(cfg, mlp_cfg, train, test, verbose, artifacts_dir,
                                           f"{attacker}_{train_size}")
            except Exception as e:
                error = CellError(f"{attacker}@{train_size}", e)
                cell.fail(error)
                ptprint(str(error), "ERROR", verbose, indent=4)
            else:
                cell.succeed(*result, threshold=cfg.break_threshold)
            cell.training_time = time.perf_counter() - started
            cells.append(cell)

    return ExperimentReport(
        kind="attack",
        name=cfg.name,
        master_seed=cfg.seed,
        cells=cells,
        datasets=[_dataset_summary(chip, ds)],
        environment=environment_stamp(),
    )


def _select_winner(cells: list[Cell]) -> Optional[Cell]:
    """Highest accuracy, ties broken by the shorter training time"""
    finished = [cell for cell in cells if cell.status == "ok"]
    if not finished:
        return None
    return min(finished, key=lambda cell: (-cell.accuracy, cell.training_time))


def run_scalability_sweep(cfg: ExperimentConfig, threads: int = 1, verbose: bool = False,
                          stdout_proxy=None, artifacts_dir: Optional[Path] = None) -> ExperimentReport:
    """
    Trains every (layers, neurons) grid cell on one fixed dataset per stage size.

    Cells run on `threads` worker threads; each cell owns its derived seed and
    its slot in the result list. When stdout_proxy (a per-thread stdout
    capture) is given, each cell's log lines are printed as one block.
    With artifacts_dir each cell saves m<stages>_N<layers>_K<neurons>_model.npz
    and the matching _trace.csv there.
    """
    cfg.validate()
    spec = cfg.sweep
    datasets, plan = [], []
    for stages in spec.stages:
        chip = build_chip(cfg, cfg.puf.chip, stages, verbose)
        ds = build_dataset(cfg, chip, spec.train_size + cfg.dataset.test_size)
        train, test = split_dataset(ds, spec.train_size, cfg.dataset.test_size, derive_seed(cfg.seed, "split", stages))
        datasets.append(_dataset_summary(chip, ds))
        for layers in spec.layers:
            for neurons in spec.neurons:
                plan.append((stages, layers, neurons, train, test))

    slots: list[Optional[Cell]] = [None] * len(plan)
    print_lock = threading.Lock()

    def run_cell(index: int) -> None:
        stages, layers, neurons, train, test = plan[index]
        mlp_cfg = spec.base.to_config(stages, derive_seed(cfg.seed, "sweep", stages, layers, neurons),
                                      layers=layers, neurons=neurons)
        cell = Cell(
            attacker=f"N={layers},K={neurons}",
            train_size=spec.train_size,
            stages=stages,
            layers=layers,
            neurons=neurons,
            config_hash=config_hash(asdict(cfg.puf), asdict(cfg.dataset), asdict(mlp_cfg), spec.train_size, cfg.seed),
        )
        buffer = StringIO()
        if stdout_proxy is not None:
            stdout_proxy.set_thread_buffer(buffer)
        started = time.perf_counter()
        try:
            ptprint(f"Training N={layers} K={neurons} on m={stages}", "INFO", verbose, indent=4)
            result = _run_mlp_cell(cfg, mlp_cfg, train, test, verbose, artifacts_dir,
                                   f"m{stages}_N{layers}_K{neurons}")
            cell.succeed(*result, threshold=cfg.break_threshold)
        except Exception as e:
            cell.fail(CellError(cell.attacker, e))
        finally:
            cell.training_time = time.perf_counter() - started
            slots[index] = cell
            if stdout_proxy is not None:
                stdout_proxy.clear_thread_buffer()
                with print_lock:
                    ptprint(buffer.getvalue(), "TEXT", verbose, end="")

    if threads > 1:
        ptthreads.PtThreads().threads(list(range(len(plan))), run_cell, threads)
    else:
        for index in range(len(plan)):
            run_cell(index)

    cells = list(slots)
    winners = []
    for stages in spec.stages:
        winner = _select_winner([cell for cell in cells if cell.stages == stages])
        if winner is not None:
            winners.append({"stages": stages, "layers": winner.layers, "neurons": winner.neurons,
                            "accuracy": winner.accuracy, "trainingTime": winner.training_time})
    return ExperimentReport(
        kind="sweep",
        name=cfg.name,
        master_seed=cfg.seed,
        cells=cells,
        winners=winners,
        datasets=datasets,
        environment=environment_stamp(),
    )
