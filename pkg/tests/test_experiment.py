from pathlib import Path

import numpy as np
import pytest

from ptbrpuf.core import experiment
from ptbrpuf.core.crp import collect_crps, split_dataset
from ptbrpuf.core.errors import UsageError
from ptbrpuf.core.experiment import (
    DEFAULT_CONVERGENCE, FULL_GRID_LAYERS, FULL_GRID_NEURONS, MlpSpec, _select_winner, build_chip, build_dataset,
    config_hash, load_experiment_config, parse_experiment_config, part_noise, run_attack_experiment,
    run_scalability_sweep,
)
from ptbrpuf.core.lfsr import DEFAULT_TAPS, GaloisLfsr, lfsr_generate
from ptbrpuf.core.mlp import accuracy, load_model
from ptbrpuf.core.puf import convergence_mask, expected_flip_rate
from ptbrpuf.core.report import Cell
from ptbrpuf.core.seeds import derive_seed

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY = """
[experiment]
name = tiny
seed = 11

[puf]
kind = br
stages = 16
k = 1
chips = 1

[dataset]
train_sizes = 0, 200
test_size = 200
iterations = 1
sigma = 0
convergence_target = none

[mlp:dl]
layers = 1
neurons = 8
learning_rate = 0.001
max_iterations = 200
checkpoint_every = 50

[lda]
enabled = true

[sweep]
layers = 1, 2
neurons = 4, 8
train_size = 200
max_iterations = 100
checkpoint_every = 50
"""


@pytest.fixture
def tiny():
    return parse_experiment_config(TINY)


class TestConfig:
    def test_sections_are_read(self, tiny):
        assert tiny.name == "tiny" and tiny.seed == 11
        assert (tiny.puf.kind, tiny.puf.stages, tiny.puf.k) == ("br", 16, 1)
        assert tiny.dataset.train_sizes == (0, 200)
        assert tiny.lda is True and tiny.svm.enabled is False
        assert [spec.name for spec in tiny.mlps] == ["dl"]
        assert dict(tiny.mlps[0].params)["neurons"] == 8

    def test_sweep_grid_is_not_part_of_the_base_network(self, tiny):
        assert (tiny.sweep.layers, tiny.sweep.neurons, tiny.sweep.stages) == ((1, 2), (4, 8), (16,))
        base = dict(tiny.sweep.base.params)
        assert "layers" not in base and base["max_iterations"] == 100

    def test_command_line_overrides(self):
        cfg = parse_experiment_config(TINY, seed=99, out="elsewhere", full_grid=True)
        assert cfg.seed == 99 and cfg.output_dir == "elsewhere"
        assert (cfg.sweep.layers, cfg.sweep.neurons) == (FULL_GRID_LAYERS, FULL_GRID_NEURONS)

    def test_defaults(self):
        cfg = parse_experiment_config("")
        assert cfg.mlps == (MlpSpec(),)
        assert cfg.puf.kind == "xor_br" and cfg.puf.k == 4
        assert cfg.dataset.sigma is None and cfg.dataset.noise_target == 0.02
        assert cfg.dataset.convergence_target == 0.80

    @pytest.mark.parametrize("kind, target", [("br", 0.80), ("xor_br", 0.80), ("tbr", 0.72), ("xor_tbr", 0.72)])
    def test_convergence_target_follows_the_family(self, kind, target):
        assert parse_experiment_config(f"[puf]\nkind = {kind}\n").dataset.convergence_target == target
        explicit = parse_experiment_config(f"[puf]\nkind = {kind}\n[dataset]\nconvergence_target = auto\n")
        assert explicit.dataset.convergence_target == target

    def test_operating_point_opt_out(self):
        cfg = parse_experiment_config("[puf]\nstages = 16\nchips = 1\n[dataset]\nsigma = 0\nconvergence_target = none\n")
        assert cfg.dataset.convergence_target is None and cfg.dataset.sigma == 0.0
        chip = build_chip(cfg, 0)
        assert chip.theta == 0.0 and chip.noise.sigma == 0.0

    def test_shipped_configs_use_the_calibrated_operating_point(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            cfg = load_experiment_config(path)
            assert cfg.dataset.sigma is None, path.name
            assert cfg.dataset.convergence_target == DEFAULT_CONVERGENCE[cfg.puf.kind], path.name

    def test_dropout_alias_and_auto_sigma(self):
        cfg = parse_experiment_config("[mlp:deep]\ndropout = 0.3\n[dataset]\nsigma = auto\nconvergence_target = 0.8\n")
        assert dict(cfg.mlps[0].params)["dropout_rate"] == 0.3
        assert cfg.dataset.sigma is None and cfg.dataset.convergence_target == 0.8

    @pytest.mark.parametrize("text", [
        "[puf]\nkind = arbiter\n",
        "[puf]\nstages = many\n",
        "[dataset]\niterations = 4\n",
        "[puf]\nchips = 2\nchip = 2\n",
        "[output]\nformats = json, xml\n",
        "[dataset]\nconvergence_target = mostly\n",
        "not an ini file",
    ])
    def test_bad_config(self, text):
        with pytest.raises(UsageError):
            parse_experiment_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_experiment_config(tmp_path / "nope.ini")

    def test_hash_is_stable(self):
        assert config_hash({"b": 1, "a": 2}, 5) == config_hash({"a": 2, "b": 1}, 5)
        assert config_hash(1) != config_hash(2)
        assert len(config_hash(1)) == 16


class TestDataset:
    def test_chip_is_reproducible(self, tiny):
        first, second = build_chip(tiny, 0), build_chip(tiny, 0)
        assert first.seed == second.seed and first.lfsr == second.lfsr
        np.testing.assert_array_equal(first.puf.t, second.puf.t)

    def test_dataset_has_enough_distinct_records(self, tiny):
        ds = build_dataset(tiny, build_chip(tiny, 0), 500)
        assert len(ds) >= 500
        assert not ds.has_duplicates()

    def test_default_chip_is_calibrated(self):
        chip = build_chip(parse_experiment_config(""), 0)
        fresh = lfsr_generate(GaloisLfsr(64, DEFAULT_TAPS, 0xABCDEF), 10_000, 64)
        assert np.mean(convergence_mask(chip.puf, fresh, chip.theta)) == pytest.approx(0.80, abs=0.02)
        assert expected_flip_rate(chip.puf, fresh, chip.noise.sigma, chip.theta) == pytest.approx(0.02, abs=0.004)

    def test_collection_batches_draw_independent_noise(self, tiny, monkeypatch):
        seeds = []

        def keep_half(puf, challenges, obfuscation, iterations, noise, *args, **kwargs):
            seeds.append(noise.rng_seed)
            part = collect_crps(puf, challenges, obfuscation, iterations, noise, *args, **kwargs)
            return part.subset(np.arange(len(part) // 2))

        monkeypatch.setattr(experiment, "collect_crps", keep_half)
        chip = build_chip(tiny, 0)
        build_dataset(tiny, chip, 300)
        assert len(seeds) >= 2
        assert len(set(seeds)) == len(seeds)
        assert seeds[0] == part_noise(chip, 0).rng_seed != chip.noise.rng_seed

    def test_calibrated_operating_point(self):
        cfg = parse_experiment_config("[puf]\nkind = xor_br\nstages = 32\nk = 2\nchips = 1\n"
                                      "[dataset]\nsigma = auto\nnoise_target = 0.02\nconvergence_target = 0.9\n"
                                      "calibration_samples = 2000\n")
        chip = build_chip(cfg, 0)
        assert chip.theta > 0 and chip.noise.sigma > 0

    def test_obfuscation_shared_between_chips(self):
        cfg = parse_experiment_config("[puf]\nkind = br\nstages = 16\nchips = 2\nobfuscation = shuffle\n")
        assert build_chip(cfg, 0).obfuscation == build_chip(cfg, 1).obfuscation


class TestAttack:
    def test_one_cell_per_train_size_and_attacker(self, tiny):
        report = run_attack_experiment(tiny)
        assert [(cell.train_size, cell.attacker) for cell in report.cells] == \
            [(0, "dl"), (0, "lda"), (200, "dl"), (200, "lda")]
        assert all(cell.config_hash for cell in report.cells)

    def test_empty_train_size_fails_only_its_cells(self, tiny):
        report = run_attack_experiment(tiny)
        assert [cell.status for cell in report.cells] == ["failed", "failed", "ok", "ok"]
        assert "dl@0" in report.cells[0].error
        assert all("DatasetSizeError" in cell.error for cell in report.cells[:2])
        for cell in report.cells[2:]:
            assert 0.0 <= cell.accuracy <= 1.0

    def test_same_seed_same_report_body(self, tiny):
        first = run_attack_experiment(tiny).to_dict(include_timing=False)
        second = run_attack_experiment(tiny).to_dict(include_timing=False)
        assert first == second

    def test_unexpected_error_is_kept_as_a_failed_cell(self, tiny, monkeypatch):
        def broken(*args, **kwargs):
            raise FloatingPointError("overflow in projection")

        monkeypatch.setattr(experiment, "_run_lda_cell", broken)
        report = run_attack_experiment(tiny)
        assert len(report.cells) == 4
        lda_cells = [cell for cell in report.cells if cell.attacker == "lda"]
        assert [cell.status for cell in lda_cells] == ["failed", "failed"]
        assert "FloatingPointError" in lda_cells[1].error
        assert report.cells[2].status == "ok"

    def test_network_cells_leave_model_and_trace(self, tiny, tmp_path):
        report = run_attack_experiment(tiny, artifacts_dir=tmp_path)
        cell = next(cell for cell in report.cells if cell.attacker == "dl" and cell.status == "ok")
        assert cell.details["modelFile"] == "dl_200_model.npz"
        assert cell.details["traceFile"] == "dl_200_trace.csv"
        assert not (tmp_path / "dl_0_model.npz").exists()

        trace = (tmp_path / "dl_200_trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,loss,accuracy" and len(trace) > 1

        ds = build_dataset(tiny, build_chip(tiny, 0), 200 + tiny.dataset.test_size)
        _, test = split_dataset(ds, 200, tiny.dataset.test_size, derive_seed(tiny.seed, "split"))
        assert accuracy(load_model(tmp_path / "dl_200_model.npz"), test) == cell.accuracy

    def test_svm_over_the_cap_is_reported(self):
        cfg = parse_experiment_config(TINY.replace("[lda]\nenabled = true", "[svm]\nenabled = true\ndegrees = 1\ncap = 100"))
        svm_cells = [cell for cell in run_attack_experiment(cfg).cells if cell.attacker == "svm"]
        assert [cell.status for cell in svm_cells] == ["failed", "failed"]
        assert "DatasetSizeError" in svm_cells[1].error


class TestSweep:
    def test_every_grid_cell_is_reported(self, tiny):
        report = run_scalability_sweep(tiny)
        assert len(report.cells) == len(tiny.sweep.layers) * len(tiny.sweep.neurons)
        assert {(cell.layers, cell.neurons) for cell in report.cells} == {(1, 4), (1, 8), (2, 4), (2, 8)}
        assert len(report.winners) == 1 and report.winners[0]["stages"] == 16

    def test_threads_do_not_change_results(self, tiny):
        serial = run_scalability_sweep(tiny, threads=1).to_dict(include_timing=False)
        parallel = run_scalability_sweep(tiny, threads=3).to_dict(include_timing=False)
        assert serial == parallel

    def test_crashing_cell_is_reported_not_dropped(self, tiny, monkeypatch):
        run_mlp_cell = experiment._run_mlp_cell

        def crash_one(cfg, mlp_cfg, *args, **kwargs):
            if (mlp_cfg.layers, mlp_cfg.neurons) == (2, 8):
                raise MemoryError("cannot allocate layer")
            return run_mlp_cell(cfg, mlp_cfg, *args, **kwargs)

        monkeypatch.setattr(experiment, "_run_mlp_cell", crash_one)
        report = run_scalability_sweep(tiny, threads=2)
        assert len(report.cells) == 4
        failed = [cell for cell in report.cells if cell.status == "failed"]
        assert [(cell.layers, cell.neurons) for cell in failed] == [(2, 8)]
        assert "MemoryError" in failed[0].error
        assert len(report.winners) == 1

    def test_sweep_cells_leave_models(self, tiny, tmp_path):
        run_scalability_sweep(tiny, artifacts_dir=tmp_path)
        names = sorted(path.name for path in tmp_path.glob("*_model.npz"))
        assert names == ["m16_N1_K4_model.npz", "m16_N1_K8_model.npz", "m16_N2_K4_model.npz", "m16_N2_K8_model.npz"]

    def test_ties_go_to_the_faster_cell(self):
        slow = Cell("N=4,K=64", 100, 64, 4, 64, accuracy=0.9, training_time=20.0, status="ok")
        fast = Cell("N=1,K=64", 100, 64, 1, 64, accuracy=0.9, training_time=5.0, status="ok")
        worse = Cell("N=8,K=64", 100, 64, 8, 64, accuracy=0.8, training_time=1.0, status="ok")
        assert _select_winner([slow, fast, worse]) is fast

    def test_failed_cells_never_win(self):
        failed = Cell("N=1,K=4", 100, 64, 1, 4, status="failed")
        assert _select_winner([failed]) is None


ACCEPTANCE = """
[experiment]
seed = {seed}
[puf]
kind = {kind}
stages = 64
k = 4
chips = 1
obfuscation = {obfuscation}
[dataset]
train_sizes = {train}
test_size = 20000
iterations = 1
sigma = 0
[mlp:dl]
layers = {layers}
neurons = {neurons}
learning_rate = 0.001
max_iterations = 200000
{svm}
"""


def acceptance_accuracy(seed=1, kind="xor_br", obfuscation="none", train=20000, layers=4, neurons=256, svm=""):
    cfg = parse_experiment_config(ACCEPTANCE.format(seed=seed, kind=kind, obfuscation=obfuscation, train=train,
                                                    layers=layers, neurons=neurons, svm=svm))
    return {cell.attacker: cell.accuracy for cell in run_attack_experiment(cfg).cells}


@pytest.mark.slow
def test_deep_network_breaks_four_xor_br():
    accuracies = [acceptance_accuracy(seed)["dl"] for seed in (1, 2, 3)]
    assert np.mean(accuracies) >= 0.90


@pytest.mark.slow
def test_deep_network_breaks_four_xor_tbr():
    assert acceptance_accuracy(kind="xor_tbr", train=50000)["dl"] >= 0.90


@pytest.mark.slow
def test_single_layer_fails_on_four_xor():
    for neurons in (64, 256, 1024):
        assert acceptance_accuracy(layers=1, neurons=neurons)["dl"] <= 0.75


@pytest.mark.slow
def test_svm_stays_near_chance_on_four_xor():
    accuracies = acceptance_accuracy(train=10000, svm="[svm]\nenabled = true\ndegrees = 4\ncs = 1.0")
    assert accuracies["svm"] <= 0.70
    assert accuracies["dl"] - accuracies["svm"] >= 0.20


@pytest.mark.slow
def test_shuffling_resists_the_attack_masking_does_not():
    plain = acceptance_accuracy()["dl"]
    masked = acceptance_accuracy(obfuscation="mask")["dl"]
    shuffled = acceptance_accuracy(obfuscation="shuffle")["dl"]
    assert abs(plain - masked) <= 0.05
    assert masked - shuffled >= 0.15


@pytest.mark.slow
def test_more_crps_push_the_deep_network_past_ninety_five():
    assert acceptance_accuracy(train=100000)["dl"] >= 0.95
