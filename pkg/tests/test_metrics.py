import numpy as np
import pytest
from numpy.testing import assert_allclose

from ptbrpuf.core.errors import DimensionError, InvalidParameterError, UndefinedInfluenceError
from ptbrpuf.core.experiment import build_chip, parse_experiment_config
from ptbrpuf.core.lfsr import DEFAULT_TAPS, GaloisLfsr, lfsr_generate
from ptbrpuf.core.metrics import (
    MetricsReport, bias, characterize_chips, convergence_rate, influence_profile, inter_chip_nhd, noise_rate,
    render_metrics_table,
)
from ptbrpuf.core.puf import (
    NON_CONVERGED, EvalOutcome, NoiseModel, convergence_mask, evaluate_many, evaluate_repeated, new_br_instance,
    new_xor_instance,
)


def challenges_for(m, count, state=1):
    return lfsr_generate(GaloisLfsr(64, DEFAULT_TAPS, state), count, m)


class TestNoiseRate:
    def test_one_flip_in_six_evaluations(self):
        assert noise_rate([[1, 1, 0], [0, 0, 0]]) == pytest.approx(1 / 6)

    def test_stable_responses_have_no_noise(self):
        assert noise_rate(np.ones((10, 5), dtype=np.uint8)) == 0.0

    def test_even_iterations_rejected(self):
        with pytest.raises(InvalidParameterError):
            noise_rate([[1, 0], [0, 0]])


class TestBias:
    @pytest.mark.parametrize("responses, expected", [([1, 0, 1, 1], 0.75), ([0, 0], 0.0), ([1], 1.0)])
    def test_fraction_of_ones(self, responses, expected):
        assert bias(responses) == expected

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            bias([])


class TestInterChipNhd:
    def test_half_the_bits_differ(self):
        assert inter_chip_nhd([0, 1, 1, 0], [0, 0, 1, 1]) == 0.5

    def test_symmetry_and_triangle_inequality(self, rng):
        a, b, c = rng.integers(0, 2, size=(3, 200))
        assert inter_chip_nhd(a, b) == inter_chip_nhd(b, a)
        assert inter_chip_nhd(a, c) <= inter_chip_nhd(a, b) + inter_chip_nhd(b, c)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            inter_chip_nhd([0, 1], [0, 1, 1])

    def test_independent_chips_are_unique(self):
        challenges = challenges_for(64, 20_000)
        first = evaluate_many(new_xor_instance("xor_br", 64, 4, 1), challenges)
        second = evaluate_many(new_xor_instance("xor_br", 64, 4, 2), challenges)
        shared = (first != NON_CONVERGED) & (second != NON_CONVERGED)
        assert 0.45 <= inter_chip_nhd(first[shared], second[shared]) <= 0.55


class TestInfluence:
    def test_single_bit_example(self):
        influence, (value, bit) = influence_profile([[0], [0], [1], [1]], [1, 0, 1, 1])
        assert_allclose(influence, [[0.5, 1.0]])
        assert (value, bit) == (1.0, 0)

    def test_response_copying_a_bit(self, rng):
        challenges = rng.integers(0, 2, size=(200, 8), dtype=np.uint8)
        influence, (value, bit) = influence_profile(challenges, challenges[:, 5])
        assert influence[5, 1] == 1.0 and influence[5, 0] == 0.0
        assert bit == 5 and value in (0.0, 1.0)

    def test_constant_bit_is_named(self):
        with pytest.raises(UndefinedInfluenceError) as error:
            influence_profile([[0, 1], [1, 1]], [0, 1])
        assert error.value.bit == 1


class TestConvergenceRate:
    def test_outcome_objects(self):
        outcomes = [EvalOutcome(True, 1), EvalOutcome(True, 0), EvalOutcome(False), EvalOutcome(True, 1)]
        assert convergence_rate(outcomes) == 0.75

    def test_outcome_codes(self):
        assert convergence_rate(np.array([1, 0, NON_CONVERGED, 1])) == 0.75

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            convergence_rate([])


class TestCharacterizeChips:
    def test_three_chip_report(self):
        pufs = [new_br_instance(32, seed) for seed in (1, 2, 3)]
        noises = [NoiseModel(0.3, seed) for seed in (4, 5, 6)]
        report = characterize_chips(pufs, challenges_for(32, 3000), iterations=5, noises=noises, theta=0.2)
        assert isinstance(report, MetricsReport)
        assert sorted(report.nhd) == ["0-1", "0-2", "1-2"]
        assert len(report.chip_bias) == 3
        assert np.array(report.influence).shape == (32, 2)
        for value in [report.noise, report.bias, report.convergence_rate, *report.nhd.values()]:
            assert 0.0 <= value <= 1.0
        assert 0.0 < report.noise < 0.5
        assert report.challenges == 3000

    def test_noiseless_chips_have_no_noise(self):
        pufs = [new_br_instance(16, seed) for seed in (1, 2)]
        report = characterize_chips(pufs, challenges_for(16, 500), iterations=3)
        assert report.noise == 0.0
        assert report.convergence_rate == 1.0

    def test_table_lists_every_chip(self):
        pufs = [new_br_instance(16, seed) for seed in (1, 2)]
        table = render_metrics_table(characterize_chips(pufs, challenges_for(16, 500)), label="BR")
        assert "Bias Chip-1 (%)" in table and "Bias Chip-2 (%)" in table
        assert table.splitlines()[0].endswith("BR")

    def test_no_chips(self):
        with pytest.raises(InvalidParameterError):
            characterize_chips([], challenges_for(16, 10))


@pytest.mark.slow
def test_default_chips_behave_like_a_real_puf():
    cfg = parse_experiment_config("")
    chips = [build_chip(cfg, index) for index in range(cfg.puf.chips)]
    challenges = challenges_for(64, 100_000, state=0x5EED)
    for chip in chips:
        assert np.mean(convergence_mask(chip.puf, challenges, chip.theta)) == pytest.approx(0.80, abs=0.02)
        raw = evaluate_repeated(chip.puf, challenges, 3, chip.noise, chip.theta)
        assert 0.005 <= noise_rate(raw[np.all(raw != NON_CONVERGED, axis=1)]) <= 0.035

    report = characterize_chips([chip.puf for chip in chips], challenges, 3, [chip.noise for chip in chips],
                                chips[0].theta)
    assert 0.45 <= report.bias <= 0.55
    assert len(report.nhd) == 3
    assert all(0.45 <= value <= 0.55 for value in report.nhd.values())
    assert abs(report.max_influence - 0.5) <= 0.15
