import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ptbrpuf.core.errors import CrpParseError, DatasetSizeError, InvalidParameterError
from ptbrpuf.core.experiment import build_chip, parse_experiment_config
from ptbrpuf.core.crp import (
    CrpDataset, DatasetMeta, collect_crps, majority_vote, read_dataset, split_dataset, write_dataset,
)
from ptbrpuf.core.lfsr import DEFAULT_TAPS, GaloisLfsr, LfsrSpec, lfsr_generate
from ptbrpuf.core.obfuscation import apply_mask, new_mask_config
from ptbrpuf.core.puf import NON_CONVERGED, NoiseModel, evaluate_many, new_br_instance, new_xor_instance


def small_dataset(n=100, m=16, seed=0):
    rng = np.random.default_rng(seed)
    challenges = np.unique(rng.integers(0, 2, size=(n * 2, m), dtype=np.uint8), axis=0)[:n]
    responses = rng.integers(0, 2, size=n, dtype=np.uint8)
    return CrpDataset(challenges, responses, DatasetMeta(puf_kind="br", m=m, chip_seed=seed))


def challenges_for(m, count=1000, state=1):
    return lfsr_generate(GaloisLfsr(64, DEFAULT_TAPS, state), count, m)


class TestMajorityVote:
    def test_modal_bit(self):
        assert_array_equal(majority_vote(np.array([[1, 1, 0], [0, 1, 0], [1, 1, 1]])), [1, 0, 1])

    def test_even_iterations_rejected(self):
        with pytest.raises(InvalidParameterError):
            majority_vote(np.zeros((3, 2), dtype=np.uint8))


class TestCollect:
    def test_noiseless_responses_match_evaluation(self):
        puf = new_br_instance(64, 3)
        challenges = challenges_for(64)
        ds = collect_crps(puf, challenges, iterations=3, theta=0.5, chip_seed=3)
        codes = evaluate_many(puf, challenges, theta=0.5)
        assert len(ds) == np.count_nonzero(codes != NON_CONVERGED)
        assert_array_equal(ds.challenges, challenges[codes != NON_CONVERGED])
        assert_array_equal(ds.responses, codes[codes != NON_CONVERGED])
        assert ds.meta.chip_seed == 3 and ds.meta.theta == 0.5

    def test_obfuscated_challenges_reach_the_puf(self):
        puf = new_br_instance(32, 4)
        mask = new_mask_config(32, 9)
        challenges = challenges_for(32, 300)
        ds = collect_crps(puf, challenges, obfuscation=mask, iterations=1)
        assert_array_equal(ds.challenges, challenges)
        assert_array_equal(ds.responses, evaluate_many(puf, apply_mask(mask, challenges)))
        assert ds.meta.obfuscation == "mask:seed=9"

    def test_duplicates_are_dropped(self):
        puf = new_br_instance(16, 1)
        challenges = challenges_for(16, 50)
        ds = collect_crps(puf, np.concatenate([challenges, challenges[:10]]), iterations=1)
        assert len(ds) == 50
        assert not ds.has_duplicates()

    def test_noisy_collection_is_reproducible(self):
        puf = new_xor_instance("xor_br", 64, 2, 5)
        challenges = challenges_for(64, 2000)
        noise = NoiseModel(sigma=0.5, rng_seed=11)
        assert collect_crps(puf, challenges, iterations=5, noise=noise) == \
            collect_crps(puf, challenges, iterations=5, noise=noise)

    def test_records_provenance(self):
        puf = new_xor_instance("xor_tbr", 16, 3, 2)
        ds = collect_crps(puf, challenges_for(16, 20), iterations=3, lfsr=LfsrSpec(seed=1))
        assert (ds.meta.puf_kind, ds.meta.k, ds.meta.lfsr_taps, ds.meta.iterations) == ("xor_tbr", 3, DEFAULT_TAPS, 3)

    @pytest.mark.parametrize("iterations", [0, 2, 4])
    def test_iteration_count_must_be_odd(self, iterations):
        with pytest.raises(InvalidParameterError):
            collect_crps(new_br_instance(8, 1), challenges_for(8, 5), iterations=iterations)


class TestFiles:
    @pytest.mark.parametrize("name", ["crps.csv", "crps.crpd"])
    def test_write_then_read(self, name, tmp_path):
        puf = new_br_instance(64, 8)
        ds = collect_crps(puf, challenges_for(64, 300), iterations=3, theta=0.25, lfsr=LfsrSpec(seed=1))
        write_dataset(ds, tmp_path / name)
        assert read_dataset(tmp_path / name) == ds

    def test_csv_layout(self, tmp_path):
        ds = CrpDataset([[1, 0, 1, 1]], [1], DatasetMeta(puf_kind="tbr", m=4))
        write_dataset(ds, tmp_path / "crps.csv")
        lines = (tmp_path / "crps.csv").read_text().splitlines()
        assert "# m=4" in lines
        assert lines[-1] == "1011,1"

    def test_bad_response_cites_line(self, tmp_path):
        records = ["0000,0", "0001,1", "0010,0", "0011,1", "0100,0", "0101,2"]
        path = tmp_path / "bad.csv"
        path.write_text("# puf_kind=br\n# m=4\n# schema_version=1\n" + "\n".join(records) + "\n")
        with pytest.raises(CrpParseError) as error:
            read_dataset(path)
        assert error.value.line_no == 9

    def test_width_mismatch(self, tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text("# puf_kind=br\n# m=4\n# schema_version=1\n0000,1\n01010,0\n")
        with pytest.raises(CrpParseError) as error:
            read_dataset(path)
        assert error.value.line_no == 5

    def test_duplicate_challenge(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("# puf_kind=br\n# m=4\n# schema_version=1\n0110,1\n0110,0\n")
        with pytest.raises(CrpParseError):
            read_dataset(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("0110,1\n")
        with pytest.raises(CrpParseError):
            read_dataset(path)

    def test_not_a_binary_file(self, tmp_path):
        path = tmp_path / "junk.crpd"
        path.write_bytes(b"JUNKJUNK")
        with pytest.raises(CrpParseError):
            read_dataset(path)

    @pytest.mark.parametrize("tail", [b"", b"\x01\x10", b"\x01\x10\x00\x00\x00\x05"])
    def test_truncated_binary_header(self, tail, tmp_path):
        path = tmp_path / "short.crpd"
        path.write_bytes(b"CRPD" + tail)
        with pytest.raises(CrpParseError, match="truncated header"):
            read_dataset(path)

    @pytest.mark.parametrize("meta", [b"{not json", b'{"puf_kind": "br"}', b"\xff\xfe"])
    def test_malformed_binary_metadata(self, meta, tmp_path):
        path = tmp_path / "meta.crpd"
        path.write_bytes(b"CRPD" + struct.pack("<BIQI", 1, 16, 0, len(meta)) + meta)
        with pytest.raises(CrpParseError, match="malformed metadata"):
            read_dataset(path)


class TestSplit:
    @pytest.mark.parametrize("train, test", [(0, 100), (100, 0), (60, 40), (10, 10)])
    def test_sizes_and_disjointness(self, train, test):
        ds = small_dataset()
        train_ds, test_ds = split_dataset(ds, train, test, seed=1)
        assert (len(train_ds), len(test_ds)) == (train, test)
        train_rows = {row.tobytes() for row in train_ds.challenges}
        test_rows = {row.tobytes() for row in test_ds.challenges}
        assert not train_rows & test_rows

    def test_same_seed_same_split(self):
        ds = small_dataset()
        first, second = split_dataset(ds, 50, 30, seed=4), split_dataset(ds, 50, 30, seed=4)
        assert first[0] == second[0] and first[1] == second[1]
        assert split_dataset(ds, 50, 30, seed=5)[0] != first[0]

    def test_train_sets_nest_with_shared_test_set(self):
        ds = small_dataset()
        small_train, small_test = split_dataset(ds, 20, 30, seed=2)
        large_train, large_test = split_dataset(ds, 70, 30, seed=2)
        assert small_test == large_test
        assert_array_equal(large_train.challenges[:20], small_train.challenges)

    def test_oversized_request(self):
        with pytest.raises(DatasetSizeError) as error:
            split_dataset(small_dataset(), 80, 30, seed=1)
        assert (error.value.requested, error.value.available) == (110, 100)

    def test_minimum_train_size(self):
        with pytest.raises(DatasetSizeError, match="at least 1") as error:
            split_dataset(small_dataset(), 0, 30, seed=1, min_train=1)
        assert (error.value.requested, error.value.minimum) == (0, 1)


def test_default_chip_keeps_the_target_share_of_challenges():
    chip = build_chip(parse_experiment_config("[dataset]\nsigma = 0\n"), 0)
    ds = collect_crps(chip.puf, challenges_for(64, 10_000, state=0xC0FFEE), iterations=3, noise=chip.noise,
                      theta=chip.theta)
    assert len(ds) / 10_000 == pytest.approx(0.80, abs=0.02)
