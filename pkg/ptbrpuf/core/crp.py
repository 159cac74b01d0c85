"""
CRP collection and datasets

Challenges are applied to a simulated chip (optionally through an obfuscation
front end) several times. A challenge is kept only when every evaluation
converged; its stored response is the majority vote. Datasets persist as a
commented CSV file (canonical) or a bit-packed binary file.

Contains:
- DatasetMeta, CrpDataset
- majority_vote(), collect_crps()
- write_dataset(), read_dataset() for the CSV and binary formats
- split_dataset()
"""

import json
import os
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CrpParseError, DatasetSizeError, DimensionError, InvalidParameterError
from .lfsr import LfsrSpec
from .obfuscation import ObfuscationConfig, apply_obfuscation, describe
from .puf import NON_CONVERGED, AnyPuf, NoiseModel, XorPufInstance, as_challenges, evaluate_repeated

SCHEMA_VERSION = 1
BINARY_MAGIC = b"CRPD"
BINARY_VERSION = 1
BINARY_SUFFIX = ".crpd"


@dataclass(frozen=True)
class DatasetMeta:
    puf_kind: str
    m: int
    k: int = 1
    chip_seed: int = 0
    obfuscation: str = ""
    lfsr_width: int = 64
    lfsr_taps: int = 0
    lfsr_seed: int = 0
    iterations: int = 1
    theta: float = 0.0
    sigma: float = 0.0
    schema_version: int = SCHEMA_VERSION


_INT_FIELDS = {"m", "k", "chip_seed", "lfsr_width", "lfsr_taps", "lfsr_seed", "iterations", "schema_version"}
_FLOAT_FIELDS = {"theta", "sigma"}
_REQUIRED_FIELDS = {"puf_kind", "m", "schema_version"}


def _meta_value_to_text(name: str, value) -> str:
    if name == "lfsr_taps":
        return hex(value)
    if name in _FLOAT_FIELDS:
        return repr(float(value))
    return str(value)


def _meta_value_from_text(name: str, text: str):
    if name in _INT_FIELDS:
        return int(text, 0)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


@dataclass(eq=False)
class CrpDataset:
    challenges: np.ndarray
    responses: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        self.challenges = np.asarray(self.challenges, dtype=np.uint8).reshape(-1, self.meta.m)
        self.responses = np.asarray(self.responses, dtype=np.uint8).ravel()
        if self.challenges.shape[0] != self.responses.shape[0]:
            raise DimensionError(self.challenges.shape[0], self.responses.shape[0], what="response count")
        if self.responses.size and self.responses.max() > 1:
            raise InvalidParameterError("responses", "responses must be 0 or 1")

    def __len__(self) -> int:
        return self.responses.shape[0]

    def __eq__(self, other) -> bool:
        return (isinstance(other, CrpDataset) and self.meta == other.meta
                and np.array_equal(self.challenges, other.challenges)
                and np.array_equal(self.responses, other.responses))

    def subset(self, indices) -> "CrpDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return CrpDataset(self.challenges[indices], self.responses[indices], self.meta)

    def has_duplicates(self) -> bool:
        return np.unique(self.challenges, axis=0).shape[0] != len(self)


def _first_occurrences(challenges: np.ndarray) -> np.ndarray:
    _, index = np.unique(challenges, axis=0, return_index=True)
    return challenges[np.sort(index)]


def majority_vote(raw: np.ndarray) -> np.ndarray:
    """Modal bit per row of an (n, iterations) 0/1 array with an odd iteration count"""
    iterations = raw.shape[1]
    if iterations % 2 == 0:
        raise InvalidParameterError("iterations", f"majority vote needs an odd iteration count, got {iterations}")
    return (np.count_nonzero(raw == 1, axis=1) > iterations // 2).astype(np.uint8)


def collect_crps(puf: AnyPuf, challenges, obfuscation: Optional[ObfuscationConfig] = None,
                 iterations: int = 3, noise: NoiseModel = NoiseModel(), theta: float = 0.0,
                 chip_seed: int = 0, lfsr: Optional[LfsrSpec] = None) -> CrpDataset:
    """
    Collects converged, majority-voted CRPs.

    The dataset stores the original challenges; the obfuscation front end, when
    given, transforms them before they reach the PUF.
    """
    if iterations < 1 or iterations % 2 == 0:
        raise InvalidParameterError("iterations", f"must be odd and >= 1, got {iterations}")
    challenges = _first_occurrences(as_challenges(challenges, puf.m))
    final = apply_obfuscation(obfuscation, challenges) if obfuscation is not None else challenges

    raw = evaluate_repeated(puf, final, iterations, noise, theta)
    converged = np.all(raw != NON_CONVERGED, axis=1)
    responses = majority_vote(raw[converged]) if np.any(converged) else np.empty(0, dtype=np.uint8)

    lfsr = lfsr or LfsrSpec(width=64, taps=0, seed=0)
    meta = DatasetMeta(
        puf_kind=puf.kind,
        m=puf.m,
        k=puf.k if isinstance(puf, XorPufInstance) else 1,
        chip_seed=int(chip_seed),
        obfuscation=describe(obfuscation),
        lfsr_width=lfsr.width,
        lfsr_taps=lfsr.taps,
        lfsr_seed=lfsr.seed,
        iterations=iterations,
        theta=float(theta),
        sigma=float(noise.sigma),
    )
    return CrpDataset(challenges[converged], responses, meta)


def _write_csv(ds: CrpDataset, stream) -> None:
    for item in fields(DatasetMeta):
        stream.write(f"# {item.name}={_meta_value_to_text(item.name, getattr(ds.meta, item.name))}\n")
    digits = np.array(["0", "1"])
    for challenge, response in zip(ds.challenges, ds.responses):
        stream.write(f"{''.join(digits[challenge])},{response}\n")


def _read_csv(stream) -> CrpDataset:
    header, challenges, responses = {}, [], []
    seen = set()
    m = None
    for line_no, line in enumerate(stream, start=1):
        line = line.rstrip("\n")
        if line.startswith("#"):
            if challenges:
                raise CrpParseError(line_no, "header line after the first record")
            key, sep, value = line[1:].strip().partition("=")
            if not sep or key not in {item.name for item in fields(DatasetMeta)}:
                raise CrpParseError(line_no, f"malformed header line '{line}'")
            try:
                header[key] = _meta_value_from_text(key, value)
            except ValueError:
                raise CrpParseError(line_no, f"bad value for '{key}': '{value}'")
            continue
        if not line:
            continue
        if m is None:
            if missing := _REQUIRED_FIELDS - header.keys():
                raise CrpParseError(line_no, f"header lacks {', '.join(sorted(missing))}")
            if header["schema_version"] != SCHEMA_VERSION:
                raise CrpParseError(line_no, f"unsupported schema_version {header['schema_version']}")
            m = header["m"]
        challenge, sep, response = line.partition(",")
        if not sep:
            raise CrpParseError(line_no, "expected '<challenge>,<response>'")
        if len(challenge) != m:
            raise CrpParseError(line_no, f"challenge has {len(challenge)} bits, header declares m={m}")
        if challenge.strip("01"):
            raise CrpParseError(line_no, "challenge must consist of '0' and '1' characters")
        if response not in ("0", "1"):
            raise CrpParseError(line_no, f"response must be 0 or 1, got '{response}'")
        if challenge in seen:
            raise CrpParseError(line_no, "duplicate challenge")
        seen.add(challenge)
        challenges.append(np.frombuffer(challenge.encode("ascii"), dtype=np.uint8) - ord("0"))
        responses.append(int(response))

    if m is None:
        if missing := _REQUIRED_FIELDS - header.keys():
            raise CrpParseError(1, f"header lacks {', '.join(sorted(missing))}")
        m = header["m"]
    meta = DatasetMeta(**header)
    array = np.array(challenges, dtype=np.uint8).reshape(-1, m)
    return CrpDataset(array, np.array(responses, dtype=np.uint8), meta)


def _write_binary(ds: CrpDataset, stream) -> None:
    meta = json.dumps(asdict(ds.meta), sort_keys=True).encode("utf-8")
    stream.write(BINARY_MAGIC)
    stream.write(struct.pack("<BIQI", BINARY_VERSION, ds.meta.m, len(ds), len(meta)))
    stream.write(meta)
    stream.write(np.packbits(ds.challenges, axis=1, bitorder="little").tobytes())
    stream.write(np.packbits(ds.responses, bitorder="little").tobytes())


def _read_binary(stream) -> CrpDataset:
    if stream.read(4) != BINARY_MAGIC:
        raise CrpParseError(1, "not a CRPD file")
    header = stream.read(struct.calcsize("<BIQI"))
    if len(header) != struct.calcsize("<BIQI"):
        raise CrpParseError(1, "truncated header")
    version, m, n, meta_length = struct.unpack("<BIQI", header)
    if version != BINARY_VERSION:
        raise CrpParseError(1, f"unsupported binary version {version}")
    try:
        meta = DatasetMeta(**json.loads(stream.read(meta_length).decode("utf-8")))
    except (ValueError, TypeError) as e:
        raise CrpParseError(1, f"malformed metadata block: {e}")
    row_bytes = (m + 7) // 8
    packed = np.frombuffer(stream.read(n * row_bytes), dtype=np.uint8)
    if packed.size != n * row_bytes:
        raise CrpParseError(1, "truncated challenge block")
    challenges = np.unpackbits(packed.reshape(n, row_bytes), axis=1, count=m, bitorder="little")
    packed_responses = np.frombuffer(stream.read((n + 7) // 8), dtype=np.uint8)
    responses = np.unpackbits(packed_responses, count=n, bitorder="little")
    return CrpDataset(challenges, responses, meta)


def write_dataset(ds: CrpDataset, path) -> None:
    """Writes CSV, or the packed binary format when the path ends in .crpd"""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if path.suffix == BINARY_SUFFIX:
        with open(tmp, "wb") as f:
            _write_binary(ds, f)
    else:
        with open(tmp, "w", encoding="ascii", newline="\n") as f:
            _write_csv(ds, f)
    os.replace(tmp, path)


def read_dataset(path) -> CrpDataset:
    path = Path(path)
    if path.suffix == BINARY_SUFFIX:
        with open(path, "rb") as f:
            return _read_binary(f)
    with open(path, "r", encoding="ascii", newline="\n") as f:
        return _read_csv(f)


def split_dataset(ds: CrpDataset, train_size: int, test_size: int, seed: int,
                  min_train: int = 0) -> tuple[CrpDataset, CrpDataset]:
    """
    Splits a dataset into disjoint uniformly random train and test subsets.

    The test set is taken from the front of one seeded permutation and the train
    set from right after it, so every train size split with the same seed shares
    one test set and the smaller train sets nest inside the larger ones.
    Attack cells pass min_train=1 so an empty train set is a size error.
    """
    if train_size < 0 or test_size < 0:
        raise InvalidParameterError("size", "split sizes must be >= 0")
    if train_size < min_train:
        raise DatasetSizeError(train_size, len(ds), minimum=min_train)
    if train_size + test_size > len(ds):
        raise DatasetSizeError(train_size + test_size, len(ds))
    order = np.random.default_rng(int(seed)).permutation(len(ds))
    test = ds.subset(order[:test_size])
    train = ds.subset(order[test_size:test_size + train_size])
    return train, test
