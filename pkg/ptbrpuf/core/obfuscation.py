"""
Challenge obfuscation front ends

Architecture 1 (hierarchical XOR masking) XORs the original challenge with a
fixed mask standing in for a pool of memory-based PUF responses.

Architecture 2 (2-to-1 shuffled challenge) drives every final challenge bit
from a 4-input mux. The mux data inputs are fixed constants with exactly two
ones, and its two selector lines are a pair of original challenge bits. Each
original bit feeds exactly two muxes and no pair repeats. The mux outputs are
finally permuted into their challenge positions.

Contains:
- MaskConfig, ShuffleConfig
- new_mask_config(), apply_mask()
- new_shuffle_config(), apply_shuffle()
- config_to_dict(), config_from_dict(), save_config(), load_config()
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DimensionError, GenerationError, InvalidParameterError
from .puf import as_challenges

MASK = "mask"
SHUFFLE = "shuffle"
OBFUSCATION_KINDS = (MASK, SHUFFLE)

MAX_PAIRING_ATTEMPTS = 10_000

# The six mux constant arrangements holding exactly two ones, indexed by the
# selector value 2*c[a] + c[b]
MUX_CONSTANTS = np.array(
    [[1 if i in ones else 0 for i in range(4)] for ones in itertools.combinations(range(4), 2)],
    dtype=np.uint8,
)


def _bits_to_str(bits: np.ndarray) -> str:
    return "".join("1" if bit else "0" for bit in bits)


def _str_to_bits(text: str) -> np.ndarray:
    if any(char not in "01" for char in text):
        raise InvalidParameterError("bits", f"'{text}' is not a 0/1 string")
    return np.array([int(char) for char in text], dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class MaskConfig:
    mask: np.ndarray
    seed: int = 0

    kind = MASK

    def __post_init__(self):
        mask = np.array(self.mask, dtype=np.uint8)
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)

    @property
    def m(self) -> int:
        return self.mask.size

    def __eq__(self, other):
        return isinstance(other, MaskConfig) and self.seed == other.seed and np.array_equal(self.mask, other.mask)


@dataclass(frozen=True, eq=False)
class ShuffleConfig:
    pairs: np.ndarray
    constants: np.ndarray
    position_perm: np.ndarray
    seed: int = 0
    n_to_one: int = field(default=2)

    kind = SHUFFLE

    def __post_init__(self):
        for name, dtype in (("pairs", np.int64), ("constants", np.uint8), ("position_perm", np.int64)):
            array = np.array(getattr(self, name), dtype=dtype)
            array.flags.writeable = False
            object.__setattr__(self, name, array)
        if self.n_to_one != 2:
            raise InvalidParameterError("n_to_one", "only the 2-to-1 architecture is implemented")

    @property
    def m(self) -> int:
        return self.position_perm.size

    def __eq__(self, other):
        return (isinstance(other, ShuffleConfig) and self.seed == other.seed
                and np.array_equal(self.pairs, other.pairs)
                and np.array_equal(self.constants, other.constants)
                and np.array_equal(self.position_perm, other.position_perm))

    def violations(self) -> list[str]:
        """Lists every structural constraint the config breaks, empty when valid"""
        problems = []
        m = self.m
        if self.pairs.shape != (m, 2):
            return [f"expected {m} selector pairs, got shape {self.pairs.shape}"]
        if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
            problems.append("a pair selects the same bit twice")
        unordered = {tuple(sorted(pair)) for pair in self.pairs.tolist()}
        if len(unordered) != m:
            problems.append("a selector pair is repeated")
        degree = np.bincount(self.pairs.ravel(), minlength=m)
        if degree.size != m or np.any(degree != 2):
            problems.append("not every bit feeds exactly two muxes")
        if self.constants.shape != (m, 4) or np.any(self.constants.sum(axis=1) != 2):
            problems.append("mux constants must hold exactly two ones")
        if not np.array_equal(np.sort(self.position_perm), np.arange(m)):
            problems.append("position permutation is not a bijection")
        return problems


ObfuscationConfig = Union[MaskConfig, ShuffleConfig]


def new_mask_config(m: int, seed: int) -> MaskConfig:
    """Mask with exactly m/2 ones at uniformly chosen positions"""
    if m < 2 or m % 2:
        raise InvalidParameterError("m", f"stage count must be even, got {m}")
    rng = np.random.default_rng(int(seed))
    mask = np.zeros(m, dtype=np.uint8)
    mask[rng.choice(m, size=m // 2, replace=False)] = 1
    return MaskConfig(mask, seed=int(seed))


def apply_mask(cfg: MaskConfig, c) -> np.ndarray:
    """XORs the mask into one challenge or a batch of challenges"""
    single = np.ndim(c) == 1
    challenges = as_challenges(c, cfg.m)
    out = challenges ^ cfg.mask
    return out[0] if single else out


def _sample_pairing(m: int, rng: np.random.Generator) -> np.ndarray:
    """
    Configuration-model sampling of a simple 2-regular graph: every vertex gets
    two stubs, stubs are shuffled and matched in order. Matchings with a
    self-loop or a repeated edge are rejected.
    """
    stubs = np.repeat(np.arange(m), 2)
    rng.shuffle(stubs)
    pairs = stubs.reshape(m, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        return None
    edges = np.sort(pairs, axis=1)
    if np.unique(edges, axis=0).shape[0] != m:
        return None
    return pairs


def new_shuffle_config(m: int, seed: int, max_attempts: int = MAX_PAIRING_ATTEMPTS) -> ShuffleConfig:
    if m < 4 or m % 2:
        raise InvalidParameterError("m", f"stage count must be even and >= 4, got {m}")
    rng = np.random.default_rng(int(seed))
    for _ in range(max_attempts):
        pairs = _sample_pairing(m, rng)
        if pairs is not None:
            break
    else:
        raise GenerationError(int(seed), max_attempts)

    constants = MUX_CONSTANTS[rng.integers(0, len(MUX_CONSTANTS), size=m)]
    position_perm = rng.permutation(m)
    return ShuffleConfig(pairs, constants, position_perm, seed=int(seed))


def apply_shuffle(cfg: ShuffleConfig, c) -> np.ndarray:
    """
    intermediate[j] = constants[j][2*c[a_j] + c[b_j]]
    output[position_perm[j]] = intermediate[j]
    """
    single = np.ndim(c) == 1
    challenges = as_challenges(c, cfg.m)
    selectors = 2 * challenges[:, cfg.pairs[:, 0]] + challenges[:, cfg.pairs[:, 1]]
    intermediate = cfg.constants[np.arange(cfg.m), selectors]
    out = np.empty_like(challenges)
    out[:, cfg.position_perm] = intermediate
    return out[0] if single else out


def new_obfuscation(kind: str, m: int, seed: int) -> ObfuscationConfig:
    if kind == MASK:
        return new_mask_config(m, seed)
    if kind == SHUFFLE:
        return new_shuffle_config(m, seed)
    raise InvalidParameterError("obfuscation", f"unknown obfuscation '{kind}', expected one of {', '.join(OBFUSCATION_KINDS)}")


def apply_obfuscation(cfg: ObfuscationConfig, c) -> np.ndarray:
    if isinstance(cfg, MaskConfig):
        return apply_mask(cfg, c)
    return apply_shuffle(cfg, c)


def describe(cfg: ObfuscationConfig | None) -> str:
    """Short provenance label stored in dataset metadata"""
    if cfg is None:
        return ""
    return f"{cfg.kind}:seed={cfg.seed}"


def config_to_dict(cfg: ObfuscationConfig) -> dict:
    if isinstance(cfg, MaskConfig):
        return {"kind": MASK, "m": cfg.m, "seed": cfg.seed, "mask": _bits_to_str(cfg.mask)}
    return {
        "kind": SHUFFLE,
        "m": cfg.m,
        "seed": cfg.seed,
        "n_to_one": cfg.n_to_one,
        "selector_order": "a_high",
        "pairs": cfg.pairs.tolist(),
        "constants": [_bits_to_str(row) for row in cfg.constants],
        "perm": cfg.position_perm.tolist(),
    }


def config_from_dict(data: dict) -> ObfuscationConfig:
    kind = data.get("kind")
    if kind == MASK:
        cfg = MaskConfig(_str_to_bits(data["mask"]), seed=int(data["seed"]))
    elif kind == SHUFFLE:
        cfg = ShuffleConfig(
            np.array(data["pairs"]),
            np.array([_str_to_bits(row) for row in data["constants"]]),
            np.array(data["perm"]),
            seed=int(data["seed"]),
            n_to_one=int(data.get("n_to_one", 2)),
        )
        if problems := cfg.violations():
            raise InvalidParameterError("shuffle config", "; ".join(problems))
    else:
        raise InvalidParameterError("kind", f"unknown obfuscation '{kind}'")
    if cfg.m != int(data["m"]):
        raise DimensionError(int(data["m"]), cfg.m, what="obfuscation config")
    return cfg


def save_config(cfg: ObfuscationConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=4, sort_keys=True), encoding="utf-8")


def load_config(path) -> ObfuscationConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
