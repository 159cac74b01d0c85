"""
Bistable ring PUF simulation

This module simulates BR, TBR and k-input XOR PUFs with the additive strength
model. Every stage i holds a top and a bottom strength difference (t_i, b_i).

BR:  S = sum_i alpha_i + C_i * beta_i
     alpha_i = (-1)^i (t_i + b_i) / 2,  beta_i = (-1)^i (t_i - b_i) / 2
TBR: S = sum_i C_i * (-1)^i (t_i - b_i)

C_i is the challenge bit mapped 0 -> -1, 1 -> +1. The response is 1 when S > 0
and 0 when S < 0. A ring whose |S| falls below the convergence threshold theta
(or S == 0) is reported as non-converged.

Contains:
- StageStrengths, BrPufInstance, TbrPufInstance, XorPufInstance, NoiseModel, EvalOutcome
- new_br_instance(), new_tbr_instance(), new_xor_instance() to manufacture instances
- evaluate_br(), evaluate_tbr(), evaluate_xor() for single challenges
- evaluate_many(), evaluate_repeated() for bulk evaluation
- calibrate_threshold(), calibrate_noise() to match the measured silicon characteristics
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr

from .errors import DimensionError, InvalidParameterError
from .seeds import derive_seed

NON_CONVERGED = -1

BR = "br"
TBR = "tbr"
XOR_BR = "xor_br"
XOR_TBR = "xor_tbr"
PUF_KINDS = (BR, TBR, XOR_BR, XOR_TBR)


@dataclass(frozen=True)
class StageStrengths:
    t: float
    b: float


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian perturbation added to every raw sum before its sign is taken"""
    sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidParameterError("sigma", f"must be a finite value >= 0, got {self.sigma}")


@dataclass(frozen=True)
class EvalOutcome:
    converged: bool
    bit: Optional[int] = None

    @classmethod
    def from_code(cls, code: int) -> "EvalOutcome":
        if code == NON_CONVERGED:
            return cls(False)
        return cls(True, int(code))


def _read_only(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.flags.writeable = False
    return array


def _alternating_sign(m: int) -> np.ndarray:
    return np.where(np.arange(m) % 2 == 0, 1.0, -1.0)


def _validate_strengths(t: np.ndarray, b: np.ndarray) -> None:
    if t.ndim != 1 or t.shape != b.shape:
        raise DimensionError(t.size, b.size, what="strength vectors")
    if t.size < 2 or t.size % 2:
        raise InvalidParameterError("m", f"stage count must be even and >= 2, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(b))):
        raise InvalidParameterError("stages", "strength differences must be finite")


@dataclass(frozen=True, eq=False)
class BrPufInstance:
    t: np.ndarray
    b: np.ndarray
    seed: int = 0
    alpha: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)

    kind = BR

    def __post_init__(self):
        t, b = _read_only(self.t), _read_only(self.b)
        _validate_strengths(t, b)
        sign = _alternating_sign(t.size)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", _read_only(sign * (t + b) / 2))
        object.__setattr__(self, "beta", _read_only(sign * (t - b) / 2))

    @property
    def m(self) -> int:
        return self.t.size

    @property
    def stages(self) -> list[StageStrengths]:
        return [StageStrengths(float(t), float(b)) for t, b in zip(self.t, self.b)]

    def sums(self, signed: np.ndarray) -> np.ndarray:
        """Raw sums for +-1 encoded challenges of shape (n, m)"""
        return self.alpha.sum() + signed @ self.beta

    def beta_only_sums(self, signed: np.ndarray) -> np.ndarray:
        return signed @ self.beta


@dataclass(frozen=True, eq=False)
class TbrPufInstance:
    t: np.ndarray
    b: np.ndarray
    seed: int = 0
    weights: np.ndarray = field(init=False, repr=False)

    kind = TBR

    def __post_init__(self):
        t, b = _read_only(self.t), _read_only(self.b)
        _validate_strengths(t, b)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "weights", _read_only(_alternating_sign(t.size) * (t - b)))

    @property
    def m(self) -> int:
        return self.t.size

    @property
    def stages(self) -> list[StageStrengths]:
        return [StageStrengths(float(t), float(b)) for t, b in zip(self.t, self.b)]

    def sums(self, signed: np.ndarray) -> np.ndarray:
        return signed @ self.weights


SinglePuf = Union[BrPufInstance, TbrPufInstance]


@dataclass(frozen=True, eq=False)
class XorPufInstance:
    """k constituents fed the same challenge, responses combined by XOR"""
    kind: str
    constituents: tuple

    def __post_init__(self):
        constituents = tuple(self.constituents)
        if not constituents:
            raise InvalidParameterError("constituents", "an XOR PUF needs at least one constituent")
        if self.kind not in (XOR_BR, XOR_TBR):
            raise InvalidParameterError("kind", f"unknown XOR kind '{self.kind}'")
        expected = BrPufInstance if self.kind == XOR_BR else TbrPufInstance
        for puf in constituents:
            if not isinstance(puf, expected):
                raise InvalidParameterError("constituents", f"{self.kind} accepts only {expected.__name__}")
            if puf.m != constituents[0].m:
                raise DimensionError(constituents[0].m, puf.m, what="constituent stage count")
        object.__setattr__(self, "constituents", constituents)

    @property
    def k(self) -> int:
        return len(self.constituents)

    @property
    def m(self) -> int:
        return self.constituents[0].m

    @classmethod
    def from_seeds(cls, kind: str, m: int, seeds: Sequence[int]) -> "XorPufInstance":
        factory = new_br_instance if kind == XOR_BR else new_tbr_instance
        return cls(kind, tuple(factory(m, seed) for seed in seeds))


AnyPuf = Union[BrPufInstance, TbrPufInstance, XorPufInstance]


def _draw_strengths(m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(m, (int, np.integer)) or m < 2 or m % 2:
        raise InvalidParameterError("m", f"stage count must be even and >= 2, got {m}")
    rng = np.random.default_rng(int(seed))
    t = rng.standard_normal(m)
    b = rng.standard_normal(m)
    return t, b


def new_br_instance(m: int, seed: int) -> BrPufInstance:
    """Manufactures a BR PUF with i.i.d. standard normal strength differences"""
    t, b = _draw_strengths(m, seed)
    return BrPufInstance(t, b, seed=int(seed))


def new_tbr_instance(m: int, seed: int) -> TbrPufInstance:
    t, b = _draw_strengths(m, seed)
    return TbrPufInstance(t, b, seed=int(seed))


def new_xor_instance(kind: str, m: int, k: int, seed: int) -> XorPufInstance:
    """Constituent j is manufactured from derive_seed(seed, "constituent", j)"""
    if k < 1:
        raise InvalidParameterError("k", f"XOR input count must be >= 1, got {k}")
    seeds = [derive_seed(seed, "constituent", j) for j in range(k)]
    return XorPufInstance.from_seeds(kind, m, seeds)


def new_instance(kind: str, m: int, k: int, seed: int) -> AnyPuf:
    if kind == BR:
        return new_br_instance(m, seed)
    if kind == TBR:
        return new_tbr_instance(m, seed)
    if kind in (XOR_BR, XOR_TBR):
        return new_xor_instance(kind, m, k, seed)
    raise InvalidParameterError("kind", f"unknown PUF kind '{kind}', expected one of {', '.join(PUF_KINDS)}")


def as_challenges(challenges, m: int) -> np.ndarray:
    """Validates a challenge or a batch of challenges and returns an (n, m) uint8 array"""
    array = np.asarray(challenges, dtype=np.uint8)
    if array.ndim == 1:
        array = array[np.newaxis, :]
    if array.ndim != 2 or array.shape[1] != m:
        raise DimensionError(m, array.shape[-1] if array.ndim else 0)
    if array.size and array.max() > 1:
        raise InvalidParameterError("challenge", "bits must be 0 or 1")
    return array


def to_signed(challenges: np.ndarray) -> np.ndarray:
    """0 -> -1, 1 -> +1"""
    return 2.0 * np.asarray(challenges, dtype=np.float64) - 1.0


def constituent_sums(puf: AnyPuf, challenges) -> np.ndarray:
    """Noise-free raw sums, shape (n, k); k = 1 for a single BR/TBR instance"""
    challenges = as_challenges(challenges, puf.m)
    signed = to_signed(challenges)
    if isinstance(puf, XorPufInstance):
        return np.column_stack([p.sums(signed) for p in puf.constituents])
    return puf.sums(signed)[:, np.newaxis]


def _outcome_codes(sums: np.ndarray, theta: float) -> np.ndarray:
    converged = np.all((np.abs(sums) >= theta) & (sums != 0), axis=1)
    response = (np.count_nonzero(sums > 0, axis=1) % 2).astype(np.int8)
    return np.where(converged, response, NON_CONVERGED).astype(np.int8)


def evaluate_many(puf: AnyPuf, challenges, noise: NoiseModel = NoiseModel(), theta: float = 0.0,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Evaluates a batch of challenges.

    Without rng the noise is drawn from a generator seeded with noise.rng_seed,
    so calls with the same NoiseModel repeat the same draw. Pass one Generator
    to successive calls for independent draws.

    :return: int8 array with the response bit per challenge, NON_CONVERGED (-1)
             where any constituent's |S| is below theta
    """
    if theta < 0:
        raise InvalidParameterError("theta", f"must be >= 0, got {theta}")
    sums = constituent_sums(puf, challenges)
    if noise.sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(noise.rng_seed)
        sums = sums + rng.normal(0.0, noise.sigma, size=sums.shape)
    return _outcome_codes(sums, theta)


def evaluate_repeated(puf: AnyPuf, challenges, iterations: int, noise: NoiseModel = NoiseModel(),
                      theta: float = 0.0) -> np.ndarray:
    """
    Evaluates every challenge `iterations` times, shape (n, iterations).

    Iteration r draws its noise from the stream seeded by (noise.rng_seed, r),
    row i of that stream always belongs to challenge i.
    """
    if iterations < 1:
        raise InvalidParameterError("iterations", f"must be >= 1, got {iterations}")
    if noise.sigma == 0:
        codes = evaluate_many(puf, challenges, noise, theta)
        return np.repeat(codes[:, np.newaxis], iterations, axis=1)
    columns = [
        evaluate_many(puf, challenges, noise, theta, rng=np.random.default_rng([noise.rng_seed, r]))
        for r in range(iterations)
    ]
    return np.column_stack(columns)


def _evaluate_one(puf: AnyPuf, c, noise: NoiseModel, theta: float,
                  rng: Optional[np.random.Generator]) -> EvalOutcome:
    challenge = np.asarray(c, dtype=np.uint8)
    if challenge.ndim != 1:
        raise DimensionError(1, challenge.ndim, what="challenge rank")
    return EvalOutcome.from_code(int(evaluate_many(puf, challenge, noise, theta, rng)[0]))


def evaluate_br(puf: BrPufInstance, c, noise: NoiseModel = NoiseModel(), theta: float = 0.0,
                rng: Optional[np.random.Generator] = None) -> EvalOutcome:
    if not isinstance(puf, BrPufInstance):
        raise InvalidParameterError("puf", "evaluate_br expects a BrPufInstance")
    return _evaluate_one(puf, c, noise, theta, rng)


def evaluate_tbr(puf: TbrPufInstance, c, noise: NoiseModel = NoiseModel(), theta: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> EvalOutcome:
    if not isinstance(puf, TbrPufInstance):
        raise InvalidParameterError("puf", "evaluate_tbr expects a TbrPufInstance")
    return _evaluate_one(puf, c, noise, theta, rng)


def evaluate_xor(puf: XorPufInstance, c, noise: NoiseModel = NoiseModel(), theta: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> EvalOutcome:
    if not isinstance(puf, XorPufInstance):
        raise InvalidParameterError("puf", "evaluate_xor expects an XorPufInstance")
    return _evaluate_one(puf, c, noise, theta, rng)


def _margins(puf: AnyPuf, sample) -> np.ndarray:
    """Smallest constituent |S| per challenge; 0 where any constituent sums to exactly 0"""
    return np.abs(constituent_sums(puf, sample)).min(axis=1)


def convergence_mask(puf: AnyPuf, challenges, theta: float) -> np.ndarray:
    margins = _margins(puf, challenges)
    return (margins >= theta) & (margins > 0)


def calibrate_threshold(puf: AnyPuf, target_rate: float, sample, rel_precision: float = 1e-6) -> float:
    """
    Finds the convergence threshold theta for a target convergence rate.

    The rate is nonincreasing in theta, so the result is the smallest theta at
    which the noise-free convergence rate on the sample has dropped to
    target_rate or below. A target of 1.0 gives theta = 0.

    :return: theta, located by bisection to relative precision rel_precision
    """
    if not 0 < target_rate <= 1:
        raise InvalidParameterError("target_rate", f"must lie in (0, 1], got {target_rate}")
    margins = _margins(puf, sample)
    if margins.size == 0:
        raise InvalidParameterError("sample", "calibration sample is empty")

    def rate(theta: float) -> float:
        return float(np.mean((margins >= theta) & (margins > 0)))

    if rate(0.0) <= target_rate:
        return 0.0

    low, high = 0.0, float(np.nextafter(margins.max(), np.inf))
    while high - low > rel_precision * high:
        middle = (low + high) / 2
        if rate(middle) <= target_rate:
            high = middle
        else:
            low = middle
    return high


def expected_flip_rate(puf: AnyPuf, sample, sigma: float, theta: float = 0.0) -> float:
    """Expected single-evaluation error rate over the converged sample challenges"""
    sums = constituent_sums(puf, sample)
    converged = np.all((np.abs(sums) >= theta) & (sums != 0), axis=1)
    if not np.any(converged):
        return 0.0
    if sigma == 0:
        return 0.0
    flip = ndtr(-np.abs(sums[converged]) / sigma)
    return float(np.mean((1.0 - np.prod(1.0 - 2.0 * flip, axis=1)) / 2.0))


def calibrate_noise(puf: AnyPuf, target_error: float, sample, theta: float = 0.0,
                    rel_precision: float = 1e-6) -> float:
    """
    Finds sigma whose expected single-evaluation error rate equals target_error.

    A constituent flips with probability ndtr(-|S|/sigma); the XOR output flips
    when an odd number of constituents flip.
    """
    if not 0 < target_error < 0.5:
        raise InvalidParameterError("target_error", f"must lie in (0, 0.5), got {target_error}")

    low, high = 0.0, 1.0
    for _ in range(64):
        if expected_flip_rate(puf, sample, high, theta) >= target_error:
            break
        low, high = high, high * 2
    else:
        raise InvalidParameterError("target_error", "unreachable with the given sample")

    while high - low > rel_precision * high:
        middle = (low + high) / 2
        if expected_flip_rate(puf, sample, middle, theta) >= target_error:
            high = middle
        else:
            low = middle
    return high


def instance_to_dict(puf: AnyPuf) -> dict:
    if isinstance(puf, XorPufInstance):
        return {"kind": puf.kind, "m": puf.m, "k": puf.k,
                "constituents": [instance_to_dict(p) for p in puf.constituents]}
    return {"kind": puf.kind, "m": puf.m, "seed": puf.seed, "t": puf.t.tolist(), "b": puf.b.tolist()}


def instance_from_dict(data: dict) -> AnyPuf:
    kind = data.get("kind")
    if kind in (XOR_BR, XOR_TBR):
        return XorPufInstance(kind, tuple(instance_from_dict(item) for item in data["constituents"]))
    if kind == BR:
        return BrPufInstance(data["t"], data["b"], seed=int(data.get("seed", 0)))
    if kind == TBR:
        return TbrPufInstance(data["t"], data["b"], seed=int(data.get("seed", 0)))
    raise InvalidParameterError("kind", f"unknown PUF kind '{kind}'")
