"""
PUF quality metrics

Noise, bias, inter-chip normalized Hamming distance, per-bit influence and
convergence rate, computed on converged majority-voted responses.

Contains:
- MetricsReport
- noise_rate(), bias(), inter_chip_nhd(), influence_profile(), convergence_rate()
- characterize_chips() for the multi-chip characterization protocol
- render_metrics_table()
"""

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .crp import majority_vote
from .errors import DimensionError, InvalidParameterError, UndefinedInfluenceError
from .obfuscation import ObfuscationConfig, apply_obfuscation
from .puf import NON_CONVERGED, AnyPuf, EvalOutcome, NoiseModel, as_challenges, evaluate_repeated


@dataclass
class MetricsReport:
    noise: float
    bias: float
    convergence_rate: float
    nhd: dict = field(default_factory=dict)
    influence: list = field(default_factory=list)
    max_influence: float = 0.5
    max_influence_bit: int = 0
    chip_bias: list = field(default_factory=list)
    chip_noise: list = field(default_factory=list)
    chip_convergence: list = field(default_factory=list)
    challenges: int = 0
    iterations: int = 1

    def to_dict(self) -> dict:
        return {
            "noise": self.noise,
            "bias": self.bias,
            "convergenceRate": self.convergence_rate,
            "nhd": dict(self.nhd),
            "influence": [list(row) for row in self.influence],
            "maxInfluence": {"value": self.max_influence, "bit": self.max_influence_bit},
            "chipBias": list(self.chip_bias),
            "chipNoise": list(self.chip_noise),
            "chipConvergence": list(self.chip_convergence),
            "challenges": self.challenges,
            "iterations": self.iterations,
        }


def noise_rate(raw_evals) -> float:
    """
    N = (sum of wrong responses) / (iterations * challenges)

    A wrong response is one that disagrees with the challenge's majority vote.
    """
    raw = np.asarray(raw_evals, dtype=np.int8)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise InvalidParameterError("raw_evals", "expected a nonempty (challenges, iterations) array")
    iterations = raw.shape[1]
    if iterations % 2 == 0:
        raise InvalidParameterError("iterations", f"noise needs an odd iteration count, got {iterations}")
    right = majority_vote(raw)
    wrong = np.count_nonzero(raw != right[:, np.newaxis])
    return wrong / raw.size


def bias(responses) -> float:
    responses = np.asarray(responses)
    if responses.size == 0:
        raise InvalidParameterError("responses", "bias of an empty response list is undefined")
    return float(np.count_nonzero(responses == 1) / responses.size)


def inter_chip_nhd(responses_a, responses_b) -> float:
    a, b = np.asarray(responses_a), np.asarray(responses_b)
    if a.shape != b.shape:
        raise DimensionError(a.size, b.size, what="response list")
    if a.size == 0:
        raise InvalidParameterError("responses", "NHD of empty response lists is undefined")
    return float(np.count_nonzero(a != b) / a.size)


def influence_profile(challenges, responses) -> tuple[np.ndarray, tuple[float, int]]:
    """
    Infl(i, v) = (# responses of 1 among challenges with bit i = v) / (# challenges with bit i = v)

    :return: (m, 2) influence matrix and (value, bit) of the entry deviating most from 0.5
    """
    challenges = np.asarray(challenges, dtype=np.uint8)
    responses = np.asarray(responses, dtype=np.uint8)
    if challenges.ndim != 2 or challenges.shape[0] != responses.shape[0]:
        raise DimensionError(challenges.shape[0], responses.shape[0], what="response list")
    if responses.size == 0:
        raise InvalidParameterError("challenges", "influence of an empty dataset is undefined")

    ones = np.count_nonzero(challenges, axis=0)
    zeros = challenges.shape[0] - ones
    for bit in range(challenges.shape[1]):
        if ones[bit] == 0 or zeros[bit] == 0:
            raise UndefinedInfluenceError(bit)

    ones_responding = responses.astype(np.int64) @ challenges.astype(np.int64)
    zeros_responding = int(responses.sum()) - ones_responding
    influence = np.column_stack([zeros_responding / zeros, ones_responding / ones])

    bit, value = np.unravel_index(np.argmax(np.abs(influence - 0.5)), influence.shape)
    return influence, (float(influence[bit, value]), int(bit))


def convergence_rate(outcomes: Sequence) -> float:
    """Fraction of converged outcomes; accepts EvalOutcome objects or outcome codes"""
    if len(outcomes) == 0:
        raise InvalidParameterError("outcomes", "convergence rate of no outcomes is undefined")
    if isinstance(outcomes[0], EvalOutcome):
        converged = sum(1 for outcome in outcomes if outcome.converged)
        return converged / len(outcomes)
    codes = np.asarray(outcomes)
    return float(np.count_nonzero(codes != NON_CONVERGED) / codes.size)


def characterize_chips(pufs: Sequence[AnyPuf], challenges, iterations: int = 3,
                       noises: Sequence[NoiseModel] | None = None, theta: float = 0.0,
                       obfuscation: ObfuscationConfig | None = None) -> MetricsReport:
    """
    Characterizes several chips on the same challenges.

    Every chip evaluates every challenge `iterations` times. Noise, bias and
    influence use the challenges converged on every chip; noise, convergence and
    influence are averaged over chips, bias is kept per chip as well.
    """
    if not pufs:
        raise InvalidParameterError("pufs", "at least one chip is required")
    if iterations % 2 == 0:
        raise InvalidParameterError("iterations", f"must be odd, got {iterations}")
    noises = list(noises) if noises is not None else [NoiseModel()] * len(pufs)
    challenges = as_challenges(challenges, pufs[0].m)
    final = apply_obfuscation(obfuscation, challenges) if obfuscation is not None else challenges

    raws = [evaluate_repeated(puf, final, iterations, noise, theta) for puf, noise in zip(pufs, noises)]
    converged_per_chip = [np.all(raw != NON_CONVERGED, axis=1) for raw in raws]
    shared = np.logical_and.reduce(converged_per_chip)
    if not np.any(shared):
        raise InvalidParameterError("challenges", "no challenge converged on every chip")

    votes = [majority_vote(raw[shared]) for raw in raws]
    chip_noise = [noise_rate(raw[shared]) for raw in raws]
    chip_bias = [bias(vote) for vote in votes]
    chip_convergence = [float(np.mean(mask)) for mask in converged_per_chip]

    influences = [influence_profile(challenges[shared], vote)[0] for vote in votes]
    influence = np.mean(influences, axis=0)
    bit, value = np.unravel_index(np.argmax(np.abs(influence - 0.5)), influence.shape)

    nhd = {
        f"{i}-{j}": inter_chip_nhd(votes[i], votes[j])
        for i, j in itertools.combinations(range(len(pufs)), 2)
    }
    return MetricsReport(
        noise=float(np.mean(chip_noise)),
        bias=float(np.mean(chip_bias)),
        convergence_rate=float(np.mean(chip_convergence)),
        nhd=nhd,
        influence=influence.tolist(),
        max_influence=float(influence[bit, value]),
        max_influence_bit=int(bit),
        chip_bias=chip_bias,
        chip_noise=chip_noise,
        chip_convergence=chip_convergence,
        challenges=int(challenges.shape[0]),
        iterations=iterations,
    )


def render_metrics_table(report: MetricsReport, label: str = "PUF") -> str:
    rows = [
        ("Noise Avg. (%)", f"{100 * report.noise:.1f}"),
        *[(f"Bias Chip-{i + 1} (%)", f"{100 * value:.1f}") for i, value in enumerate(report.chip_bias)],
        ("Bias Avg. (%)", f"{100 * report.bias:.1f}"),
        ("Inter-chip NHD Avg. (%)", f"{100 * np.mean(list(report.nhd.values())):.1f}" if report.nhd else "-"),
        ("Max Infl. (%)", f"{100 * report.max_influence:.1f} (bit {report.max_influence_bit})"),
        ("Conv. Avg. (%)", f"{100 * report.convergence_rate:.1f}"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Metric':<{width}}  {label}", f"{'-' * width}  {'-' * max(len(label), 8)}"]
    lines += [f"{name:<{width}}  {value}" for name, value in rows]
    return "\n".join(lines)
