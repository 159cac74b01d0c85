"""
Two-class LDA separability analysis

Projects +-1 encoded challenges onto Fisher's discriminant direction and
measures how much the two response classes overlap along it. Heavy overlap
means no linear model (and no single-layer network) can separate them.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .crp import CrpDataset
from .errors import InvalidParameterError, NumericalError
from .mlp import encode_challenges

RIDGE = 1e-6
DEFAULT_BINS = 64


@dataclass(eq=False)
class LdaResult:
    projection: np.ndarray
    bin_edges: np.ndarray
    histogram0: np.ndarray
    histogram1: np.ndarray
    overlap_coefficient: float
    dprime: float
    threshold: float
    positive_side: int

    def to_dict(self) -> dict:
        return {
            "overlapCoefficient": self.overlap_coefficient,
            "dprime": self.dprime,
            "binEdges": self.bin_edges.tolist(),
            "histogram0": self.histogram0.tolist(),
            "histogram1": self.histogram1.tolist(),
        }


def fit_lda_arrays(x, labels, bins: int = DEFAULT_BINS, ridge: float = RIDGE) -> LdaResult:
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    class0, class1 = x[labels == 0], x[labels == 1]
    if class0.shape[0] == 0 or class1.shape[0] == 0:
        raise InvalidParameterError("dataset", "LDA needs both response classes")

    mean0, mean1 = class0.mean(axis=0), class1.mean(axis=0)
    centered0, centered1 = class0 - mean0, class1 - mean1
    scatter = centered0.T @ centered0 + centered1.T @ centered1
    scatter += ridge * np.eye(x.shape[1])
    try:
        w = linalg.solve(scatter, mean1 - mean0, assume_a="pos")
    except linalg.LinAlgError as e:
        raise NumericalError(f"within-class scatter is singular after ridge: {e}")
    if not np.all(np.isfinite(w)):
        raise NumericalError("LDA projection is not finite")

    projected0, projected1 = class0 @ w, class1 @ w
    low = min(projected0.min(), projected1.min())
    high = max(projected0.max(), projected1.max())
    if high <= low:
        high = low + 1.0
    edges = np.linspace(low, high, bins + 1)
    histogram0 = np.histogram(projected0, bins=edges)[0] / projected0.size
    histogram1 = np.histogram(projected1, bins=edges)[0] / projected1.size
    overlap = float(np.minimum(histogram0, histogram1).sum())

    centre0, centre1 = projected0.mean(), projected1.mean()
    pooled = np.sqrt((projected0.var() + projected1.var()) / 2)
    dprime = float(abs(centre1 - centre0) / pooled) if pooled > 0 else 0.0
    return LdaResult(
        projection=w,
        bin_edges=edges,
        histogram0=histogram0,
        histogram1=histogram1,
        overlap_coefficient=min(overlap, 1.0),
        dprime=dprime,
        threshold=float((centre0 + centre1) / 2),
        positive_side=1 if centre1 >= centre0 else -1,
    )


def fit_lda(dataset: CrpDataset, bins: int = DEFAULT_BINS) -> LdaResult:
    return fit_lda_arrays(encode_challenges(dataset.challenges), dataset.responses, bins)


def lda_predict(result: LdaResult, challenges) -> np.ndarray:
    """Classifies by which side of the midpoint between the projected class means a challenge falls"""
    projected = encode_challenges(challenges) @ result.projection
    return (result.positive_side * (projected - result.threshold) >= 0).astype(np.uint8)


def lda_accuracy(result: LdaResult, test: CrpDataset) -> float:
    if len(test) == 0:
        raise InvalidParameterError("test", "test set is empty")
    return float(np.mean(lda_predict(result, test.challenges) == test.responses))
