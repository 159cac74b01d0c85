"""
Polynomial-kernel SVM trained by sequential minimal optimization

The soft-margin dual is solved two coordinates at a time. Each step picks the
maximal violating pair and stops once the violation gap drops below the KKT
tolerance. Kernel rows are computed on demand and kept in an LRU cache.

    k(x, z) = (x . z / m + 1) ^ degree

Contains:
- SvmModel
- train_svm_poly(), grid_search_svm()
- svm_decision(), svm_predict(), svm_accuracy(), kkt_violations()
"""

import itertools
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from ptlibs.ptprinthelper import ptprint

from .crp import CrpDataset
from .errors import DatasetSizeError, InvalidParameterError, OptimizerError
from .mlp import encode_challenges

DEFAULT_CAP = 10_000
DEFAULT_TOL = 1e-3
DEFAULT_CACHE_ROWS = 2000
TAU = 1e-12


def poly_kernel(x: np.ndarray, z: np.ndarray, degree: int) -> np.ndarray:
    return (x @ z.T / x.shape[1] + 1.0) ** degree


class KernelCache:
    """LRU cache of kernel matrix rows"""

    def __init__(self, x: np.ndarray, degree: int, max_rows: int):
        self.x = x
        self.degree = degree
        self.max_rows = max(2, max_rows)
        self.rows = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        if i in self.rows:
            self.rows.move_to_end(i)
            self.hits += 1
            return self.rows[i]
        self.misses += 1
        row = poly_kernel(self.x[i:i + 1], self.x, self.degree)[0]
        self.rows[i] = row
        if len(self.rows) > self.max_rows:
            self.rows.popitem(last=False)
        return row


@dataclass(eq=False)
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray          # alpha_i * y_i of the support vectors
    intercept: float
    degree: int
    C: float
    support_index: np.ndarray = None   # positions of the support vectors in the training set
    iterations: int = 0

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[0]


def _solve_dual(x: np.ndarray, y: np.ndarray, degree: int, C: float, tol: float, max_iter: int,
                cache_rows: int, verbose: bool) -> tuple[np.ndarray, float, int]:
    n = x.shape[0]
    cache = KernelCache(x, degree, cache_rows)
    diagonal = (np.einsum("ij,ij->i", x, x) / x.shape[1] + 1.0) ** degree
    alpha = np.zeros(n)
    gradient = -np.ones(n)
    positive = y > 0

    iteration = 0
    gap = np.inf
    while True:
        score = -y * gradient
        up = (positive & (alpha < C)) | (~positive & (alpha > 0))
        low = (positive & (alpha > 0)) | (~positive & (alpha < C))
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap < tol:
            break
        if iteration >= max_iter:
            raise OptimizerError(iteration, float(gap), int(np.count_nonzero(alpha)))
        iteration += 1

        q_i = y[i] * y * cache.row(i)
        q_j = y[j] * y * cache.row(j)
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diagonal[i] + diagonal[j] + 2 * q_i[j], TAU)
            delta = (-gradient[i] - gradient[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(diagonal[i] + diagonal[j] - 2 * q_i[j], TAU)
            delta = (gradient[i] - gradient[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total

        gradient += q_i * (alpha[i] - old_i) + q_j * (alpha[j] - old_j)
        if verbose and iteration % 10_000 == 0:
            ptprint(f"SMO iteration {iteration}: gap={gap:.3e}, cache hits={cache.hits}",
                    "ADDITIONS", verbose, indent=8, colortext=True)

    score = -y * gradient
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        intercept = float(np.mean(score[free]))
    else:
        up = (positive & (alpha < C)) | (~positive & (alpha > 0))
        low = (positive & (alpha > 0)) | (~positive & (alpha < C))
        upper = score[up].max() if np.any(up) else 0.0
        lower = score[low].min() if np.any(low) else 0.0
        intercept = float((upper + lower) / 2)
    return alpha, intercept, iteration


def train_svm_arrays(x, labels, degree: int = 4, C: float = 1.0, tol: float = DEFAULT_TOL,
                     cap: int = DEFAULT_CAP, max_iter: Optional[int] = None,
                     cache_rows: int = DEFAULT_CACHE_ROWS, verbose: bool = False) -> SvmModel:
    """Trains on encoded features x with 0/1 labels (mapped to -1/+1 internally)"""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    n = x.shape[0]
    if n > cap:
        raise DatasetSizeError(n, cap)
    if n == 0:
        raise InvalidParameterError("train", "training set is empty")
    if degree < 1:
        raise InvalidParameterError("degree", f"must be >= 1, got {degree}")
    if not C > 0:
        raise InvalidParameterError("C", f"must be positive, got {C}")
    if np.unique(labels).size < 2:
        raise InvalidParameterError("train", "SVM needs both response classes")
    y = np.where(labels == 1, 1.0, -1.0)
    max_iter = max_iter if max_iter is not None else 50 * n + 10_000

    alpha, intercept, iterations = _solve_dual(x, y, degree, C, tol, max_iter, cache_rows, verbose)
    support = alpha > 0
    return SvmModel(
        support_vectors=x[support],
        dual_coef=alpha[support] * y[support],
        intercept=intercept,
        degree=degree,
        C=C,
        support_index=np.flatnonzero(support),
        iterations=iterations,
    )


def train_svm_poly(train: CrpDataset, degree: int = 4, C: float = 1.0, **kwargs) -> SvmModel:
    return train_svm_arrays(encode_challenges(train.challenges), train.responses, degree, C, **kwargs)


def svm_decision(model: SvmModel, x, chunk: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        kernel = poly_kernel(x[start:start + chunk], model.support_vectors, model.degree)
        out[start:start + chunk] = kernel @ model.dual_coef + model.intercept
    return out


def svm_predict(model: SvmModel, challenges) -> np.ndarray:
    return (svm_decision(model, encode_challenges(challenges)) >= 0).astype(np.uint8)


def svm_accuracy(model: SvmModel, test: CrpDataset) -> float:
    if len(test) == 0:
        raise InvalidParameterError("test", "test set is empty")
    return float(np.mean(svm_predict(model, test.challenges) == test.responses))


def kkt_violations(model: SvmModel, x, labels) -> np.ndarray:
    """
    Per-sample KKT violation on the training set the model was fitted on:
    y f(x) >= 1 when alpha = 0, y f(x) = 1 when 0 < alpha < C, y f(x) <= 1 when alpha = C.
    """
    y = np.where(np.asarray(labels).ravel() == 1, 1.0, -1.0)
    alpha = np.zeros(y.size)
    alpha[model.support_index] = np.abs(model.dual_coef)
    margin = y * svm_decision(model, x) - 1.0
    at_zero = alpha <= 0
    at_bound = alpha >= model.C
    free = ~at_zero & ~at_bound
    violation = np.zeros_like(margin)
    violation[at_zero] = np.maximum(0.0, -margin[at_zero])
    violation[at_bound] = np.maximum(0.0, margin[at_bound])
    violation[free] = np.abs(margin[free])
    return violation


def grid_search_svm(train: CrpDataset, validation: CrpDataset, degrees: Sequence[int] = (4,),
                    Cs: Sequence[float] = (1.0,), verbose: bool = False, **kwargs) -> tuple[int, float]:
    """
    Picks the (degree, C) with the highest validation accuracy; ties go to the
    smaller C, then the smaller degree.
    """
    if not degrees or not Cs:
        raise InvalidParameterError("grid", "SVM grid is empty")
    scored = []
    for degree, C in itertools.product(degrees, Cs):
        model = train_svm_poly(train, degree, C, verbose=verbose, **kwargs)
        score = svm_accuracy(model, validation)
        ptprint(f"SVM degree={degree} C={C}: validation accuracy {score:.4f}",
                "ADDITIONS", verbose, indent=8, colortext=True)
        scored.append((-score, C, degree))
    _, best_C, best_degree = min(scored)
    return best_degree, best_C
