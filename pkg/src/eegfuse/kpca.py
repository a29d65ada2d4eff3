# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import dataclasses
import logging

import numpy as np
import scipy.linalg
from sklearn.metrics.pairwise import polynomial_kernel

from .errors import DegeneracyError, ParameterError
from .types import FloatArray
from .util import numpy_rng

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-12
KPCA_COMPONENTS = 10
KPCA_DEGREE = 3
KPCA_COEF0 = 1.0
# relative to the largest eigenvalue
POSITIVE_TOLERANCE = 1e-10


@dataclasses.dataclass(frozen=True, eq=False)
class Standardizer:
    mean: FloatArray
    std: FloatArray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        return standardize_apply(self, X)


def standardize_fit(X: np.ndarray) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ParameterError("standardization needs a matrix with at least two rows")
    return Standardizer(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))


def standardize_apply(s: Standardizer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != s.dim:
        raise ParameterError(f"expected {s.dim} columns, got shape {X.shape}")
    return (X - s.mean) / s.std


def poly_kernel(
    x: np.ndarray,
    y: np.ndarray,
    gamma: float,
    coef0: float = KPCA_COEF0,
    degree: int = KPCA_DEGREE,
) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ParameterError(f"kernel arguments differ in dim: {x.shape[1]} vs {y.shape[1]}")
    return float(polynomial_kernel(x, y, degree=degree, gamma=gamma, coef0=coef0)[0, 0])


@dataclasses.dataclass(frozen=True, eq=False)
class KpcaModel:
    train_matrix: FloatArray
    gamma: float
    coef0: float
    degree: int
    eigenvalues: FloatArray
    alphas: FloatArray
    row_means: FloatArray
    total_mean: float
    n_components: int
    # every positive eigenvalue, retained or not
    spectrum: FloatArray

    @property
    def input_dim(self) -> int:
        return self.train_matrix.shape[1]

    def kernel(self, Y: np.ndarray) -> np.ndarray:
        return polynomial_kernel(
            Y, self.train_matrix, degree=self.degree, gamma=self.gamma, coef0=self.coef0
        )

    def transform(self, Y: np.ndarray) -> np.ndarray:
        return kpca_transform(self, Y)


def _center_gram(K: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    row_means = K.mean(axis=0)
    total_mean = float(row_means.mean())
    centered = K - row_means[None, :] - row_means[:, None] + total_mean
    return centered, row_means, total_mean


def kpca_fit(
    X: np.ndarray,
    n_components: int = KPCA_COMPONENTS,
    gamma: float | None = None,
    coef0: float = KPCA_COEF0,
    degree: int = KPCA_DEGREE,
) -> KpcaModel:
    """
    Fit kernel PCA on standardized rows. ``gamma`` defaults to 1 / input dim.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n_components < 1 or n_components > n - 1:
        raise ParameterError(
            f"n_components must be in [1, {n - 1}] for {n} rows, got {n_components}"
        )
    if gamma is None:
        gamma = 1.0 / X.shape[1]

    K = polynomial_kernel(X, X, degree=degree, gamma=gamma, coef0=coef0)
    centered, row_means, total_mean = _center_gram(K)
    centered = (centered + centered.T) / 2

    values, vectors = scipy.linalg.eigh(centered)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]

    threshold = POSITIVE_TOLERANCE * max(abs(values[0]), 1.0)
    positive = int(np.count_nonzero(values > threshold))
    if positive < n_components:
        raise DegeneracyError(
            f"only {positive} positive eigenvalues, {n_components} components requested",
            achievable=positive,
        )

    vectors = vectors[:, :n_components]
    # largest-magnitude entry of every eigenvector is positive
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(n_components)])
    vectors = vectors * signs

    retained = values[:n_components]
    return KpcaModel(
        train_matrix=X,
        gamma=float(gamma),
        coef0=float(coef0),
        degree=int(degree),
        eigenvalues=retained,
        alphas=vectors / np.sqrt(retained),
        row_means=row_means,
        total_mean=total_mean,
        n_components=n_components,
        spectrum=values[:positive],
    )


def kpca_transform(model: KpcaModel, Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape[1] != model.input_dim:
        raise ParameterError(
            f"KPCA fitted on dim {model.input_dim}, got rows of dim {Y.shape[1]}"
        )
    k = model.kernel(Y)
    centered = k - model.row_means[None, :] - k.mean(axis=1, keepdims=True) + model.total_mean
    return centered @ model.alphas


def explained_variance_curve(model: KpcaModel) -> list[tuple[int, float]]:
    cumulative = np.cumsum(model.spectrum) / model.spectrum.sum()
    cumulative[-1] = 1.0
    return [(k + 1, float(ratio)) for k, ratio in enumerate(cumulative)]


@dataclasses.dataclass(frozen=True, eq=False)
class Reducer:
    """
    Standardization followed by KPCA; ``kpca`` is None when the input is
    already small enough, or reduction is switched off.
    """

    standardizer: Standardizer
    kpca: KpcaModel | None

    @property
    def output_dim(self) -> int:
        return self.standardizer.dim if self.kpca is None else self.kpca.n_components

    def apply(self, X: np.ndarray) -> np.ndarray:
        Z = self.standardizer.apply(X)
        return Z if self.kpca is None else self.kpca.transform(Z)


def fit_reducer(
    X: np.ndarray,
    n_components: int = KPCA_COMPONENTS,
    reduce: bool = True,
    gamma: float | None = None,
    coef0: float = KPCA_COEF0,
    degree: int = KPCA_DEGREE,
    max_rows: int | None = None,
    seed: int = 0,
) -> Reducer:
    """
    Standardize on every row; fit KPCA on at most ``max_rows`` of them, drawn
    without replacement.
    """
    standardizer = standardize_fit(X)
    if not reduce:
        return Reducer(standardizer, None)
    if standardizer.dim <= n_components:
        logger.info(
            "input dim %d <= %d components, skipping KPCA", standardizer.dim, n_components
        )
        return Reducer(standardizer, None)
    Z = standardizer.apply(X)
    if max_rows is not None and Z.shape[0] > max_rows:
        rows = np.sort(numpy_rng(seed).choice(Z.shape[0], max_rows, replace=False))
        logger.info("fitting KPCA on %d of %d rows", max_rows, Z.shape[0])
        Z = Z[rows]
    return Reducer(standardizer, kpca_fit(Z, n_components, gamma, coef0, degree))
