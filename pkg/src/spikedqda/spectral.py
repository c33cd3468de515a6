"""Symmetric eigendecompositions, eigenvector sign conventions, and PCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in descending order with matching orthonormal columns."""

    values: np.ndarray   # (k,)
    vectors: np.ndarray  # (p, k)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        vectors = np.asarray(self.vectors, dtype=float)
        if values.ndim != 1 or vectors.ndim != 2 or vectors.shape[1] != values.size:
            raise ValueError("values must be (k,) and vectors (p, k)")
        if values.size > 1 and np.any(np.diff(values) > 1e-10 * max(1.0, abs(values[0]))):
            raise ValueError("eigenvalues must be sorted descending")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vectors", vectors)

    @property
    def k(self) -> int:
        return self.values.size

    def top(self, k: int) -> "EigenPairs":
        return EigenPairs(self.values[:k], self.vectors[:, :k])


def sym_eig_desc(a: np.ndarray, k: int | None = None) -> EigenPairs:
    """Top-k eigenpairs of a symmetric matrix, values descending.

    The input is symmetrized as (A + A^T) / 2 before decomposition. Each
    eigenvector gets a deterministic sign: its largest-magnitude coordinate
    is made positive, so results do not depend on the LAPACK backend.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix contains non-finite entries")
    p = a.shape[0]
    if k is None:
        k = p
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= {p}, got k={k}")
    sym = (a + a.T) / 2.0
    values, vectors = np.linalg.eigh(sym)
    values = values[::-1][:k].copy()
    vectors = vectors[:, ::-1][:, :k].copy()
    # Deterministic sign: largest-|coordinate| entry positive.
    lead = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[lead, np.arange(k)])
    signs[signs == 0] = 1.0
    vectors *= signs
    return EigenPairs(values, vectors)


def sign_align(pairs: EigenPairs, reference: np.ndarray) -> EigenPairs:
    """Flip eigenvector signs so that reference . u_j >= 0 for every column.

    Columns exactly orthogonal to the reference are left unchanged.
    Idempotent; never alters eigenvalues or |reference . u_j|.
    """
    reference = np.asarray(reference, dtype=float).reshape(-1)
    if not np.any(reference):
        raise ValueError("reference vector must be non-zero")
    proj = reference @ pairs.vectors
    flip = np.where(proj < 0, -1.0, 1.0)
    return EigenPairs(pairs.values.copy(), pairs.vectors * flip)


class PooledPCA(TransformerMixin, BaseEstimator):
    """Projection onto the top eigenvectors of the pooled (label-free)
    covariance of the fitting data, after subtracting its global mean.

    Fit on the training split only; test data must be transformed with the
    training basis, otherwise test information leaks into the features.
    """

    def __init__(self, n_components: int = 2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        n, d = X.shape
        if not 1 <= self.n_components <= min(n, d):
            raise ValueError(
                f"n_components must be in [1, {min(n, d)}] for data of shape {X.shape}"
            )
        self.mean_ = X.mean(axis=0)
        # Right singular vectors of the centered data are the eigenvectors
        # of the pooled covariance; avoids forming a d x d matrix.
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        self.components_ = vt[: self.n_components]
        self.explained_variance_ = s[: self.n_components] ** 2 / max(n - 1, 1)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, the projection expects {self.n_features_in_}"
            )
        return (X - self.mean_) @ self.components_.T


def pca_fit_transform(
    train: np.ndarray, others: list[np.ndarray], k: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Reduce the training matrix and companion matrices to k dimensions
    using one basis fitted on the training matrix alone."""
    reducer = PooledPCA(n_components=k).fit(train)
    return reducer.transform(train), [reducer.transform(m) for m in others]
