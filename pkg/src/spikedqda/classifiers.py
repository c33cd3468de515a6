"""Trainable decision rules and their evaluation.

Four classifiers share the same two-class discriminant convention: the
decision score is positive for the first class (``classes_[0]``), negative
for the second, and an exact zero is resolved to the second class.

* :class:`ImprovedQDA` - quadratic rule whose inverse-covariance estimate
  keeps the sample spike eigenvectors but replaces the biased sample
  eigenvalues with weights chosen to maximize the asymptotic class
  separation. Scoring never forms a p x p matrix.
* :class:`RidgeQDA` - quadratic rule with ridge inverse-covariance
  estimates (I + gamma * S)^{-1}; the per-class eigendecompositions are
  cached so a whole gamma grid can be scored after a single fit.
* :class:`OracleQDA` - the rule with the true generating populations
  plugged in; synthetic-data yardstick.
* :class:`KNNClassifier` - majority vote over the k nearest training
  points, ties resolved by the single nearest neighbor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import (
    DegenerateObjectiveError,
    DegenerateSeparationError,
    SpikedQdaWarning,
    VarianceDegeneracyError,
)
from .fisher import assemble_coefficients, optimal_eta, optimal_w
from .population import ClassModel, LabeledDataset
from .spikes import (
    EDGE_MARGIN,
    SPIKE_DROP_MARGIN,
    ClassSummary,
    estimate_spikes,
    summarize_class,
)


# ---------------------------------------------------------------------------
# Improved QDA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpQdaRule:
    """Fitted decision rule in factored form.

    The class-i inverse-covariance estimate is
    (1/sigma2_i) * (I + sum_j weights_i[j] * u_j u_j^T) with u_j the columns
    of ``vectors[i]``; only means, weights and the p x r_i eigenvector
    blocks are stored.
    """

    means: tuple[np.ndarray, np.ndarray]
    sigma2: tuple[float, float]
    vectors: tuple[np.ndarray, np.ndarray]
    weights: tuple[np.ndarray, np.ndarray]
    eta: float

    def __post_init__(self):
        for i in range(2):
            if np.any(self.weights[i] <= -1.0):
                warnings.warn(
                    f"class {i} has a spike weight <= -1; the implied "
                    "inverse-covariance estimate is not positive definite",
                    category=SpikedQdaWarning,
                    stacklevel=3,
                )

    @property
    def dim(self) -> int:
        return self.means[0].size

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Decision scores for row vectors, in O(p (r0 + r1)) per row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.eta)
        for i, half in ((0, -0.5), (1, 0.5)):
            d = X - self.means[i]
            quad = np.einsum("ij,ij->i", d, d)
            if self.weights[i].size:
                proj = d @ self.vectors[i]
                quad = quad + (proj * proj) @ self.weights[i]
            out = out + half / self.sigma2[i] * quad
        return out


def _pair(value, name: str) -> tuple:
    """Broadcast a scalar or 2-sequence hyperparameter to a (v0, v1) pair."""
    if value is None:
        return None, None
    if np.isscalar(value):
        return value, value
    pair = tuple(value)
    if len(pair) != 2:
        raise ValueError(f"{name} must be a scalar or a pair, got {value!r}")
    return pair


class ImprovedQDA(ClassifierMixin, BaseEstimator):
    """Spike-aware quadratic discriminant classifier.

    Parameters
    ----------
    sigma2 : float, pair of floats, or None
        Known per-class noise variances. Estimated from the sample spectra
        when None.
    n_spikes : int, pair of ints, or None
        Known per-class spike counts. Estimated when None.
    variant : {"general", "simplified"}
        Coefficient tables used for the weight optimization; "general"
        keeps the ratio of the two noise variances.
    spike_drop_margin : float
        Relative margin above the detectability threshold sqrt(c) below
        which an estimated spike is discarded.
    edge_margin : float
        Relative margin above the noise bulk edge used when counting
        spikes (only relevant when estimates are needed).
    """

    def __init__(
        self,
        sigma2=None,
        n_spikes=None,
        variant: str = "general",
        spike_drop_margin: float = SPIKE_DROP_MARGIN,
        edge_margin: float = EDGE_MARGIN,
    ):
        self.sigma2 = sigma2
        self.n_spikes = n_spikes
        self.variant = variant
        self.spike_drop_margin = spike_drop_margin
        self.edge_margin = edge_margin

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly 2 classes, got {self.classes_.size}")
        sigma2 = _pair(self.sigma2, "sigma2")
        n_spikes = _pair(self.n_spikes, "n_spikes")
        summaries = []
        for i, label in enumerate(self.classes_):
            rows = X[y == label]
            if rows.shape[0] < 2:
                raise ValueError(f"class {label!r} has fewer than 2 samples")
            summaries.append(
                summarize_class(
                    rows, sigma2=sigma2[i], r=n_spikes[i], delta=self.edge_margin
                )
            )
        return self.fit_summaries(*summaries)

    def fit_summaries(self, s0: ClassSummary, s1: ClassSummary):
        """Fit from precomputed class summaries (shared eigendecompositions)."""
        try:
            est = estimate_spikes(s0, s1, drop_margin=self.spike_drop_margin)
        except DegenerateSeparationError as exc:
            raise DegenerateSeparationError(f"spike estimation failed: {exc}") from exc
        coeffs = assemble_coefficients(est, variant=self.variant)
        try:
            w_star, theta_star = optimal_w(coeffs)
        except (DegenerateObjectiveError, VarianceDegeneracyError) as exc:
            raise type(exc)(f"weight optimization failed: {exc}") from exc
        eta = optimal_eta(coeffs, w_star)

        r1 = est.r1
        self.rule_ = ImpQdaRule(
            means=(s0.mean, s1.mean),
            sigma2=(s0.sigma2, s1.sigma2),
            vectors=est.vectors,
            weights=(w_star[r1:], w_star[:r1]),
            eta=eta,
        )
        self.estimates_ = est
        self.coefficients_ = coeffs
        self.w_star_ = w_star
        self.theta_star_ = theta_star
        self.eta_ = eta
        self.spike_counts_ = (est.r0, est.r1)
        self.n_features_in_ = s0.dim
        if not hasattr(self, "classes_"):
            self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "rule_")
        return self.rule_.scores(check_array(X, dtype=float))

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores > 0, self.classes_[0], self.classes_[1])


# ---------------------------------------------------------------------------
# Ridge-regularized QDA baseline
# ---------------------------------------------------------------------------

def gamma_grid() -> np.ndarray:
    """Default ridge grid: 21 logarithmic steps from 10^-1 to 10^1."""
    return 10.0 ** (np.arange(-10, 11) / 10.0)


class RidgeQDA(ClassifierMixin, BaseEstimator):
    """Quadratic discriminant with ridge inverse-covariance estimates.

    The class-i covariance estimate is inverted as (I + gamma * S_i)^{-1},
    applied through the cached eigendecomposition of the sample covariance
    S_i, so scoring at a new gamma needs no new decomposition (see
    :meth:`with_gamma` and :meth:`decision_grid`).

    Parameters
    ----------
    gamma : float
        Ridge parameter, > 0.
    priors : pair of floats or None
        Class priors for the bias term; estimated from training
        proportions when None.
    """

    def __init__(self, gamma: float = 1.0, priors=None):
        self.gamma = gamma
        self.priors = priors

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly 2 classes, got {self.classes_.size}")
        summaries = [
            summarize_class(X[y == label], sigma2=1.0, r=0) for label in self.classes_
        ]
        self._init_from_summaries(summaries[0], summaries[1])
        # Kept for cross-validated gamma selection on the training split.
        self._train_X, self._train_y = X, y
        return self

    @classmethod
    def from_summaries(
        cls, s0: ClassSummary, s1: ClassSummary, gamma: float = 1.0, priors=None
    ) -> "RidgeQDA":
        """Build a fitted instance from precomputed class summaries."""
        model = cls(gamma=gamma, priors=priors)
        model.classes_ = np.array([0, 1])
        model._init_from_summaries(s0, s1)
        return model

    def _init_from_summaries(self, s0: ClassSummary, s1: ClassSummary):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        counts = np.array([s0.n, s1.n], dtype=float)
        if self.priors is None:
            priors = counts / counts.sum()
        else:
            priors = np.asarray(self.priors, dtype=float)
        self.priors_ = priors
        self.means_ = (s0.mean, s1.mean)
        # Drop the numerically-zero tail so projections cost O(p * rank).
        eigvals, eigvecs = [], []
        for s in (s0, s1):
            vals = np.maximum(s.eigen.values, 0.0)
            keep = vals > vals[0] * 1e-14 if vals.size and vals[0] > 0 else vals > 0
            rank = max(int(np.count_nonzero(keep)), 1)
            eigvals.append(vals[:rank])
            eigvecs.append(s.eigen.vectors[:, :rank])
        self.eigenvalues_ = tuple(eigvals)
        self.eigenvectors_ = tuple(eigvecs)
        self.n_features_in_ = s0.dim
        return self

    def with_gamma(self, gamma: float) -> "RidgeQDA":
        """Fitted copy at another ridge value, sharing all cached arrays."""
        check_is_fitted(self, "eigenvalues_")
        other = RidgeQDA(gamma=gamma, priors=self.priors)
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        for attr in (
            "classes_", "priors_", "means_", "eigenvalues_", "eigenvectors_",
            "n_features_in_", "_train_X", "_train_y",
        ):
            if hasattr(self, attr):
                setattr(other, attr, getattr(self, attr))
        return other

    def _projection_parts(self, X):
        """Per class: squared distances to the mean and squared spectral
        projections, reusable across every gamma."""
        X = check_array(X, dtype=float)
        parts = []
        for i in range(2):
            d = X - self.means_[i]
            sq_norm = np.einsum("ij,ij->i", d, d)
            proj_sq = (d @ self.eigenvectors_[i]) ** 2
            parts.append((sq_norm, proj_sq))
        return parts

    def _bias(self, gamma: float) -> float:
        # log det (I + gamma S_i)^{-1} = -sum_j log(1 + gamma s_j); the
        # zero eigenvalues dropped at fit time contribute log 1 = 0.
        log_det = [-np.sum(np.log1p(gamma * vals)) for vals in self.eigenvalues_]
        return -0.5 * (log_det[1] - log_det[0]) - np.log(
            self.priors_[1] / self.priors_[0]
        )

    def _scores_from_parts(self, parts, gamma: float) -> np.ndarray:
        out = np.full(parts[0][0].shape[0], self._bias(gamma))
        for i, half in ((0, -0.5), (1, 0.5)):
            sq_norm, proj_sq = parts[i]
            shrink = gamma * self.eigenvalues_[i] / (1.0 + gamma * self.eigenvalues_[i])
            out = out + half * (sq_norm - proj_sq @ shrink)
        return out

    def decision_function(self, X):
        check_is_fitted(self, "eigenvalues_")
        return self._scores_from_parts(self._projection_parts(X), self.gamma)

    def decision_grid(self, X, gammas) -> np.ndarray:
        """Scores for every gamma in one pass; returns (len(gammas), n)."""
        check_is_fitted(self, "eigenvalues_")
        parts = self._projection_parts(X)
        gammas = np.asarray(gammas, dtype=float)
        return np.stack([self._scores_from_parts(parts, g) for g in gammas])

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores > 0, self.classes_[0], self.classes_[1])


def select_gamma(
    model: RidgeQDA,
    X_eval=None,
    y_eval=None,
    gammas=None,
    mode: str = "test-oracle",
    n_folds: int = 5,
    seed: int = 0,
) -> float:
    """Pick the ridge parameter from a grid.

    ``test-oracle`` mode returns the gamma with the smallest error on the
    supplied evaluation set (optimistic for the baseline, but it is the
    standard benchmarking protocol). ``k-fold`` mode cross-validates on the
    training data stored in the model and needs no evaluation set. Ties go
    to the smaller gamma.
    """
    gammas = np.sort(np.asarray(gamma_grid() if gammas is None else gammas, dtype=float))
    if gammas.size == 0:
        raise ValueError("gamma grid is empty")
    if mode == "test-oracle":
        if X_eval is None or y_eval is None:
            raise ValueError("test-oracle selection needs an evaluation set")
        y_eval = np.asarray(y_eval)
        scores = model.decision_grid(X_eval, gammas)
        preds = np.where(scores > 0, model.classes_[0], model.classes_[1])
        errors = (preds != y_eval[None, :]).mean(axis=1)
    elif mode == "k-fold":
        if not hasattr(model, "_train_X"):
            raise ValueError("k-fold selection needs a model fitted on raw data")
        X, y = model._train_X, model._train_y
        rng = np.random.default_rng(seed)
        folds = _stratified_folds(y, model.classes_, n_folds, rng)
        errors = np.zeros(gammas.size)
        for held_out in folds:
            mask = np.ones(len(y), dtype=bool)
            mask[held_out] = False
            sub = RidgeQDA(gamma=model.gamma, priors=model.priors)
            sub.fit(X[mask], y[mask])
            scores = sub.decision_grid(X[held_out], gammas)
            preds = np.where(scores > 0, sub.classes_[0], sub.classes_[1])
            errors += (preds != y[held_out][None, :]).mean(axis=1)
        errors /= len(folds)
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    return float(gammas[int(np.argmin(errors))])


def _stratified_folds(y, classes, n_folds: int, rng) -> list[np.ndarray]:
    per_class = [rng.permutation(np.flatnonzero(y == label)) for label in classes]
    folds = []
    for f in range(n_folds):
        folds.append(np.concatenate([idx[f::n_folds] for idx in per_class]))
    return [f for f in folds if f.size]


# ---------------------------------------------------------------------------
# Oracle rule and nearest-neighbor baseline
# ---------------------------------------------------------------------------

class OracleQDA:
    """Quadratic rule with the true generating populations plugged in.

    Only available for synthetic data; it bounds what any trained
    classifier can achieve on draws from the same pair of models.
    """

    def __init__(self, model0: ClassModel, model1: ClassModel):
        self.model0 = model0
        self.model1 = model1
        self.classes_ = np.array([0, 1])
        self.eta_ = -0.5 * (model0.cov.log_det() - model1.cov.log_det()) - np.log(
            model1.prior / model0.prior
        )

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.eta_)
        for model, half in ((self.model0, -0.5), (self.model1, 0.5)):
            d = X - model.mean
            out = out + half * np.einsum("ij,ij->i", d, model.cov.apply_inverse(d))
        return out

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores > 0, self.classes_[0], self.classes_[1])


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """k nearest neighbors by Euclidean distance, majority vote.

    A tied vote is resolved to the label of the single nearest neighbor.
    """

    def __init__(self, n_neighbors: int = 1, chunk_size: int = 512):
        self.n_neighbors = n_neighbors
        self.chunk_size = chunk_size

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly 2 classes, got {self.classes_.size}")
        if not 1 <= self.n_neighbors <= X.shape[0]:
            raise ValueError(
                f"n_neighbors must be in [1, {X.shape[0]}], got {self.n_neighbors}"
            )
        self.X_ = X
        self._y01 = (y == self.classes_[1]).astype(np.int64)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=float)
        k = self.n_neighbors
        train_sq = np.einsum("ij,ij->i", self.X_, self.X_)
        out = np.empty(X.shape[0], dtype=np.int64)
        for start in range(0, X.shape[0], self.chunk_size):
            chunk = X[start : start + self.chunk_size]
            d2 = (
                np.einsum("ij,ij->i", chunk, chunk)[:, None]
                + train_sq[None, :]
                - 2.0 * chunk @ self.X_.T
            )
            nearest = np.argmin(d2, axis=1)
            if k == 1:
                votes = self._y01[nearest]
                decided = votes
            else:
                within_k = np.argpartition(d2, k - 1, axis=1)[:, :k]
                ones = self._y01[within_k].sum(axis=1)
                decided = np.where(2 * ones > k, 1, 0)
                tie = 2 * ones == k
                decided[tie] = self._y01[nearest[tie]]
            out[start : start + chunk.shape[0]] = decided
        return self.classes_[out]


def knn_classify(train: LabeledDataset, x: np.ndarray, k: int):
    """Label a single observation by k-nearest-neighbor vote."""
    model = KNNClassifier(n_neighbors=k).fit(train.samples, train.labels)
    return model.predict(np.atleast_2d(x))[0]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    """Misclassification summary: the global error is the prior-weighted
    mixture of per-class errors, with priors taken from the test split."""

    error: float
    error0: float
    error1: float
    n0: int
    n1: int


def evaluate(classifier, test: LabeledDataset) -> EvalResult:
    """Error rate of a fitted classifier on a labeled test set."""
    if test.n == 0:
        raise ValueError("test set is empty")
    preds = np.asarray(classifier.predict(test.samples))
    wrong = preds != test.labels
    n0, n1 = test.class_counts()
    error0 = float(wrong[test.labels == 0].mean()) if n0 else 0.0
    error1 = float(wrong[test.labels == 1].mean()) if n1 else 0.0
    error = (n0 * error0 + n1 * error1) / test.n
    return EvalResult(error=error, error0=error0, error1=error1, n0=n0, n1=n1)
