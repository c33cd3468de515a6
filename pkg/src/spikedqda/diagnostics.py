"""Brute-force cross-checks of the fitted rule and its asymptotic theory.

Everything here is test-scale machinery: dense p x p matrices are allowed,
nothing is optimized, and no routine shares algebra with the closed-form
paths it is meant to verify.

* :func:`y_components` decomposes the class-conditional decision statistic
  of a fitted rule into an exact quadratic form in the standardized noise,
  Y_i(z) = z^T Q z + 2 l . z - xi, which must reproduce twice the decision
  score at x = mu_i + Sigma_i^{1/2} z.
* :func:`empirical_moments` estimates the mean and variance of Y_i by
  Monte Carlo, for comparison with the deterministic surrogates.
* :func:`numeric_fisher_max` maximizes the separation ratio with a
  derivative-free multi-start search, for comparison with the closed form.
* :func:`population_spike_quantities` packages exact population values in
  the same container the plug-in estimators fill, so the surrogate
  formulas can be evaluated at the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .classifiers import ImpQdaRule
from .exceptions import DegenerateSeparationError
from .fisher import EquivalentCoefficients, rho_bar
from .population import ClassModel, SpikedCovariance
from .spectral import EigenPairs, sign_align
from .spikes import SpikeEstimates, alignment_factor


def _dense_sqrt(cov: SpikedCovariance) -> np.ndarray:
    v = cov.directions
    coeff = np.sqrt(1.0 + cov.lambdas) - 1.0
    return np.sqrt(cov.sigma2) * (np.eye(cov.dim) + (v * coeff) @ v.T)


def _dense_inverse_estimate(rule: ImpQdaRule, i: int) -> np.ndarray:
    u = rule.vectors[i]
    w = rule.weights[i]
    return (np.eye(rule.dim) + (u * w) @ u.T) / rule.sigma2[i]


@dataclass(frozen=True)
class YiComponents:
    """Exact quadratic decomposition of the class-i decision statistic.

    ``value(z) = z^T quad z + 2 linear . z - offset`` equals twice the
    fitted rule's score at mu_i + Sigma_i^{1/2} z, for every z.
    """

    quad: np.ndarray      # (p, p) symmetric
    linear: np.ndarray    # (p,)
    offset: float
    class_cov: SpikedCovariance
    spike_weights: tuple[np.ndarray, np.ndarray]  # per class, scaled by 1/sigma2
    spike_vectors: tuple[np.ndarray, np.ndarray]

    def value(self, z: np.ndarray):
        """Evaluate the statistic on one z (returns a float) or on rows of
        z (returns an array)."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        rows = np.atleast_2d(z)
        vals = (
            np.einsum("ij,ij->i", rows @ self.quad, rows)
            + 2.0 * rows @ self.linear
            - self.offset
        )
        return float(vals[0]) if single else vals

    def z_tilde(self, z: np.ndarray) -> np.ndarray:
        """Noise transformed by the true class covariance square root."""
        return self.class_cov.apply_sqrt(z)

    def nu_terms(self, z: np.ndarray) -> np.ndarray:
        """Per-spike quadratic contributions, class-1 columns first and
        class-0 columns negated, so rows sum to the spike part of Y_i."""
        zt = np.atleast_2d(self.z_tilde(z))
        cols = []
        for i, sign in ((1, 1.0), (0, -1.0)):
            proj = zt @ self.spike_vectors[i]
            cols.append(sign * proj**2 * self.spike_weights[i])
        return np.concatenate(cols, axis=1)


def y_components(
    model0: ClassModel, model1: ClassModel, rule: ImpQdaRule, i: int
) -> YiComponents:
    """Quadratic-form decomposition of the decision statistic conditioned
    on the true class i. Synthetic data only (needs the true covariance)."""
    if i not in (0, 1):
        raise ValueError(f"class index must be 0 or 1, got {i}")
    model = (model0, model1)[i]
    sqrt_cov = _dense_sqrt(model.cov)
    c0_inv = _dense_inverse_estimate(rule, 0)
    c1_inv = _dense_inverse_estimate(rule, 1)
    d0 = model.mean - rule.means[0]
    d1 = model.mean - rule.means[1]
    quad = sqrt_cov @ (c1_inv - c0_inv) @ sqrt_cov
    linear = sqrt_cov @ (c1_inv @ d1 - c0_inv @ d0)
    offset = -2.0 * rule.eta + d0 @ c0_inv @ d0 - d1 @ c1_inv @ d1
    return YiComponents(
        quad=(quad + quad.T) / 2.0,
        linear=linear,
        offset=float(offset),
        class_cov=model.cov,
        spike_weights=(
            rule.weights[0] / rule.sigma2[0],
            rule.weights[1] / rule.sigma2[1],
        ),
        spike_vectors=rule.vectors,
    )


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    n_draws: int


def empirical_moments(
    model0: ClassModel,
    model1: ClassModel,
    rule: ImpQdaRule,
    i: int,
    n_draws: int = 10_000,
    seed=0,
) -> MomentEstimate:
    """Monte Carlo mean and variance of the class-i decision statistic."""
    if n_draws < 1000:
        raise ValueError(f"need at least 1000 draws for stable moments, got {n_draws}")
    comps = y_components(model0, model1, rule, i)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, model0.dim))
    vals = comps.value(z)
    mean = float(vals.mean())
    variance = float(vals.var(ddof=1))
    centered = vals - mean
    fourth = float(np.mean(centered**4))
    var_of_var = max(fourth - variance**2, 0.0) / n_draws
    return MomentEstimate(
        mean=mean,
        variance=variance,
        mean_se=float(vals.std(ddof=1) / np.sqrt(n_draws)),
        variance_se=float(np.sqrt(var_of_var)),
        n_draws=n_draws,
    )


def emit_y_histogram_samples(
    model0: ClassModel,
    model1: ClassModel,
    rule: ImpQdaRule,
    n_per_class: int = 10_000,
    seed=0,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the two class-conditional decision-statistic samples whose
    histograms visualize the separation achieved by a fitted rule."""
    root = np.random.SeedSequence(seed)
    streams = root.spawn(2)
    out = []
    for i in range(2):
        comps = y_components(model0, model1, rule, i)
        z = np.random.default_rng(streams[i]).standard_normal(
            (n_per_class, model0.dim)
        )
        out.append(comps.value(z))
    return out[0], out[1]


def population_spike_quantities(
    model0: ClassModel, model1: ClassModel, c0: float, c1: float
) -> SpikeEstimates:
    """Exact population analogue of the plug-in spike estimates.

    Packages the true spike strengths, alignments, mean projections and
    cross-class inner products for a training configuration with aspect
    ratios (c0, c1). Every spike must be detectable at those ratios.
    """
    mu = model0.mean - model1.mean
    mu_norm_sq = float(mu @ mu)
    if mu_norm_sq <= 0:
        raise DegenerateSeparationError("the population means coincide")
    covs = (model0.cov, model1.cov)
    ratios = (c0, c1)
    lambdas, alignments, weights, vectors = [], [], [], []
    for cov, c in zip(covs, ratios):
        lams = cov.lambdas
        a = np.array([alignment_factor(lam, c) for lam in lams])
        pairs = sign_align(EigenPairs(lams, cov.directions), mu)
        proj_sq = (mu @ pairs.vectors) ** 2
        lambdas.append(lams)
        alignments.append(a)
        weights.append(proj_sq / mu_norm_sq)
        vectors.append(pairs.vectors)
    psi = vectors[1].T @ vectors[0]
    phi0 = 1.0 + alignments[0] * (psi**2 * lambdas[1][:, None]).sum(axis=0)
    phi1 = 1.0 + alignments[1] * (psi**2 * lambdas[0][None, :]).sum(axis=1)
    return SpikeEstimates(
        lambdas=(lambdas[0], lambdas[1]),
        alignments=(alignments[0], alignments[1]),
        weights=(weights[0], weights[1]),
        alphas=np.array(
            [mu_norm_sq / model0.cov.sigma2, mu_norm_sq / model1.cov.sigma2]
        ),
        psi=psi,
        phi=(phi0, phi1),
        mu_hat=mu,
        mu_norm_sq=mu_norm_sq,
        vectors=(vectors[0], vectors[1]),
        c=np.array([c0, c1]),
        sigma2=np.array([model0.cov.sigma2, model1.cov.sigma2]),
        dim=model0.dim,
    )


def numeric_fisher_max(
    coeffs: EquivalentCoefficients,
    restarts: int = 16,
    tol: float = 1e-10,
    seed=0,
) -> tuple[np.ndarray, float]:
    """Derivative-free multi-start maximization of the separation ratio.

    Independent of the closed-form optimizer; intended for verification at
    small weight dimensions (r0 + r1 <= 12). The search minimizes the
    negated squared ratio (smooth at the peak), restarting from the
    origin, from the variance minimizer -E^{-1} e, from steps along the
    mean-separation gradient g, and from random points at several radii; a
    final polish restarts from the best point found.
    """
    k = coeffs.n_weights
    if k > 12:
        raise ValueError(f"numeric search is meant for <= 12 weights, got {k}")
    if k == 0:
        return np.empty(0), rho_bar(coeffs, np.empty(0))

    def negative_sq(w):
        value = rho_bar(coeffs, w)
        return -value * value

    def powell(x0, budget=3000):
        return minimize(
            negative_sq,
            x0,
            method="Powell",
            options={"xtol": tol * 1e-2, "ftol": tol * 1e-4, "maxiter": budget},
        )

    rng = np.random.default_rng(seed)
    variance_min = -np.linalg.solve(coeffs.E, coeffs.e)
    starts = [np.zeros(k), variance_min]
    g_norm = np.linalg.norm(coeffs.g)
    if g_norm > 0:
        for t in (1.0, 10.0, 100.0):
            starts.append(t * coeffs.g / g_norm)
            starts.append(-t * coeffs.g / g_norm)
    scales = (0.3, 1.0, 3.0, 10.0, 30.0, 100.0)
    for j in range(max(restarts - len(starts), 0)):
        starts.append(rng.standard_normal(k) * scales[j % len(scales)])
    best_w, best_val = None, np.inf
    for x0 in starts:
        res = powell(x0)
        if res.fun < best_val:
            best_val, best_w = res.fun, res.x
    polish = powell(best_w, budget=5000)
    if polish.fun < best_val:
        best_val, best_w = polish.fun, polish.x
    return np.asarray(best_w, dtype=float), float(np.sqrt(-best_val))
