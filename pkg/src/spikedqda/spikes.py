"""Per-class training summaries and consistent estimation of spike quantities.

When the dimension p and the per-class sample count n grow together with
aspect ratio c = p / n, sample eigenvalues and eigenvectors of the class
covariance are biased in ways that admit exact asymptotic corrections.
This module implements those corrections:

* the one-to-one map between a population spike strength lambda > sqrt(c)
  and the sample eigenvalue it produces,
      s = sigma2 * (1 + lambda) * (1 + c / lambda),
* the limiting squared alignment between a sample spike eigenvector and
  its population direction,
      a(lambda, c) = (1 - c / lambda^2) / (1 + c / lambda),
* de-biased estimates of the class-mean separation, of the projections of
  the mean difference onto the spike directions, and of the inner products
  between the spike directions of the two classes.

Spikes at or below the detectability threshold lambda = sqrt(c) leave no
usable trace in the sample spectrum and are dropped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import (
    DegenerateSeparationError,
    SpikedQdaWarning,
    SpikeUndetectableError,
)
from .spectral import EigenPairs, sign_align, sym_eig_desc

#: Relative margin above sqrt(c) below which an estimated spike is discarded.
SPIKE_DROP_MARGIN = 0.05

#: Relative margin above the bulk edge used when counting spikes.
EDGE_MARGIN = 0.1

#: Smallest admissible de-biased squared mean separation before clamping.
ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class ClassSummary:
    """Training statistics of one class.

    `eigen` holds the full sample-covariance spectrum (all p values, needed
    for noise estimation and for ridge baselines); `sigma2` and `r` are the
    noise variance and spike count, either supplied or estimated.
    """

    n: int
    c: float
    mean: np.ndarray
    eigen: EigenPairs
    sigma2: float
    r: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 samples, got {self.n}")
        if self.c <= 0 or self.sigma2 <= 0 or self.r < 0:
            raise ValueError("require c > 0, sigma2 > 0 and r >= 0")

    @property
    def dim(self) -> int:
        return self.mean.size


class NoiseRankEstimate(NamedTuple):
    sigma2: float
    r: int
    converged: bool


def bulk_edge(sigma2: float, c: float) -> float:
    """Largest sample eigenvalue produced by pure noise, asymptotically."""
    return sigma2 * (1.0 + np.sqrt(c)) ** 2


def estimate_noise_rank(
    spectrum, c: float, delta: float = EDGE_MARGIN, max_iter: int = 100
) -> NoiseRankEstimate:
    """Joint noise-variance / spike-count estimate from a sample spectrum.

    Fixed point iteration: starting from sigma2 = mean of all eigenvalues,
    count the eigenvalues exceeding the noise bulk edge inflated by the
    relative margin `delta`, re-estimate sigma2 as the mean of the
    remaining ones, and repeat until the count stabilizes.

    Returns the last iterate with ``converged=False`` (and a warning) if
    the count still oscillates after `max_iter` rounds.
    """
    values = np.sort(np.asarray(spectrum, dtype=float))[::-1]
    if values.size == 0:
        raise ValueError("spectrum must be non-empty")
    p = values.size
    sigma2 = float(values.mean())
    r = -1
    for _ in range(max_iter):
        threshold = bulk_edge(sigma2, c) * (1.0 + delta)
        r_new = int(np.count_nonzero(values > threshold))
        if r_new >= p:  # everything flagged as spike: no bulk left to average
            r_new = p - 1
        sigma2 = float(values[r_new:].mean())
        if r_new == r:
            return NoiseRankEstimate(sigma2, r, True)
        r = r_new
    warnings.warn(
        f"noise/rank fixed point did not settle after {max_iter} iterations; "
        f"returning last iterate (sigma2={sigma2:.4g}, r={r})",
        category=SpikedQdaWarning,
        stacklevel=2,
    )
    return NoiseRankEstimate(sigma2, r, False)


def summarize_class(
    data: np.ndarray,
    sigma2: float | None = None,
    r: int | None = None,
    delta: float = EDGE_MARGIN,
) -> ClassSummary:
    """Sample mean, full covariance eigendecomposition, and noise/rank.

    Uses the unbiased 1/(n-1) covariance. When `sigma2` or `r` is not
    supplied it is estimated from the spectrum; supplying both skips
    estimation entirely.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be an (n, p) matrix")
    n, p = data.shape
    if n < 2:
        raise ValueError(f"need at least 2 samples to form a covariance, got {n}")
    c = p / n
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    eigen = sym_eig_desc(cov)

    if sigma2 is None and r is None:
        est = estimate_noise_rank(eigen.values, c, delta=delta)
        sigma2, r = est.sigma2, est.r
    elif sigma2 is None:
        if r >= p:
            raise ValueError(f"r must be < p to leave a noise bulk, got r={r}, p={p}")
        sigma2 = float(eigen.values[r:].mean())
    elif r is None:
        threshold = bulk_edge(sigma2, c) * (1.0 + delta)
        r = int(np.count_nonzero(eigen.values > threshold))
    return ClassSummary(n=n, c=c, mean=mean, eigen=eigen, sigma2=float(sigma2), r=int(r))


def forward_spike_map(lam: float, sigma2: float, c: float) -> float:
    """Sample eigenvalue produced by a detectable spike of strength lam."""
    if lam <= 0:
        raise ValueError(f"spike strength must be positive, got {lam}")
    return sigma2 * (1.0 + lam) * (1.0 + c / lam)


def invert_spike_map(s: float, sigma2: float, c: float) -> float:
    """De-biased spike strength recovered from a sample eigenvalue.

    Inverts s = sigma2 * (1 + lambda) * (1 + c / lambda) on the detectable
    branch lambda >= sqrt(c). Raises SpikeUndetectableError when s lies
    strictly below the noise bulk edge sigma2 * (1 + sqrt(c))^2; exactly at
    the edge the threshold value sqrt(c) is returned.
    """
    ratio = s / sigma2
    edge = (1.0 + np.sqrt(c)) ** 2
    if ratio < edge:
        raise SpikeUndetectableError(
            f"sample eigenvalue {s:.6g} lies below the bulk edge "
            f"{sigma2 * edge:.6g}; the spike is not detectable at c={c:.4g}"
        )
    t = ratio - 1.0 - c
    disc = max(t * t - 4.0 * c, 0.0)  # clips roundoff at the edge
    return (t + np.sqrt(disc)) / 2.0


def alignment_factor(lam: float, c: float) -> float:
    """Limiting squared inner product between a sample spike eigenvector
    and its population direction.

    Defined for lam >= sqrt(c); equals 0 at the threshold and increases
    towards 1 as the spike strengthens.
    """
    if c < 0:
        raise ValueError(f"aspect ratio must be non-negative, got {c}")
    if lam < np.sqrt(c):
        raise ValueError(
            f"alignment is undefined below the detectability threshold: "
            f"lambda={lam:.6g} < sqrt(c)={np.sqrt(c):.6g}"
        )
    return (1.0 - c / lam**2) / (1.0 + c / lam)


@dataclass(frozen=True)
class SpikeEstimates:
    """De-biased spike quantities for one pair of classes.

    Per-class arrays are indexed by retained spike (strongest first):
    `lambdas[i]` are the spike strengths, `alignments[i]` the squared
    eigenvector alignments, `weights[i]` the normalized squared projections
    of the mean difference onto the spike directions, and `vectors[i]` the
    retained sample eigenvectors, sign-aligned with the mean difference.
    `psi` is the r1 x r0 matrix of de-biased inner products between class-1
    and class-0 spike directions, and `phi[i]` the induced cross-class
    variance inflation factors. `alphas` holds the de-biased squared mean
    separation scaled by each class's noise variance.
    """

    lambdas: tuple[np.ndarray, np.ndarray]
    alignments: tuple[np.ndarray, np.ndarray]
    weights: tuple[np.ndarray, np.ndarray]
    alphas: np.ndarray            # (2,)
    psi: np.ndarray               # (r1, r0)
    phi: tuple[np.ndarray, np.ndarray]
    mu_hat: np.ndarray            # mean0 - mean1
    mu_norm_sq: float
    vectors: tuple[np.ndarray, np.ndarray]
    c: np.ndarray                 # (2,) aspect ratios
    sigma2: np.ndarray            # (2,) noise variances
    dim: int

    @property
    def r0(self) -> int:
        return self.lambdas[0].size

    @property
    def r1(self) -> int:
        return self.lambdas[1].size

    def validate(self) -> None:
        """Check the invariants the estimators promise; raises ValueError."""
        for i in range(2):
            thr = np.sqrt(self.c[i])
            if np.any(self.lambdas[i] <= thr):
                raise ValueError(f"class {i}: retained spike at or below sqrt(c)")
            a = self.alignments[i]
            if np.any(a <= 0) or np.any(a > 1):
                raise ValueError(f"class {i}: alignment outside (0, 1]")
            if np.any(self.weights[i] < 0):
                raise ValueError(f"class {i}: negative projection weight")
            if self.weights[i].sum() > 1.1:
                warnings.warn(
                    f"class {i}: projection weights sum to "
                    f"{self.weights[i].sum():.3f} > 1.1; estimates are noisy",
                    category=SpikedQdaWarning,
                    stacklevel=2,
                )
        if np.any(self.alphas <= 0):
            raise ValueError("de-biased mean separation must be positive")
        if np.any(np.abs(self.psi) > 1.0 + 1e-12):
            raise ValueError("cross-class alignments must lie in [-1, 1]")


def _retained_spikes(summary: ClassSummary, drop_margin: float):
    """Invert the top-r sample eigenvalues, discarding undetectable ones."""
    lambdas, cols = [], []
    threshold = np.sqrt(summary.c) * (1.0 + drop_margin)
    for j in range(min(summary.r, summary.eigen.k)):
        try:
            lam = invert_spike_map(summary.eigen.values[j], summary.sigma2, summary.c)
        except SpikeUndetectableError:
            continue
        if lam > threshold:
            lambdas.append(lam)
            cols.append(j)
    return np.asarray(lambdas, dtype=float), cols


def estimate_spikes(
    s0: ClassSummary,
    s1: ClassSummary,
    drop_margin: float = SPIKE_DROP_MARGIN,
) -> SpikeEstimates:
    """Consistent estimates of every population quantity the weight
    optimization needs, from two class summaries.

    All spike eigenvectors are sign-aligned with mu_hat = mean0 - mean1
    before any inner product is formed. Raises DegenerateSeparationError
    when the de-biased squared mean separation is non-positive.
    """
    if s0.dim != s1.dim:
        raise ValueError(f"class dimensions differ: {s0.dim} vs {s1.dim}")
    summaries = (s0, s1)
    mu_hat = s0.mean - s1.mean
    mu_norm_sq = float(mu_hat @ mu_hat)
    debiased = mu_norm_sq - s1.c * s1.sigma2 - s0.c * s0.sigma2
    if debiased <= 0:
        raise DegenerateSeparationError(
            f"de-biased squared mean separation is {debiased:.4g} <= 0; the "
            "classes cannot be told apart at this sample size"
        )
    if debiased < ALPHA_FLOOR:
        warnings.warn(
            f"de-biased squared mean separation {debiased:.3g} clamped to "
            f"{ALPHA_FLOOR}; estimates will be unreliable",
            category=SpikedQdaWarning,
            stacklevel=2,
        )
        debiased = ALPHA_FLOOR
    alphas = np.array([debiased / s0.sigma2, debiased / s1.sigma2])

    lambdas, alignments, weights, vectors = [], [], [], []
    for summary in summaries:
        lams, cols = _retained_spikes(summary, drop_margin)
        pairs = EigenPairs(summary.eigen.values[cols], summary.eigen.vectors[:, cols])
        pairs = sign_align(pairs, mu_hat)
        a = np.array([alignment_factor(lam, summary.c) for lam in lams])
        proj_sq = (mu_hat @ pairs.vectors) ** 2
        # (mu^T u)^2 concentrates on a * b * |mu|^2; dividing by a de-biases.
        b = proj_sq / (a * debiased) if lams.size else np.empty(0)
        lambdas.append(lams)
        alignments.append(a)
        weights.append(b)
        vectors.append(pairs.vectors)

    # Cross-class alignments psi[l, j] between class-1 spike l and
    # class-0 spike j, de-biased by the per-spike alignment factors.
    cross = vectors[1].T @ vectors[0]  # (r1, r0)
    denom = np.sqrt(np.outer(alignments[1], alignments[0]))
    psi = np.clip(cross / denom, -1.0, 1.0) if cross.size else cross

    phi0 = 1.0 + alignments[0] * (psi**2 * lambdas[1][:, None]).sum(axis=0) \
        if lambdas[0].size else np.empty(0)
    phi1 = 1.0 + alignments[1] * (psi**2 * lambdas[0][None, :]).sum(axis=1) \
        if lambdas[1].size else np.empty(0)

    est = SpikeEstimates(
        lambdas=(lambdas[0], lambdas[1]),
        alignments=(alignments[0], alignments[1]),
        weights=(weights[0], weights[1]),
        alphas=alphas,
        psi=psi,
        phi=(phi0, phi1),
        mu_hat=mu_hat,
        mu_norm_sq=mu_norm_sq,
        vectors=(vectors[0], vectors[1]),
        c=np.array([s0.c, s1.c]),
        sigma2=np.array([s0.sigma2, s1.sigma2]),
        dim=s0.dim,
    )
    est.validate()
    return est
