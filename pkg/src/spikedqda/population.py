"""Gaussian class populations with spiked covariances and synthetic sampling.

A spiked covariance is an isotropic matrix plus a finite-rank symmetric
perturbation,

    Sigma = sigma2 * (I_p + sum_j lambda_j v_j v_j^T),

with lambda_1 >= ... >= lambda_r > 0 and orthonormal directions v_j. All
classifier-facing code works with (sigma2, lambdas, directions) directly;
dense p x p matrices are materialized only for tests and small problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SpikedCovariance:
    """Isotropic-plus-low-rank covariance, stored in factored form.

    Parameters
    ----------
    sigma2 : float
        Noise variance (> 0).
    lambdas : (r,) array_like
        Spike strengths, strictly positive and sorted descending.
    directions : (p, r) array_like
        Orthonormal spike directions, one per column.
    dim : int
        Ambient dimension p.
    """

    sigma2: float
    lambdas: np.ndarray
    directions: np.ndarray
    dim: int

    def __post_init__(self):
        lambdas = _readonly(np.atleast_1d(np.asarray(self.lambdas, dtype=float)))
        directions = _readonly(np.asarray(self.directions, dtype=float))
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if directions.ndim != 2 or directions.shape != (self.dim, lambdas.size):
            raise ValueError(
                f"directions must have shape ({self.dim}, {lambdas.size}), "
                f"got {directions.shape}"
            )
        if lambdas.size:
            if np.any(lambdas <= 0):
                raise ValueError("all spike strengths must be positive")
            if np.any(np.diff(lambdas) > 0):
                raise ValueError("spike strengths must be sorted descending")
            gram = directions.T @ directions
            if not np.allclose(gram, np.eye(lambdas.size), atol=ORTHONORMAL_TOL):
                raise ValueError("spike directions must be orthonormal")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "directions", directions)

    @property
    def n_spikes(self) -> int:
        return self.lambdas.size

    def materialize(self) -> np.ndarray:
        """Dense p x p matrix. Intended for tests and small dimensions."""
        v = self.directions
        return self.sigma2 * (np.eye(self.dim) + (v * self.lambdas) @ v.T)

    def eigenvalues(self) -> np.ndarray:
        """Full spectrum, descending: sigma2*(1+lambda_j), then sigma2."""
        spikes = self.sigma2 * (1.0 + self.lambdas)
        bulk = np.full(self.dim - self.n_spikes, self.sigma2)
        return np.concatenate([spikes, bulk])

    def log_det(self) -> float:
        return self.dim * np.log(self.sigma2) + float(np.sum(np.log1p(self.lambdas)))

    def apply_sqrt(self, x: np.ndarray) -> np.ndarray:
        """Multiply by the symmetric square root in O(p r) per vector.

        Accepts a single vector of length p or an array of row vectors
        (..., p); the matching shape is returned.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {x.shape}")
        coeff = np.sqrt(1.0 + self.lambdas) - 1.0
        proj = x @ self.directions  # (..., r)
        return np.sqrt(self.sigma2) * (x + (proj * coeff) @ self.directions.T)

    def apply_inverse(self, x: np.ndarray) -> np.ndarray:
        """Multiply by the exact inverse in O(p r) per vector."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {x.shape}")
        coeff = self.lambdas / (1.0 + self.lambdas)
        proj = x @ self.directions
        return (x - (proj * coeff) @ self.directions.T) / self.sigma2


@dataclass(frozen=True)
class ClassModel:
    """One Gaussian class: mean, spiked covariance, and prior probability."""

    mean: np.ndarray
    cov: SpikedCovariance
    prior: float = 0.5

    def __post_init__(self):
        mean = _readonly(np.asarray(self.mean, dtype=float).reshape(-1))
        if mean.size != self.cov.dim:
            raise ValueError(
                f"mean has length {mean.size}, covariance dimension is {self.cov.dim}"
            )
        if not 0.0 < self.prior < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.prior}")
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.cov.dim

    def sample(self, n: int, seed) -> np.ndarray:
        """Draw n i.i.d. observations as rows of an (n, p) array.

        `seed` may be an int, a SeedSequence, or a Generator. Passing the
        same int twice yields bit-identical output; a Generator is advanced
        in place, which is how callers obtain independent parallel streams.
        """
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        z = _rng(seed).standard_normal((n, self.dim))
        return self.mean + self.cov.apply_sqrt(z)


@dataclass(frozen=True)
class LabeledDataset:
    """Row-major samples with binary labels in {0, 1}."""

    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        samples = _readonly(np.asarray(self.samples, dtype=float))
        labels = np.asarray(self.labels)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-d array")
        if labels.shape != (samples.shape[0],):
            raise ValueError("labels must be one per sample row")
        labels = labels.astype(np.int64)
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must all be 0 or 1")
        labels.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def class_counts(self) -> tuple[int, int]:
        n1 = int(self.labels.sum())
        return self.n - n1, n1

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (class-0 rows, class-1 rows)."""
        mask = self.labels == 1
        return self.samples[~mask], self.samples[mask]


def axis_aligned_models(
    p: int,
    lambdas0,
    lambdas1,
    mean_scale: float,
    sigma0_sq: float = 1.0,
    sigma1_sq: float = 1.0,
) -> tuple[ClassModel, ClassModel]:
    """Build a two-class population with disjoint canonical spike axes.

    Class 0 puts its spikes on axes 1..r0, class 1 on the following r1
    axes, so the two spike subspaces are exactly orthogonal. Means are
    mu0 = (mean_scale / sqrt(p)) * ones and mu1 = -mu0, priors are 1/2.
    """
    lambdas0 = np.atleast_1d(np.asarray(lambdas0, dtype=float))
    lambdas1 = np.atleast_1d(np.asarray(lambdas1, dtype=float))
    r0, r1 = lambdas0.size, lambdas1.size
    if p < r0 + r1:
        raise ValueError(f"need p >= {r0 + r1} to place disjoint spike axes, got p={p}")
    v0 = np.zeros((p, r0))
    v0[np.arange(r0), np.arange(r0)] = 1.0
    v1 = np.zeros((p, r1))
    v1[r0 + np.arange(r1), np.arange(r1)] = 1.0
    mu0 = np.full(p, mean_scale / np.sqrt(p))
    m0 = ClassModel(mu0, SpikedCovariance(sigma0_sq, lambdas0, v0, p), prior=0.5)
    m1 = ClassModel(-mu0, SpikedCovariance(sigma1_sq, lambdas1, v1, p), prior=0.5)
    return m0, m1


def synth_protocol_models(
    a: float, p: int, sigma0_sq: float = 1.0, sigma1_sq: float = 1.0
) -> tuple[ClassModel, ClassModel]:
    """The fixed synthetic benchmark population.

    Three spikes per class on disjoint canonical axes with strengths
    (5, 4, 3) for class 0 and (6, 5, 4) for class 1; means are
    +-(a / sqrt(p)) * ones. Requires p >= 6.
    """
    if p < 6:
        raise ValueError(f"the synthetic protocol needs p >= 6, got p={p}")
    return axis_aligned_models(
        p, (5.0, 4.0, 3.0), (6.0, 5.0, 4.0), a, sigma0_sq, sigma1_sq
    )
