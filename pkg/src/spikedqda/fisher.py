"""Asymptotic class-separation statistics and the closed-form weight choice.

For a candidate weight vector w (one weight per retained spike, class-1
entries first), the class-conditional decision statistic has deterministic
mean and variance surrogates

    m_i(w) = 2 eta + c1 - c0 + p (s_i/s1 - s_i/s0) + (-1)^i alpha_{1-i}
             + g_i . w,
    v_i(w) = 4 (w^T E_i w + 2 e_i . w + b_i),        s_i := sigma_i^2,

and the weights are chosen to maximize the separation ratio

    rho(w) = |g . w + beta0 + beta1| / (2 sqrt(w^T E w + 2 e . w + b)),

whose maximizer has the closed form  w* = E^{-1} (sign(d) theta* g - e)
with theta* = (b - e^T E^{-1} e) / |d| and the separation constant
d = beta0 + beta1 - g^T E^{-1} e. The additive bias eta is then fixed so
that m_0(w*) + m_1(w*) = 0.

Two variants of the coefficient tables exist: the `general` one keeps the
noise-variance ratios of the two classes, the `simplified` one replaces
those ratios by 1. The general variant is the default; it behaves better
on real data where the noise variances of the two classes may differ
noticeably.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    DegenerateObjectiveError,
    SpikedQdaWarning,
    VarianceDegeneracyError,
)
from .spikes import SpikeEstimates

VARIANTS = ("general", "simplified")

#: Relative eigenvalue floor enforced on the combined curvature matrix.
SPD_FLOOR = 1e-10

#: Relative threshold below which the separation constant counts as zero.
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class EquivalentCoefficients:
    """Coefficient tables of the asymptotic mean/variance surrogates.

    Vectors follow the weight layout [class-1 spikes..., class-0 spikes...].
    `E0 + E1` is symmetric positive definite (a tiny diagonal jitter is
    added if needed); `b0 + b1` is positive.
    """

    g0: np.ndarray
    g1: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    b0: float
    b1: float
    beta0: float
    beta1: float
    variant: str
    # Context the mean surrogate needs beyond the tables above.
    alpha0: float
    alpha1: float
    c0: float
    c1: float
    sigma0_sq: float
    sigma1_sq: float
    dim: int
    r0: int
    r1: int

    @property
    def n_weights(self) -> int:
        return self.r0 + self.r1

    @property
    def g(self) -> np.ndarray:
        return self.g0 - self.g1

    @property
    def e(self) -> np.ndarray:
        return self.e0 + self.e1

    @property
    def E(self) -> np.ndarray:
        return self.E0 + self.E1

    @property
    def b(self) -> float:
        return self.b0 + self.b1

    @property
    def beta_sum(self) -> float:
        return self.beta0 + self.beta1


def assemble_coefficients(
    est: SpikeEstimates, variant: str = "general"
) -> EquivalentCoefficients:
    """Build the coefficient tables from de-biased spike estimates.

    The same routine serves plug-in estimates and exact population
    quantities, since `SpikeEstimates` can hold either.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    lam0, lam1 = est.lambdas
    a0, a1 = est.alignments
    b0v, b1v = est.weights
    phi0, phi1 = est.phi
    psi = est.psi  # (r1, r0)
    alpha0, alpha1 = float(est.alphas[0]), float(est.alphas[1])
    c0, c1 = float(est.c[0]), float(est.c[1])
    s0sq, s1sq = float(est.sigma2[0]), float(est.sigma2[1])
    r0, r1 = est.r0, est.r1

    if variant == "simplified":
        rho01 = rho10 = 1.0
    else:
        rho01 = s0sq / s1sq  # sigma0^2 / sigma1^2
        rho10 = s1sq / s0sq

    g0 = np.concatenate([alpha1 * a1 * b1v + rho01 * phi1, -1.0 - lam0 * a0])
    g1 = np.concatenate([1.0 + lam1 * a1, -(alpha0 * a0 * b0v + rho10 * phi0)])

    b0 = alpha1 * rho01 * (1.0 + float(lam0 @ b0v)) + c1 * rho01**2 + c0
    b1 = alpha0 * rho10 * (1.0 + float(lam1 @ b1v)) + c0 * rho10**2 + c1

    # Cross terms sqrt(b_j b_l) psi_{j,l} between each spike of one class
    # and every spike of the other.
    sqrt_b0 = np.sqrt(b0v)
    sqrt_b1 = np.sqrt(b1v)
    e0_top = alpha1 * rho01 * (
        a1 * b1v + a1 * sqrt_b1 * (psi * (lam0 * sqrt_b0)[None, :]).sum(axis=1)
    )
    e1_bot = alpha0 * rho10 * (
        a0 * b0v + a0 * sqrt_b0 * (psi * (lam1 * sqrt_b1)[:, None]).sum(axis=0)
    )
    e0 = np.concatenate([e0_top, np.zeros(r0)])
    e1 = np.concatenate([np.zeros(r1), e1_bot])

    # Curvature blocks. D: own-class diagonal; Dt + M: other-class block;
    # N: cross block (rows index class-1 spikes, columns class-0 spikes).
    d0 = 0.5 * np.diag((1.0 + lam0 * a0) ** 2)
    d1 = 0.5 * np.diag((1.0 + lam1 * a1) ** 2)
    dt0 = np.diag(rho01**2 * phi1**2 / 2.0 + rho01 * alpha1 * a1 * b1v)
    dt1 = np.diag(rho10**2 * phi0**2 / 2.0 + rho10 * alpha0 * a0 * b0v)
    # M_i[j,k] = alpha * rho * a_j a_k sqrt(b_j b_k) sum_l lam_l psi psi
    m0 = alpha1 * rho01 * np.outer(a1 * sqrt_b1, a1 * sqrt_b1) * (
        (psi * lam0[None, :]) @ psi.T
    )
    m1 = alpha0 * rho10 * np.outer(a0 * sqrt_b0, a0 * sqrt_b0) * (
        psi.T @ (psi * lam1[:, None])
    )
    # In E_i the (1+lambda)^2 factor belongs to class i's own spikes.
    n0 = -0.5 * rho01 * np.outer(a1, a0 * (1.0 + lam0) ** 2) * psi**2
    n1 = -0.5 * rho10 * np.outer(a1 * (1.0 + lam1) ** 2, a0) * psi**2

    E0 = np.block([[dt0 + m0, n0], [n0.T, d0]])
    E1 = np.block([[d1, n1], [n1.T, dt1 + m1]])
    E0 = (E0 + E0.T) / 2.0
    E1 = (E1 + E1.T) / 2.0

    beta0 = alpha0 + est.dim * (s0sq / s1sq - 1.0)
    beta1 = alpha1 + est.dim * (s1sq / s0sq - 1.0)

    coeffs = EquivalentCoefficients(
        g0=g0, g1=g1, e0=e0, e1=e1, E0=E0, E1=E1,
        b0=float(b0), b1=float(b1), beta0=float(beta0), beta1=float(beta1),
        variant=variant,
        alpha0=alpha0, alpha1=alpha1, c0=c0, c1=c1,
        sigma0_sq=s0sq, sigma1_sq=s1sq, dim=est.dim, r0=r0, r1=r1,
    )
    return _guard_spd(coeffs)


def _guard_spd(coeffs: EquivalentCoefficients) -> EquivalentCoefficients:
    """Jitter the curvature blocks so the combined matrix stays SPD."""
    if coeffs.n_weights == 0:
        return coeffs
    combined = coeffs.E
    eigvals = np.linalg.eigvalsh(combined)
    scale = max(float(np.abs(eigvals).max()), 1.0)
    floor = SPD_FLOOR * scale
    lowest = float(eigvals[0])
    if lowest >= floor:
        return coeffs
    jitter = floor - lowest
    warnings.warn(
        f"curvature matrix nearly singular (min eigenvalue {lowest:.3g}); "
        f"adding diagonal jitter {jitter:.3g}",
        category=SpikedQdaWarning,
        stacklevel=3,
    )
    eye = np.eye(coeffs.n_weights)
    return replace(
        coeffs, E0=coeffs.E0 + 0.5 * jitter * eye, E1=coeffs.E1 + 0.5 * jitter * eye
    )


def quadratic_form(coeffs: EquivalentCoefficients, w: np.ndarray) -> float:
    """w^T E w + 2 e . w + b for the combined tables."""
    w = np.asarray(w, dtype=float)
    return float(w @ coeffs.E @ w + 2.0 * coeffs.e @ w + coeffs.b)


def m_bar(coeffs: EquivalentCoefficients, w: np.ndarray, eta: float, i: int) -> float:
    """Deterministic mean surrogate of the class-i decision statistic."""
    if i not in (0, 1):
        raise ValueError(f"class index must be 0 or 1, got {i}")
    w = np.asarray(w, dtype=float)
    si = coeffs.sigma0_sq if i == 0 else coeffs.sigma1_sq
    gi = coeffs.g0 if i == 0 else coeffs.g1
    alpha_other = coeffs.alpha1 if i == 0 else coeffs.alpha0
    return float(
        2.0 * eta
        + coeffs.c1
        - coeffs.c0
        + coeffs.dim * (si / coeffs.sigma1_sq - si / coeffs.sigma0_sq)
        + (-1.0) ** i * alpha_other
        + gi @ w
    )


def v_bar(coeffs: EquivalentCoefficients, w: np.ndarray, i: int) -> float:
    """Deterministic variance surrogate of the class-i decision statistic."""
    if i not in (0, 1):
        raise ValueError(f"class index must be 0 or 1, got {i}")
    w = np.asarray(w, dtype=float)
    ei = coeffs.e0 if i == 0 else coeffs.e1
    Ei = coeffs.E0 if i == 0 else coeffs.E1
    bi = coeffs.b0 if i == 0 else coeffs.b1
    out = 4.0 * float(w @ Ei @ w + 2.0 * ei @ w + bi)
    if out <= 0:
        raise VarianceDegeneracyError(
            f"variance surrogate of class {i} is {out:.4g} <= 0"
        )
    return out


def rho_bar(coeffs: EquivalentCoefficients, w: np.ndarray) -> float:
    """Asymptotic separation ratio of the two classes at weights w.

    Independent of the bias eta by construction (eta cancels from the
    mean difference).
    """
    w = np.asarray(w, dtype=float)
    denom_sq = quadratic_form(coeffs, w)
    if denom_sq <= 0:
        raise VarianceDegeneracyError(
            f"combined variance surrogate is {denom_sq:.4g} <= 0"
        )
    return abs(float(coeffs.g @ w) + coeffs.beta_sum) / (2.0 * np.sqrt(denom_sq))


def optimal_w(coeffs: EquivalentCoefficients) -> tuple[np.ndarray, float]:
    """Closed-form maximizer of the separation ratio.

    Returns (w_star, theta_star) with w* = E^{-1} (sign(d) theta* g - e),
    theta* = (b - e^T E^{-1} e) / |d| and d = beta0 + beta1 - g^T E^{-1} e.
    When d < 0 the maximum of the absolute ratio sits on the mirrored
    branch, so the gradient direction flips sign; the step length theta*
    stays positive either way.

    Raises DegenerateObjectiveError when d vanishes (the supremum is then
    only approached at infinite weights) and VarianceDegeneracyError when
    b - e^T E^{-1} e is not positive.
    """
    if coeffs.n_weights == 0:
        return np.empty(0), 0.0
    E_inv_e = np.linalg.solve(coeffs.E, coeffs.e)
    g_E_inv_e = float(coeffs.g @ E_inv_e)
    d = coeffs.beta_sum - g_E_inv_e
    scale = abs(coeffs.beta_sum) + abs(g_E_inv_e) + 1.0
    if abs(d) <= DEGENERATE_TOL * scale:
        raise DegenerateObjectiveError(
            f"separation constant {d:.4g} is numerically zero; no finite "
            "optimal weights exist"
        )
    residual = coeffs.b - float(coeffs.e @ E_inv_e)
    if residual <= 0:
        raise VarianceDegeneracyError(
            f"b - e^T E^-1 e = {residual:.4g} <= 0; variance surrogate "
            "degenerates along the optimal direction"
        )
    theta_star = residual / abs(d)
    signed = theta_star if d > 0 else -theta_star
    w_star = np.linalg.solve(coeffs.E, signed * coeffs.g - coeffs.e)
    return w_star, float(theta_star)


def optimal_eta(coeffs: EquivalentCoefficients, w_star: np.ndarray) -> float:
    """Bias that centers the two class-conditional means symmetrically
    around zero: m_0(w*, eta) + m_1(w*, eta) = 0."""
    w_star = np.asarray(w_star, dtype=float)
    s0, s1 = coeffs.sigma0_sq, coeffs.sigma1_sq
    return float(
        -0.25
        * (
            (coeffs.g0 + coeffs.g1) @ w_star
            + coeffs.alpha1
            - coeffs.alpha0
            + 2.0 * (coeffs.c1 - coeffs.c0)
            + coeffs.dim * (s0**2 - s1**2) / (s0 * s1)
        )
    )
