"""Shared builders for synthetic coefficient instances."""

import numpy as np

from spikedqda.fisher import EquivalentCoefficients


def make_coeffs(g, e, E, b, beta_sum, r1=0):
    """Coefficient container for a hand-picked separation-ratio instance.

    Context fields are chosen mutually consistent for equal noise
    variances: beta0 = alpha0 = beta_sum, beta1 = alpha1 = 0.
    """
    g = np.asarray(g, dtype=float)
    e = np.asarray(e, dtype=float)
    E = np.asarray(E, dtype=float)
    k = g.size
    return EquivalentCoefficients(
        g0=g, g1=np.zeros(k),
        e0=e, e1=np.zeros(k),
        E0=E, E1=np.zeros((k, k)),
        b0=float(b), b1=0.0,
        beta0=float(beta_sum), beta1=0.0,
        variant="general",
        alpha0=float(beta_sum), alpha1=0.0,
        c0=0.25, c1=0.25,
        sigma0_sq=1.0, sigma1_sq=1.0,
        dim=10, r0=k - r1, r1=r1,
    )


def random_quadratic_instance(rng, max_dim=6):
    """Random well-posed instance: SPD curvature, positive variance
    residual, and a separation constant bounded away from zero."""
    k = int(rng.integers(1, max_dim + 1))
    a = rng.standard_normal((k, k))
    E = a @ a.T + (0.1 + rng.random()) * np.eye(k)
    g = rng.standard_normal(k) * rng.uniform(0.5, 3.0)
    e = rng.standard_normal(k)
    E_inv_e = np.linalg.solve(E, e)
    b = float(e @ E_inv_e) + rng.uniform(0.2, 5.0)
    beta_sum = rng.uniform(-6.0, 6.0)
    if abs(beta_sum - g @ E_inv_e) < 0.1:
        beta_sum += 1.0
    return make_coeffs(g, e, E, b, beta_sum, r1=int(rng.integers(0, k + 1)))
