"""Deterministic mean/variance surrogates and the closed-form weights."""

import numpy as np
import pytest
from conftest import make_coeffs, random_quadratic_instance

from spikedqda.diagnostics import population_spike_quantities
from spikedqda.exceptions import DegenerateObjectiveError, VarianceDegeneracyError
from spikedqda.fisher import (
    assemble_coefficients,
    m_bar,
    optimal_eta,
    optimal_w,
    quadratic_form,
    rho_bar,
    v_bar,
)
from spikedqda.population import ClassModel, SpikedCovariance, synth_protocol_models
from spikedqda.spikes import SpikeEstimates


def spikeless_estimates(alpha0, alpha1, c0, c1, sigma0_sq, sigma1_sq, p=100):
    empty = np.empty(0)
    return SpikeEstimates(
        lambdas=(empty, empty),
        alignments=(empty, empty),
        weights=(empty, empty),
        alphas=np.array([alpha0, alpha1], dtype=float),
        psi=np.zeros((0, 0)),
        phi=(empty, empty),
        mu_hat=np.zeros(p),
        mu_norm_sq=alpha0 * sigma0_sq,
        vectors=(np.zeros((p, 0)), np.zeros((p, 0))),
        c=np.array([c0, c1], dtype=float),
        sigma2=np.array([sigma0_sq, sigma1_sq], dtype=float),
        dim=p,
    )


def one_spike_estimates(lam, weight, align, alpha, c, p=100):
    """Single class-0 spike, no class-1 spikes; shared noise variance 1."""
    empty = np.empty(0)
    return SpikeEstimates(
        lambdas=(np.array([lam]), empty),
        alignments=(np.array([align]), empty),
        weights=(np.array([weight]), empty),
        alphas=np.array([alpha, alpha], dtype=float),
        psi=np.zeros((0, 1)),
        phi=(np.ones(1), empty),
        mu_hat=np.zeros(p),
        mu_norm_sq=alpha,
        vectors=(np.zeros((p, 1)), np.zeros((p, 0))),
        c=np.array([c, c], dtype=float),
        sigma2=np.array([1.0, 1.0]),
        dim=p,
    )


class TestAssemble:
    def test_spikeless_reduction(self):
        est = spikeless_estimates(
            alpha0=3.0, alpha1=2.0, c0=0.4, c1=0.6, sigma0_sq=1.0, sigma1_sq=2.0
        )
        coeffs = assemble_coefficients(est)
        ratio = 1.0 / 2.0  # sigma0^2 / sigma1^2
        assert coeffs.b0 == pytest.approx(2.0 * ratio + 0.6 * ratio**2 + 0.4)
        assert coeffs.b1 == pytest.approx(3.0 * 2.0 + 0.4 * 4.0 + 0.6)
        assert coeffs.g.size == 0 and coeffs.e.size == 0

    def test_single_spike_arithmetic(self):
        # alpha1 = 2, one class-0 spike lambda = 3 with projection 0.25,
        # c0 = c1 = 0.5: the class-0 variance offset is 2*1.75 + 1 = 4.5.
        est = one_spike_estimates(lam=3.0, weight=0.25, align=0.8, alpha=2.0, c=0.5)
        coeffs = assemble_coefficients(est, variant="simplified")
        assert coeffs.b0 == pytest.approx(4.5)

    def test_orthogonal_spikes_make_block_diagonal_curvature(self):
        m0, m1 = synth_protocol_models(0.5, 50)
        est = population_spike_quantities(m0, m1, c0=0.5, c1=0.5)
        coeffs = assemble_coefficients(est)
        np.testing.assert_allclose(coeffs.E[:3, 3:], np.zeros((3, 3)))
        assert np.all(np.diag(coeffs.E) > 0)

    def test_general_equals_simplified_for_equal_variances(self):
        m0, m1 = synth_protocol_models(0.7, 40)
        est = population_spike_quantities(m0, m1, c0=0.3, c1=0.4)
        general = assemble_coefficients(est, "general")
        simplified = assemble_coefficients(est, "simplified")
        for attr in ("g0", "g1", "e0", "e1", "E0", "E1"):
            np.testing.assert_allclose(
                getattr(general, attr), getattr(simplified, attr), atol=1e-9
            )
        assert general.b0 == pytest.approx(simplified.b0, rel=1e-9)
        assert general.b1 == pytest.approx(simplified.b1, rel=1e-9)

    def test_rejects_unknown_variant(self):
        est = spikeless_estimates(1.0, 1.0, 0.5, 0.5, 1.0, 1.0)
        with pytest.raises(ValueError, match="variant"):
            assemble_coefficients(est, "fast")

    def test_curvature_is_positive_definite_on_protocol(self):
        m0, m1 = synth_protocol_models(0.5, 30)
        est = population_spike_quantities(m0, m1, c0=1.0, c1=1.0)
        coeffs = assemble_coefficients(est)
        assert np.linalg.eigvalsh(coeffs.E)[0] > 0


class TestMeanSurrogate:
    def test_zero_weight_reduction(self):
        est = spikeless_estimates(2.0, 2.0, 0.5, 0.5, 1.0, 1.0)
        coeffs = assemble_coefficients(est)
        w = np.empty(0)
        assert m_bar(coeffs, w, eta=0.0, i=0) == pytest.approx(2.0)
        assert m_bar(coeffs, w, eta=0.0, i=1) == pytest.approx(-2.0)

    def test_difference_is_eta_free(self):
        coeffs = make_coeffs([2.0, -1.0], [1.0, 0.5], np.eye(2) * 2, 3.0, 4.0)
        w = np.array([0.3, -0.7])
        for eta in (0.0, 7.0):
            diff = m_bar(coeffs, w, eta, 0) - m_bar(coeffs, w, eta, 1)
            assert diff == pytest.approx(coeffs.g @ w + coeffs.beta_sum)

    def test_rejects_bad_class_index(self):
        coeffs = make_coeffs([1.0], [0.0], [[1.0]], 1.0, 1.0)
        with pytest.raises(ValueError, match="class index"):
            m_bar(coeffs, np.zeros(1), 0.0, 2)


class TestVarianceSurrogate:
    def test_zero_weight_gives_four_b(self):
        est = one_spike_estimates(lam=3.0, weight=0.25, align=0.8, alpha=2.0, c=0.5)
        coeffs = assemble_coefficients(est, variant="simplified")
        assert v_bar(coeffs, np.zeros(1), 0) == pytest.approx(18.0)

    def test_exact_quadratic_in_any_direction(self):
        coeffs = make_coeffs([1.0, 2.0], [0.5, -0.5], [[2.0, 0.3], [0.3, 1.0]], 4.0, 3.0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            direction = rng.standard_normal(2)
            f = [v_bar(coeffs, t * direction, 0) for t in (0.0, 1.0, 2.0, 3.0)]
            third_difference = f[3] - 3 * f[2] + 3 * f[1] - f[0]
            assert third_difference == pytest.approx(0.0, abs=1e-9 * max(f))

    def test_nonpositive_variance_raises(self):
        coeffs = make_coeffs([1.0], [0.0], [[1.0]], -1.0, 1.0)
        with pytest.raises(VarianceDegeneracyError):
            v_bar(coeffs, np.zeros(1), 0)


class TestSeparationRatio:
    def test_zero_gradient_formula(self):
        coeffs = make_coeffs([0.0], [1.0], [[2.0]], 3.0, 4.0)
        w = np.array([0.5])
        expected = 4.0 / (2.0 * np.sqrt(quadratic_form(coeffs, w)))
        assert rho_bar(coeffs, w) == pytest.approx(expected)

    def test_scalar_instance_against_grid_scan(self):
        # Oracle: dense 1-d scan plus local refinement.
        coeffs = make_coeffs([2.0], [1.0], [[2.0]], 3.0, 4.0)
        grid = np.linspace(-20.0, 20.0, 400_001)
        values = np.abs(2.0 * grid + 4.0) / (
            2.0 * np.sqrt(2.0 * grid**2 + 2.0 * grid + 3.0)
        )
        best = grid[np.argmax(values)]
        assert best == pytest.approx(1.0 / 3.0, abs=1e-4)
        w_star, _ = optimal_w(coeffs)
        assert rho_bar(coeffs, w_star) >= values.max() - 1e-9

    def test_local_optimality_probes(self):
        coeffs = make_coeffs(
            [2.0, -1.0, 0.5], [1.0, 0.0, -0.3],
            np.diag([2.0, 1.5, 1.0]), 3.0, 4.0, r1=1,
        )
        w_star, _ = optimal_w(coeffs)
        peak = rho_bar(coeffs, w_star)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            delta = rng.standard_normal(3) * rng.uniform(1e-4, 1.0)
            assert rho_bar(coeffs, w_star + delta) <= peak + 1e-12


class TestOptimalW:
    def test_scalar_closed_form(self):
        coeffs = make_coeffs([2.0], [1.0], [[2.0]], 3.0, 4.0)
        w_star, theta_star = optimal_w(coeffs)
        assert theta_star == pytest.approx(5.0 / 6.0)
        assert w_star[0] == pytest.approx(1.0 / 3.0)

    def test_identity_curvature_no_linear_term(self):
        g = np.array([1.0, -2.0, 0.5])
        coeffs = make_coeffs(g, np.zeros(3), np.eye(3), 1.0, 1.0)
        w_star, theta_star = optimal_w(coeffs)
        assert theta_star == pytest.approx(1.0)
        np.testing.assert_allclose(w_star, g)

    def test_matches_numeric_maximizer(self):
        from spikedqda.diagnostics import numeric_fisher_max

        rng = np.random.default_rng(2)
        for _ in range(20):
            coeffs = random_quadratic_instance(rng)
            w_star, _ = optimal_w(coeffs)
            peak = rho_bar(coeffs, w_star)
            _, numeric_peak = numeric_fisher_max(coeffs, restarts=8, seed=3)
            assert abs(numeric_peak - peak) <= 1e-6 * peak

    def test_theta_always_positive(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            _, theta_star = optimal_w(random_quadratic_instance(rng))
            assert theta_star > 0

    def test_degenerate_separation_constant(self):
        # beta_sum - g E^-1 e = 1 - 1 = 0.
        coeffs = make_coeffs([1.0], [1.0], [[1.0]], 2.0, 1.0)
        with pytest.raises(DegenerateObjectiveError, match="separation constant"):
            optimal_w(coeffs)

    def test_degenerate_variance_residual(self):
        coeffs = make_coeffs([1.0], [2.0], [[1.0]], 3.0, 10.0)
        with pytest.raises(VarianceDegeneracyError, match="E\\^-1"):
            optimal_w(coeffs)


class TestOptimalEta:
    def test_symmetric_instance_centers_at_zero(self):
        # alpha0 = alpha1, c0 = c1, equal noise variances, and weights
        # orthogonal to g0 + g1: nothing is left to compensate.
        from spikedqda.fisher import EquivalentCoefficients

        sym = EquivalentCoefficients(
            g0=np.array([1.0]), g1=np.array([-1.0]),
            e0=np.zeros(1), e1=np.zeros(1),
            E0=np.eye(1), E1=np.eye(1),
            b0=1.0, b1=1.0, beta0=1.0, beta1=1.0, variant="general",
            alpha0=1.0, alpha1=1.0, c0=0.5, c1=0.5,
            sigma0_sq=1.0, sigma1_sq=1.0, dim=10, r0=1, r1=0,
        )
        assert optimal_eta(sym, np.array([0.8])) == pytest.approx(0.0)

    def test_centering_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            coeffs = random_quadratic_instance(rng)
            w_star, _ = optimal_w(coeffs)
            eta = optimal_eta(coeffs, w_star)
            total = m_bar(coeffs, w_star, eta, 0) + m_bar(coeffs, w_star, eta, 1)
            scale = abs(m_bar(coeffs, w_star, eta, 0)) + 1.0
            assert abs(total) <= 1e-9 * scale

    def test_aspect_ratio_arithmetic(self):
        est = spikeless_estimates(2.0, 2.0, c0=0.4, c1=0.6, sigma0_sq=1.0, sigma1_sq=1.0)
        coeffs = assemble_coefficients(est)
        assert optimal_eta(coeffs, np.empty(0)) == pytest.approx(-0.1)

    def test_protocol_identity_at_fitted_weights(self):
        m0, m1 = synth_protocol_models(0.5, 60)
        est = population_spike_quantities(m0, m1, c0=1.0, c1=1.0)
        coeffs = assemble_coefficients(est)
        w_star, _ = optimal_w(coeffs)
        eta = optimal_eta(coeffs, w_star)
        assert m_bar(coeffs, w_star, eta, 0) == pytest.approx(
            -m_bar(coeffs, w_star, eta, 1), rel=1e-9
        )
