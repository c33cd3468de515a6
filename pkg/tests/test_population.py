"""Population model: factored covariances, sampling, protocol builders."""

import numpy as np
import pytest

from spikedqda.population import (
    ClassModel,
    LabeledDataset,
    SpikedCovariance,
    axis_aligned_models,
    synth_protocol_models,
)


def random_spiked(p, r, sigma2, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    lambdas = np.sort(rng.uniform(1.0, 6.0, size=r))[::-1]
    return SpikedCovariance(sigma2, lambdas, q, p)


class TestMaterialize:
    def test_no_spikes_is_identity(self):
        cov = SpikedCovariance(1.0, [], np.zeros((3, 0)), 3)
        np.testing.assert_allclose(cov.materialize(), np.eye(3))

    def test_axis_aligned_spike(self):
        cov = SpikedCovariance(2.0, [3.0], np.array([[1.0], [0.0]]), 2)
        np.testing.assert_allclose(cov.materialize(), np.diag([8.0, 2.0]))

    def test_protocol_class0_eigenvalues(self):
        m0, _ = synth_protocol_models(0.5, 10)
        eigs = np.linalg.eigvalsh(m0.cov.materialize())[::-1]
        np.testing.assert_allclose(eigs[:3], [6.0, 5.0, 4.0], atol=1e-10)
        np.testing.assert_allclose(eigs[3:], np.ones(7), atol=1e-10)

    def test_eigenvalue_multiset(self):
        cov = random_spiked(25, 4, 1.7, seed=3)
        dense_eigs = np.sort(np.linalg.eigvalsh(cov.materialize()))[::-1]
        np.testing.assert_allclose(dense_eigs, cov.eigenvalues(), atol=1e-8)

    def test_log_det_matches_dense(self):
        cov = random_spiked(20, 3, 0.8, seed=4)
        _, dense = np.linalg.slogdet(cov.materialize())
        assert cov.log_det() == pytest.approx(dense, rel=1e-10)


class TestApplySqrt:
    def test_isotropic(self):
        cov = SpikedCovariance(4.0, [], np.zeros((5, 0)), 5)
        x = np.arange(5.0)
        np.testing.assert_allclose(cov.apply_sqrt(x), 2.0 * x)

    def test_eigen_direction(self):
        v = np.zeros((4, 1))
        v[2, 0] = 1.0
        cov = SpikedCovariance(1.0, [3.0], v, 4)
        np.testing.assert_allclose(cov.apply_sqrt(v[:, 0]), 2.0 * v[:, 0])

    def test_matches_dense_square_root(self):
        # Oracle: square root through a dense eigendecomposition.
        cov = random_spiked(30, 3, 1.3, seed=5)
        values, vectors = np.linalg.eigh(cov.materialize())
        dense_sqrt = (vectors * np.sqrt(values)) @ vectors.T
        x = np.random.default_rng(6).standard_normal(30)
        np.testing.assert_allclose(
            cov.apply_sqrt(x), dense_sqrt @ x, rtol=1e-8, atol=1e-12
        )

    def test_sqrt_applied_twice_is_covariance(self):
        cov = random_spiked(15, 2, 2.4, seed=7)
        x = np.random.default_rng(8).standard_normal(15)
        twice = cov.apply_sqrt(cov.apply_sqrt(x))
        np.testing.assert_allclose(twice, cov.materialize() @ x, rtol=1e-8)

    def test_linearity(self):
        cov = random_spiked(12, 2, 1.0, seed=9)
        rng = np.random.default_rng(10)
        x, y = rng.standard_normal((2, 12))
        lhs = cov.apply_sqrt(2.5 * x - 0.7 * y)
        rhs = 2.5 * cov.apply_sqrt(x) - 0.7 * cov.apply_sqrt(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_batch_rows_match_single(self):
        cov = random_spiked(10, 2, 1.0, seed=11)
        rows = np.random.default_rng(12).standard_normal((6, 10))
        batch = cov.apply_sqrt(rows)
        for i in range(6):
            np.testing.assert_allclose(batch[i], cov.apply_sqrt(rows[i]))

    def test_dimension_mismatch(self):
        cov = random_spiked(10, 2, 1.0, seed=13)
        with pytest.raises(ValueError, match="trailing dimension"):
            cov.apply_sqrt(np.zeros(9))

    def test_apply_inverse_matches_dense(self):
        cov = random_spiked(18, 3, 1.9, seed=14)
        x = np.random.default_rng(15).standard_normal(18)
        expected = np.linalg.solve(cov.materialize(), x)
        np.testing.assert_allclose(cov.apply_inverse(x), expected, rtol=1e-8)


class TestValidation:
    def test_rejects_ascending_lambdas(self):
        v = np.eye(3)[:, :2]
        with pytest.raises(ValueError, match="descending"):
            SpikedCovariance(1.0, [1.0, 2.0], v, 3)

    def test_rejects_non_orthonormal(self):
        v = np.ones((3, 2))
        with pytest.raises(ValueError, match="orthonormal"):
            SpikedCovariance(1.0, [2.0, 1.0], v, 3)

    def test_rejects_bad_sigma2(self):
        with pytest.raises(ValueError, match="sigma2"):
            SpikedCovariance(0.0, [], np.zeros((3, 0)), 3)

    def test_rejects_bad_prior(self):
        cov = SpikedCovariance(1.0, [], np.zeros((2, 0)), 2)
        with pytest.raises(ValueError, match="prior"):
            ClassModel(np.zeros(2), cov, prior=1.0)

    def test_arrays_are_frozen(self):
        cov = random_spiked(6, 2, 1.0, seed=16)
        with pytest.raises(ValueError):
            cov.lambdas[0] = 10.0


class TestSampling:
    def test_column_means_match_population(self):
        # Law of large numbers: column means within 3 sd / sqrt(n).
        v = np.zeros((4, 1))
        v[0, 0] = 1.0
        model = ClassModel(np.array([1.0, 2.0, 3.0, 4.0]),
                           SpikedCovariance(1.0, [3.0], v, 4))
        n = 100_000
        draws = model.sample(n, seed=17)
        col_sd = np.sqrt(np.diag(model.cov.materialize()))
        assert np.all(np.abs(draws.mean(axis=0) - model.mean) < 3 * col_sd / np.sqrt(n))

    def test_trace_of_sample_covariance(self):
        p, n = 50, 4000
        model = ClassModel(np.zeros(p), SpikedCovariance(1.0, [], np.zeros((p, 0)), p))
        draws = model.sample(n, seed=18)
        centered = draws - draws.mean(axis=0)
        trace = np.trace(centered.T @ centered / (n - 1))
        assert trace / p == pytest.approx(1.0, abs=0.02)

    def test_seed_reproducibility(self):
        model, _ = synth_protocol_models(0.5, 8)
        a = model.sample(5, seed=19)
        b = model.sample(5, seed=19)
        assert np.array_equal(a, b)

    def test_generator_streams_differ(self):
        model, _ = synth_protocol_models(0.5, 8)
        s1, s2 = np.random.SeedSequence(20).spawn(2)
        a = model.sample(5, np.random.default_rng(s1))
        b = model.sample(5, np.random.default_rng(s2))
        assert not np.array_equal(a, b)


class TestProtocolModels:
    def test_mean_norm(self):
        m0, _ = synth_protocol_models(0.5, 500)
        assert np.linalg.norm(m0.mean) == pytest.approx(0.5)

    def test_mean_separation(self):
        m0, m1 = synth_protocol_models(0.8, 500)
        assert np.linalg.norm(m1.mean - m0.mean) == pytest.approx(1.6)

    def test_spike_directions_orthogonal(self):
        m0, m1 = synth_protocol_models(0.5, 20)
        cross = m0.cov.directions.T @ m1.cov.directions
        np.testing.assert_allclose(cross, np.zeros((3, 3)), atol=1e-15)

    def test_spike_strengths(self):
        m0, m1 = synth_protocol_models(0.5, 10)
        np.testing.assert_allclose(m0.cov.lambdas, [5.0, 4.0, 3.0])
        np.testing.assert_allclose(m1.cov.lambdas, [6.0, 5.0, 4.0])

    def test_priors_sum_to_one(self):
        m0, m1 = synth_protocol_models(0.5, 10)
        assert m0.prior + m1.prior == pytest.approx(1.0)

    def test_rejects_small_dimension(self):
        with pytest.raises(ValueError, match="p >= 6"):
            synth_protocol_models(0.5, 5)

    def test_general_builder_places_disjoint_axes(self):
        m0, m1 = axis_aligned_models(7, (2.0,), (3.0, 1.5), 1.0)
        assert m0.cov.n_spikes == 1 and m1.cov.n_spikes == 2
        assert m0.cov.directions[0, 0] == 1.0
        assert m1.cov.directions[1, 0] == 1.0


class TestLabeledDataset:
    def test_split(self):
        data = LabeledDataset(np.arange(8.0).reshape(4, 2), [0, 1, 1, 0])
        x0, x1 = data.split()
        assert x0.shape == (2, 2) and x1.shape == (2, 2)
        assert data.class_counts() == (2, 2)

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError, match="0 or 1"):
            LabeledDataset(np.zeros((2, 2)), [0, 2])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="one per sample"):
            LabeledDataset(np.zeros((3, 2)), [0, 1])
