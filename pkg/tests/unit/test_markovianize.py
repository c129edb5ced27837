"""Tests for the Markovian embedding of GLE systems."""

import numpy as np
import pytest

from gle_homog.markovianize import (
    build_extended,
    check_b_lambda,
    default_lambda_grid,
    gamma_hat_inverse,
)
from gle_homog.utils import errors


class TestExtendedSystem:
    """Test the blocks of the extended system."""

    def test_layout_and_shapes(self, ou_system, harmonic_system):
        """Test block sizes for OU (1+1+1) and harmonic (1+2+2) embeddings."""
        x = np.linspace(-1.0, 1.0, 4)[:, None]

        ou = build_extended(ou_system)
        harmonic = build_extended(harmonic_system)

        assert ou.gamma_hat(x).shape == (4, 3, 3)
        assert harmonic.gamma_hat(x).shape == (4, 5, 5)
        assert harmonic.sigma_hat.shape == (5, 1)
        assert harmonic.layout.beta == slice(3, 5)

    def test_gamma_hat_entries_ou(self, ou_system):
        """Test the explicit OU drift matrix at one state."""
        x = np.array([[0.3]])
        g = np.sqrt(2.0 + np.sin(0.3))

        gamma_hat = build_extended(ou_system).gamma_hat(x)[0]

        expected = np.array([[0.0, g, -g], [-g, 1.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(gamma_hat, expected)

    def test_block_inverse(self, ou_system, harmonic_system, make_system):
        """Test that the closed-form block inverse inverts gamma_hat."""
        x = np.linspace(-3.0, 3.0, 9)[:, None]
        systems = (ou_system, harmonic_system, make_system(sigma="1 + cos(x)/3", m0=2.0, tau_xi=0.5))
        for system in systems:
            ext = build_extended(system)
            product = gamma_hat_inverse(ext, x) @ ext.gamma_hat(x)
            np.testing.assert_allclose(product, np.broadcast_to(np.eye(ext.n), product.shape), atol=1e-10)

    def test_theta_of_benchmark(self, ou_system):
        """Test theta = g K1 h = 2 + sin x."""
        x = np.linspace(-3.0, 3.0, 7)[:, None]
        theta = build_extended(ou_system).theta(x)
        np.testing.assert_allclose(theta[:, 0, 0], 2.0 + np.sin(x[:, 0]))

    def test_singular_theta_edge(self, make_system):
        """Test that theta vanishing at a state is reported with the state."""
        ext = build_extended(make_system(g="x"))
        with pytest.raises(errors.SingularThetaError, match=r"x=\[0.0\]"):
            ext.theta_inverse([[1.0], [0.0]])

    def test_force_hat_fills_velocity_block(self, harmonic_system):
        """Test that the forcing is F/m0 in the velocity block and zero elsewhere."""
        x = np.array([[0.5]])
        force_hat = build_extended(harmonic_system).force_hat(x)
        assert force_hat[0, 0] == pytest.approx(-np.sin(0.5))
        np.testing.assert_array_equal(force_hat[0, 1:], np.zeros(4))

    def test_initial_beta_variance(self, ou_system):
        """Test that beta is scaled to the stationary variance M2/(tau_xi eps)."""
        ext = build_extended(ou_system, epsilon=0.5)
        assert ext.sample_initial_beta(np.ones((1, 1)))[0, 0] == pytest.approx(1.0)

    def test_with_epsilon_keeps_system(self, ou_system):
        """Test that rescaling returns a new embedding of the same system."""
        ext = build_extended(ou_system)
        scaled = ext.with_epsilon(0.1)
        assert scaled.system is ou_system
        assert scaled.epsilon == 0.1
        assert ext.epsilon == 1.0

    def test_nonpositive_epsilon_raises(self, ou_system):
        """Test that epsilon must be positive."""
        with pytest.raises(errors.InvalidParameterError):
            build_extended(ou_system, epsilon=0.0)


class TestBLambda:
    """Test the sampled invertibility check of B_lambda."""

    def test_default_grid(self):
        """Test 108 grid points strictly inside the right half plane."""
        grid = default_lambda_grid()
        assert grid.size == 108
        assert np.all(grid.real > 0)
        assert np.abs(grid).min() == pytest.approx(1e-3)
        assert np.abs(grid).max() == pytest.approx(1e3)

    def test_benchmarks_pass(self, ou_system, harmonic_system):
        """Test that both benchmark systems pass the check."""
        for system in (ou_system, harmonic_system):
            report = check_b_lambda(build_extended(system))
            assert report.passed
            assert report.min_singular_values.shape == (system.probes.shape[0], 108)
            assert report.to_dict()["n_lambdas"] == 108

    def test_high_threshold_fails_and_names_worst_point(self, ou_system):
        """Test that the report names the worst state and lambda on failure."""
        report = check_b_lambda(build_extended(ou_system), threshold=1e6)
        assert not report.passed
        assert report.worst_state is not None
        assert report.worst_lambda.real > 0

    def test_empty_grid_raises(self, ou_system):
        """Test that an empty lambda grid is rejected."""
        with pytest.raises(errors.InvalidParameterError):
            check_b_lambda(build_extended(ou_system), lambdas=[])
