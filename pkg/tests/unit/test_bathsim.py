"""Tests for the Kac-Zwanzig heat bath."""

import numpy as np
import pytest

from gle_homog.bathsim import (
    NOISE_CHUNK,
    BathModel,
    BathState,
    BathTarget,
    debye_sampling,
    integrate_hamiltonian,
    kernel_comparison,
    noise_covariance,
    reconstructed_noise,
    sample_gibbs_initial,
)
from gle_homog.utils import errors

TIMES = np.linspace(0.0, 5.0, 51)


class TestDebyeSampling:
    """Test the discretized bath spectrum."""

    def test_too_few_modes_raises(self):
        """Test that fewer than ten modes are rejected."""
        with pytest.raises(errors.InsufficientModesError):
            debye_sampling(BathTarget("ou"), 9)

    @pytest.mark.parametrize("target", [BathTarget("ou", alpha=1.0), BathTarget("harmonic", omega=1.0)])
    def test_kernel_within_five_percent(self, target):
        """Test that 1000 modes reproduce the target kernel to 5% in sup norm."""
        model = debye_sampling(target, 1000)
        comparison = kernel_comparison(model, target, TIMES)

        assert comparison.relative_sup_error < 0.05
        assert len(comparison.rows()) == TIMES.size

    def test_default_cutoff(self):
        """Test that omega_max defaults to fifty times the fastest rate."""
        model = debye_sampling(BathTarget("ou", alpha=2.0), 100)
        assert model.omegas.max() == pytest.approx(100.0 * (1.0 - 0.5 / 100))
        assert model.n_modes == 100

    def test_target_kernels(self):
        """Test kappa(0) = alpha for OU and 1/tau for harmonic targets."""
        assert BathTarget("ou", alpha=2.0).kernel([0.0])[0] == pytest.approx(2.0)
        assert BathTarget("harmonic", omega=1.0, tau=0.5).kernel([0.0])[0] == pytest.approx(2.0)

    def test_unknown_target_raises(self):
        """Test target validation."""
        with pytest.raises(errors.InvalidParameterError):
            BathTarget("white")


class TestBathModel:
    """Test bath construction."""

    def test_mismatched_couplings_raise(self):
        """Test that every frequency needs a coupling."""
        with pytest.raises(errors.DimensionMismatchError):
            BathModel.build([1.0, 2.0], [1.0])

    def test_nonpositive_frequency_raises(self):
        """Test that bath frequencies must be positive."""
        with pytest.raises(errors.InvalidParameterError):
            BathModel.build([0.0, 1.0], [1.0, 1.0])

    def test_kernel_is_cosine_sum(self):
        """Test kappa_N(t) = sum c_k^2/omega_k^2 cos(omega_k t)."""
        model = BathModel.build([1.0, 2.0], [1.0, 2.0])
        np.testing.assert_allclose(model.kernel([0.0, np.pi]), [2.0, 0.0], atol=1e-12)


class TestHamiltonian:
    """Test Velocity-Verlet integration of particle and bath."""

    def test_empty_bath_free_particle_edge(self):
        """Test that without oscillators the particle moves freely and the noise is zero."""
        model = BathModel.build([], [])
        traj = integrate_hamiltonian(model, x0=1.0, v0=0.5, dt=0.01, horizon=1.0)

        np.testing.assert_allclose(traj.x, 1.0 + 0.5 * traj.times, atol=1e-12)
        np.testing.assert_array_equal(traj.xi, np.zeros_like(traj.times))
        assert traj.energy_drift == pytest.approx(0.0, abs=1e-14)

    def test_unresolved_step_raises(self):
        """Test that dt must resolve the fastest oscillator."""
        model = debye_sampling(BathTarget("ou"), 100)
        with pytest.raises(errors.UnstableStepError):
            integrate_hamiltonian(model, x0=0.0, v0=0.0, dt=0.01, horizon=1.0)

    def test_energy_conserved(self, rng):
        """Test that the relative energy drift stays below 1e-4 in a confining potential."""
        model = debye_sampling(BathTarget("ou"), 50, omega_max=10.0)
        model = BathModel.build(model.omegas, model.couplings, potential="x**2/2")
        state = sample_gibbs_initial(model, 0.5, rng)

        traj = integrate_hamiltonian(model, x0=0.5, v0=0.0, dt=0.001, horizon=5.0, state=state)

        assert traj.energy_drift < 1e-4
        assert traj.x.shape == traj.times.shape

    def test_bath_at_rest_has_no_noise(self):
        """Test that the equilibrium bath start gives xi = 0."""
        model = debye_sampling(BathTarget("ou"), 20, omega_max=5.0)
        traj = integrate_hamiltonian(model, x0=0.3, v0=0.0, dt=0.01, horizon=0.5)
        np.testing.assert_allclose(traj.xi, np.zeros_like(traj.times), atol=1e-12)

    @pytest.mark.slow
    def test_energy_bounded_over_million_steps(self, rng):
        """Test the 1e-4 relative energy bound over 10**6 steps at dt = 0.05/omega_max."""
        model = debye_sampling(BathTarget("ou"), 1000)
        state = sample_gibbs_initial(model, 0.0, rng)
        dt = 0.05 / model.omegas.max()

        traj = integrate_hamiltonian(model, x0=0.0, v0=0.0, dt=dt, horizon=1_000_000 * dt, state=state)

        assert traj.times.size == 1_000_001
        assert traj.energy_drift < 1e-4


class TestNoise:
    """Test the reconstructed bath noise."""

    def test_noise_at_time_zero(self):
        """Test xi(0) = sum c_k (x_k - c_k f(x0)/omega_k^2)."""
        model = BathModel.build([1.0, 2.0], [1.0, 1.0])
        state = BathState(x=np.array([1.0, 1.0]), p=np.zeros(2))
        xi = reconstructed_noise(model, state, x0=0.0, t=[0.0])
        assert xi[0] == pytest.approx(2.0)

    def test_long_time_grid_matches_direct_sum(self, rng):
        """Test that noise on a grid longer than one chunk equals the direct cosine-sine sum."""
        model = debye_sampling(BathTarget("ou"), 20, omega_max=5.0)
        state = sample_gibbs_initial(model, 0.2, rng)
        times = np.linspace(0.0, 50.0, 2 * NOISE_CHUNK + 7)

        xi = reconstructed_noise(model, state, x0=0.2, t=times)

        phase = np.multiply.outer(times, model.omegas)
        shifted = state.shifted(model, 0.2)
        cos_part = np.cos(phase) @ (model.couplings * shifted)
        direct = cos_part + np.sin(phase) @ (model.couplings * state.p / model.omegas)
        assert xi.shape == times.shape
        np.testing.assert_allclose(xi, direct, atol=1e-10)

    def test_covariance_needs_two_realizations(self):
        """Test that a single draw has no standard error."""
        model = debye_sampling(BathTarget("ou"), 10)
        with pytest.raises(errors.InsufficientSamplesError):
            noise_covariance(model, [0.0], 1)

    def test_covariance_thread_invariance(self):
        """Test that threads do not change the estimate."""
        model = debye_sampling(BathTarget("ou"), 20)
        one = noise_covariance(model, [0.0, 0.5], 30, seed=3, threads=1)
        many = noise_covariance(model, [0.0, 0.5], 30, seed=3, threads=3)

        np.testing.assert_array_equal(one.mean, many.mean)
        assert len(one.rows()) == 2
        np.testing.assert_allclose(one.expected, model.kernel([0.0, 0.5]))
