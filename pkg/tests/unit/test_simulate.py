"""Tests for the integrators, coupled convergence runs and estimators."""

import numpy as np
import pytest

from gle_homog.homogenize import homogenized_sde, markovian_limit
from gle_homog.markovianize import build_extended
from gle_homog.model import harmonic_realization, ou_realization
from gle_homog.simulate import (
    OccupancyHistogram,
    PathBundle,
    SimulationConfig,
    coupled_sup_error,
    estimate_covariance,
    integrate_limit,
    integrate_prelimit,
    reflect,
    reflecting_sim,
    simulate_noise,
    stationary_burn_in,
)
from gle_homog.utils import errors


def constant_limit(gamma=2.0, force=0.0):
    """Memoryless limit with constant friction, unit noise and constant force."""
    return markovian_limit(
        1,
        lambda x: np.full((x.shape[0], 1, 1), gamma),
        lambda x: np.ones((x.shape[0], 1, 1)),
        force=lambda x: np.full((x.shape[0], 1), force),
    )


class TestSimulationConfig:
    """Test validation of simulation settings."""

    @pytest.mark.parametrize(
        "options",
        [
            {"dt": 0.0},
            {"horizon": 0.001},
            {"scheme": "rk4"},
            {"ensemble_size": 0},
            {"seed": -1},
            {"seed": 2**64},
            {"threads": 0},
            {"epsilon": -0.1},
        ],
    )
    def test_invalid_settings_raise(self, options):
        """Test that each invalid setting is rejected."""
        with pytest.raises(errors.InvalidParameterError):
            SimulationConfig(**{"dt": 0.01, "horizon": 1.0, **options})

    def test_n_steps(self):
        """Test that the step count is robust to rounding."""
        assert SimulationConfig(dt=0.01, horizon=1.0).n_steps == 100
        assert SimulationConfig(dt=0.005, horizon=0.2).n_steps == 40

    def test_to_dict(self):
        """Test the dictionary form of a config."""
        data = SimulationConfig(dt=0.01, horizon=1.0, seed=5, x0=(0.5,)).to_dict()
        assert data["x0"] == [0.5]
        assert data["seed"] == 5
        assert data["scheme"] == "semi-implicit-fast-block"


class TestPathBundle:
    """Test shared Brownian paths."""

    def test_generation_independent_of_threads(self):
        """Test that increments do not depend on the number of threads."""
        one = PathBundle.generate(3, 6, 8, 0.01, noise_dim=2, initial_dim=1, threads=1)
        many = PathBundle.generate(3, 6, 8, 0.01, noise_dim=2, initial_dim=1, threads=3)

        np.testing.assert_array_equal(one.increments, many.increments)
        np.testing.assert_array_equal(one.initial, many.initial)
        assert one.increments.shape == (6, 8, 2)
        assert one.initial.shape == (6, 1)

    def test_coarsen_sums_increments(self):
        """Test that coarsening adds consecutive increments."""
        paths = PathBundle.generate(1, 2, 6, 0.1, noise_dim=1)
        coarse = paths.coarsen(3)

        assert coarse.dt == pytest.approx(0.3)
        assert coarse.factor == 3
        np.testing.assert_allclose(coarse.increments[:, 0], paths.increments[:, :3].sum(axis=1))

    def test_coarsen_requires_divisor(self):
        """Test that the factor must divide the number of steps."""
        with pytest.raises(errors.InvalidParameterError):
            PathBundle.zeros(1, 8, 0.1, 1).coarsen(3)

    def test_view_for(self):
        """Test selecting the coarsened view by step size."""
        paths = PathBundle.zeros(1, 6, 0.1, 1)
        assert paths.view_for(0.3).n_steps == 2
        assert paths.view_for(0.1) is paths
        with pytest.raises(errors.InvalidParameterError):
            paths.view_for(0.15)


class TestPrelimit:
    """Test integration of the extended system."""

    def test_euler_maruyama_unstable_step_raises(self, ou_system):
        """Test that the explicit scheme refuses a step above the stability bound."""
        cfg = SimulationConfig(dt=0.01, horizon=0.1, epsilon=0.01, scheme="euler-maruyama", ensemble_size=2)
        paths = PathBundle.generate(0, 2, cfg.n_steps, cfg.dt, noise_dim=1, initial_dim=1)

        with pytest.raises(errors.UnstableStepError):
            integrate_prelimit(build_extended(ou_system, 0.01), cfg, paths)

    def test_semi_implicit_handles_stiff_step(self, ou_system):
        """Test that the semi-implicit scheme runs where the explicit one refuses."""
        cfg = SimulationConfig(dt=0.01, horizon=0.1, epsilon=0.01, ensemble_size=2)
        paths = PathBundle.generate(0, 2, cfg.n_steps, cfg.dt, noise_dim=1, initial_dim=1)

        traj = integrate_prelimit(build_extended(ou_system, 0.01), cfg, paths)

        assert traj.states.shape == (2, 11, 4)
        assert np.all(np.isfinite(traj.states))

    def test_zero_noise_stays_at_rest(self, ou_system):
        """Test that without force, noise or initial velocity the particle does not move."""
        cfg = SimulationConfig(dt=0.01, horizon=0.5, epsilon=0.1, zero_initial_noise=True, ensemble_size=3)
        paths = PathBundle.zeros(3, cfg.n_steps, cfg.dt, noise_dim=1, initial_dim=1)

        traj = integrate_prelimit(build_extended(ou_system, 0.1), cfg, paths)

        np.testing.assert_array_equal(traj.positions(1), np.zeros((3, 51, 1)))

    def test_noise_dimension_mismatch_raises(self, ou_system):
        """Test that paths must carry one increment per noise."""
        cfg = SimulationConfig(dt=0.01, horizon=0.1)
        with pytest.raises(errors.DimensionMismatchError):
            integrate_prelimit(build_extended(ou_system), cfg, PathBundle.zeros(1, 10, 0.01, 2))


class TestLimit:
    """Test integration of the limiting SDE."""

    def test_constant_drift_is_linear_motion(self):
        """Test that F/gamma = 1.5 moves the particle linearly without noise."""
        cfg = SimulationConfig(dt=0.1, horizon=1.0)
        traj = integrate_limit(constant_limit(force=3.0), cfg, PathBundle.zeros(1, 10, 0.1, 1))
        np.testing.assert_allclose(traj.states[0, :, 0], 1.5 * traj.times, atol=1e-12)

    def test_strong_order_sanity(self):
        """Test that halving dt on a linear limit cuts the strong error at T by a factor in [1.2, 2.9]."""
        limit = markovian_limit(
            1,
            lambda x: np.ones((x.shape[0], 1, 1)),
            lambda x: np.ones((x.shape[0], 1, 1)),
            force=lambda x: -2.0 * x,
        )
        coarse_dt, horizon = 0.1, 1.0
        fine_dt = coarse_dt / 64
        paths = PathBundle.generate(seed=5, n_members=200, n_steps=640, dt=fine_dt, noise_dim=1)

        def endpoint(dt):
            cfg = SimulationConfig(dt=dt, horizon=horizon, x0=(1.0,))
            return integrate_limit(limit, cfg, paths).states[:, -1, 0]

        reference = endpoint(fine_dt)
        error_coarse = np.mean(np.abs(endpoint(coarse_dt) - reference))
        error_half = np.mean(np.abs(endpoint(coarse_dt / 2) - reference))

        assert 1.2 <= error_coarse / error_half <= 2.9

    def test_coupled_sup_error_small_run(self, ou_system):
        """Test the step selection and record fields of a small coupled run."""
        cfg = SimulationConfig(dt=0.005, horizon=0.2, seed=1, ensemble_size=4)
        records = coupled_sup_error(ou_system, homogenized_sde(ou_system), [0.2, 0.1], cfg)

        assert [r.epsilon for r in records] == [0.2, 0.1]
        assert [r.dt for r in records] == pytest.approx([0.02, 0.01])
        for record in records:
            assert record.n_paths == 4
            assert 0.0 <= record.q25 <= record.median <= record.q75
            assert np.isfinite(record.median)

    def test_coupled_requires_decreasing_scales(self, ou_system):
        """Test that scales must not increase."""
        cfg = SimulationConfig(dt=0.005, horizon=0.2)
        with pytest.raises(errors.InvalidParameterError):
            coupled_sup_error(ou_system, homogenized_sde(ou_system), [0.1, 0.2], cfg)


class TestReflection:
    """Test reflected simulations."""

    def test_reflect(self):
        """Test mirror reflection at both ends."""
        np.testing.assert_allclose(reflect(np.array([1.2, -0.3, 2.5, 0.4]), 0.0, 1.0), [0.8, 0.3, 0.5, 0.4])

    def test_counts_every_step_after_burn_in(self):
        """Test the number of binned samples and the normalization of the density."""
        cfg = SimulationConfig(dt=0.01, horizon=1.0, seed=2, ensemble_size=4)

        full = reflecting_sim(constant_limit(), (0.0, 1.0), cfg, bins=10)
        half = reflecting_sim(constant_limit(), (0.0, 1.0), cfg, bins=10, burn_in=0.5)

        assert full.n_samples == 400
        assert half.n_samples == 200
        assert np.sum(full.density() * np.diff(full.edges)) == pytest.approx(1.0)
        assert len(full.rows()) == 10

    def test_burn_in_covering_horizon_raises(self):
        """Test that at least one step must be recorded."""
        cfg = SimulationConfig(dt=0.1, horizon=1.0)
        with pytest.raises(errors.InvalidParameterError):
            reflecting_sim(constant_limit(), (0.0, 1.0), cfg, burn_in=1.0)

    def test_histogram_centers(self):
        """Test bin centers."""
        hist = OccupancyHistogram(edges=np.array([0.0, 0.5, 1.0]), counts=np.array([1, 3]))
        np.testing.assert_allclose(hist.centers, [0.25, 0.75])
        np.testing.assert_allclose(hist.density(), [0.5, 1.5])


class TestNoiseSampling:
    """Test exact sampling of realization readouts and covariance estimation."""

    def test_shapes_and_thread_invariance(self):
        """Test the output layout and that threads do not change the samples."""
        _, noise = harmonic_realization(1.0)
        one = simulate_noise(noise, 5, 20, 0.1, seed=4, threads=1)
        many = simulate_noise(noise, 5, 20, 0.1, seed=4, threads=2)

        assert one.shape == (5, 21, 1)
        np.testing.assert_array_equal(one, many)

    def test_white_samples_covariance(self, rng):
        """Test lag-0 and lag-1 estimates on independent standard normals."""
        samples = rng.standard_normal((200, 500))
        est = estimate_covariance(samples, dt=0.1, lags=[0.0, 0.1], burn_in=0.0)

        assert abs(est.mean[0, 0, 0] - 1.0) < 5.0 * est.stderr[0, 0, 0]
        assert abs(est.mean[1, 0, 0]) < 5.0 * est.stderr[1, 0, 0]
        assert est.n_paths == 200
        assert len(est.rows(reference=np.ones((2, 1, 1)))[0]) == 6

    def test_single_path_raises(self):
        """Test that standard errors need two paths."""
        with pytest.raises(errors.InsufficientSamplesError):
            estimate_covariance(np.zeros((1, 10)), dt=0.1, lags=[0.0], burn_in=0.0)

    def test_burn_in_is_required(self):
        """Test that callers must state how much of each path to discard."""
        with pytest.raises(TypeError):
            estimate_covariance(np.zeros((3, 10)), 0.1, [0.0])

    def test_negative_burn_in_raises(self):
        """Test that a negative burn-in is rejected."""
        with pytest.raises(errors.InvalidParameterError):
            estimate_covariance(np.zeros((3, 10)), dt=0.1, lags=[0.0], burn_in=-1.0)

    def test_stationary_burn_in(self):
        """Test ten slowest time constants by default, and a custom multiple."""
        _, noise = ou_realization(0.5)
        assert stationary_burn_in(noise) == pytest.approx(20.0)
        assert stationary_burn_in(noise, factor=3.0) == pytest.approx(6.0)

    def test_lag_beyond_window_edge(self):
        """Test that lags longer than the post-burn-in window are rejected."""
        with pytest.raises(errors.InsufficientSamplesError):
            estimate_covariance(np.zeros((3, 10)), dt=0.1, lags=[0.5], burn_in=0.6)

    def test_stationary_start(self):
        """Test that the first samples of an OU noise have the stationary variance."""
        _, noise = ou_realization(1.0)
        samples = simulate_noise(noise, 4000, 1, 0.1, seed=9)
        assert np.var(samples[:, 0, 0]) == pytest.approx(0.5, rel=0.1)
