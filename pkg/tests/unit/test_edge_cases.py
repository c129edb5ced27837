"""Tests for edge cases and degenerate systems across the pipeline."""

import numpy as np
import pytest

from gle_homog.homogenize import homogenized_sde, j_blocks
from gle_homog.model import CoefficientField, GLESystem, default_probes, ou_realization
from gle_homog.simulate import SimulationConfig, coupled_sup_error
from gle_homog.utils import errors

GRID = np.linspace(-2.0, 2.0, 9)[:, None]


class TestEdgeCases:
    """Test degenerate inputs for the homogenization pipeline."""

    def test_zero_noise_gives_zero_covariance(self, make_system):
        """Test that sigma = 0 makes every J block vanish and leaves only theta^-1 F."""
        system = make_system(sigma="0", force="cos(x)")

        blocks = j_blocks(system, GRID)
        sde = homogenized_sde(system, route="generic", check=False)
        parts = sde.components(GRID)

        np.testing.assert_allclose(blocks.full(), 0.0, atol=1e-15)
        np.testing.assert_allclose(parts.s1, 0.0, atol=1e-15)
        np.testing.assert_allclose(parts.total, np.cos(GRID) / (2.0 + np.sin(GRID)), rtol=1e-12)
        np.testing.assert_array_equal(sde.diffusion(GRID), np.zeros((9, 1, 1)))

    def test_single_state(self, ou_system):
        """Test that a single state given as a flat vector is accepted."""
        drift = homogenized_sde(ou_system).drift([0.5])
        assert drift.shape == (1, 1)

    def test_duplicated_scale_gives_identical_errors(self, ou_system):
        """Test that repeating a scale on shared paths repeats its error exactly."""
        cfg = SimulationConfig(dt=0.01, horizon=0.1, seed=4, ensemble_size=1)

        first, second = coupled_sup_error(ou_system, homogenized_sde(ou_system), [0.1, 0.1], cfg)

        assert first.median == second.median
        assert first.q25 == second.q25

    def test_decoupled_two_dimensional_system(self, make_system):
        """Test that a diagonal 2D system has the drift of its two 1D components."""
        kernel, noise = ou_realization([1.0, 1.0])
        g = [["sqrt(2 + sin(x1))", 0], [0, "sqrt(2 + cos(x2))"]]
        coeffs = CoefficientField.from_expressions(2, [0, 0], g, g, g, q=2, r=2)
        system = GLESystem(
            coeffs=coeffs,
            kernel=kernel,
            noise=noise,
            tau_xi=0.5,
            probes=default_probes([(-2.0, 2.0), (-2.0, 2.0)]),
        )
        states = np.column_stack([np.linspace(-2.0, 2.0, 5), np.linspace(1.0, -1.0, 5)])

        drift = homogenized_sde(system, route="generic", check=False).drift(states)

        first = make_system(g="sqrt(2 + sin(x))", tau_xi=0.5)
        second = make_system(g="sqrt(2 + cos(x))", tau_xi=0.5)
        expected = np.column_stack(
            [
                homogenized_sde(first, route="generic", check=False).drift(states[:, :1])[:, 0],
                homogenized_sde(second, route="generic", check=False).drift(states[:, 1:])[:, 0],
            ]
        )
        np.testing.assert_allclose(drift, expected, rtol=1e-9, atol=1e-12)

    def test_two_dimensional_table_header(self):
        """Test the per-component column names of a 2D drift table."""
        kernel, noise = ou_realization([1.0, 2.0])
        coeffs = CoefficientField.constant(force=[0.0, 1.0], g=np.eye(2), h=np.eye(2), sigma=np.eye(2))
        system = GLESystem(coeffs=coeffs, kernel=kernel, noise=noise, probes=default_probes([(-1, 1), (-1, 1)]))

        header, rows = homogenized_sde(system).tabulate(np.zeros((2, 2)))

        assert header[:4] == ["x_1", "x_2", "S1_1", "S1_2"]
        assert header[-4:] == ["diffusion_1_1", "diffusion_1_2", "diffusion_2_1", "diffusion_2_2"]
        assert len(rows[0]) == len(header)

    @pytest.mark.parametrize("expression", ["sqrt(2 + sin(y))", "sqrt(2 + foo(x))"])
    def test_unknown_names_rejected(self, make_system, expression):
        """Test that expressions may only use the state variable and known functions."""
        with pytest.raises(errors.ConfigParseError):
            make_system(g=expression)
