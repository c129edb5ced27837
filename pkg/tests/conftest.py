"""Pytest configuration and shared fixtures for all tests."""

import json
from pathlib import Path

import numpy as np
import pytest

from gle_homog.model import CoefficientField, GLESystem, default_probes, harmonic_realization, ou_realization

BENCHMARK_BOX = [(-3.14, 3.14)]


def build_system(
    g="sqrt(2 + sin(x))",
    sigma=None,
    force=0,
    family="ou",
    alpha=1.0,
    omega=1.0,
    m0=1.0,
    tau_kappa=1.0,
    tau_xi=1.0,
    name="test",
) -> GLESystem:
    """Build a 1D GLE system from expression strings."""
    sigma = g if sigma is None else sigma
    kernel, noise = ou_realization(alpha) if family == "ou" else harmonic_realization(omega)
    coeffs = CoefficientField.from_expressions(1, force, g, g, sigma, q=kernel.output_dim, r=noise.output_dim)
    return GLESystem(
        coeffs=coeffs,
        kernel=kernel,
        noise=noise,
        m0=m0,
        tau_kappa=tau_kappa,
        tau_xi=tau_xi,
        probes=default_probes(BENCHMARK_BOX),
        name=name,
    )


@pytest.fixture
def make_system():
    """
    Factory fixture building 1D GLE systems from expression strings.

    Usage:
        system = make_system(sigma="1 + cos(x)/3", tau_xi=0.5)
    """
    return build_system


@pytest.fixture
def ou_system() -> GLESystem:
    """
    The 1D OU benchmark: g = h = sigma = sqrt(2 + sin x), F = 0, unit scales.

    Satisfies the fluctuation-dissipation relation.
    """
    return build_system(name="ou-benchmark")


@pytest.fixture
def harmonic_system() -> GLESystem:
    """1D harmonic benchmark with Omega = 1 and a periodic force."""
    return build_system(g="sqrt(2 + cos(x))", force="-sin(x)", family="harmonic", name="harmonic-benchmark")


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for randomized property tests."""
    return np.random.default_rng(20240601)


@pytest.fixture
def write_json(tmp_path: Path):
    """
    Factory fixture writing a JSON document into the test's temporary directory.

    Usage:
        path = write_json("model.json", {"name": "m", ...})
    """

    def _write(name: str, data) -> str:
        path = tmp_path / name
        path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def constant_temperature_model() -> dict:
    """Thermophoresis model file with uniform temperature and viscosity."""
    return {
        "name": "isothermal",
        "thermo": {
            "temperature": "1",
            "viscosity": "1",
            "radius": 0.1,
            "noise": {"kind": "ou", "alpha": 1.0},
            "interval": [0.0, 1.0],
        },
    }


# Test markers for categorizing tests
def pytest_configure(config):
    """Configure custom pytest markers."""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")
    config.addinivalue_line("markers", "edge_case: mark test as an edge case test")
    config.addinivalue_line("markers", "statistical: mark test as a seeded Monte Carlo check")


# Pytest hooks for custom behavior
def pytest_collection_modifyitems(config, items):
    """
    Modify test collection to add markers automatically.

    This hook automatically adds markers based on test location and name.
    """
    for item in items:
        if "integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)
        elif "unit" in str(item.fspath):
            item.add_marker(pytest.mark.unit)

        if "edge" in item.nodeid.lower():
            item.add_marker(pytest.mark.edge_case)

        if "statistic" in item.nodeid.lower():
            item.add_marker(pytest.mark.statistical)
