"""Thermophoresis of a Brownian particle with colored noise in one dimension.

A particle with diffusion coefficient D(x) in a temperature field T(x) has damping
gamma = kB T / D and noise amplitude sigma = kB T sqrt(2 / D). With an OU or harmonic
memory kernel the small-mass limit carries a thermophoretic drift b(x), written here
in terms of r = tau / m0.
"""

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.constants
import scipy.integrate
import sympy as sp

from gle_homog.expressions import ExprLike, ScalarExpression
from gle_homog.model import (
    CoefficientField,
    GLESystem,
    default_probes,
    harmonic_realization,
    ou_realization,
)
from gle_homog.simulate import OccupancyHistogram
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("thermophoresis")

NOISE_KINDS = ("ou", "harmonic")
UNIT_SYSTEMS = ("nondimensional", "si")
DENOMINATOR_TOL = 1e-14
QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10


@dataclass(frozen=True)
class NoiseKind:
    """Colored-noise family: OU with rate ``alpha`` or harmonic with frequency ``omega``."""

    kind: str
    alpha: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise errors.InvalidParameterError(f"unknown noise kind '{self.kind}', expected one of {NOISE_KINDS}")
        if self.kind == "ou" and not self.alpha > 0:
            raise errors.NonPositiveRateError(f"OU rate must be positive, got {self.alpha}")
        if self.kind == "harmonic" and self.omega == 0:
            raise errors.ZeroFrequencyError("harmonic frequency must be nonzero")

    def to_dict(self) -> dict:
        """Convert noise kind to dictionary."""
        if self.kind == "ou":
            return {"kind": "ou", "alpha": self.alpha}
        return {"kind": "harmonic", "omega": self.omega}


class ThermoModel:
    """
    Temperature and diffusion profiles of a thermophoretic particle.

    Exactly one of ``diffusion`` (an expression in x) or ``viscosity`` (an expression
    in T) must be given. With a viscosity law the diffusion follows the Stokes-Einstein
    relation D = kB T / (6 pi R mu(T)).
    """

    def __init__(
        self,
        temperature: ExprLike,
        noise: NoiseKind,
        diffusion: Optional[ExprLike] = None,
        viscosity: Optional[ExprLike] = None,
        radius: float = 1.0,
        kb: Optional[float] = None,
        units: str = "nondimensional",
        m0: float = 1.0,
        tau: float = 1.0,
        interval: Tuple[float, float] = (0.0, 1.0),
    ):
        if (diffusion is None) == (viscosity is None):
            raise errors.InvalidParameterError("give exactly one of a diffusion profile or a viscosity law")
        if units not in UNIT_SYSTEMS:
            raise errors.InvalidParameterError(f"unknown unit system '{units}', expected one of {UNIT_SYSTEMS}")
        if kb is None:
            kb = scipy.constants.Boltzmann if units == "si" else 1.0
        self.kb = validators.require_positive(kb, "kB")
        self.units = units
        self.radius = validators.require_positive(radius, "radius")
        self.m0 = validators.require_positive(m0, "m0")
        self.tau = validators.require_positive(tau, "tau")
        self.noise = noise
        self.interval = (float(interval[0]), float(interval[1]))
        if not self.interval[1] > self.interval[0]:
            raise errors.InvalidParameterError(f"interval must satisfy a < b, got {self.interval}")

        self.temperature = ScalarExpression(temperature, "x")
        self.viscosity = None if viscosity is None else ScalarExpression(viscosity, "T")
        if self.viscosity is not None:
            mu_of_x = self.viscosity.compose(self.temperature).expr
            d_expr = self.kb * self.temperature.expr / (6 * sp.pi * self.radius * mu_of_x)
            self.diffusion = ScalarExpression(d_expr, "x")
        else:
            self.diffusion = ScalarExpression(diffusion, "x")

    @property
    def ratio(self) -> float:
        """r = tau / m0."""
        return self.tau / self.m0

    def with_ratio(self, r: float) -> "ThermoModel":
        """The same model with tau rescaled so that tau / m0 = r."""
        clone = object.__new__(ThermoModel)
        clone.__dict__.update(self.__dict__)
        clone.tau = validators.require_positive(r, "r") * self.m0
        return clone

    def profiles(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        T, T', D and D' at the given positions.

        Raises:
            DomainViolationError: If T or D is not strictly positive at a position
        """
        x = np.asarray(x, dtype=float)
        t, dt = self.temperature(x), self.temperature.derivative(x)
        d, dd = self.diffusion(x), self.diffusion.derivative(x)
        for label, values in (("temperature", t), ("diffusion", d)):
            bad = np.flatnonzero(~(values.reshape(-1) > 0))
            if bad.size:
                raise errors.DomainViolationError(
                    f"{label} must be positive, got {values.reshape(-1)[bad[0]]} at x={x.reshape(-1)[bad[0]]}"
                )
        return t, dt, d, dd

    def viscosity_profile(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """mu(T(x)) and mu'(T(x))."""
        if self.viscosity is None:
            raise errors.InvalidParameterError("model defines no viscosity law")
        t = self.temperature(x)
        return self.viscosity(t), self.viscosity.derivative(t)

    def to_dict(self) -> dict:
        """Convert model to dictionary."""
        return {
            "temperature": self.temperature.source,
            "diffusion": self.diffusion.source if self.viscosity is None else None,
            "viscosity": None if self.viscosity is None else self.viscosity.source,
            "radius": self.radius,
            "kB": self.kb,
            "units": self.units,
            "m0": self.m0,
            "tau": self.tau,
            "noise": self.noise.to_dict(),
            "interval": list(self.interval),
        }


def damping_and_noise(model: ThermoModel, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Damping gamma = kB T / D and noise amplitude sigma = kB T sqrt(2) / sqrt(D).

    Raises:
        DomainViolationError: If T or D is not positive at x
    """
    t, _, d, _ = model.profiles(x)
    gamma = model.kb * t / d
    sigma = model.kb * t * np.sqrt(2.0) / np.sqrt(d)
    return gamma, sigma


def to_gle_system(model: ThermoModel, probe_count: int = 32) -> GLESystem:
    """
    The 1D GLE with g = h = sqrt(gamma), sigma from the diffusion profile and no external force.

    Kernel and noise share the model's noise family; both time scales equal tau.
    """
    t_expr, d_expr = model.temperature.expr, model.diffusion.expr
    g_expr = sp.sqrt(model.kb * t_expr / d_expr)
    s_expr = model.kb * t_expr * sp.sqrt(2) / sp.sqrt(d_expr)
    coeffs = CoefficientField.from_expressions(1, 0, g_expr, g_expr, s_expr, q=1, r=1)
    if model.noise.kind == "ou":
        kernel, noise = ou_realization(model.noise.alpha)
    else:
        kernel, noise = harmonic_realization(model.noise.omega, tau=1.0)
    probes = default_probes([model.interval], count=probe_count)
    return GLESystem(
        coeffs=coeffs,
        kernel=kernel,
        noise=noise,
        m0=model.m0,
        tau_kappa=model.tau,
        tau_xi=model.tau,
        probes=probes,
        name="thermophoresis",
    )


def _require_kind(model: ThermoModel, kind: str) -> None:
    if model.noise.kind != kind:
        raise errors.WrongNoiseKindError(f"this drift needs {kind} noise, the model has {model.noise.kind}")


def drift_b1(model: ThermoModel, x) -> np.ndarray:
    """
    Thermophoretic drift under OU noise.

        b1 = D' - [2 m0 alpha D^2 / (tau kB T + 2 m0 alpha D)] T' / T

    Raises:
        WrongNoiseKindError: If the model noise is not OU
        DomainViolationError: If T or D is not positive at x
    """
    _require_kind(model, "ou")
    t, dt, d, dd = model.profiles(x)
    alpha, m0 = model.noise.alpha, model.m0
    return dd - 2.0 * m0 * alpha * d**2 / (model.tau * model.kb * t + 2.0 * m0 * alpha * d) * dt / t


def drift_b1_stokes(model: ThermoModel, x) -> np.ndarray:
    """
    OU thermophoretic drift written through the viscosity law.

        b1 = [kB T' / (6 pi R mu)] [(mu - mu' T) / mu - alpha / (alpha + 3 pi r R mu)]
    """
    _require_kind(model, "ou")
    t, dt, _, _ = model.profiles(x)
    mu, dmu = model.viscosity_profile(x)
    alpha, radius = model.noise.alpha, model.radius
    prefactor = model.kb * dt / (6.0 * np.pi * radius * mu)
    return prefactor * ((mu - dmu * t) / mu - alpha / (alpha + 3.0 * np.pi * model.ratio * radius * mu))


def drift_b2(model: ThermoModel, x) -> np.ndarray:
    """
    Thermophoretic drift under harmonic noise, with a = Omega^2:

        b2 = D' - D T'/T + 2 tau a kB T' D (N D) / (Q D^2)
        N D   = kB T tau + m0 a (a - 1) D
        Q D^2 = 4 m0^2 a^3 D^2 + 2 kB T m0 tau a^2 (a - 1) D + (kB T)^2 tau^2 (1 + 2 a)

    Raises:
        WrongNoiseKindError: If the model noise is not harmonic
        DegenerateDenominatorError: If Q D^2 vanishes at a position
    """
    _require_kind(model, "harmonic")
    t, dt, d, dd = model.profiles(x)
    a = model.noise.omega**2
    m0, tau, kt = model.m0, model.tau, model.kb * t
    nd = kt * tau + m0 * a * (a - 1.0) * d
    qd2 = 4.0 * m0**2 * a**3 * d**2 + 2.0 * kt * m0 * tau * a**2 * (a - 1.0) * d + kt**2 * tau**2 * (1.0 + 2.0 * a)
    scale = 4.0 * m0**2 * a**3 * d**2 + kt**2 * tau**2 * (1.0 + 2.0 * a)
    bad = np.flatnonzero(np.abs(qd2).reshape(-1) <= DENOMINATOR_TOL * scale.reshape(-1))
    if bad.size:
        raise errors.DegenerateDenominatorError(
            f"harmonic drift denominator vanishes at x={np.asarray(x, dtype=float).reshape(-1)[bad[0]]}"
        )
    return dd - d * dt / t + 2.0 * tau * a * model.kb * dt * d * nd / qd2


def drift(model: ThermoModel, x) -> np.ndarray:
    """The thermophoretic drift of the model's noise family."""
    return drift_b1(model, x) if model.noise.kind == "ou" else drift_b2(model, x)


@dataclass(frozen=True)
class DensityTable:
    """Stationary density on a grid, normalized by adaptive quadrature."""

    x: np.ndarray
    density: np.ndarray
    normalization: float

    def rows(self) -> List[list]:
        return [[float(xi), float(pi)] for xi, pi in zip(self.x, self.density)]


def _quad(func, a: float, b: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            value, _ = scipy.integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        except scipy.integrate.IntegrationWarning as exc:
            raise errors.QuadratureFailureError(f"quadrature on [{a}, {b}] failed: {exc}") from exc
    if not np.isfinite(value):
        raise errors.QuadratureFailureError(f"quadrature on [{a}, {b}] is not finite")
    return value


def stationary_density(model: ThermoModel, a: float, b: float, grid: Union[int, Sequence[float]] = 201) -> DensityTable:
    """
    Stationary density of the limiting dynamics on (a, b) with reflecting ends.

    rho(x) is proportional to exp(int_a^x (b(y) - D'(y)) / D(y) dy); the normalization is
    computed by nested adaptive quadrature.

    Raises:
        InvalidParameterError: If a >= b
        QuadratureFailureError: If an integral does not converge
    """
    a, b = float(a), float(b)
    if not b > a:
        raise errors.InvalidParameterError(f"density interval must satisfy a < b, got ({a}, {b})")
    xs = np.linspace(a, b, int(grid)) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    if xs.min() < a or xs.max() > b:
        raise errors.InvalidParameterError("density grid must lie inside the interval")

    def integrand(y: float) -> float:
        _, _, d, dd = model.profiles(np.array([y]))
        return float((drift(model, np.array([y]))[0] - dd[0]) / d[0])

    def potential(x_end: float) -> float:
        return _quad(integrand, a, x_end) if x_end > a else 0.0

    normalization = _quad(lambda y: np.exp(potential(y)), a, b)
    order = np.argsort(xs)
    values = np.empty_like(xs)
    phi, last = 0.0, a
    for idx in order:
        phi += _quad(integrand, last, xs[idx]) if xs[idx] > last else 0.0
        last = xs[idx]
        values[idx] = np.exp(phi)
    LOG.debug(f"Stationary density normalization {normalization:.6e} on ({a}, {b})")
    return DensityTable(x=xs, density=values / normalization, normalization=normalization)


def critical_ratio(model: ThermoModel, x: float) -> List[float]:
    """
    Positive ratios r = tau / m0 at which the drift at x changes sign.

    OU noise gives at most one root r_c = 2 alpha D (D T'/T - D') / (kB T D'). For harmonic
    noise the drift numerator is a quadratic in r with coefficients
    (kB T)^2 [D' (1 + 2a) - D T'/T], 2 kB T a^2 (a - 1) D D' and 4 a^3 D^2 (D' - D T'/T).
    Complex, zero and negative roots are discarded.
    """
    t, dt, d, dd = (float(v) for v in model.profiles(np.array([x], dtype=float)))
    kt = model.kb * t
    if model.noise.kind == "ou":
        if dd == 0.0:
            return []
        root = 2.0 * model.noise.alpha * d * (d * dt / t - dd) / (kt * dd)
        return [root] if root > 0 else []

    a = model.noise.omega**2
    coeffs = [
        kt**2 * (dd * (1.0 + 2.0 * a) - d * dt / t),
        2.0 * kt * a**2 * (a - 1.0) * d * dd,
        4.0 * a**3 * d**2 * (dd - d * dt / t),
    ]
    scale = max(abs(c) for c in coeffs)
    if scale == 0.0:
        return []
    coeffs = [c / scale for c in coeffs]
    while coeffs and abs(coeffs[0]) < 1e-14:
        coeffs = coeffs[1:]
    if len(coeffs) < 2:
        return []
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) <= 1e-12 * np.maximum(1.0, np.abs(roots.real))].real
    return sorted(float(r) for r in real if r > 1e-12)


def constant_viscosity_exponent(model: ThermoModel) -> float:
    """
    Exponent p with stationary density proportional to T^-p when the viscosity mu0 is constant.

    OU noise: p = alpha / (alpha + 3 pi r R mu0). Harmonic noise, with a = Omega^2 and k = 3 pi R mu0:
    p = (a^3 + k^2 r^2) / (a^3 + k r a^2 (a - 1) + k^2 r^2 (1 + 2a)).
    """
    if model.viscosity is None or not model.viscosity.is_constant:
        raise errors.InvalidParameterError("the exponent is defined for a constant viscosity only")
    mu0 = float(model.viscosity(np.array([1.0]))[0])
    r, k = model.ratio, 3.0 * np.pi * model.radius * mu0
    if model.noise.kind == "ou":
        alpha = model.noise.alpha
        return alpha / (alpha + k * r)
    a = model.noise.omega**2
    return (a**3 + k**2 * r**2) / (a**3 + k * r * a**2 * (a - 1.0) + k**2 * r**2 * (1.0 + 2.0 * a))


def ks_distance(occupancy: OccupancyHistogram, table: DensityTable) -> float:
    """
    Kolmogorov-Smirnov distance between binned occupancy and a density table.

    Both CDFs are compared at the histogram edges; the model CDF comes from trapezoidal
    integration of the table.
    """
    if occupancy.n_samples == 0:
        raise errors.InsufficientSamplesError("occupancy histogram is empty")
    empirical = np.concatenate([[0.0], np.cumsum(occupancy.counts)]) / occupancy.n_samples
    cumulative = scipy.integrate.cumulative_trapezoid(table.density, table.x, initial=0.0)
    model_cdf = np.interp(occupancy.edges, table.x, cumulative / cumulative[-1])
    return float(np.abs(empirical - model_cdf).max())
