"""GLE data model: realization triples, kernels, coefficient fields and systems."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.stats import qmc

from gle_homog import matrixlab
from gle_homog.expressions import ExpressionField, matrix_entries, vector_entries
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("model")

LYAPUNOV_TOL = 1e-10
CONDITION_LIMIT = 1e12
FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
DEFAULT_PROBE_COUNT = 32
FDT_TOL = 1e-6
FDT_TIMES = 16

BatchField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RealizationTriple:
    """Markovian realization (Gamma, M, C, Sigma) of a kernel or a stationary Gaussian noise.

    The process beta solves d beta = -Gamma beta dt + Sigma dW and is read out as C beta.
    Sigma is recovered as the symmetric square root of Gamma M + M Gamma* when omitted.
    """

    gamma: np.ndarray
    m: np.ndarray
    c: np.ndarray
    sigma: Optional[np.ndarray] = None
    family: str = "triple"
    params: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        gamma = validators.as_matrix(self.gamma, "Gamma")
        m = validators.as_matrix(self.m, "M")
        c = validators.as_matrix(self.c, "C")
        n = validators.require_square(gamma, "Gamma")
        if m.shape != (n, n):
            raise errors.DimensionMismatchError(f"M has shape {m.shape}, expected {(n, n)}")
        if c.shape[1] != n:
            raise errors.DimensionMismatchError(f"C has {c.shape[1]} columns, expected {n}")

        report = matrixlab.spectral_check(gamma)
        if not report.positive_stable:
            raise errors.NotPositiveStableError(
                f"Gamma is not positive stable: min real part {report.min_real_part:.3e}"
            )
        if not matrixlab.is_symmetric_positive_definite(m):
            raise errors.NotPositiveDefiniteError("M must be symmetric positive definite")

        lyap = gamma @ m + m @ gamma.T
        if self.sigma is None:
            try:
                sigma = matrixlab.psd_sqrt(lyap)
            except errors.NotPositiveDefiniteError as e:
                raise errors.LyapunovConsistencyError(f"Gamma M + M Gamma* is not positive semidefinite: {e}") from e
        else:
            sigma = validators.as_matrix(self.sigma, "Sigma")
            if sigma.shape[0] != n:
                raise errors.DimensionMismatchError(f"Sigma has {sigma.shape[0]} rows, expected {n}")
            mismatch = np.linalg.norm(lyap - sigma @ sigma.T)
            if mismatch > LYAPUNOV_TOL * (1.0 + np.linalg.norm(sigma @ sigma.T)):
                raise errors.LyapunovConsistencyError(
                    f"Gamma M + M Gamma* differs from Sigma Sigma* by {mismatch:.3e}"
                )

        for name, value in (("gamma", gamma), ("m", m), ("c", c), ("sigma", sigma)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def state_dim(self) -> int:
        return self.gamma.shape[0]

    @property
    def output_dim(self) -> int:
        return self.c.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.sigma.shape[1]

    def integral(self) -> np.ndarray:
        """C Gamma^-1 M C*, the time integral of the readout covariance over [0, inf)."""
        return self.c @ np.linalg.solve(self.gamma, self.m) @ self.c.T

    def max_timescale(self) -> float:
        """Inverse of the slowest decay rate of Gamma."""
        return 1.0 / matrixlab.spectral_check(self.gamma).min_real_part

    def check_rank(self) -> None:
        """Raise RankDeficientError unless C has full row rank."""
        rank = np.linalg.matrix_rank(self.c)
        if rank < self.c.shape[0]:
            raise errors.RankDeficientError(f"C has rank {rank} < {self.c.shape[0]} rows")

    def transformed(self, t) -> "RealizationTriple":
        """Equivalent realization (T Gamma T^-1, T M T*, C T^-1, T Sigma)."""
        t = validators.as_matrix(t, "T")
        t_inv = np.linalg.inv(t)
        return RealizationTriple(
            gamma=t @ self.gamma @ t_inv,
            m=t @ self.m @ t.T,
            c=self.c @ t_inv,
            sigma=t @ self.sigma,
            family=self.family,
            params=self.params,
        )

    def to_dict(self) -> dict:
        """Convert triple to dictionary."""
        return {
            "family": self.family,
            "params": self.params,
            "Gamma": self.gamma.tolist(),
            "M": self.m.tolist(),
            "C": self.c.tolist(),
            "Sigma": self.sigma.tolist(),
        }


def _readout(triple: RealizationTriple, t) -> np.ndarray:
    times = np.asarray(t, dtype=float)
    flat = np.abs(times.reshape(-1))
    props = scipy.linalg.expm(-flat[:, None, None] * triple.gamma[None, :, :])
    if not np.all(np.isfinite(props)):
        raise errors.MatrixOverflowError("matrix exponential overflowed while evaluating a kernel")
    values = np.einsum("ij,tjk,kl,ml->tim", triple.c, props, triple.m, triple.c)
    negative = times.reshape(-1) < 0
    values[negative] = values[negative].transpose(0, 2, 1)
    if times.ndim == 0:
        return values[0]
    return values.reshape(times.shape + values.shape[1:])


def kernel_eval(triple: RealizationTriple, t) -> np.ndarray:
    """Memory kernel kappa(t) = C e^{-Gamma |t|} M C*, transposed for negative t."""
    return _readout(triple, t)


def covariance_eval(triple: RealizationTriple, t) -> np.ndarray:
    """Noise covariance R(t) = C e^{-Gamma |t|} M C*, transposed for negative t."""
    return _readout(triple, t)


def _diagonal_values(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 2:
        if arr.shape[0] != arr.shape[1] or np.any(arr - np.diag(np.diag(arr))):
            raise errors.InvalidParameterError(f"{name} must be a diagonal matrix")
        arr = np.diag(arr)
    return np.atleast_1d(arr).astype(float)


def ou_realization(a) -> Tuple[RealizationTriple, RealizationTriple]:
    """
    Ornstein-Uhlenbeck kernel and noise triples (A, A, I) and (A, A/2, I).

    Args:
        a: Positive rates as a scalar, a vector or a diagonal matrix

    Returns:
        The kernel triple and the noise triple

    Raises:
        NonPositiveRateError: If any rate is not strictly positive
    """
    rates = _diagonal_values(a, "A")
    if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
        raise errors.NonPositiveRateError(f"OU rates must be positive, got {rates.tolist()}")
    big_a = np.diag(rates)
    eye = np.eye(rates.size)
    params = {"alpha": rates.tolist()}
    kernel = RealizationTriple(big_a, big_a, eye, np.sqrt(2.0) * big_a, family="ou", params=params)
    noise = RealizationTriple(big_a, 0.5 * big_a, eye, big_a, family="ou", params=params)
    return kernel, noise


def harmonic_realization(omega, tau: float = 1.0) -> Tuple[RealizationTriple, RealizationTriple]:
    """
    Harmonic-noise kernel and noise triples built from a damped stochastic oscillator.

    The noise triple is Gamma2 = [[0, -I], [W, W]]/tau, M2 = diag(I, W)/(2 tau), C2 = [I 0]
    with W = Omega^2. The kernel triple is its image under T = [[I, I/2], [0, -I/2]]
    with M1 = 2 T M2 T*, so that kappa = 2 R.

    Raises:
        ZeroFrequencyError: If any frequency is zero
        CriticalDampingError: If any |Omega| equals 2
    """
    freqs = _diagonal_values(omega, "Omega")
    tau = validators.require_positive(tau, "tau")
    if np.any(freqs == 0):
        raise errors.ZeroFrequencyError("harmonic frequencies must be nonzero")
    if np.any(np.isclose(np.abs(freqs), 2.0, rtol=0.0, atol=1e-12)):
        raise errors.CriticalDampingError("|Omega| = 2 is the critically damped case and has no oscillatory form")

    d = freqs.size
    eye, zero = np.eye(d), np.zeros((d, d))
    w = np.diag(freqs**2)
    gamma2 = np.block([[zero, -eye], [w, w]]) / tau
    m2 = 0.5 * np.block([[eye, zero], [zero, w]]) / tau
    c2 = np.hstack([eye, zero])
    sigma2 = np.vstack([zero, w]) / tau

    t = np.block([[eye, 0.5 * eye], [zero, -0.5 * eye]])
    t_inv = np.block([[eye, eye], [zero, -2.0 * eye]])
    gamma1 = t @ gamma2 @ t_inv
    m1 = 2.0 * t @ m2 @ t.T
    c1 = c2 @ t_inv
    sigma1 = np.sqrt(2.0) * t @ sigma2

    params = {"omega": freqs.tolist(), "tau": [tau]}
    kernel = RealizationTriple(gamma1, m1, c1, sigma1, family="harmonic", params=params)
    noise = RealizationTriple(gamma2, m2, c2, sigma2, family="harmonic", params=params)
    return kernel, noise


def harmonic_kernel(omega: float, tau: float, t) -> np.ndarray:
    """Closed-form scalar harmonic kernel for one frequency.

    Oscillatory for |Omega| < 2 and overdamped (hyperbolic) for |Omega| > 2.
    """
    omega = float(omega)
    if omega == 0:
        raise errors.ZeroFrequencyError("harmonic frequency must be nonzero")
    a = omega**2
    s = np.abs(np.asarray(t, dtype=float)) / tau
    envelope = np.exp(-0.5 * a * s) / tau
    if abs(omega) < 2.0:
        root = np.sqrt(1.0 - a / 4.0)
        w0, w1 = omega * root, omega / root
        return envelope * (np.cos(w0 * s) + 0.5 * w1 * np.sin(w0 * s))
    if abs(omega) > 2.0:
        # e^{-a s/2} (cosh(r s) + c sinh(r s)) as two decaying exponentials; cosh alone overflows for large Omega
        root = np.sqrt(a / 4.0 - 1.0)
        r, c = abs(omega) * root, 0.5 * abs(omega) / root
        slow, fast = a / (0.5 * a + r), 0.5 * a + r
        return 0.5 / tau * ((1.0 + c) * np.exp(-slow * s) + (1.0 - c) * np.exp(-fast * s))
    raise errors.CriticalDampingError("|Omega| = 2 is the critically damped case")


def central_difference(func: BatchField, states: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a batch field; the derivative index is the last axis.

    Step per component: eps^(1/3) * max(1, |x_k|).
    """
    x = np.atleast_2d(np.asarray(states, dtype=float))
    n, d = x.shape
    parts = []
    for k in range(d):
        step = FD_STEP * np.maximum(1.0, np.abs(x[:, k]))
        plus, minus = x.copy(), x.copy()
        plus[:, k] += step
        minus[:, k] -= step
        diff = np.asarray(func(plus)) - np.asarray(func(minus))
        parts.append(diff / (2.0 * step).reshape((n,) + (1,) * (diff.ndim - 1)))
    return np.stack(parts, axis=-1)


def _constant_field(value: np.ndarray) -> BatchField:
    value = np.asarray(value, dtype=float)

    def evaluate(states):
        n = np.atleast_2d(states).shape[0]
        return np.broadcast_to(value, (n,) + value.shape).copy()

    return evaluate


def _constant_jacobian(value: np.ndarray, d: int) -> BatchField:
    shape = np.asarray(value).shape + (d,)

    def evaluate(states):
        n = np.atleast_2d(states).shape[0]
        return np.zeros((n,) + shape)

    return evaluate


def _batched(pointwise: Optional[Callable]) -> Optional[BatchField]:
    if pointwise is None:
        return None

    def evaluate(states):
        x = np.atleast_2d(np.asarray(states, dtype=float))
        return np.stack([np.asarray(pointwise(row), dtype=float) for row in x])

    return evaluate


@dataclass(frozen=True)
class CoefficientField:
    """State-dependent coefficients F, g, h and sigma of a GLE, evaluated over batches.

    Shapes for states of shape (n, d): force (n, d), g (n, d, q), h (n, q, d),
    sigma (n, d, r). Jacobians append the derivative index, e.g. dg is (n, d, q, d).
    Callables must be safe to evaluate concurrently.
    """

    dimension: int
    force: BatchField
    g: BatchField
    h: BatchField
    sigma: BatchField
    dg: Optional[BatchField] = None
    dh: Optional[BatchField] = None
    dsigma: Optional[BatchField] = None
    allow_fd: bool = True
    sources: Dict[str, object] = field(default_factory=dict)

    def has_analytic_jacobians(self) -> bool:
        return self.dg is not None and self.dh is not None and self.dsigma is not None

    def jacobian(self, name: str, states) -> np.ndarray:
        """Jacobian of one of g, h, sigma: analytic when available, central differences otherwise."""
        analytic = {"g": self.dg, "h": self.dh, "sigma": self.dsigma}[name]
        if analytic is not None:
            return analytic(states)
        if not self.allow_fd:
            raise errors.JacobianUnavailableError(f"no Jacobian for {name} and finite differences are disabled")
        return central_difference(getattr(self, name), states)

    @classmethod
    def from_expressions(cls, dimension: int, force, g, h, sigma, q: int, r: int) -> "CoefficientField":
        """Build a field from expression strings with exact Jacobians."""
        f_field = ExpressionField(vector_entries(force, dimension), dimension)
        g_field = ExpressionField(matrix_entries(g, dimension, q), dimension)
        h_field = ExpressionField(matrix_entries(h, q, dimension), dimension)
        s_field = ExpressionField(matrix_entries(sigma, dimension, r), dimension)
        return cls(
            dimension=dimension,
            force=f_field,
            g=g_field,
            h=h_field,
            sigma=s_field,
            dg=g_field.jacobian,
            dh=h_field.jacobian,
            dsigma=s_field.jacobian,
            sources={
                "force": f_field.sources(),
                "g": g_field.sources(),
                "h": h_field.sources(),
                "sigma": s_field.sources(),
            },
        )

    @classmethod
    def constant(cls, force, g, h, sigma) -> "CoefficientField":
        """Build a field whose coefficients do not depend on the state."""
        force = np.atleast_1d(np.asarray(force, dtype=float))
        g, h, sigma = (validators.as_matrix(v, name) for v, name in ((g, "g"), (h, "h"), (sigma, "sigma")))
        d = force.size
        return cls(
            dimension=d,
            force=_constant_field(force),
            g=_constant_field(g),
            h=_constant_field(h),
            sigma=_constant_field(sigma),
            dg=_constant_jacobian(g, d),
            dh=_constant_jacobian(h, d),
            dsigma=_constant_jacobian(sigma, d),
            sources={"force": force.tolist(), "g": g.tolist(), "h": h.tolist(), "sigma": sigma.tolist()},
        )

    @classmethod
    def from_pointwise(
        cls,
        dimension: int,
        force: Callable,
        g: Callable,
        h: Callable,
        sigma: Callable,
        dg: Optional[Callable] = None,
        dh: Optional[Callable] = None,
        dsigma: Optional[Callable] = None,
        allow_fd: bool = True,
    ) -> "CoefficientField":
        """Wrap functions of a single state vector into batch fields."""
        return cls(
            dimension=dimension,
            force=_batched(force),
            g=_batched(g),
            h=_batched(h),
            sigma=_batched(sigma),
            dg=_batched(dg),
            dh=_batched(dh),
            dsigma=_batched(dsigma),
            allow_fd=allow_fd,
        )


def default_probes(box: Sequence[Tuple[float, float]], count: int = DEFAULT_PROBE_COUNT, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points in an axis-aligned box."""
    lower = np.asarray([b[0] for b in box], dtype=float)
    upper = np.asarray([b[1] for b in box], dtype=float)
    if np.any(upper <= lower):
        raise errors.InvalidParameterError(f"probe box must have lower < upper, got {list(box)}")
    sampler = qmc.Sobol(d=lower.size, scramble=True, seed=seed)
    # Sobol balance properties need a power-of-two sample count
    m = int(np.ceil(np.log2(max(count, 1))))
    points = sampler.random_base2(m)[:count]
    return qmc.scale(points, lower, upper)


@dataclass(frozen=True)
class EffectiveConstants:
    """Effective damping K1 and effective diffusion K2."""

    k1: np.ndarray
    k2: np.ndarray

    def to_dict(self) -> dict:
        """Convert constants to dictionary."""
        return {"K1": self.k1.tolist(), "K2": self.k2.tolist()}


@dataclass(frozen=True)
class GLESystem:
    """A GLE with state-dependent coefficients, a kernel triple, a noise triple and its scales.

    Exponents are fixed so that the mass, kernel time and noise time all scale with epsilon.
    """

    coeffs: CoefficientField
    kernel: RealizationTriple
    noise: RealizationTriple
    m0: float = 1.0
    tau_kappa: float = 1.0
    tau_xi: float = 1.0
    probes: Optional[np.ndarray] = None
    name: str = "gle"

    def __post_init__(self):
        for attr in ("m0", "tau_kappa", "tau_xi"):
            object.__setattr__(self, attr, validators.require_positive(getattr(self, attr), attr))
        d = self.coeffs.dimension
        probes = self.probes
        if probes is None:
            probes = default_probes([(-1.0, 1.0)] * d)
        probes = np.array(probes, dtype=float, ndmin=2)
        if probes.shape[1] != d:
            raise errors.DimensionMismatchError(f"probes have dimension {probes.shape[1]}, expected {d}")
        probes.setflags(write=False)
        object.__setattr__(self, "probes", probes)
        self._check_shapes()

    def _check_shapes(self) -> None:
        d, q, r = self.dimension, self.kernel.output_dim, self.noise.output_dim
        x = self.probes[:1]
        expected = {
            "force": (1, d),
            "g": (1, d, q),
            "h": (1, q, d),
            "sigma": (1, d, r),
        }
        for name, shape in expected.items():
            got = np.shape(getattr(self.coeffs, name)(x))
            if got != shape:
                raise errors.DimensionMismatchError(f"{name} evaluates to shape {got[1:]}, expected {shape[1:]}")

    @property
    def dimension(self) -> int:
        return self.coeffs.dimension

    def max_timescale(self) -> float:
        """Largest model time constant, including the kernel and noise scales."""
        return max(
            self.tau_kappa * self.kernel.max_timescale(),
            self.tau_xi * self.noise.max_timescale(),
            self.m0,
        )


def effective_constants(system: GLESystem) -> EffectiveConstants:
    """
    Compute K1 = C1 Gamma1^-1 M1 C1* and K2 = C2 Gamma2^-1 M2 C2*.

    Raises:
        SingularEffectiveConstantError: If either constant has condition number >= 1e12
    """
    result = {}
    for label, triple in (("K1", system.kernel), ("K2", system.noise)):
        k = triple.integral()
        cond = np.linalg.cond(k)
        LOG.debug(f"{label} condition number {cond:.3e}")
        if not np.isfinite(cond) or cond >= CONDITION_LIMIT:
            raise errors.SingularEffectiveConstantError(
                f"{label} is numerically singular (condition number {cond:.3e}); check the rank of C"
            )
        result[label] = k
    return EffectiveConstants(k1=result["K1"], k2=result["K2"])


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


@dataclass(frozen=True)
class FDTReport:
    """Outcome of the fluctuation-dissipation check."""

    holds: bool
    tau_match: bool
    sigma_ratio: Optional[float]
    sigma_residual: float
    h_residual: float
    covariance_ratio: Optional[float]
    covariance_residual: float
    messages: List[str]

    def to_dict(self) -> dict:
        """Convert report to dictionary."""
        return {
            "holds": self.holds,
            "tau_match": self.tau_match,
            "sigma_ratio": self.sigma_ratio,
            "sigma_residual": _finite_or_none(self.sigma_residual),
            "h_residual": _finite_or_none(self.h_residual),
            "covariance_ratio": self.covariance_ratio,
            "covariance_residual": _finite_or_none(self.covariance_residual),
            "messages": self.messages,
        }


def _ratio_fit(target: np.ndarray, reference: np.ndarray) -> Tuple[Optional[float], float]:
    ref_norm = float(np.vdot(reference, reference))
    if ref_norm == 0.0:
        return None, np.inf
    ratio = float(np.vdot(reference, target)) / ref_norm
    scale = max(float(np.linalg.norm(target)), np.finfo(float).tiny)
    return ratio, float(np.linalg.norm(target - ratio * reference)) / scale


def check_fdt(system: GLESystem) -> FDTReport:
    """Check the fluctuation-dissipation conditions on the probe states.

    Holds iff tau_kappa = tau_xi, sigma = c g, h = g* and R(t) = c' kappa(t)
    on a time grid, each proportionality fitted by least squares.
    """
    messages = []
    tau_match = bool(np.isclose(system.tau_kappa, system.tau_xi, rtol=1e-12, atol=0.0))
    if not tau_match:
        messages.append(f"tau_kappa={system.tau_kappa} differs from tau_xi={system.tau_xi}")

    x = system.probes
    g = system.coeffs.g(x)
    h = system.coeffs.h(x)
    sigma = system.coeffs.sigma(x)

    if sigma.shape == g.shape:
        sigma_ratio, sigma_residual = _ratio_fit(sigma, g)
    else:
        sigma_ratio, sigma_residual = None, np.inf
    if sigma_residual >= FDT_TOL:
        messages.append(f"sigma is not proportional to g (relative residual {sigma_residual:.3e})")

    g_t = np.swapaxes(g, 1, 2)
    if h.shape == g_t.shape:
        h_residual = float(np.linalg.norm(h - g_t)) / max(float(np.linalg.norm(g_t)), np.finfo(float).tiny)
    else:
        h_residual = np.inf
    if h_residual >= FDT_TOL:
        messages.append(f"h differs from g* (relative residual {h_residual:.3e})")

    if system.kernel.output_dim == system.noise.output_dim:
        horizon = 5.0 * max(system.kernel.max_timescale(), system.noise.max_timescale())
        times = np.linspace(0.0, horizon, FDT_TIMES)
        covariance_ratio, covariance_residual = _ratio_fit(
            covariance_eval(system.noise, times), kernel_eval(system.kernel, times)
        )
    else:
        covariance_ratio, covariance_residual = None, np.inf
    if covariance_residual >= FDT_TOL:
        messages.append(f"R(t) is not proportional to kappa(t) (relative residual {covariance_residual:.3e})")

    holds = tau_match and sigma_residual < FDT_TOL and h_residual < FDT_TOL and covariance_residual < FDT_TOL
    LOG.debug(f"FDT check on {system.name}: holds={holds}, sigma ratio={sigma_ratio}, R/kappa={covariance_ratio}")
    return FDTReport(
        holds=holds,
        tau_match=tau_match,
        sigma_ratio=sigma_ratio,
        sigma_residual=sigma_residual,
        h_residual=h_residual,
        covariance_ratio=covariance_ratio,
        covariance_residual=covariance_residual,
        messages=messages,
    )


def relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Max absolute deviation scaled by max(1, max |reference|)."""
    scale = max(1.0, float(np.max(np.abs(reference))) if reference.size else 1.0)
    return float(np.max(np.abs(analytic - reference))) / scale if reference.size else 0.0


def check_jacobians(coeffs: CoefficientField, probes) -> Dict[str, float]:
    """Compare analytic Jacobians of g, h, sigma with central differences.

    Returns the scaled max error per coefficient that has an analytic Jacobian.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    report = {}
    for name, analytic in (("g", coeffs.dg), ("h", coeffs.dh), ("sigma", coeffs.dsigma)):
        if analytic is None:
            continue
        report[name] = relative_error(analytic(probes), central_difference(getattr(coeffs, name), probes))
    return report
