"""Markovian embedding of a GLE into the extended system with velocity state (v, y, beta).

For a scale epsilon the extended dynamics read

    dx = v dt
    dv_hat = (1/eps) (-gamma_hat(x) v_hat + F_hat(x)) dt + (1/eps) sigma_hat dW

with v_hat = (v, y, beta), y the kernel auxiliary process and beta the noise state.
Epsilon is applied by the integrators, so one ExtendedSystem serves a whole family.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from gle_homog import matrixlab
from gle_homog.model import GLESystem, effective_constants
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("markovianize")

B_LAMBDA_THRESHOLD = 1e-8
THETA_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class BlockLayout:
    """Offsets of the v, y and beta blocks inside the velocity state."""

    d: int
    d1: int
    d2: int

    @property
    def n(self) -> int:
        return self.d + self.d1 + self.d2

    @property
    def v(self) -> slice:
        return slice(0, self.d)

    @property
    def y(self) -> slice:
        return slice(self.d, self.d + self.d1)

    @property
    def beta(self) -> slice:
        return slice(self.d + self.d1, self.n)


def default_lambda_grid() -> np.ndarray:
    """12 log-spaced radii in [1e-3, 1e3] times 9 angles strictly inside (-pi/2, pi/2)."""
    radii = np.logspace(-3.0, 3.0, 12)
    angles = np.linspace(-np.pi / 2, np.pi / 2, 11)[1:-1]
    return (radii[:, None] * np.exp(1j * angles)[None, :]).reshape(-1)


class ExtendedSystem:
    """Drift and diffusion blocks of the Markovian embedding of a GLESystem."""

    def __init__(self, system: GLESystem, epsilon: float = 1.0):
        self.system = system
        self.epsilon = validators.require_positive(epsilon, "epsilon")
        self.layout = BlockLayout(system.dimension, system.kernel.state_dim, system.noise.state_dim)
        self.constants = effective_constants(system)

        kernel, noise = system.kernel, system.noise
        lay = self.layout
        self._kernel_readin = kernel.m @ kernel.c.T
        self._gamma1_inv = np.linalg.inv(kernel.gamma)
        self._gamma2_inv = np.linalg.inv(noise.gamma)

        sigma_hat = np.zeros((lay.n, noise.noise_dim))
        sigma_hat[lay.beta, :] = noise.sigma / system.tau_xi
        sigma_hat.setflags(write=False)
        self.sigma_hat = sigma_hat

    @property
    def n(self) -> int:
        return self.layout.n

    def with_epsilon(self, epsilon: float) -> "ExtendedSystem":
        return ExtendedSystem(self.system, epsilon)

    def gamma_hat(self, states) -> np.ndarray:
        """
        Drift matrix of the velocity state at each state, shape (b, n, n).

            [[0,                g C1/m0,     -sigma C2/m0],
             [-M1 C1* h/tau_k,  Gamma1/tau_k, 0          ],
             [0,                0,            Gamma2/tau_xi]]
        """
        sys, lay = self.system, self.layout
        x = np.atleast_2d(np.asarray(states, dtype=float))
        g = sys.coeffs.g(x)
        h = sys.coeffs.h(x)
        sigma = sys.coeffs.sigma(x)
        out = np.zeros((x.shape[0], lay.n, lay.n))
        out[:, lay.v, lay.y] = g @ sys.kernel.c / sys.m0
        out[:, lay.v, lay.beta] = -(sigma @ sys.noise.c) / sys.m0
        out[:, lay.y, lay.v] = -(self._kernel_readin @ h) / sys.tau_kappa
        out[:, lay.y, lay.y] = sys.kernel.gamma / sys.tau_kappa
        out[:, lay.beta, lay.beta] = sys.noise.gamma / sys.tau_xi
        return out

    def force_hat(self, states) -> np.ndarray:
        """Forcing of the velocity state, shape (b, n): F/m0 in the v block, zero elsewhere."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        out = np.zeros((x.shape[0], self.layout.n))
        out[:, self.layout.v] = self.system.coeffs.force(x) / self.system.m0
        return out

    def theta(self, states) -> np.ndarray:
        """theta(x) = g K1 h, shape (b, d, d)."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        return self.system.coeffs.g(x) @ self.constants.k1 @ self.system.coeffs.h(x)

    def theta_inverse(self, states) -> np.ndarray:
        """
        Inverse of theta at each state.

        Raises:
            SingularThetaError: If theta is numerically singular at a state; the first offending state is named
        """
        x = np.atleast_2d(np.asarray(states, dtype=float))
        theta = self.theta(x)
        cond = np.linalg.cond(theta)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond >= THETA_CONDITION_LIMIT))
        if bad.size:
            raise errors.SingularThetaError(
                f"theta is singular at x={x[bad[0]].tolist()} (condition number {cond[bad[0]]:.3e})"
            )
        return np.linalg.inv(theta)

    def sample_initial_beta(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals z of shape (b, d2) to beta ~ N(0, M2/(tau_xi eps))."""
        root = matrixlab.psd_sqrt(self.system.noise.m / (self.system.tau_xi * self.epsilon))
        return np.asarray(z, dtype=float) @ root.T


def build_extended(system: GLESystem, epsilon: float = 1.0) -> ExtendedSystem:
    """Assemble the Markovian embedding of ``system`` at scale ``epsilon``."""
    ext = ExtendedSystem(system, epsilon)
    LOG.debug(
        f"Extended system for {system.name}: d={ext.layout.d}, d1={ext.layout.d1}, d2={ext.layout.d2}, "
        f"eps={ext.epsilon:g}"
    )
    return ext


def gamma_hat_inverse(ext: ExtendedSystem, states) -> np.ndarray:
    """
    Closed-form block inverse of gamma_hat, shape (b, n, n).

    With theta = g K1 h the first block row is
    [m0 theta^-1, -tau_k theta^-1 g C1 Gamma1^-1, tau_xi theta^-1 sigma C2 Gamma2^-1].

    Raises:
        SingularThetaError: If theta is singular at a state
    """
    sys, lay = ext.system, ext.layout
    x = np.atleast_2d(np.asarray(states, dtype=float))
    theta_inv = ext.theta_inverse(x)
    g = sys.coeffs.g(x)
    h = sys.coeffs.h(x)
    sigma = sys.coeffs.sigma(x)
    g1_inv, g2_inv = ext._gamma1_inv, ext._gamma2_inv
    m0, tk, tx = sys.m0, sys.tau_kappa, sys.tau_xi

    kernel_row = theta_inv @ g @ sys.kernel.c @ g1_inv  # theta^-1 g C1 Gamma1^-1
    noise_row = theta_inv @ sigma @ sys.noise.c @ g2_inv  # theta^-1 sigma C2 Gamma2^-1
    readin = g1_inv @ ext._kernel_readin @ h  # Gamma1^-1 M1 C1* h

    out = np.zeros((x.shape[0], lay.n, lay.n))
    out[:, lay.v, lay.v] = m0 * theta_inv
    out[:, lay.v, lay.y] = -tk * kernel_row
    out[:, lay.v, lay.beta] = tx * noise_row
    out[:, lay.y, lay.v] = m0 * readin @ theta_inv
    out[:, lay.y, lay.y] = tk * (g1_inv - readin @ kernel_row)
    out[:, lay.y, lay.beta] = tx * readin @ noise_row
    out[:, lay.beta, lay.beta] = tx * g2_inv
    return out


@dataclass(frozen=True)
class BLambdaReport:
    """Sampled smallest singular values of B_lambda(x) over a grid in the right half plane."""

    lambdas: np.ndarray
    min_singular_values: np.ndarray
    threshold: float
    passed: bool
    worst_state: Optional[List[float]]
    worst_lambda: Optional[complex]

    def to_dict(self) -> dict:
        """Convert report to dictionary."""
        return {
            "passed": self.passed,
            "threshold": self.threshold,
            "n_lambdas": int(self.lambdas.size),
            "n_states": int(self.min_singular_values.shape[0]),
            "min_singular_value": float(self.min_singular_values.min()),
            "worst_state": self.worst_state,
            "worst_lambda": None if self.worst_lambda is None else [self.worst_lambda.real, self.worst_lambda.imag],
        }


def check_b_lambda(
    ext: ExtendedSystem,
    probes=None,
    lambdas: Optional[Sequence[complex]] = None,
    threshold: float = B_LAMBDA_THRESHOLD,
) -> BLambdaReport:
    """Sample B_lambda(x) = I + g kappa~(lambda tau_k) h / (lambda m0) and record min singular values.

    kappa~(z) = C1 (z I + Gamma1)^-1 M1 C1* is the Laplace transform of the kernel.
    This is a sampling heuristic, not a proof of invertibility.
    """
    sys = ext.system
    x = sys.probes if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    lam = default_lambda_grid() if lambdas is None else np.asarray(lambdas, dtype=complex).reshape(-1)
    if lam.size == 0:
        raise errors.InvalidParameterError("lambda grid must not be empty")

    g = sys.coeffs.g(x).astype(complex)
    h = sys.coeffs.h(x).astype(complex)
    kernel = sys.kernel
    eye_k = np.eye(kernel.state_dim)
    eye_d = np.eye(sys.dimension)
    shifted = lam[:, None, None] * sys.tau_kappa * eye_k[None] + kernel.gamma[None]
    readin = np.broadcast_to(ext._kernel_readin, (lam.size,) + ext._kernel_readin.shape)
    resolvents = np.linalg.solve(shifted, readin)
    laplace = kernel.c[None] @ resolvents  # (L, q, q)
    b = eye_d[None, None] + np.einsum("nij,ljk,nkm->lnim", g, laplace, h) / (lam[:, None, None, None] * sys.m0)
    smin = np.linalg.svd(b, compute_uv=False)[..., -1].T  # (states, lambdas)

    passed = bool(np.all(smin > threshold))
    worst = np.unravel_index(int(np.argmin(smin)), smin.shape)
    report = BLambdaReport(
        lambdas=lam,
        min_singular_values=smin,
        threshold=threshold,
        passed=passed,
        worst_state=x[worst[0]].tolist(),
        worst_lambda=complex(lam[worst[1]]),
    )
    LOG.debug(f"B_lambda check: passed={passed}, min singular value {smin.min():.3e}")
    return report
