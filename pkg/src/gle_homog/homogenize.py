"""Homogenized (small-mass, short-memory) limit of a GLE.

The limiting equation is

    dX = [S1 + S2 + S3 + theta^-1 F] dt + theta^-1 sigma C2 Gamma2^-1 Sigma2 dW

with theta = g K1 h. The noise-induced drifts contract spatial derivatives of
theta^-1, theta^-1 g and theta^-1 sigma with blocks of the stationary
covariance J of the extended velocity state, which solves
gamma_hat J + J gamma_hat* = sigma_hat sigma_hat*.
"""

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from gle_homog import matrixlab
from gle_homog.markovianize import ExtendedSystem, build_extended, check_b_lambda
from gle_homog.model import GLESystem, central_difference, check_fdt, relative_error
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("homogenize")

BLOCK_TOL = 1e-8
ROUTES = ("auto", "generic", "fdt", "closed-form")

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class JBlocks:
    """Blocks of the stationary covariance J over a batch of states.

    Index 1 is the velocity block, 2 the kernel auxiliary block and 3 the noise block.
    """

    j11: np.ndarray
    j12: np.ndarray
    j13: np.ndarray
    j22: np.ndarray
    j23: np.ndarray
    j33: np.ndarray
    residuals: Optional[np.ndarray] = None

    @property
    def j21(self) -> np.ndarray:
        return np.swapaxes(self.j12, -1, -2)

    @property
    def j31(self) -> np.ndarray:
        return np.swapaxes(self.j13, -1, -2)

    def full(self) -> np.ndarray:
        """Reassemble the full covariance, shape (b, n, n)."""
        t = _transpose
        top = np.concatenate([self.j11, self.j12, self.j13], axis=-1)
        mid = np.concatenate([t(self.j12), self.j22, self.j23], axis=-1)
        bottom = np.concatenate([t(self.j13), t(self.j23), self.j33], axis=-1)
        return np.concatenate([top, mid, bottom], axis=-2)


def _transpose(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def theta(system: GLESystem, states) -> np.ndarray:
    """
    theta(x) = g(x) K1 h(x) at each state, shape (b, d, d).

    Raises:
        SingularThetaError: If theta is singular at a state
    """
    ext = build_extended(system)
    ext.theta_inverse(states)
    return ext.theta(states)


def block_equation_residuals(ext: ExtendedSystem, states, blocks: JBlocks) -> np.ndarray:
    """Scaled residuals of the five block equations satisfied by J, shape (b, 5)."""
    sys = ext.system
    x = np.atleast_2d(np.asarray(states, dtype=float))
    g, h, sigma = sys.coeffs.g(x), sys.coeffs.h(x), sys.coeffs.sigma(x)
    c1, m1, gamma1 = sys.kernel.c, sys.kernel.m, sys.kernel.gamma
    c2, m2, gamma2 = sys.noise.c, sys.noise.m, sys.noise.gamma
    m0, tk, tx = sys.m0, sys.tau_kappa, sys.tau_xi
    t = _transpose
    j11, j12, j13, j22, j23 = blocks.j11, blocks.j12, blocks.j13, blocks.j22, blocks.j23
    gc1, sc2 = g @ c1, sigma @ c2
    readin = m1 @ c1.T @ h  # M1 C1* h

    pairs = [
        (gc1 @ t(j12) + j12 @ t(gc1), sc2 @ t(j13) + j13 @ t(sc2)),
        (m0 * j11 @ t(readin) + tk * sc2 @ t(j23), tk * gc1 @ j22 + m0 * j12 @ gamma1.T),
        (tx * gc1 @ j23 + m0 * j13 @ gamma2.T, sc2 @ m2),
        (readin @ j12 + t(j12) @ t(readin), gamma1 @ j22 + j22 @ gamma1.T),
        (tx * readin @ j13, tx * gamma1 @ j23 + tk * j23 @ gamma2.T),
    ]
    out = np.empty((x.shape[0], len(pairs)))
    for k, (lhs, rhs) in enumerate(pairs):
        scale = 1.0 + np.maximum(np.abs(lhs).max(axis=(1, 2)), np.abs(rhs).max(axis=(1, 2)))
        out[:, k] = np.abs(lhs - rhs).max(axis=(1, 2)) / scale
    return out


def j_blocks(system: GLESystem, states, ext: Optional[ExtendedSystem] = None) -> JBlocks:
    """
    Solve the Lyapunov equation of the extended system and split J into blocks.

    The five block equations are evaluated as a cross-check; residuals above
    1e-8 are logged as warnings.

    Raises:
        NotPositiveStableError: If gamma_hat is not positive stable at a state
    """
    ext = ext or build_extended(system)
    x = np.atleast_2d(np.asarray(states, dtype=float))
    lay = ext.layout
    gamma_hat = ext.gamma_hat(x)
    q = ext.sigma_hat @ ext.sigma_hat.T
    try:
        j = matrixlab.solve_lyapunov_batch(gamma_hat, q)
    except errors.NotPositiveStableError as e:
        raise errors.NotPositiveStableError(f"gamma_hat of {system.name}: {e}") from e

    blocks = JBlocks(
        j11=j[:, lay.v, lay.v],
        j12=j[:, lay.v, lay.y],
        j13=j[:, lay.v, lay.beta],
        j22=j[:, lay.y, lay.y],
        j23=j[:, lay.y, lay.beta],
        j33=j[:, lay.beta, lay.beta],
    )
    residuals = block_equation_residuals(ext, x, blocks)
    worst = float(residuals.max()) if residuals.size else 0.0
    if worst > BLOCK_TOL:
        eq, row = np.unravel_index(int(np.argmax(residuals.T)), residuals.T.shape)
        LOG.warning(
            f"Block equation {eq + 1} residual {worst:.3e} exceeds {BLOCK_TOL:g} at x={x[row].tolist()}; "
            "keeping the Lyapunov solution"
        )
    return replace(blocks, residuals=residuals)


def derived_jacobians(ext: ExtendedSystem, states) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Spatial derivatives of theta^-1, theta^-1 g and theta^-1 sigma; the derivative index is last.

    Uses the product rule over analytic Jacobians when all of them are available,
    otherwise central differences of the final products.

    Raises:
        JacobianUnavailableError: If analytic Jacobians are missing and finite differences are disabled
    """
    coeffs = ext.system.coeffs
    x = np.atleast_2d(np.asarray(states, dtype=float))
    if coeffs.has_analytic_jacobians():
        k1 = ext.constants.k1
        theta_inv = ext.theta_inverse(x)
        g, h, sigma = coeffs.g(x), coeffs.h(x), coeffs.sigma(x)
        dg, dh, dsigma = coeffs.dg(x), coeffs.dh(x), coeffs.dsigma(x)
        dtheta = np.einsum("biql,qp,bpj->bijl", dg, k1, h) + np.einsum("biq,qp,bpjl->bijl", g, k1, dh)
        dtheta_inv = -np.einsum("bik,bkml,bmj->bijl", theta_inv, dtheta, theta_inv)
        d_theta_g = np.einsum("bikl,bkq->biql", dtheta_inv, g) + np.einsum("bik,bkql->biql", theta_inv, dg)
        d_theta_s = np.einsum("bikl,bkr->birl", dtheta_inv, sigma) + np.einsum("bik,bkrl->birl", theta_inv, dsigma)
        return dtheta_inv, d_theta_g, d_theta_s
    if not coeffs.allow_fd:
        raise errors.JacobianUnavailableError(
            "analytic Jacobians of g, h and sigma are incomplete and finite differences are disabled"
        )
    return (
        central_difference(ext.theta_inverse, x),
        central_difference(lambda z: ext.theta_inverse(z) @ coeffs.g(z), x),
        central_difference(lambda z: ext.theta_inverse(z) @ coeffs.sigma(z), x),
    )


def check_derived_jacobians(system: GLESystem, states=None) -> dict:
    """Compare product-rule derivatives of theta^-1, theta^-1 g and theta^-1 sigma with central differences."""
    ext = build_extended(system)
    x = system.probes if states is None else np.atleast_2d(np.asarray(states, dtype=float))
    analytic = derived_jacobians(ext, x)
    coeffs = system.coeffs
    reference = (
        central_difference(ext.theta_inverse, x),
        central_difference(lambda z: ext.theta_inverse(z) @ coeffs.g(z), x),
        central_difference(lambda z: ext.theta_inverse(z) @ coeffs.sigma(z), x),
    )
    names = ("theta_inv", "theta_inv_g", "theta_inv_sigma")
    return {name: relative_error(a, r) for name, a, r in zip(names, analytic, reference)}


def noise_induced_drift(
    system: GLESystem, states, ext: Optional[ExtendedSystem] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    The three noise-induced drift terms at each state, each of shape (b, d).

        S1_i = m0      d_l(theta^-1)_ij       J11_jl
        S2_i = -tau_k  d_l(theta^-1 g)_ij     (C1 Gamma1^-1 J21)_jl
        S3_i = tau_xi  d_l(theta^-1 sigma)_ij (C2 Gamma2^-1 J31)_jl
    """
    ext = ext or build_extended(system)
    x = np.atleast_2d(np.asarray(states, dtype=float))
    blocks = j_blocks(system, x, ext)
    d_ti, d_tg, d_ts = derived_jacobians(ext, x)
    w2 = system.kernel.c @ ext._gamma1_inv @ blocks.j21
    w3 = system.noise.c @ ext._gamma2_inv @ blocks.j31
    s1 = system.m0 * np.einsum("bijl,bjl->bi", d_ti, blocks.j11)
    s2 = -system.tau_kappa * np.einsum("bijl,bjl->bi", d_tg, w2)
    s3 = system.tau_xi * np.einsum("bijl,bjl->bi", d_ts, w3)
    return s1, s2, s3


@dataclass(frozen=True)
class DriftComponents:
    """Drift of the homogenized equation split into its parts, each of shape (b, d)."""

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    force_term: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.s1 + self.s2 + self.s3 + self.force_term


ComponentsFn = Callable[[np.ndarray], DriftComponents]
DiffusionFn = Callable[[np.ndarray], np.ndarray]


class HomogenizedSDE:
    """Drift and diffusion fields of the limiting SDE, evaluated over batches of states."""

    def __init__(self, dimension: int, components: ComponentsFn, diffusion: DiffusionFn, provenance: str):
        self.dimension = dimension
        self._components = components
        self._diffusion = diffusion
        self.provenance = provenance

    def _states(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if x.ndim == 1 and self.dimension == 1:
            x = x[:, None]
        x = np.atleast_2d(x)
        if x.shape[1] != self.dimension:
            raise errors.DimensionMismatchError(f"states have dimension {x.shape[1]}, expected {self.dimension}")
        return x

    def components(self, states) -> DriftComponents:
        return self._components(self._states(states))

    def drift(self, states) -> np.ndarray:
        return self.components(states).total

    def diffusion(self, states) -> np.ndarray:
        return self._diffusion(self._states(states))

    def tabulate(self, states) -> Tuple[List[str], List[list]]:
        """CSV-ready table: state, S1, S2, S3, theta^-1 F, total drift and diffusion entries."""
        x = self._states(states)
        parts = self.components(x)
        diff = self.diffusion(x)
        d = self.dimension
        suffix = [""] if d == 1 else [f"_{i + 1}" for i in range(d)]
        header = [f"x{s}" for s in suffix]
        for label in ("S1", "S2", "S3", "theta_inv_F", "drift"):
            header += [f"{label}{s}" for s in suffix]
        header += [f"diffusion_{i + 1}_{j + 1}" for i in range(d) for j in range(diff.shape[2])]
        columns = [x, parts.s1, parts.s2, parts.s3, parts.force_term, parts.total, diff.reshape(x.shape[0], -1)]
        table = np.hstack(columns)
        return header, table.tolist()

    def interpolated(self, a: float, b: float, points: int = 4001) -> "HomogenizedSDE":
        """One-dimensional surrogate using linear interpolation of tabulated fields on [a, b]."""
        if self.dimension != 1:
            raise errors.DimensionMismatchError("interpolated surrogates are one-dimensional")
        if not b > a:
            raise errors.InvalidParameterError(f"interval must satisfy a < b, got ({a}, {b})")
        grid = np.linspace(a, b, int(points))
        parts = self.components(grid[:, None])
        diff = self.diffusion(grid[:, None])
        tables = [parts.s1[:, 0], parts.s2[:, 0], parts.s3[:, 0], parts.force_term[:, 0]]
        diff_table = diff.reshape(grid.size, -1)

        def components(x):
            xs = x[:, 0]
            return DriftComponents(*(np.interp(xs, grid, tab)[:, None] for tab in tables))

        def diffusion(x):
            xs = x[:, 0]
            cols = [np.interp(xs, grid, diff_table[:, k]) for k in range(diff_table.shape[1])]
            return np.stack(cols, axis=-1).reshape(xs.size, 1, -1)

        return HomogenizedSDE(1, components, diffusion, f"{self.provenance}+interpolated")


def _generic_sde(system: GLESystem, fdt: bool) -> HomogenizedSDE:
    ext = build_extended(system)
    readout = system.noise.c @ ext._gamma2_inv @ system.noise.sigma  # C2 Gamma2^-1 Sigma2

    def components(x):
        s1, s2, s3 = noise_induced_drift(system, x, ext)
        if fdt:
            s2, s3 = np.zeros_like(s2), np.zeros_like(s3)
        force_term = np.einsum("bij,bj->bi", ext.theta_inverse(x), system.coeffs.force(x))
        return DriftComponents(s1, s2, s3, force_term)

    def diffusion(x):
        return ext.theta_inverse(x) @ system.coeffs.sigma(x) @ readout

    return HomogenizedSDE(system.dimension, components, diffusion, "fdt" if fdt else "generic")


def homogenized_sde(system: GLESystem, route: str = "auto", check: bool = True) -> HomogenizedSDE:
    """
    Limiting SDE of a GLE system.

    Args:
        system: The GLE system
        route: "auto" uses the fluctuation-dissipation reduction when it applies and the
            generic pipeline otherwise; "generic", "fdt" and "closed-form" force a route
        check: Run the B_lambda sampling check on the probe states first

    Raises:
        NotPositiveStableError: If the B_lambda check fails
        UnsupportedClosedFormError: If the closed-form route does not apply
    """
    if route not in ROUTES:
        raise errors.InvalidParameterError(f"unknown route '{route}', expected one of {ROUTES}")
    ext = build_extended(system)
    if check:
        report = check_b_lambda(ext)
        if not report.passed:
            raise errors.NotPositiveStableError(
                f"B_lambda is near-singular at x={report.worst_state}, lambda={report.worst_lambda} "
                f"(min singular value {report.min_singular_values.min():.3e})"
            )
    if route == "closed-form":
        return closed_form_sde(system)
    if route == "fdt":
        return _generic_sde(system, fdt=True)
    if route == "auto":
        fdt = check_fdt(system)
        LOG.info(f"Homogenizing {system.name}: fluctuation-dissipation {'holds' if fdt.holds else 'does not hold'}")
        return _generic_sde(system, fdt=fdt.holds)
    return _generic_sde(system, fdt=False)


def _scalar_derivative(func: ScalarFn, x: np.ndarray) -> np.ndarray:
    return central_difference(lambda z: func(z[:, 0]), x[:, None])[..., 0]


def _prepare_1d(g: ScalarFn, sigma: ScalarFn, x, dg, dsigma):
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    gv = np.asarray(g(flat), dtype=float)
    sv = np.asarray(sigma(flat), dtype=float)
    dgv = np.asarray(dg(flat) if dg is not None else _scalar_derivative(g, flat), dtype=float)
    dsv = np.asarray(dsigma(flat) if dsigma is not None else _scalar_derivative(sigma, flat), dtype=float)
    zero = np.flatnonzero(gv == 0)
    if zero.size:
        raise errors.ZeroDampingError(f"g vanishes at x={flat[zero[0]]}")
    return x.shape, gv, sv, dgv, dsv


def _quotient_derivatives(gv, sv, dgv, dsv):
    inv_g2 = -2.0 * dgv / gv**3  # (1/g^2)'
    inv_g = -dgv / gv**2  # (1/g)'
    s_over_g2 = dsv / gv**2 - 2.0 * sv * dgv / gv**3  # (sigma/g^2)'
    return inv_g2, inv_g, s_over_g2


def drift_1d_ou(
    g: ScalarFn,
    sigma: ScalarFn,
    x,
    *,
    m0: float,
    tau_kappa: float,
    tau_eta: float,
    alpha: float,
    dg: Optional[ScalarFn] = None,
    dsigma: Optional[ScalarFn] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed-form noise-induced drifts for a 1D GLE with OU kernel and noise of rate alpha and h = g.

    With D = tau_eta^2 g^2 + m0 alpha (tau_kappa + tau_eta):

        S1 = (1/g^2)' sigma^2/(2 g^2) [tau_kappa^2 g^2 + m0 alpha (tau_kappa + tau_eta)] / D
        S2 = -(1/g)' sigma^2 tau_kappa (tau_kappa + tau_eta) / (2 g D)
        S3 = (sigma/g^2)' sigma tau_eta (tau_kappa + tau_eta) / (2 D)

    Raises:
        ZeroDampingError: If g vanishes at a point
    """
    shape, gv, sv, dgv, dsv = _prepare_1d(g, sigma, x, dg, dsigma)
    inv_g2, inv_g, s_over_g2 = _quotient_derivatives(gv, sv, dgv, dsv)
    tk, te = tau_kappa, tau_eta
    denom = te**2 * gv**2 + m0 * alpha * (tk + te)
    s1 = inv_g2 * sv**2 / (2.0 * gv**2) * (tk**2 * gv**2 + m0 * alpha * (tk + te)) / denom
    s2 = -inv_g * sv**2 * tk * (tk + te) / (2.0 * gv * denom)
    s3 = s_over_g2 * sv * te * (tk + te) / (2.0 * denom)
    return s1.reshape(shape), s2.reshape(shape), s3.reshape(shape)


def ou_j_matrix(g: float, sigma: float, *, m0: float, tau_kappa: float, tau_eta: float, alpha: float) -> np.ndarray:
    """Explicit 3x3 stationary covariance of the 1D OU extended system at one state."""
    tk, te = tau_kappa, tau_eta
    denom = te**2 * g**2 + m0 * alpha * (tk + te)
    j11 = sigma**2 / (2.0 * m0 * g**2) * (tk**2 * g**2 + m0 * alpha * (tk + te)) / denom
    j12 = alpha * sigma**2 * (tk + te) / (2.0 * g * denom)
    j13 = alpha * sigma * (tk + te) / (2.0 * denom)
    j22 = alpha * sigma**2 * (tk + te) / (2.0 * denom)
    j23 = te * alpha * sigma * g / (2.0 * denom)
    j33 = alpha / (2.0 * te)
    return np.array([[j11, j12, j13], [j12, j22, j23], [j13, j23, j33]])


def harmonic_j_column(
    g, sigma, *, m0: float, tau_kappa: float, tau_h: float, omega: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Explicit first column (J11, J21, J31, J41, J51) and normalizer R of the 1D harmonic system.

    Raises:
        DegenerateRError: If R vanishes
    """
    g = np.asarray(g, dtype=float)
    s = np.asarray(sigma, dtype=float)
    a = float(omega) ** 2
    tk, th = tau_kappa, tau_h
    g2, g4 = g**2, g**4

    r = (
        g4 * th**4 * (tk**2 + tk * th * a + th**2 * a)
        + m0**2 * a**2 * (tk + th) ** 2 * (tk**2 + th**2 + tk * th * (a - 2.0))
        + g2
        * m0
        * th**2
        * a
        * (th**3 * a + tk**3 * (a - 2.0) + tk**2 * th * a * (a - 2.0) + tk * th**2 * (2.0 - 2.0 * a + a**2))
    )
    scale = np.abs(g4 * th**4 * tk**2) + np.abs(m0**2 * a**2 * (tk + th) ** 4) + 1.0
    degenerate = np.flatnonzero(np.abs(r) <= 1e-14 * scale)
    if degenerate.size:
        raise errors.DegenerateRError(f"harmonic normalizer R vanishes at index {degenerate[0]}")

    n11 = (
        g4 * tk**4 * (tk**2 + tk * th * a + th**2 * a)
        + m0**2 * a**2 * (tk + th) ** 2 * (tk**2 + th**2 + tk * th * (a - 2.0))
        + m0
        * a
        * g2
        * (tk + th)
        * (th**4 + tk**2 * th**2 * (a - 2.0) + tk**4 * (a - 1.0) + tk**3 * th * (2.0 - 3.0 * a + a**2))
    )
    p = m0 * a * (tk + th) * (tk**2 + th**2 + tk * th * (a - 2.0))
    j11 = s**2 * n11 / (2.0 * m0 * g2 * r)
    j21 = s**2 * (tk + th) * a / (4.0 * g * r) * (p + g2 * (tk**4 + tk**2 * th**2 + th**4 + tk**3 * th * (a - 1.0)))
    j31 = -(s**2) * (tk + th) * a / (4.0 * g * r) * (-p + g2 * (tk**4 + tk**2 * th**2 - th**4 + tk**3 * th * (a - 1.0)))
    j41 = 0.5 * s * a * (tk + th) * (g2 * th**4 + p) / r
    j51 = -0.5 * s * a * (tk + th) * (p - g2 * tk * th**2 * (tk + th * (a - 1.0))) / r
    return j11, j21, j31, j41, j51, r


def drift_1d_harmonic(
    g: ScalarFn,
    sigma: ScalarFn,
    x,
    *,
    m0: float,
    tau_kappa: float,
    tau_h: float,
    omega: float,
    dg: Optional[ScalarFn] = None,
    dsigma: Optional[ScalarFn] = None,
    reduced: bool = True,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed-form noise-induced drifts for a 1D GLE with harmonic kernel and noise (tau = 1) and h = g.

    With equal time scales and ``reduced`` set, the simplified forms are used:
    S1 = (1/2)(1/g^2)' sigma^2/g^2, S2 = -(2 tau a sigma^2/g)(1/g)' N/Q, S3 = 2 tau a sigma (sigma/g^2)' N/Q,
    N = g^2 tau + m0 a (a - 1), Q = 4 m0^2 a^3 + 2 g^2 m0 tau a^2 (a - 1) + g^4 tau^2 (1 + 2a), a = Omega^2.

    Raises:
        ZeroDampingError: If g vanishes at a point
        DegenerateRError: If the normalizer R vanishes
    """
    shape, gv, sv, dgv, dsv = _prepare_1d(g, sigma, x, dg, dsigma)
    inv_g2, inv_g, s_over_g2 = _quotient_derivatives(gv, sv, dgv, dsv)
    a = float(omega) ** 2
    if reduced and np.isclose(tau_kappa, tau_h, rtol=1e-14, atol=0.0):
        tau = tau_kappa
        n = gv**2 * tau + m0 * a * (a - 1.0)
        q = 4.0 * m0**2 * a**3 + 2.0 * gv**2 * m0 * tau * a**2 * (a - 1.0) + gv**4 * tau**2 * (1.0 + 2.0 * a)
        if np.any(q == 0):
            raise errors.DegenerateDenominatorError("harmonic drift denominator vanishes")
        s1 = 0.5 * inv_g2 * sv**2 / gv**2
        s2 = -(2.0 * tau * a * sv**2 / gv) * inv_g * n / q
        s3 = 2.0 * tau * a * sv * s_over_g2 * n / q
    else:
        j11, j21, j31, j41, j51, _ = harmonic_j_column(gv, sv, m0=m0, tau_kappa=tau_kappa, tau_h=tau_h, omega=omega)
        s1 = m0 * inv_g2 * j11
        s2 = -tau_kappa * inv_g * (j21 + (1.0 - 2.0 / a) * j31)
        s3 = tau_h * s_over_g2 * (j41 + j51 / a)
    return s1.reshape(shape), s2.reshape(shape), s3.reshape(shape)


def _scalar_views(system: GLESystem):
    coeffs = system.coeffs

    def g(xs):
        return coeffs.g(xs[:, None])[:, 0, 0]

    def sigma(xs):
        return coeffs.sigma(xs[:, None])[:, 0, 0]

    def dg(xs):
        return coeffs.jacobian("g", xs[:, None])[:, 0, 0, 0]

    def dsigma(xs):
        return coeffs.jacobian("sigma", xs[:, None])[:, 0, 0, 0]

    def force(xs):
        return coeffs.force(xs[:, None])[:, 0]

    return g, sigma, dg, dsigma, force


def closed_form_sde(system: GLESystem) -> HomogenizedSDE:
    """
    Closed-form limiting SDE for 1D systems with h = g and matching OU or harmonic triples.

    Raises:
        UnsupportedClosedFormError: If the system is not one of the supported 1D families
    """
    kernel, noise = system.kernel, system.noise
    if system.dimension != 1:
        raise errors.UnsupportedClosedFormError("closed forms exist only in one dimension")
    if kernel.family != noise.family or kernel.family not in ("ou", "harmonic"):
        raise errors.UnsupportedClosedFormError(
            f"closed forms need matching ou or harmonic triples, got {kernel.family}/{noise.family}"
        )
    if kernel.params != noise.params:
        raise errors.UnsupportedClosedFormError("kernel and noise triples have different parameters")
    if kernel.family == "harmonic" and not np.isclose(kernel.params["tau"][0], 1.0):
        raise errors.UnsupportedClosedFormError("harmonic closed forms assume unit oscillator time scale")

    x = system.probes
    g_probe = system.coeffs.g(x)[:, 0, 0]
    h_probe = system.coeffs.h(x)[:, 0, 0]
    if relative_error(h_probe, g_probe) > 1e-12:
        raise errors.UnsupportedClosedFormError("closed forms need h = g")

    g, sigma, dg, dsigma, force = _scalar_views(system)
    m0, tk, tx = system.m0, system.tau_kappa, system.tau_xi
    if kernel.family == "ou":
        alpha = kernel.params["alpha"][0]
        provenance = "closed-form-1d-ou"

        def terms(xs):
            return drift_1d_ou(g, sigma, xs, m0=m0, tau_kappa=tk, tau_eta=tx, alpha=alpha, dg=dg, dsigma=dsigma)

    else:
        omega = kernel.params["omega"][0]
        provenance = "closed-form-1d-harmonic"

        def terms(xs):
            return drift_1d_harmonic(g, sigma, xs, m0=m0, tau_kappa=tk, tau_h=tx, omega=omega, dg=dg, dsigma=dsigma)

    def components(states):
        xs = states[:, 0]
        s1, s2, s3 = terms(xs)
        force_term = force(xs) / g(xs) ** 2
        return DriftComponents(s1[:, None], s2[:, None], s3[:, None], force_term[:, None])

    def diffusion(states):
        xs = states[:, 0]
        return (sigma(xs) / g(xs) ** 2).reshape(-1, 1, 1)

    return HomogenizedSDE(1, components, diffusion, provenance)


def markovian_limit(dimension: int, gamma, sigma, force=None) -> HomogenizedSDE:
    """
    Small-mass limit of a memoryless Langevin equation m dv = -gamma(x) v dt + F dt + sigma(x) dW.

    Returns dX = [gamma^-1 F + S] dt + gamma^-1 sigma dW with S_i = d_l(gamma^-1)_ij J_jl and
    gamma J + J gamma* = sigma sigma*. ``gamma`` and ``sigma`` are batch fields; a ``jacobian``
    attribute on ``gamma`` is used when present.
    """
    validators.require_positive(dimension, "dimension")

    def gamma_inv(x):
        return np.linalg.inv(gamma(x))

    def components(x):
        gam = gamma(x)
        sig = sigma(x)
        inv = np.linalg.inv(gam)
        j = matrixlab.solve_lyapunov_batch(gam, sig @ np.swapaxes(sig, 1, 2))
        jac = getattr(gamma, "jacobian", None)
        if jac is not None:
            d_inv = -np.einsum("bik,bkml,bmj->bijl", inv, jac(x), inv)
        else:
            d_inv = central_difference(gamma_inv, x)
        s = np.einsum("bijl,bjl->bi", d_inv, j)
        f = np.zeros_like(s) if force is None else np.einsum("bij,bj->bi", inv, force(x))
        zero = np.zeros_like(s)
        return DriftComponents(s, zero, zero.copy(), f)

    def diffusion(x):
        return gamma_inv(x) @ sigma(x)

    return HomogenizedSDE(dimension, components, diffusion, "markovian")
