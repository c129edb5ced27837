"""Dense small-matrix numerics: Lyapunov solves, spectral checks and matrix exponentials."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("matrixlab")

STABILITY_TOL = 1e-9
LYAPUNOV_METHODS = ("kronecker", "bartels-stewart")


@dataclass(frozen=True)
class SpectralReport:
    """Eigenvalues of a square matrix and its positive-stability verdict."""

    eigenvalues: np.ndarray
    min_real_part: float
    positive_stable: bool

    def to_dict(self) -> dict:
        """Convert report to dictionary."""
        return {
            "eigenvalues": [[float(ev.real), float(ev.imag)] for ev in self.eigenvalues],
            "min_real_part": self.min_real_part,
            "positive_stable": self.positive_stable,
        }


def spectral_check(m, tol: float = STABILITY_TOL) -> SpectralReport:
    """Compute eigenvalues of ``m`` and decide whether it is positive stable."""
    m = validators.as_matrix(m, "matrix")
    validators.require_square(m, "matrix")
    eigenvalues = scipy.linalg.eigvals(m)
    min_real = float(np.min(eigenvalues.real))
    return SpectralReport(eigenvalues=eigenvalues, min_real_part=min_real, positive_stable=min_real > tol)


def _require_stable(gamma: np.ndarray) -> None:
    report = spectral_check(gamma)
    if not report.positive_stable:
        raise errors.NotPositiveStableError(
            f"matrix is not positive stable: min real part {report.min_real_part:.3e} <= {STABILITY_TOL:g}"
        )


def _validate_pair(gamma, q):
    gamma = validators.as_matrix(gamma, "gamma")
    q = validators.as_matrix(q, "q")
    n = validators.require_square(gamma, "gamma")
    if q.shape != (n, n):
        raise errors.DimensionMismatchError(f"q has shape {q.shape}, expected {(n, n)}")
    return gamma, q


def lyapunov_residual(gamma, j, q) -> float:
    """Frobenius norm of gamma J + J gamma* - q."""
    gamma, j, q = (np.asarray(a, dtype=float) for a in (gamma, j, q))
    return float(np.linalg.norm(gamma @ j + j @ gamma.T - q))


def solve_lyapunov(gamma, q, method: str = "kronecker") -> np.ndarray:
    """
    Solve gamma J + J gamma* = q for J.

    Args:
        gamma: Positive stable square matrix
        q: Right-hand side with the same shape as gamma
        method: "kronecker" (vectorized linear system) or "bartels-stewart"

    Returns:
        The solution J, symmetrized when q is symmetric

    Raises:
        NotPositiveStableError: If gamma has an eigenvalue with real part <= 1e-9
        DimensionMismatchError: If shapes disagree
        SingularSystemError: If the vectorized system cannot be solved
    """
    gamma, q = _validate_pair(gamma, q)
    if method not in LYAPUNOV_METHODS:
        raise errors.InvalidParameterError(f"unknown Lyapunov method: {method}")
    _require_stable(gamma)
    n = gamma.shape[0]

    if method == "bartels-stewart":
        j = scipy.linalg.solve_continuous_lyapunov(gamma, q)
    else:
        eye = np.eye(n)
        # column-major vec: vec(gamma J) = (I kron gamma) vec J, vec(J gamma*) = (gamma kron I) vec J
        k = np.kron(eye, gamma) + np.kron(gamma, eye)
        try:
            x = np.linalg.solve(k, q.reshape(-1, order="F"))
        except np.linalg.LinAlgError as e:
            raise errors.SingularSystemError(f"Lyapunov operator is singular: {e}") from e
        j = x.reshape((n, n), order="F")

    if np.allclose(q, q.T, rtol=0.0, atol=1e-14 * (1.0 + np.abs(q).max())):
        j = 0.5 * (j + j.T)
    LOG.debug(f"Lyapunov solve n={n} method={method} residual={lyapunov_residual(gamma, j, q):.2e}")
    return j


def solve_lyapunov_oracle(gamma, q) -> np.ndarray:
    """Solve gamma J + J gamma* = q by probing the operator on the matrix basis.

    The operator matrix is assembled column by column from its action on each
    elementary matrix E_ij and the resulting n^2 system is solved with least squares.
    """
    gamma, q = _validate_pair(gamma, q)
    n = gamma.shape[0]
    op = np.empty((n * n, n * n))
    for col in range(n * n):
        basis = np.zeros(n * n)
        basis[col] = 1.0
        e = basis.reshape(n, n)
        op[:, col] = (gamma @ e + e @ gamma.T).reshape(-1)
    x, _, rank, _ = np.linalg.lstsq(op, q.reshape(-1), rcond=None)
    if rank < n * n:
        raise errors.SingularSystemError(f"Lyapunov operator has rank {rank} < {n * n}")
    return x.reshape(n, n)


def solve_lyapunov_batch(gamma, q) -> np.ndarray:
    """
    Solve a stack of Lyapunov equations gamma_b J_b + J_b gamma_b* = q_b.

    Args:
        gamma: Array of shape (b, n, n)
        q: Array of shape (b, n, n) or (n, n), broadcast over the batch

    Returns:
        Array of shape (b, n, n)
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 3 or gamma.shape[1] != gamma.shape[2]:
        raise errors.DimensionMismatchError(f"gamma batch must have shape (b, n, n), got {gamma.shape}")
    b, n, _ = gamma.shape
    q = np.broadcast_to(np.asarray(q, dtype=float), (b, n, n))

    min_real = np.linalg.eigvals(gamma).real.min(axis=1)
    bad = np.flatnonzero(min_real <= STABILITY_TOL)
    if bad.size:
        raise errors.NotPositiveStableError(
            f"{bad.size} of {b} matrices are not positive stable; first index {bad[0]}, "
            f"min real part {min_real[bad[0]]:.3e}"
        )

    eye = np.eye(n)
    k = np.einsum("ij,bkl->bikjl", eye, gamma) + np.einsum("bij,kl->bikjl", gamma, eye)
    k = k.reshape(b, n * n, n * n)
    rhs = q.transpose(0, 2, 1).reshape(b, n * n, 1)
    try:
        x = np.linalg.solve(k, rhs)[..., 0]
    except np.linalg.LinAlgError as e:
        raise errors.SingularSystemError(f"batched Lyapunov operator is singular: {e}") from e
    j = x.reshape(b, n, n).transpose(0, 2, 1)
    return 0.5 * (j + j.transpose(0, 2, 1))


def expm(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{m t} by scaling and squaring."""
    m = validators.as_matrix(m, "matrix")
    validators.require_square(m, "matrix")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(m * float(t))
    if not np.all(np.isfinite(out)):
        raise errors.MatrixOverflowError(f"matrix exponential overflowed for |m t| = {np.abs(m * t).max():.3e}")
    return out


def psd_sqrt(q) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    q = validators.as_matrix(q, "q")
    validators.require_square(q, "q")
    sym = 0.5 * (q + q.T)
    w, v = np.linalg.eigh(sym)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-9 * scale:
        raise errors.NotPositiveDefiniteError(f"matrix has negative eigenvalue {w.min():.3e}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def is_symmetric_positive_definite(m, tol: float = 1e-12) -> bool:
    """Check symmetry and strict positivity of the spectrum."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = 1.0 + float(np.abs(m).max())
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * scale):
        return False
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).min()) > tol * scale
