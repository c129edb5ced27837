"""Kac-Zwanzig heat bath: a particle coupled to N harmonic oscillators.

With Hamiltonian

    H = p^2/(2m) + U(x) + sum_k [p_k^2/2 + (omega_k^2/2)(x_k - c_k f(x)/omega_k^2)^2]

and Gibbs-distributed bath initial data, the particle obeys a GLE with kernel
kappa_N(t) = sum_k (c_k^2/omega_k^2) cos(omega_k t) and a Gaussian noise whose
covariance is kB T kappa_N.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gle_homog.expressions import ExprLike, ScalarExpression
from gle_homog.model import RealizationTriple, harmonic_realization, kernel_eval, ou_realization
from gle_homog.rng import map_chunks, member_streams
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger

LOG = get_logger("bathsim")

MIN_MODES = 10
OMEGA_MAX_FACTOR = 50.0
STEP_RESOLUTION = 0.1
NOISE_CHUNK = 4096
TARGET_KINDS = ("ou", "harmonic")


@dataclass(frozen=True)
class BathTarget:
    """Kernel the bath should reproduce: OU with rate ``alpha`` or harmonic with ``omega`` and ``tau``."""

    kind: str
    alpha: float = 1.0
    omega: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise errors.InvalidParameterError(f"unknown bath target '{self.kind}', expected one of {TARGET_KINDS}")

    def triple(self) -> RealizationTriple:
        if self.kind == "ou":
            return ou_realization(self.alpha)[0]
        return harmonic_realization(self.omega, self.tau)[0]

    def spectral_coupling(self, w: np.ndarray) -> np.ndarray:
        """c(omega)^2 of the Debye-type spectrum."""
        if self.kind == "ou":
            return self.alpha**2 / (self.alpha**2 + w**2)
        rate = self.omega**2 / self.tau
        return (self.omega / self.tau) ** 4 / (w**2 * rate**2 + (w**2 - self.omega**2 / self.tau**2) ** 2)

    def fastest_rate(self) -> float:
        if self.kind == "ou":
            return float(self.alpha)
        return max(self.omega**2 / self.tau, abs(self.omega) / self.tau)

    def kernel(self, t) -> np.ndarray:
        return kernel_eval(self.triple(), np.asarray(t, dtype=float))[:, 0, 0]

    def to_dict(self) -> dict:
        """Convert target to dictionary."""
        if self.kind == "ou":
            return {"kind": "ou", "alpha": self.alpha}
        return {"kind": "harmonic", "omega": self.omega, "tau": self.tau}


@dataclass(frozen=True)
class BathModel:
    """Oscillator frequencies and couplings plus the particle's mass, potential and coupling function."""

    omegas: np.ndarray
    couplings: np.ndarray
    kbt: float = 1.0
    mass: float = 1.0
    potential: ScalarExpression = field(default_factory=lambda: ScalarExpression("0"))
    coupling: ScalarExpression = field(default_factory=lambda: ScalarExpression("x"))

    def __post_init__(self):
        omegas = np.array(self.omegas, dtype=float, ndmin=1)
        couplings = np.array(self.couplings, dtype=float, ndmin=1)
        if omegas.shape != couplings.shape:
            raise errors.DimensionMismatchError(f"{omegas.size} frequencies but {couplings.size} couplings")
        if np.any(~(omegas > 0)):
            raise errors.InvalidParameterError("bath frequencies must be positive")
        if self.kbt < 0:
            raise errors.InvalidParameterError(f"kB T must be non-negative, got {self.kbt}")
        validators.require_positive(self.mass, "mass")
        for arr in (omegas, couplings):
            arr.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "couplings", couplings)

    @classmethod
    def build(
        cls,
        omegas,
        couplings,
        kbt: float = 1.0,
        mass: float = 1.0,
        potential: ExprLike = "0",
        coupling: ExprLike = "x",
    ) -> "BathModel":
        return cls(omegas, couplings, kbt, mass, ScalarExpression(potential), ScalarExpression(coupling))

    @property
    def n_modes(self) -> int:
        return self.omegas.size

    @property
    def weights(self) -> np.ndarray:
        """c_k^2 / omega_k^2."""
        return self.couplings**2 / self.omegas**2

    def kernel(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.cos(np.multiply.outer(t, self.omegas)) @ self.weights


def debye_sampling(target: BathTarget, n_modes: int, omega_max: Optional[float] = None, kbt: float = 1.0) -> BathModel:
    """
    Discretize the Debye-type spectrum so that kappa_N approximates the target kernel.

    Midpoint nodes omega_k = (k - 1/2) d omega on [0, omega_max] receive weights
    c_k^2 / omega_k^2 = (2 / pi) c(omega_k)^2 d omega.

    Raises:
        InsufficientModesError: If fewer than ten modes are requested
    """
    if n_modes < MIN_MODES:
        raise errors.InsufficientModesError(f"at least {MIN_MODES} bath modes are needed, got {n_modes}")
    if omega_max is None:
        omega_max = OMEGA_MAX_FACTOR * target.fastest_rate()
    omega_max = validators.require_positive(omega_max, "omega_max")
    d_omega = omega_max / n_modes
    omegas = (np.arange(n_modes) + 0.5) * d_omega
    weights = (2.0 / np.pi) * target.spectral_coupling(omegas) * d_omega
    LOG.debug(f"Debye bath with {n_modes} modes up to omega_max={omega_max:g}")
    return BathModel(omegas=omegas, couplings=omegas * np.sqrt(weights), kbt=kbt)


@dataclass(frozen=True)
class BathState:
    """Positions and momenta of the bath oscillators."""

    x: np.ndarray
    p: np.ndarray

    def shifted(self, model: BathModel, x0: float) -> np.ndarray:
        """x'_k = x_k - c_k f(x0) / omega_k^2."""
        f0 = float(model.coupling(np.array([x0]))[0])
        return self.x - model.couplings * f0 / model.omegas**2


def sample_gibbs_initial(model: BathModel, x0: float, rng: np.random.Generator) -> BathState:
    """Draw bath data from the Gibbs law conditioned on the particle at x0."""
    f0 = float(model.coupling(np.array([x0]))[0])
    scale = np.sqrt(model.kbt)
    shifted = scale / model.omegas * rng.standard_normal(model.n_modes)
    momenta = scale * rng.standard_normal(model.n_modes)
    return BathState(x=shifted + model.couplings * f0 / model.omegas**2, p=momenta)


def reconstructed_noise(model: BathModel, state: BathState, x0: float, t) -> np.ndarray:
    """
    xi(t) = sum_k c_k [x'_k cos(omega_k t) + (p_k / omega_k) sin(omega_k t)].

    Times are processed NOISE_CHUNK at a time so long runs never hold a full time-by-mode phase table.
    """
    times = np.asarray(t, dtype=float)
    flat = times.reshape(-1)
    cos_weights = model.couplings * state.shifted(model, x0)
    sin_weights = model.couplings * state.p / model.omegas
    out = np.empty(flat.size)
    for start in range(0, flat.size, NOISE_CHUNK):
        phase = np.multiply.outer(flat[start : start + NOISE_CHUNK], model.omegas)
        out[start : start + NOISE_CHUNK] = np.cos(phase) @ cos_weights + np.sin(phase) @ sin_weights
    return out.reshape(times.shape)


@dataclass(frozen=True)
class HamiltonianTrajectory:
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    energy: np.ndarray

    @property
    def energy_drift(self) -> float:
        """Largest relative deviation of the Hamiltonian from its initial value."""
        reference = max(abs(float(self.energy[0])), np.finfo(float).tiny)
        return float(np.abs(self.energy - self.energy[0]).max() / reference)


def _hamiltonian(model: BathModel, x, p, xk, pk) -> float:
    f = float(model.coupling(np.array([x]))[0])
    u = float(model.potential(np.array([x]))[0])
    stretch = xk - model.couplings * f / model.omegas**2
    return p**2 / (2.0 * model.mass) + u + 0.5 * float(np.sum(pk**2 + model.omegas**2 * stretch**2))


def _forces(model: BathModel, x: float, xk: np.ndarray) -> Tuple[float, np.ndarray]:
    xa = np.array([x])
    f = float(model.coupling(xa)[0])
    df = float(model.coupling.derivative(xa)[0])
    du = float(model.potential.derivative(xa)[0])
    stretch = xk - model.couplings * f / model.omegas**2
    particle = -du + df * float(np.dot(model.couplings, stretch))
    return particle, -(model.omegas**2) * stretch


def integrate_hamiltonian(
    model: BathModel, x0: float, v0: float, dt: float, horizon: float, state: Optional[BathState] = None
) -> HamiltonianTrajectory:
    """
    Velocity-Verlet integration of the particle and its bath.

    Without ``state`` the bath starts at rest in its equilibrium given x0.

    Raises:
        UnstableStepError: If dt does not resolve the fastest bath frequency
    """
    dt = validators.require_positive(dt, "dt")
    if model.n_modes and dt > STEP_RESOLUTION / model.omegas.max():
        raise errors.UnstableStepError(
            f"dt={dt:g} does not resolve omega_max={model.omegas.max():g}; need dt <= {STEP_RESOLUTION}/omega_max"
        )
    if state is None:
        f0 = float(model.coupling(np.array([x0]))[0])
        state = BathState(x=model.couplings * f0 / model.omegas**2, p=np.zeros(model.n_modes))
    n_steps = int(np.floor(horizon / dt + 1e-9))
    times = dt * np.arange(n_steps + 1)

    x, p = float(x0), model.mass * float(v0)
    xk, pk = state.x.astype(float), state.p.astype(float)
    xs, vs, energy = np.empty(n_steps + 1), np.empty(n_steps + 1), np.empty(n_steps + 1)
    xs[0], vs[0], energy[0] = x, v0, _hamiltonian(model, x, p, xk, pk)
    force, bath_force = _forces(model, x, xk)
    for k in range(n_steps):
        p += 0.5 * dt * force
        pk = pk + 0.5 * dt * bath_force
        x += dt * p / model.mass
        xk = xk + dt * pk
        force, bath_force = _forces(model, x, xk)
        p += 0.5 * dt * force
        pk = pk + 0.5 * dt * bath_force
        if not np.isfinite(x):
            raise errors.UnstableStepError(f"Hamiltonian integration diverged at step {k + 1}")
        xs[k + 1], vs[k + 1], energy[k + 1] = x, p / model.mass, _hamiltonian(model, x, p, xk, pk)

    xi = reconstructed_noise(model, state, x0, times) if model.n_modes else np.zeros_like(times)
    trajectory = HamiltonianTrajectory(times=times, x=xs, v=vs, xi=xi, energy=energy)
    LOG.debug(f"Hamiltonian run of {n_steps} steps, relative energy drift {trajectory.energy_drift:.3e}")
    return trajectory


@dataclass(frozen=True)
class KernelComparison:
    times: np.ndarray
    bath: np.ndarray
    target: np.ndarray

    @property
    def sup_error(self) -> float:
        return float(np.abs(self.bath - self.target).max())

    @property
    def relative_sup_error(self) -> float:
        return self.sup_error / float(np.abs(self.target).max())

    def rows(self) -> List[list]:
        return [[float(t), float(b), float(k)] for t, b, k in zip(self.times, self.bath, self.target)]


def kernel_comparison(model: BathModel, target: BathTarget, times: Sequence[float]) -> KernelComparison:
    """kappa_N against the target kernel on a time grid."""
    times = np.asarray(times, dtype=float)
    return KernelComparison(times=times, bath=model.kernel(times), target=target.kernel(times))


@dataclass(frozen=True)
class NoiseCovariance:
    """Ensemble covariance E[xi(t_ref + lag) xi(t_ref)] at several reference times."""

    reference_times: np.ndarray
    lags: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    expected: np.ndarray
    n_realizations: int

    def rows(self) -> List[list]:
        """Rows (t_ref, lag, estimate, stderr, kB T kappa(lag))."""
        return [
            [float(t_ref), float(lag), float(self.mean[i, j]), float(self.stderr[i, j]), float(self.expected[j])]
            for i, t_ref in enumerate(self.reference_times)
            for j, lag in enumerate(self.lags)
        ]

    def max_zscore(self) -> float:
        return float((np.abs(self.mean - self.expected[None]) / self.stderr).max())


def noise_covariance(
    model: BathModel,
    lags: Sequence[float],
    n_realizations: int,
    seed: int = 0,
    reference_times: Sequence[float] = (0.0,),
    x0: float = 0.0,
    expected=None,
    threads: int = 1,
) -> NoiseCovariance:
    """
    Ensemble covariance of the reconstructed noise over independent Gibbs draws.

    ``expected`` is the kernel compared against; it defaults to the bath's own kappa_N.

    Raises:
        InsufficientSamplesError: If fewer than two realizations are requested
    """
    if n_realizations < 2:
        raise errors.InsufficientSamplesError("noise covariance needs at least two bath realizations")
    lags = np.asarray(lags, dtype=float)
    refs = np.asarray(reference_times, dtype=float)
    late = np.add.outer(refs, lags).reshape(-1)

    def run(members: range) -> np.ndarray:
        out = np.empty((len(members), refs.size, lags.size))
        for row, member in enumerate(members):
            state = sample_gibbs_initial(model, x0, member_streams(seed, member).initial)
            xi_ref = reconstructed_noise(model, state, x0, refs)
            xi_late = reconstructed_noise(model, state, x0, late).reshape(refs.size, lags.size)
            out[row] = xi_late * xi_ref[:, None]
        return out

    products = map_chunks(run, n_realizations, threads)
    kappa = model.kernel(lags) if expected is None else np.asarray(expected, dtype=float)
    return NoiseCovariance(
        reference_times=refs,
        lags=lags,
        mean=products.mean(axis=0),
        stderr=products.std(axis=0, ddof=1) / np.sqrt(n_realizations),
        expected=model.kbt * kappa,
        n_realizations=n_realizations,
    )
