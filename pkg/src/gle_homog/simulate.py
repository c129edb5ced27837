"""SDE integration for pre-limit and limiting dynamics, coupled convergence runs and estimators."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from gle_homog import matrixlab
from gle_homog.homogenize import HomogenizedSDE
from gle_homog.markovianize import ExtendedSystem, build_extended
from gle_homog.model import GLESystem, RealizationTriple
from gle_homog.models import ConvergenceRecord
from gle_homog.rng import map_chunks, member_streams
from gle_homog.utils import errors, validators
from gle_homog.utils.logger import get_logger, timed

LOG = get_logger("simulate")

SCHEMES = ("euler-maruyama", "semi-implicit-fast-block")
DIVERGENCE_LIMIT = 1e8
STABILITY_SAFETY = 20.0
MAX_SEED = 2**64
BURN_IN_FACTOR = 10.0


@dataclass(frozen=True)
class SimulationConfig:
    """Time stepping, ensemble and initial-condition settings of a simulation."""

    dt: float
    horizon: float
    seed: int = 0
    epsilon: float = 1.0
    scheme: str = "semi-implicit-fast-block"
    ensemble_size: int = 1
    x0: Tuple[float, ...] = (0.0,)
    v0: Optional[Tuple[float, ...]] = None
    zero_initial_noise: bool = False
    dt_per_epsilon: float = 0.1
    threads: int = 1

    def __post_init__(self):
        validators.require_positive(self.dt, "dt")
        validators.require_positive(self.epsilon, "epsilon")
        if self.horizon < self.dt:
            raise errors.InvalidParameterError(f"horizon {self.horizon} is shorter than dt {self.dt}")
        if self.scheme not in SCHEMES:
            raise errors.InvalidParameterError(f"unknown scheme '{self.scheme}', expected one of {SCHEMES}")
        if self.ensemble_size < 1:
            raise errors.InvalidParameterError("ensemble_size must be at least 1")
        if not 0 <= int(self.seed) < MAX_SEED:
            raise errors.InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.threads < 1:
            raise errors.InvalidParameterError("threads must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.horizon / self.dt + 1e-9))

    def to_dict(self) -> dict:
        """Convert config to dictionary."""
        return {
            "dt": self.dt,
            "horizon": self.horizon,
            "seed": int(self.seed),
            "epsilon": self.epsilon,
            "scheme": self.scheme,
            "ensemble_size": self.ensemble_size,
            "x0": list(self.x0),
            "v0": None if self.v0 is None else list(self.v0),
            "zero_initial_noise": self.zero_initial_noise,
            "dt_per_epsilon": self.dt_per_epsilon,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of an ensemble, shape (members, len(times), state dimension)."""

    times: np.ndarray
    states: np.ndarray

    def positions(self, d: int) -> np.ndarray:
        return self.states[:, :, :d]


@dataclass(frozen=True)
class PathBundle:
    """Brownian increments on a fine grid shared by every run of a coupled experiment.

    ``initial`` holds standard normals used for the initial noise state so that
    runs at different scales also share their initial randomness.
    """

    dt: float
    increments: np.ndarray
    initial: np.ndarray
    seed: int = 0
    factor: int = field(default=1)

    @property
    def n_members(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def noise_dim(self) -> int:
        return self.increments.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def generate(
        cls, seed: int, n_members: int, n_steps: int, dt: float, noise_dim: int, initial_dim: int = 0, threads: int = 1
    ) -> "PathBundle":
        """Draw increments and initial normals from per-member streams."""
        validators.require_positive(dt, "dt")

        def draw(members: range) -> np.ndarray:
            out = np.empty((len(members), n_steps * noise_dim + initial_dim))
            for row, member in enumerate(members):
                streams = member_streams(seed, member)
                out[row, : n_steps * noise_dim] = streams.increments.standard_normal(n_steps * noise_dim)
                out[row, n_steps * noise_dim :] = streams.initial.standard_normal(initial_dim)
            return out

        raw = map_chunks(draw, n_members, threads)
        increments = np.sqrt(dt) * raw[:, : n_steps * noise_dim].reshape(n_members, n_steps, noise_dim)
        return cls(dt=dt, increments=increments, initial=raw[:, n_steps * noise_dim :], seed=seed)

    @classmethod
    def zeros(cls, n_members: int, n_steps: int, dt: float, noise_dim: int, initial_dim: int = 0) -> "PathBundle":
        return cls(
            dt=dt,
            increments=np.zeros((n_members, n_steps, noise_dim)),
            initial=np.zeros((n_members, initial_dim)),
        )

    def coarsen(self, factor: int) -> "PathBundle":
        """Sum consecutive groups of ``factor`` increments onto a grid with step factor * dt."""
        factor = int(factor)
        if factor < 1 or self.n_steps % factor:
            raise errors.InvalidParameterError(f"cannot coarsen {self.n_steps} steps by a factor {factor}")
        if factor == 1:
            return self
        summed = self.increments.reshape(self.n_members, self.n_steps // factor, factor, self.noise_dim).sum(axis=2)
        return PathBundle(
            dt=self.dt * factor, increments=summed, initial=self.initial, seed=self.seed, factor=self.factor * factor
        )

    def view_for(self, dt: float) -> "PathBundle":
        """The coarsened view whose step equals ``dt``."""
        factor = dt / self.dt
        if abs(factor - round(factor)) > 1e-9 * max(1.0, factor):
            raise errors.InvalidParameterError(f"dt {dt} is not a multiple of the path step {self.dt}")
        return self.coarsen(int(round(factor)))


def stability_bound(ext: ExtendedSystem, states) -> float:
    """Largest step allowed for explicit stepping of the fast blocks at the given states."""
    sys = ext.system
    radius = float(np.abs(np.linalg.eigvals(ext.gamma_hat(states))).max())
    return ext.epsilon * min(sys.m0, sys.tau_kappa, sys.tau_xi) / (STABILITY_SAFETY * max(1.0, radius))


def _initial_states(cfg: SimulationConfig, d: int) -> Tuple[np.ndarray, np.ndarray]:
    x0 = np.broadcast_to(np.asarray(cfg.x0, dtype=float), (d,))
    v0 = np.zeros(d) if cfg.v0 is None else np.broadcast_to(np.asarray(cfg.v0, dtype=float), (d,))
    return x0, v0


def _check_finite(values: np.ndarray, step: int, dt: float) -> None:
    if not np.all(np.isfinite(values)) or np.abs(values).max() > DIVERGENCE_LIMIT:
        raise errors.UnstableStepError(f"integration diverged at step {step} (t={step * dt:.6g})")


def integrate_prelimit(ext: ExtendedSystem, cfg: SimulationConfig, paths: PathBundle) -> Trajectory:
    """
    Integrate the extended system at the scale of ``ext`` over an ensemble.

    The state is (x, v, y, beta) with y0 = 0 and beta0 ~ N(0, M2/(tau_xi eps)) unless
    ``zero_initial_noise`` is set. The semi-implicit scheme solves
    (I + dt/eps gamma_hat(x_n)) w_{n+1} = w_n + dt/eps F_hat(x_n) + sigma_hat dW/eps
    and then advances x with the new velocity.

    Raises:
        UnstableStepError: If the explicit step bound is violated or the state diverges
        NotPositiveStableError: If gamma_hat is not positive stable at the initial state
    """
    paths = paths.view_for(cfg.dt)
    lay = ext.layout
    d, n = lay.d, lay.n
    if paths.noise_dim != ext.sigma_hat.shape[1]:
        raise errors.DimensionMismatchError(
            f"paths carry {paths.noise_dim} noises, model needs {ext.sigma_hat.shape[1]}"
        )
    x0, v0 = _initial_states(cfg, d)
    eps, dt = ext.epsilon, cfg.dt
    n_steps = min(cfg.n_steps, paths.n_steps)

    report = matrixlab.spectral_check(ext.gamma_hat(x0[None])[0])
    if not report.positive_stable:
        raise errors.NotPositiveStableError(f"gamma_hat is not positive stable at x0={x0.tolist()}")
    bound = stability_bound(ext, x0[None])
    if dt > bound:
        message = f"dt={dt:g} exceeds the explicit stability bound {bound:.3e} at eps={eps:g}"
        if cfg.scheme == "euler-maruyama":
            raise errors.UnstableStepError(message)
        LOG.warning(f"{message}; fast blocks are stepped implicitly")

    sigma_hat_t = ext.sigma_hat.T
    eye = np.eye(n)

    def run(members: range) -> np.ndarray:
        b = len(members)
        out = np.empty((b, n_steps + 1, d + n))
        x = np.tile(x0, (b, 1))
        w = np.zeros((b, n))
        w[:, lay.v] = v0
        if not cfg.zero_initial_noise:
            w[:, lay.beta] = ext.sample_initial_beta(paths.initial[members.start : members.stop, : lay.d2])
        out[:, 0, :d], out[:, 0, d:] = x, w
        dws = paths.increments[members.start : members.stop]
        for k in range(n_steps):
            gamma_hat = ext.gamma_hat(x)
            kick = (dt / eps) * ext.force_hat(x) + (dws[:, k] @ sigma_hat_t) / eps
            if cfg.scheme == "semi-implicit-fast-block":
                w_new = np.linalg.solve(eye + (dt / eps) * gamma_hat, (w + kick)[..., None])[..., 0]
                x = x + dt * w_new[:, lay.v]
            else:
                w_new = w - (dt / eps) * np.einsum("bij,bj->bi", gamma_hat, w) + kick
                x = x + dt * w[:, lay.v]
            w = w_new
            _check_finite(w, k + 1, dt)
            out[:, k + 1, :d], out[:, k + 1, d:] = x, w
        return out

    states = map_chunks(run, paths.n_members, cfg.threads)
    return Trajectory(times=dt * np.arange(n_steps + 1), states=states)


def integrate_limit(hsde: HomogenizedSDE, cfg: SimulationConfig, paths: PathBundle) -> Trajectory:
    """
    Euler-Maruyama integration of the limiting SDE on the same Brownian paths.

    Raises:
        UnstableStepError: If the state diverges
    """
    paths = paths.view_for(cfg.dt)
    d = hsde.dimension
    x0 = np.broadcast_to(np.asarray(cfg.x0, dtype=float), (d,))
    dt = cfg.dt
    n_steps = min(cfg.n_steps, paths.n_steps)

    def run(members: range) -> np.ndarray:
        b = len(members)
        out = np.empty((b, n_steps + 1, d))
        x = np.tile(x0, (b, 1))
        out[:, 0] = x
        dws = paths.increments[members.start : members.stop]
        for k in range(n_steps):
            x = x + dt * hsde.drift(x) + np.einsum("bij,bj->bi", hsde.diffusion(x), dws[:, k])
            _check_finite(x, k + 1, dt)
            out[:, k + 1] = x
        return out

    states = map_chunks(run, paths.n_members, cfg.threads)
    return Trajectory(times=dt * np.arange(n_steps + 1), states=states)


def _step_factor(epsilon: float, cfg: SimulationConfig) -> int:
    target = cfg.dt_per_epsilon * epsilon / cfg.dt
    factor = 1
    while factor * 2 <= target and cfg.n_steps % (factor * 2) == 0:
        factor *= 2
    return factor


def coupled_sup_error(
    system: GLESystem, hsde: HomogenizedSDE, eps_list: Sequence[float], cfg: SimulationConfig
) -> List[ConvergenceRecord]:
    """
    Statistics of sup_t |x^eps_t - X_t| over an ensemble driven by shared Brownian paths.

    ``cfg.dt`` is the fine step used by the limit; each scale runs on the coarsest
    power-of-two multiple of it not exceeding ``dt_per_epsilon * eps``.
    """
    eps_values = validators.require_decreasing(eps_list, "eps_list")
    ext0 = build_extended(system)
    d = system.dimension
    paths = PathBundle.generate(
        cfg.seed,
        cfg.ensemble_size,
        cfg.n_steps,
        cfg.dt,
        noise_dim=ext0.sigma_hat.shape[1],
        initial_dim=ext0.layout.d2,
        threads=cfg.threads,
    )
    limit = integrate_limit(hsde, cfg, paths).states

    records = []
    for eps in eps_values:
        factor = _step_factor(eps, cfg)
        run_cfg = SimulationConfig(**{**cfg.to_dict(), "epsilon": eps, "dt": cfg.dt * factor, "seed": cfg.seed})
        with timed(LOG, f"pre-limit ensemble at eps={eps:g}"):
            traj = integrate_prelimit(ext0.with_epsilon(eps), run_cfg, paths)
        coarse_limit = limit[:, :: factor][:, : traj.states.shape[1]]
        sup = np.linalg.norm(traj.positions(d) - coarse_limit, axis=2).max(axis=1)
        q25, median, q75 = np.quantile(sup, [0.25, 0.5, 0.75])
        record = ConvergenceRecord(
            epsilon=float(eps),
            median=float(median),
            q25=float(q25),
            q75=float(q75),
            n_paths=int(sup.size),
            dt=float(run_cfg.dt),
            seed=int(cfg.seed),
        )
        LOG.info(f"eps={eps:g}: median sup error {median:.4e} (dt={run_cfg.dt:g})")
        records.append(record)
    return records


@dataclass(frozen=True)
class OccupancyHistogram:
    """Occupation counts of a reflected 1D trajectory ensemble."""

    edges: np.ndarray
    counts: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def density(self) -> np.ndarray:
        return self.counts / (self.n_samples * np.diff(self.edges))

    def rows(self) -> List[list]:
        return [
            [float(lo), float(hi), int(c), float(p)]
            for lo, hi, c, p in zip(self.edges[:-1], self.edges[1:], self.counts, self.density())
        ]


def reflect(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Fold positions back into [a, b] by mirror reflection at both ends."""
    width = b - a
    u = np.mod(x - a, 2.0 * width)
    return a + np.where(u <= width, u, 2.0 * width - u)


def reflecting_sim(
    hsde: HomogenizedSDE, interval: Tuple[float, float], cfg: SimulationConfig, bins: int = 50, burn_in: float = 0.0
) -> OccupancyHistogram:
    """
    Euler-Maruyama ensemble of a 1D limiting SDE with reflecting boundaries.

    Members start uniformly in (a, b); states after ``burn_in`` are binned at every step.
    """
    if hsde.dimension != 1:
        raise errors.DimensionMismatchError("reflecting simulations are one-dimensional")
    a, b = (float(v) for v in interval)
    if not b > a:
        raise errors.InvalidParameterError(f"interval must satisfy a < b, got ({a}, {b})")
    edges = np.linspace(a, b, int(bins) + 1)
    dt, n_steps = cfg.dt, cfg.n_steps
    skip = int(np.ceil(burn_in / dt))
    if skip >= n_steps:
        raise errors.InvalidParameterError("burn-in covers the whole horizon")

    def run(members: range) -> np.ndarray:
        streams = [member_streams(cfg.seed, m) for m in members]
        x = np.array([s.initial.uniform(a, b) for s in streams])
        noise = np.sqrt(dt) * np.stack([s.increments.standard_normal(n_steps) for s in streams])
        counts = np.zeros(int(bins), dtype=np.int64)
        for k in range(n_steps):
            states = x[:, None]
            x = x + dt * hsde.drift(states)[:, 0] + hsde.diffusion(states)[:, 0, 0] * noise[:, k]
            x = reflect(x, a, b)
            if k + 1 > skip:
                idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, int(bins) - 1)
                counts += np.bincount(idx, minlength=int(bins))
        return counts[None]

    counts = map_chunks(run, cfg.ensemble_size, cfg.threads).sum(axis=0)
    LOG.info(f"Reflecting simulation on ({a}, {b}): {int(counts.sum())} samples")
    return OccupancyHistogram(edges=edges, counts=counts)


def simulate_noise(
    triple: RealizationTriple, n_paths: int, n_steps: int, dt: float, seed: int = 0, threads: int = 1
) -> np.ndarray:
    """
    Exact-in-distribution samples of the readout C beta of a realization triple.

    beta starts from its stationary law N(0, M) and advances by
    beta_{n+1} = e^{-Gamma dt} beta_n + L z_n with L L* = M - e^{-Gamma dt} M e^{-Gamma* dt}.
    Returns an array of shape (n_paths, n_steps + 1, output dimension).
    """
    dt = validators.require_positive(dt, "dt")
    k = triple.state_dim
    phi = matrixlab.expm(-triple.gamma, dt)
    step_root = matrixlab.psd_sqrt(triple.m - phi @ triple.m @ phi.T)
    stationary_root = matrixlab.psd_sqrt(triple.m)

    def run(members: range) -> np.ndarray:
        streams = [member_streams(seed, m) for m in members]
        beta = np.stack([s.initial.standard_normal(k) for s in streams]) @ stationary_root.T
        z = np.stack([s.increments.standard_normal((n_steps, k)) for s in streams])
        out = np.empty((len(members), n_steps + 1, triple.output_dim))
        out[:, 0] = beta @ triple.c.T
        for step in range(n_steps):
            beta = beta @ phi.T + z[:, step] @ step_root.T
            out[:, step + 1] = beta @ triple.c.T
        return out

    return map_chunks(run, n_paths, threads)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Empirical lagged covariance with standard errors across independent paths."""

    lags: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int

    def rows(self, reference: Optional[np.ndarray] = None) -> List[list]:
        """Rows (lag, i, j, estimate, stderr[, reference]) for CSV output."""
        out = []
        for li, lag in enumerate(self.lags):
            for i in range(self.mean.shape[1]):
                for j in range(self.mean.shape[2]):
                    row = [float(lag), i + 1, j + 1, float(self.mean[li, i, j]), float(self.stderr[li, i, j])]
                    if reference is not None:
                        row.append(float(reference[li, i, j]))
                    out.append(row)
        return out


def stationary_burn_in(triple: RealizationTriple, factor: float = BURN_IN_FACTOR) -> float:
    """Time to discard before a noise counts as stationary: ``factor`` times the slowest time constant."""
    return factor * triple.max_timescale()


def estimate_covariance(
    samples: np.ndarray, dt: float, lags: Sequence[float], *, burn_in: float
) -> CovarianceEstimate:
    """
    Estimate R(t) = E[xi(s + t) xi(s)*] from stationary trajectories.

    Each path yields a time-averaged estimate after discarding ``burn_in`` (see
    ``stationary_burn_in``); the mean and standard error are taken across paths.

    Raises:
        InsufficientSamplesError: If there are fewer than two paths or a lag exceeds the window
    """
    if burn_in < 0:
        raise errors.InvalidParameterError(f"burn_in must be nonnegative, got {burn_in}")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[:, :, None]
    n_paths = samples.shape[0]
    if n_paths < 2:
        raise errors.InsufficientSamplesError("covariance estimates need at least two paths")
    start = int(np.ceil(burn_in / dt))
    window = samples[:, start:]
    lag_steps = [int(round(lag / dt)) for lag in lags]
    if not lag_steps or max(lag_steps) >= window.shape[1]:
        raise errors.InsufficientSamplesError(
            f"window of {window.shape[1]} samples after burn-in is too short for lags {list(lags)}"
        )

    k = samples.shape[2]
    mean = np.empty((len(lag_steps), k, k))
    stderr = np.empty_like(mean)
    for li, ls in enumerate(lag_steps):
        late = window[:, ls:]
        early = window[:, : window.shape[1] - ls]
        per_path = np.einsum("ptj,ptk->pjk", late, early) / late.shape[1]
        mean[li] = per_path.mean(axis=0)
        stderr[li] = per_path.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return CovarianceEstimate(lags=np.asarray(lags, dtype=float), mean=mean, stderr=stderr, n_paths=n_paths)
