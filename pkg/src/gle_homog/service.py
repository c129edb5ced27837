"""Experiment orchestration: builds models from validated files, runs experiments and writes artifacts."""

from dataclasses import replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from gle_homog import bathsim, matrixlab, simulate, thermophoresis
from gle_homog.homogenize import (
    check_derived_jacobians,
    closed_form_sde,
    homogenized_sde,
    j_blocks,
)
from gle_homog.markovianize import build_extended, check_b_lambda
from gle_homog.model import (
    CoefficientField,
    GLESystem,
    RealizationTriple,
    check_fdt,
    check_jacobians,
    covariance_eval,
    default_probes,
    effective_constants,
    harmonic_realization,
    ou_realization,
    relative_error,
)
from gle_homog.models import Manifest, ValidationReport
from gle_homog.repository import ArtifactRepository
from gle_homog.rng import member_streams
from gle_homog.schemas import ExperimentConfig, GLESection, ModelFile, ThermoSection, TripleSpec, load_model_file
from gle_homog.utils import errors, metadata
from gle_homog.utils.logger import get_logger, log_step

LOG = get_logger("service")

JACOBIAN_TOL = 1e-6
# share of consecutive epsilon pairs whose median error must not increase
MONOTONE_FRACTION = 0.75


def build_triple(spec: TripleSpec, role: str) -> RealizationTriple:
    """Build the kernel (role "kernel") or noise (role "noise") realization of a triple spec."""
    index = 0 if role == "kernel" else 1
    if spec.kind == "ou":
        return ou_realization(spec.alpha)[index]
    if spec.kind == "harmonic":
        return harmonic_realization(spec.omega, spec.tau)[index]
    return RealizationTriple(gamma=spec.gamma, m=spec.m, c=spec.c, sigma=spec.sigma)


def _default_h(g):
    if isinstance(g, (str, int, float)):
        return g
    grid = np.asarray(g, dtype=object)
    if grid.ndim == 1:
        return grid.tolist()
    return grid.T.tolist()


def build_coefficients(section: GLESection, q: int, r: int) -> CoefficientField:
    spec = section.coefficients
    h = spec.h if spec.h is not None else _default_h(spec.g)
    coeffs = CoefficientField.from_expressions(section.dimension, spec.force, spec.g, h, spec.sigma, q=q, r=r)
    if section.jacobians == "finite-difference":
        coeffs = replace(coeffs, dg=None, dh=None, dsigma=None)
    return coeffs


def build_thermo(section: ThermoSection) -> thermophoresis.ThermoModel:
    noise = thermophoresis.NoiseKind(section.noise.kind, alpha=section.noise.alpha, omega=section.noise.omega)
    return thermophoresis.ThermoModel(
        temperature=section.temperature,
        noise=noise,
        diffusion=section.diffusion,
        viscosity=section.viscosity,
        radius=section.radius,
        kb=section.kb,
        units=section.units,
        m0=section.m0,
        tau=section.tau,
        interval=section.interval,
    )


def build_system(model: ModelFile) -> GLESystem:
    """
    The GLE system described by a model file.

    A file with only a thermo section yields the thermophoretic GLE.
    """
    if model.gle is None:
        system = thermophoresis.to_gle_system(build_thermo(model.thermo))
        return replace(system, name=model.name)
    section = model.gle
    kernel = build_triple(section.kernel, "kernel")
    noise = build_triple(section.noise, "noise")
    coeffs = build_coefficients(section, kernel.output_dim, noise.output_dim)
    probes = None
    if section.probe_box is not None:
        probes = default_probes(section.probe_box, count=section.probe_count)
    return GLESystem(
        coeffs=coeffs,
        kernel=kernel,
        noise=noise,
        m0=section.scales.m0,
        tau_kappa=section.scales.tau_kappa,
        tau_xi=section.scales.tau_xi,
        probes=probes,
        name=model.name,
    )


def _grid(config: ExperimentConfig, default: Tuple[float, float]) -> np.ndarray:
    lower = config.grid.lower if config.grid.lower is not None else default[0]
    upper = config.grid.upper if config.grid.upper is not None else default[1]
    if not upper > lower:
        raise errors.InvalidParameterError(f"grid must satisfy lower < upper, got ({lower}, {upper})")
    return np.linspace(lower, upper, config.grid.points)


class ExperimentService:
    """Service running experiments and diagnostics against an artifact repository."""

    def __init__(self, repository: ArtifactRepository, threads: int = 1):
        """Initialize the service with a repository and a default thread count."""
        self._repository = repository
        self._threads = max(1, int(threads))
        self._runners: Dict[str, Callable[[ExperimentConfig, Optional[ModelFile]], dict]] = {
            "homogenize": self._homogenize,
            "converge": self._converge,
            "thermo": self._thermo,
            "bath": self._bath,
            "noise-stats": self._noise_stats,
        }

    def _threads_for(self, config: ExperimentConfig) -> int:
        return config.threads or self._threads

    @log_step
    def run(self, config: ExperimentConfig) -> Manifest:
        """Run an experiment, write its artifacts and the manifest."""
        model = load_model_file(config.model) if config.model else None
        resolved = self._runners[config.kind](config, model)
        manifest = Manifest(
            package=metadata.NAME,
            version=metadata.VERSION,
            kind=config.kind,
            seed=config.seed,
            config={
                "experiment": {**config.model_dump(mode="json", by_alias=True), "threads": self._threads_for(config)},
                "model": None if model is None else model.model_dump(mode="json", by_alias=True),
                "resolved": resolved,
            },
        )
        self._repository.write_manifest(manifest)
        return manifest

    def _homogenize(self, config: ExperimentConfig, model: ModelFile) -> dict:
        system = build_system(model)
        hsde = homogenized_sde(system, route=config.simulation.route)
        if system.dimension == 1:
            box = (float(system.probes.min()), float(system.probes.max()))
            states = _grid(config, box)[:, None]
        else:
            states = system.probes
        header, rows = hsde.tabulate(states)
        self._repository.write_csv("drift_table.csv", header, rows)

        blocks = j_blocks(system, system.probes)
        summary = {
            "model": model.name,
            "provenance": hsde.provenance,
            "seed": config.seed,
            "effective_constants": effective_constants(system).to_dict(),
            "fdt": check_fdt(system).to_dict(),
            "b_lambda": check_b_lambda(build_extended(system)).to_dict(),
            "max_block_residual": float(blocks.residuals.max()),
            "jacobians": check_jacobians(system.coeffs, system.probes),
        }
        try:
            closed = closed_form_sde(system)
            summary["closed_form"] = {
                "provenance": closed.provenance,
                "max_relative_difference": relative_error(closed.drift(states), hsde.drift(states)),
            }
        except errors.UnsupportedClosedFormError as e:
            summary["closed_form"] = {"provenance": None, "reason": str(e)}
        self._repository.write_json("summary.json", summary)
        return {"grid_points": int(states.shape[0]), "provenance": hsde.provenance}

    def _simulation_config(self, config: ExperimentConfig) -> simulate.SimulationConfig:
        sim = config.simulation
        return simulate.SimulationConfig(
            dt=sim.dt,
            horizon=sim.horizon,
            seed=config.seed,
            scheme=sim.scheme,
            ensemble_size=sim.ensemble_size,
            x0=tuple(sim.x0),
            dt_per_epsilon=sim.dt_per_epsilon,
            threads=self._threads_for(config),
        )

    def _converge(self, config: ExperimentConfig, model: ModelFile) -> dict:
        system = build_system(model)
        hsde = homogenized_sde(system, route=config.simulation.route)
        cfg = self._simulation_config(config)
        records = simulate.coupled_sup_error(system, hsde, config.simulation.epsilons, cfg)
        medians = [r.median for r in records]
        nonincreasing = sum(b <= a for a, b in zip(medians, medians[1:]))
        pairs = len(medians) - 1
        monotone = pairs == 0 or nonincreasing >= MONOTONE_FRACTION * pairs
        if not monotone:
            LOG.warning(f"median error increased in {pairs - nonincreasing} of {pairs} epsilon pairs")
        report = {
            "model": model.name,
            "provenance": hsde.provenance,
            "seed": config.seed,
            "simulation": cfg.to_dict(),
            "records": [r.to_dict() for r in records],
            "nonincreasing_pairs": nonincreasing,
            "pairs": pairs,
            "monotone": monotone,
            "last_to_first_median": medians[-1] / medians[0] if medians[0] > 0 else None,
        }
        self._repository.write_json("convergence.json", report)
        return {"epsilons": [r.epsilon for r in records]}

    def _thermo(self, config: ExperimentConfig, model: ModelFile) -> dict:
        if model.thermo is None:
            raise errors.ConfigParseError(f"model '{model.name}' has no thermo section")
        thermo = build_thermo(model.thermo)
        a, b = thermo.interval
        xs = _grid(config, (a, b))

        t, _, d, _ = thermo.profiles(xs)
        gamma, sigma = thermophoresis.damping_and_noise(thermo, xs)
        drift = thermophoresis.drift(thermo, xs)
        rows = [list(row) for row in zip(xs, t, d, gamma, sigma, drift)]
        header = ["x", "temperature", "diffusion", "gamma", "sigma", "drift"]
        self._repository.write_csv("drift_profile.csv", header, rows)

        density = thermophoresis.stationary_density(thermo, a, b, config.thermo.density_points)
        self._repository.write_csv("density.csv", ["x", "density"], density.rows())

        ratio_rows = []
        for x in xs:
            roots = thermophoresis.critical_ratio(thermo, float(x))
            padded = roots + [""] * (2 - len(roots))
            ratio_rows.append([float(x), len(roots)] + padded)
        self._repository.write_csv("critical_ratios.csv", ["x", "n_roots", "r1", "r2"], ratio_rows)

        report = {
            "model": model.name,
            "seed": config.seed,
            "thermo": thermo.to_dict(),
            "normalization": density.normalization,
            "fdt_identity_max_error": float(np.abs(sigma**2 - 2.0 * thermo.kb * t * gamma).max()),
        }
        if thermo.viscosity is not None and thermo.viscosity.is_constant:
            report["constant_viscosity_exponent"] = thermophoresis.constant_viscosity_exponent(thermo)

        reflecting = config.thermo.reflecting
        if reflecting is not None:
            hsde = closed_form_sde(thermophoresis.to_gle_system(thermo)).interpolated(a, b)
            cfg = simulate.SimulationConfig(
                dt=reflecting.dt,
                horizon=reflecting.horizon,
                seed=config.seed,
                ensemble_size=reflecting.ensemble_size,
                threads=self._threads_for(config),
            )
            occupancy = simulate.reflecting_sim(hsde, (a, b), cfg, bins=reflecting.bins, burn_in=reflecting.burn_in)
            self._repository.write_csv("occupancy.csv", ["lower", "upper", "count", "density"], occupancy.rows())
            report["reflecting"] = {
                "samples": occupancy.n_samples,
                "ks_distance": thermophoresis.ks_distance(occupancy, density),
            }
        self._repository.write_json("thermo_report.json", report)
        return {"grid_points": int(xs.size)}

    def _bath(self, config: ExperimentConfig, model: Optional[ModelFile]) -> dict:
        section = config.bath
        spec = section.target
        target = bathsim.BathTarget(spec.kind, alpha=spec.alpha, omega=spec.omega, tau=spec.tau)
        bath = bathsim.debye_sampling(target, section.n_modes, omega_max=section.omega_max, kbt=section.kbt)

        times = np.linspace(0.0, section.t_max, section.kernel_points)
        comparison = bathsim.kernel_comparison(bath, target, times)
        self._repository.write_csv("kernel_comparison.csv", ["t", "kappa_bath", "kappa_target"], comparison.rows())

        covariance = bathsim.noise_covariance(
            bath,
            section.lags,
            section.n_realizations,
            seed=config.seed,
            reference_times=section.reference_times,
            expected=target.kernel(section.lags),
            threads=self._threads_for(config),
        )
        self._repository.write_csv(
            "noise_covariance.csv", ["t_ref", "lag", "estimate", "stderr", "expected"], covariance.rows()
        )

        dt = 0.5 * bathsim.STEP_RESOLUTION / float(bath.omegas.max())
        # member index n_realizations keeps the energy run independent of the covariance ensemble
        rng = member_streams(config.seed, section.n_realizations).initial
        state = bathsim.sample_gibbs_initial(bath, 0.0, rng)
        trajectory = bathsim.integrate_hamiltonian(bath, 0.0, 0.0, dt, section.energy_check_horizon, state)

        report = {
            "seed": config.seed,
            "target": target.to_dict(),
            "n_modes": bath.n_modes,
            "omega_max": float(bath.omegas.max() + 0.5 * (bath.omegas[1] - bath.omegas[0])),
            "kernel_sup_error": comparison.sup_error,
            "kernel_relative_sup_error": comparison.relative_sup_error,
            "covariance_max_zscore": covariance.max_zscore(),
            "energy_drift": trajectory.energy_drift,
            "energy_dt": dt,
            "energy_steps": int(trajectory.times.size - 1),
        }
        self._repository.write_json("bath_report.json", report)
        return {"n_modes": bath.n_modes}

    def _noise_stats(self, config: ExperimentConfig, model: ModelFile) -> dict:
        if model.gle is None:
            raise errors.ConfigParseError(f"model '{model.name}' has no gle section")
        section = config.noise_stats
        spec = model.gle.kernel if section.source == "kernel" else model.gle.noise
        triple = build_triple(spec, section.source)
        tau = triple.max_timescale()
        dt = section.dt
        lags = [round(m * tau / dt) * dt for m in section.lag_multiples]
        burn_in = simulate.stationary_burn_in(triple, section.burn_in_factor)
        n_steps = int(np.ceil((burn_in + section.window) / dt))

        samples = simulate.simulate_noise(
            triple, section.n_paths, n_steps, dt, seed=config.seed, threads=self._threads_for(config)
        )
        estimate = simulate.estimate_covariance(samples, dt, lags, burn_in=burn_in)
        reference = covariance_eval(triple, np.asarray(lags))
        header = ["lag", "i", "j", "estimate", "stderr", "reference"]
        self._repository.write_csv("noise_covariance.csv", header, estimate.rows(reference))

        with np.errstate(divide="ignore", invalid="ignore"):
            zscores = np.abs(estimate.mean - reference) / estimate.stderr
        report = {
            "model": model.name,
            "seed": config.seed,
            "source": section.source,
            "family": triple.family,
            "timescale": tau,
            "lags": lags,
            "burn_in": burn_in,
            "n_paths": estimate.n_paths,
            "max_zscore": float(np.nanmax(zscores)),
        }
        self._repository.write_json("noise_report.json", report)
        return {"lags": lags}

    @log_step
    def validate(self, model: ModelFile) -> ValidationReport:
        """
        Check every modelling assumption of a model file.

        Failures are recorded per check instead of raised, so one report names all of them.
        """
        report = ValidationReport(model=model.name)
        if model.thermo is not None:
            self._validate_thermo(model.thermo, report)
        if model.gle is None and model.thermo is None:
            return report

        triples: List[Optional[RealizationTriple]] = []
        if model.gle is not None:
            for role in ("kernel", "noise"):
                triples.append(self._validate_triple(getattr(model.gle, role), role, report))
        if any(t is None for t in triples):
            return report

        try:
            system = build_system(model)
        except (errors.ConfigParseError, errors.ModelValidationError) as e:
            report.add("coefficients", False, str(e))
            return report
        report.add("coefficients", True, f"dimension {system.dimension}")

        try:
            constants = effective_constants(system)
            report.add("effective constants invertible", True, data=constants.to_dict())
        except errors.SingularEffectiveConstantError as e:
            report.add("effective constants invertible", False, str(e))
            return report

        fdt = check_fdt(system)
        report.add(
            "fluctuation-dissipation relation",
            True,
            "holds" if fdt.holds else "does not hold; the generic drift applies",
            data=fdt.to_dict(),
        )

        ext = build_extended(system)
        gamma_hat = ext.gamma_hat(system.probes)
        unstable = [i for i, m in enumerate(gamma_hat) if not matrixlab.spectral_check(m).positive_stable]
        report.add(
            "gamma_hat positive stable at probes",
            not unstable,
            "" if not unstable else f"fails at x={system.probes[unstable[0]].tolist()}",
        )

        b_lambda = check_b_lambda(ext)
        report.add(
            "B_lambda invertible on the sampled grid",
            b_lambda.passed,
            f"min singular value {b_lambda.min_singular_values.min():.3e}",
            data=b_lambda.to_dict(),
        )

        try:
            ext.theta_inverse(system.probes)
            report.add("theta invertible at probes", True)
        except errors.SingularThetaError as e:
            report.add("theta invertible at probes", False, str(e))
            return report

        if system.coeffs.has_analytic_jacobians():
            jac = check_jacobians(system.coeffs, system.probes)
            jac.update(check_derived_jacobians(system))
            worst = max(jac.values()) if jac else 0.0
            report.add("Jacobians match finite differences", worst <= JACOBIAN_TOL, f"max error {worst:.3e}", data=jac)
        return report

    @staticmethod
    def _validate_triple(spec: TripleSpec, role: str, report: ValidationReport) -> Optional[RealizationTriple]:
        if spec.kind == "triple":
            try:
                spectral = matrixlab.spectral_check(spec.gamma)
            except errors.ModelValidationError as e:
                report.add(f"{role}: Gamma shape", False, str(e))
                return None
            detail = f"min real part {spectral.min_real_part:.3e}"
            report.add(f"{role}: Gamma positive stable", spectral.positive_stable, detail)
            if not spectral.positive_stable:
                return None
        try:
            triple = build_triple(spec, role)
        except errors.ModelValidationError as e:
            report.add(f"{role}: realization invariants", False, f"{type(e).__name__}: {e}")
            return None
        report.add(f"{role}: realization invariants", True, f"{triple.family}, state dimension {triple.state_dim}")
        try:
            triple.check_rank()
            report.add(f"{role}: C full row rank", True)
        except errors.RankDeficientError as e:
            report.add(f"{role}: C full row rank", False, str(e))
        return triple

    @staticmethod
    def _validate_thermo(section: ThermoSection, report: ValidationReport) -> None:
        try:
            thermo = build_thermo(section)
            xs = np.linspace(*thermo.interval, 101)
            t, _, _, _ = thermo.profiles(xs)
            gamma, sigma = thermophoresis.damping_and_noise(thermo, xs)
        except (errors.ConfigParseError, errors.ModelValidationError) as e:
            report.add("thermo: positive T and D on the interval", False, str(e))
            return
        report.add("thermo: positive T and D on the interval", True)
        error = float(np.abs(sigma**2 - 2.0 * thermo.kb * t * gamma).max() / np.abs(sigma**2).max())
        report.add("thermo: sigma^2 = 2 kB T gamma", error <= 1e-12, f"relative error {error:.3e}")
