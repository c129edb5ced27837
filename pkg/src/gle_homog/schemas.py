"""Pydantic schemas for model files and experiment configurations."""

import json
from importlib import resources
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from gle_homog.utils import errors

Entry = Union[str, float]
FieldSpec = Union[Entry, List[Entry], List[List[Entry]]]
Matrix = List[List[float]]

BUNDLED_PREFIX = "bundled:"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class TripleSpec(StrictModel):
    """Schema for a kernel or noise realization."""

    kind: Literal["ou", "harmonic", "triple"] = Field(..., description="Realization family")
    alpha: Optional[Union[float, List[float]]] = Field(None, description="OU rates")
    omega: Optional[Union[float, List[float]]] = Field(None, description="Harmonic frequencies")
    tau: float = Field(1.0, gt=0, description="Harmonic oscillator time scale")
    gamma: Optional[Matrix] = Field(None, description="Drift matrix Gamma")
    m: Optional[Matrix] = Field(None, description="Stationary covariance M")
    c: Optional[Matrix] = Field(None, description="Readout matrix C")
    sigma: Optional[Matrix] = Field(None, description="Diffusion matrix Sigma")

    def model_post_init(self, __context) -> None:
        """Validate that the parameters of the chosen family are present."""
        if self.kind == "ou" and self.alpha is None:
            raise ValueError("an ou realization needs 'alpha'")
        if self.kind == "harmonic" and self.omega is None:
            raise ValueError("a harmonic realization needs 'omega'")
        if self.kind == "triple" and (self.gamma is None or self.m is None or self.c is None):
            raise ValueError("a triple realization needs 'gamma', 'm' and 'c'")


class CoefficientSpec(StrictModel):
    """Schema for the state-dependent coefficients, as expressions or numbers."""

    force: FieldSpec = Field(0, description="External force F(x)")
    g: FieldSpec = Field(..., description="Damping coupling g(x)")
    h: Optional[FieldSpec] = Field(None, description="Damping readout h(x); defaults to the transpose of g")
    sigma: FieldSpec = Field(..., description="Noise coefficient sigma(x)")


class ScalesSpec(StrictModel):
    m0: float = Field(1.0, gt=0, description="Mass scale")
    tau_kappa: float = Field(1.0, gt=0, description="Kernel time scale")
    tau_xi: float = Field(1.0, gt=0, description="Noise time scale")


class GLESection(StrictModel):
    """Schema for a GLE model."""

    dimension: int = Field(1, ge=1, description="State dimension d")
    coefficients: CoefficientSpec
    kernel: TripleSpec
    noise: TripleSpec
    scales: ScalesSpec = Field(default_factory=ScalesSpec)
    probe_box: Optional[List[Tuple[float, float]]] = Field(None, description="Box sampled for diagnostics")
    probe_count: int = Field(32, ge=1, description="Number of probe states")
    jacobians: Literal["analytic", "finite-difference"] = Field("analytic", description="Derivative source")

    @field_validator("probe_box")
    @classmethod
    def validate_box(cls, v: Optional[List[Tuple[float, float]]]) -> Optional[List[Tuple[float, float]]]:
        """Validate that every box side has lower < upper."""
        if v is not None and any(lo >= hi for lo, hi in v):
            raise ValueError("probe_box sides must satisfy lower < upper")
        return v

    def model_post_init(self, __context) -> None:
        """Validate that the probe box matches the dimension."""
        if self.probe_box is not None and len(self.probe_box) != self.dimension:
            raise ValueError(f"probe_box has {len(self.probe_box)} sides, expected {self.dimension}")


class ThermoNoiseSpec(StrictModel):
    kind: Literal["ou", "harmonic"] = Field(..., description="Noise family")
    alpha: float = Field(1.0, gt=0, description="OU rate")
    omega: float = Field(1.0, description="Harmonic frequency")

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v: float) -> float:
        """Validate that the frequency is nonzero."""
        if v == 0:
            raise ValueError("omega must be nonzero")
        return v


class ThermoSection(StrictModel):
    """Schema for a thermophoresis model."""

    temperature: str = Field(..., description="Temperature profile T(x)")
    diffusion: Optional[str] = Field(None, description="Diffusion profile D(x)")
    viscosity: Optional[str] = Field(None, description="Viscosity law mu(T)")
    radius: float = Field(1.0, gt=0, description="Particle radius R")
    kb: Optional[float] = Field(None, gt=0, alias="kB", description="Boltzmann constant")
    units: Literal["nondimensional", "si"] = Field("nondimensional", description="Unit preset")
    m0: float = Field(1.0, gt=0, description="Mass scale")
    tau: float = Field(1.0, gt=0, description="Memory time scale")
    noise: ThermoNoiseSpec
    interval: Tuple[float, float] = Field((0.0, 1.0), description="Working interval (a, b)")

    def model_post_init(self, __context) -> None:
        """Validate the profile choice and the interval."""
        if (self.diffusion is None) == (self.viscosity is None):
            raise ValueError("give exactly one of 'diffusion' or 'viscosity'")
        if self.interval[0] >= self.interval[1]:
            raise ValueError("interval must satisfy a < b")


class ModelFile(StrictModel):
    """Schema for a model file."""

    name: str = Field(..., min_length=1, max_length=200, description="Model name")
    gle: Optional[GLESection] = None
    thermo: Optional[ThermoSection] = None

    def model_post_init(self, __context) -> None:
        """Validate that at least one model section is provided."""
        if self.gle is None and self.thermo is None:
            raise ValueError("a model file needs a 'gle' or a 'thermo' section")


class SimulationSection(StrictModel):
    epsilons: List[float] = Field([0.2, 0.1, 0.05, 0.025], min_length=1, description="Decreasing scales")
    ensemble_size: int = Field(200, ge=1, description="Number of coupled paths")
    dt: float = Field(0.0025, gt=0, description="Fine time step")
    horizon: float = Field(1.0, gt=0, description="Time horizon")
    scheme: Literal["euler-maruyama", "semi-implicit-fast-block"] = "semi-implicit-fast-block"
    dt_per_epsilon: float = Field(0.1, gt=0, description="Target step as a multiple of epsilon")
    x0: List[float] = Field([0.0], description="Initial position")
    route: Literal["auto", "generic", "fdt", "closed-form"] = "auto"

    @field_validator("epsilons")
    @classmethod
    def validate_epsilons(cls, v: List[float]) -> List[float]:
        """Validate that the scales are positive and non-increasing."""
        if any(e <= 0 for e in v) or any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("epsilons must be positive and non-increasing")
        return v


class GridSection(StrictModel):
    lower: Optional[float] = None
    upper: Optional[float] = None
    points: int = Field(50, ge=2, description="Grid points")


class ReflectingSection(StrictModel):
    dt: float = Field(1e-3, gt=0)
    horizon: float = Field(10.0, gt=0)
    ensemble_size: int = Field(120, ge=1)
    bins: int = Field(50, ge=2)
    burn_in: float = Field(1.0, ge=0)


class ThermoExperimentSection(StrictModel):
    density_points: int = Field(201, ge=2)
    reflecting: Optional[ReflectingSection] = None


class BathTargetSpec(StrictModel):
    kind: Literal["ou", "harmonic"] = "ou"
    alpha: float = Field(1.0, gt=0)
    omega: float = 1.0
    tau: float = Field(1.0, gt=0)


class BathSection(StrictModel):
    target: BathTargetSpec = Field(default_factory=BathTargetSpec)
    n_modes: int = Field(1000, ge=1)
    omega_max: Optional[float] = Field(None, gt=0)
    kbt: float = Field(1.0, ge=0)
    t_max: float = Field(3.0, gt=0)
    kernel_points: int = Field(61, ge=2)
    lags: List[float] = Field([0.0, 0.5, 1.0, 2.0], min_length=1)
    reference_times: List[float] = Field([0.0, 1.0, 2.0], min_length=1)
    n_realizations: int = Field(2000, ge=2)
    energy_check_horizon: float = Field(1.0, gt=0)


class NoiseStatsSection(StrictModel):
    source: Literal["kernel", "noise"] = "noise"
    n_paths: int = Field(10000, ge=2)
    dt: float = Field(0.05, gt=0)
    window: float = Field(10.0, gt=0, description="Stationary window after burn-in")
    lag_multiples: List[float] = Field([0.0, 1.0, 2.0, 3.0], min_length=1)
    burn_in_factor: float = Field(10.0, ge=0, description="Burn-in in units of the largest time constant")


class ExperimentConfig(StrictModel):
    """Schema for an experiment configuration."""

    kind: Literal["homogenize", "converge", "thermo", "bath", "noise-stats"]
    model: Optional[str] = Field(None, description="Model file path or bundled:<name>")
    output_dir: str = Field("out", min_length=1)
    seed: int = Field(0, ge=0, lt=2**64)
    threads: Optional[int] = Field(None, ge=1)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    grid: GridSection = Field(default_factory=GridSection)
    thermo: ThermoExperimentSection = Field(default_factory=ThermoExperimentSection)
    bath: BathSection = Field(default_factory=BathSection)
    noise_stats: NoiseStatsSection = Field(default_factory=NoiseStatsSection)

    def model_post_init(self, __context) -> None:
        """Validate that experiments other than bath name a model."""
        if self.kind != "bath" and not self.model:
            raise ValueError(f"experiment kind '{self.kind}' needs a 'model'")


def _read_text(source: str) -> Tuple[str, str]:
    if source.startswith(BUNDLED_PREFIX):
        name = source[len(BUNDLED_PREFIX) :]
        resource = resources.files("gle_homog").joinpath("data", "models", f"{name}.json")
        if not resource.is_file():
            raise errors.ConfigParseError(f"no bundled model named '{name}'")
        return resource.read_text(encoding="utf-8"), source
    path = Path(source)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except OSError as e:
        raise errors.ConfigParseError(f"cannot read {path}: {e}") from e


def load_json(source: str) -> dict:
    """
    Read a JSON document from a path or a bundled resource.

    Raises:
        ConfigParseError: If the file is missing or the JSON is malformed; the message names line and column
    """
    text, label = _read_text(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ConfigParseError(f"{label}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise errors.ConfigParseError(f"{label}: top level must be a JSON object")
    return data


def _format_validation(label: str, exc: ValueError) -> str:
    if not isinstance(exc, ValidationError):
        return f"{label}: {exc}"
    problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())
    return f"{label}: {problems}"


def load_model_file(source: str) -> ModelFile:
    """Parse and validate a model file."""
    data = load_json(source)
    try:
        return ModelFile.model_validate(data)
    except ValueError as e:
        raise errors.ConfigParseError(_format_validation(source, e)) from e


def _rebase_model_path(data: dict, source: str) -> None:
    model = data.get("model")
    if source.startswith(BUNDLED_PREFIX) or not isinstance(model, str) or model.startswith(BUNDLED_PREFIX):
        return
    path = Path(model)
    if not path.is_absolute():
        data["model"] = str(Path(source).parent / path)


def load_experiment_config(source: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Parse an experiment config and apply command-line overrides.

    A relative ``model`` path in the file is taken relative to the config's own directory.
    ``overrides`` maps top-level keys or ``section.key`` paths to values, which are used as given.
    """
    data = load_json(source)
    _rebase_model_path(data, source)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        target = data
        *parents, leaf = key.split(".")
        for parent in parents:
            node = target.setdefault(parent, {})
            if not isinstance(node, dict):
                raise errors.ConfigParseError(f"{source}: '{parent}' must be an object")
            target = node
        target[leaf] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValueError as e:
        raise errors.ConfigParseError(_format_validation(source, e)) from e
