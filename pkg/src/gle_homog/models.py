"""Result records produced by experiments and diagnostics."""

from dataclasses import dataclass, field
from typing import List, Optional


@dataclass
class ConvergenceRecord:
    """Statistics of the pathwise sup-error at one scale epsilon."""

    epsilon: float
    median: float
    q25: float
    q75: float
    n_paths: int
    dt: float
    seed: int

    def to_dict(self) -> dict:
        """Convert record to dictionary."""
        return {
            "epsilon": self.epsilon,
            "median": self.median,
            "q25": self.q25,
            "q75": self.q75,
            "n_paths": self.n_paths,
            "dt": self.dt,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceRecord":
        """Create record from dictionary."""
        return cls(
            epsilon=float(data["epsilon"]),
            median=float(data["median"]),
            q25=float(data["q25"]),
            q75=float(data["q75"]),
            n_paths=int(data["n_paths"]),
            dt=float(data["dt"]),
            seed=int(data["seed"]),
        )


@dataclass
class ValidationCheck:
    """Outcome of one modelling assumption."""

    name: str
    passed: bool
    detail: str = ""
    data: Optional[dict] = None

    def to_dict(self) -> dict:
        """Convert check to dictionary."""
        out = {"name": self.name, "passed": self.passed, "detail": self.detail}
        if self.data is not None:
            out["data"] = self.data
        return out

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class ValidationReport:
    """Pass/fail diagnostics for a model file."""

    model: str
    checks: List[ValidationCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[ValidationCheck]:
        return [check for check in self.checks if not check.passed]

    def add(self, name: str, passed: bool, detail: str = "", data: Optional[dict] = None) -> ValidationCheck:
        check = ValidationCheck(name=name, passed=bool(passed), detail=detail, data=data)
        self.checks.append(check)
        return check

    def render(self) -> str:
        """Human-readable report, one line per check."""
        lines = [f"Model: {self.model}"]
        lines.extend(check.line() for check in self.checks)
        lines.append("All checks passed" if self.passed else f"{len(self.failures)} check(s) failed")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        """Convert report to dictionary."""
        return {"model": self.model, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


@dataclass
class ArtifactRecord:
    """A file written by an experiment and its content digest."""

    path: str
    sha256: str
    size: int

    def to_dict(self) -> dict:
        """Convert record to dictionary."""
        return {"path": self.path, "sha256": self.sha256, "size": self.size}


@dataclass
class Manifest:
    """Index of an experiment's outputs with everything needed to reproduce them."""

    package: str
    version: str
    kind: str
    seed: int
    config: dict
    files: List[ArtifactRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Convert manifest to dictionary."""
        return {
            "package": self.package,
            "version": self.version,
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config,
            "files": [record.to_dict() for record in sorted(self.files, key=lambda r: r.path)],
        }
