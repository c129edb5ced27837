"""Command-line entry point: ``gleh run`` and ``gleh validate``."""

import argparse
import os
import sys
import traceback
from typing import Callable, List, Optional, Sequence, Tuple, Type

from gle_homog.repository import ArtifactRepository
from gle_homog.schemas import load_experiment_config, load_model_file
from gle_homog.service import ExperimentService
from gle_homog.utils import errors, logger, metadata

LOG = logger.get_logger("cli")

THREADS_ENV = "GLEH_THREADS"
EXIT_OK = 0
EXIT_UNEXPECTED = 1


def _epsilons(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got '{text}'") from e


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gleh", description="Homogenization experiments for generalized Langevin equations"
    )
    parser.add_argument("--version", action="version", version=metadata.banner())
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment configuration and write its artifacts")
    run.add_argument("--config", required=True, help="experiment configuration (JSON)")
    run.add_argument("--out", help="output directory, overrides output_dir")
    run.add_argument("--seed", type=_seed, help="64-bit seed, overrides the config")
    run.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
    run.add_argument("--epsilons", type=_epsilons, help="comma-separated decreasing scales")
    run.add_argument("--ensemble-size", type=int, dest="ensemble_size", help="number of ensemble paths")
    run.add_argument("--dt", type=float, help="fine time step")
    run.add_argument("--horizon", type=float, help="time horizon")

    validate = sub.add_parser("validate", help="check the modelling assumptions of a model file")
    validate.add_argument("--config", required=True, help="model file (JSON) or bundled:<name>")
    validate.add_argument("--out", help="directory for validation.json")
    return parser


def _default_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError as e:
        raise errors.ConfigParseError(f"{THREADS_ENV} must be an integer") from e


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {
        "output_dir": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "simulation.epsilons": args.epsilons,
        "simulation.ensemble_size": args.ensemble_size,
        "simulation.dt": args.dt,
        "simulation.horizon": args.horizon,
    }
    config = load_experiment_config(args.config, overrides)
    repository = ArtifactRepository(config.output_dir)
    service = ExperimentService(repository, threads=_default_threads(args.threads))
    manifest = service.run(config)
    LOG.info(f"{config.kind} finished: {len(manifest.files)} artifact(s) in {config.output_dir}")
    print(os.path.join(config.output_dir, "manifest.json"))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    model = load_model_file(args.config)
    repository = ArtifactRepository(args.out or ".")
    report = ExperimentService(repository).validate(model)
    print(report.render())
    if args.out:
        repository.write_json("validation.json", report.to_dict())
    return EXIT_OK if report.passed else errors.ModelValidationError.exit_code


def _log_warning(error: Exception) -> None:
    LOG.warning(f"{type(error).__name__}: {error}")


def _log_error(error: Exception) -> None:
    LOG.error(f"{type(error).__name__}: {error}")
    LOG.error(traceback.format_exc())


# First match wins: (exception family, exit code, log function)
ERROR_HANDLERS: Sequence[Tuple[Type[Exception], int, Callable[[Exception], None]]] = (
    (errors.ConfigParseError, errors.ConfigParseError.exit_code, _log_warning),
    (errors.ModelValidationError, errors.ModelValidationError.exit_code, _log_warning),
    (errors.NumericalFailure, errors.NumericalFailure.exit_code, _log_error),
    (Exception, EXIT_UNEXPECTED, _log_error),
)


def handle_error(error: Exception) -> int:
    """Log an exception and map it to the process exit code."""
    for family, code, log in ERROR_HANDLERS:
        if isinstance(error, family):
            log(error)
            return code
    return EXIT_UNEXPECTED


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch the subcommand and return the exit status."""
    args = build_parser().parse_args(argv)
    commands = {"run": cmd_run, "validate": cmd_validate}
    try:
        logger.setup(level=os.environ.get("LOG_LEVEL", "INFO"))
        return commands[args.command](args)
    except Exception as e:
        return handle_error(e)


if __name__ == "__main__":
    sys.exit(main())
