"""
Command line entry point.

    python -m runner.main run rankine --n 1 --eps 3.0 --xi0 1.0 --tau-max 8 --d-tau 1e-3
    python -m runner.main run relax --modes 4x4 --n-traj 100000 --cells 32x32 --seed 7
    python -m runner.main run-config experiment.json
    python -m runner.main verify results/rankine/manifest.json --rerun

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure,
1 failed verification.
"""
import json
import logging
import time
from datetime import datetime
from functools import wraps
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional

import click
import yaml
from pydantic import ValidationError

from logging_config import setup_logging
from qbohm.enums import EvolutionMode, ExperimentName, RelaxationStart
from qbohm.errors import InvalidInputError, QBohmError
from runner.config import config
from runner.manifest import build_manifest, check_writable, verify as verify_manifest, write_run
from runner.registry import REGISTRY, get_experiment
from runner.schemas import ExperimentConfig

logger = logging.getLogger("runner")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2


# =========================================================
# PARAMETER TYPES
# =========================================================

class ShapeType(click.ParamType):
    """'4x4' or '4,4' -> (4, 4)."""
    name = "shape"

    def __init__(self, cast=int):
        self.cast = cast

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        parts = str(value).lower().replace("x", ",").split(",")
        try:
            return tuple(self.cast(p) for p in parts if p.strip())
        except ValueError:
            self.fail(f"{value!r} is not a shape like 4x4", param, ctx)


class FloatListType(click.ParamType):
    """'0.5,1,2' -> [0.5, 1.0, 2.0]."""
    name = "floats"

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        try:
            return [float(p) for p in str(value).split(",") if p.strip()]
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)


SHAPE = ShapeType(int)
FLOAT_PAIR = ShapeType(float)
FLOATS = FloatListType()


# =========================================================
# CONFIG LOADING
# =========================================================

def load_config_file(path: Path) -> Dict[str, Any]:
    """JSON, or YAML for .yaml/.yml files."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidInputError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise InvalidInputError(f"config {path} must hold a mapping")
    return data


def _format_validation(error: ValidationError, prefix: str = "") -> str:
    lines = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item["loc"])
        lines.append(f"{prefix}{loc}: {item['msg']}")
    return "; ".join(lines)


def _fail(code: int, message: str) -> NoReturn:
    logger.error(message)
    click.echo(f"error: {message}", err=True)
    click.get_current_context().exit(code)


def execute(experiment: Optional[ExperimentName], config_file: Optional[Path], seed: Optional[int],
            output_dir: Optional[Path], overrides: Dict[str, Any]) -> int:
    """Merge file values with flags, validate, run, then write artifacts and manifest."""
    try:
        raw = load_config_file(config_file) if config_file else {}
        if experiment is not None:
            named = raw.get("experiment")
            if named is not None and named != experiment.value:
                raise InvalidInputError(f"config names experiment {named!r}, command runs {experiment.value!r}")
            raw["experiment"] = experiment.value
        raw["parameters"] = {**raw.get("parameters", {}), **{k: v for k, v in overrides.items() if v is not None}}
        if seed is not None:
            raw["seed"] = seed
        if output_dir is not None:
            raw["output_dir"] = str(output_dir)
    except InvalidInputError as e:
        return _fail(e.exit_code, e.detail)

    try:
        request = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _format_validation(e))

    spec = get_experiment(request.experiment)
    try:
        params = spec.params_model.model_validate(request.parameters)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _format_validation(e, "parameters."))
    if params.requires_seed() and request.seed is None:
        return _fail(EXIT_INVALID, f"experiment {request.experiment.value} needs a seed")

    target = Path(request.output_dir or Path(config.OUTPUT_DIR) / request.experiment.value)
    started = datetime.now()
    start = time.perf_counter()
    try:
        check_writable(target)
        logger.info(f"Running {request.experiment.value} into {target}")
        result = spec.run(params, request.seed)
        wall = time.perf_counter() - start
        manifest = build_manifest(request, params.model_dump(mode="json"), result, started, wall)
        path = write_run(result, manifest, target)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _format_validation(e))
    except QBohmError as e:
        return _fail(e.exit_code, e.detail)

    for message in result.warnings:
        click.echo(f"warning: {message}", err=True)
    click.echo(f"{request.experiment.value}: {len(result.artifacts)} artifacts in {wall:.2f}s -> {path}")
    return EXIT_OK


# =========================================================
# CLI
# =========================================================

@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
@click.option("--log-dir", default=None, type=click.Path(file_okay=False, path_type=Path))
def cli(log_level: Optional[str], log_dir: Optional[Path]):
    """Quantum hydrodynamics experiment runner."""
    setup_logging(log_level, log_dir)


def common_options(experiment: ExperimentName):
    """--config/--seed/--output-dir plus the dispatch into `execute`."""
    def decorator(fn):
        @click.option("--config", "config_file", type=click.Path(dir_okay=False, exists=True, path_type=Path),
                      help="JSON or YAML config; flags override its values")
        @click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None)
        @click.option("--output-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
        @wraps(fn)
        def command(config_file, seed, output_dir, **overrides):
            code = execute(experiment, config_file, seed, output_dir, fn(**overrides))
            click.get_current_context().exit(code)
        return command
    return decorator


@cli.group()
def run():
    """Run a named experiment."""


@run.command("evolve")
@common_options(ExperimentName.EVOLVE)
@click.option("--dim", type=click.IntRange(1, 2))
@click.option("--lo", type=float)
@click.option("--hi", type=float)
@click.option("--points", type=int)
@click.option("--state", type=click.Choice(["gaussian", "harmonic", "vortex", "vortex-pair", "two-slit", "plane-wave"]))
@click.option("--sigma", type=float)
@click.option("--center", type=FLOATS)
@click.option("--momentum", type=FLOATS)
@click.option("--k", type=FLOATS)
@click.option("--omega", type=float)
@click.option("--winding", type=int)
@click.option("--separation", type=float)
@click.option("--potential", type=click.Choice(["none", "harmonic"]))
@click.option("--mode", type=click.Choice([m.value for m in EvolutionMode]))
@click.option("--classical-a", type=float)
@click.option("--mass", type=float)
@click.option("--dt", type=float)
@click.option("--steps", type=int)
@click.option("--record-every", type=int)
def run_evolve(**flags):
    return flags


@run.command("trajectories")
@common_options(ExperimentName.TRAJECTORIES)
@click.option("--flow", type=click.Choice(["vortex", "plane-wave", "hydrogen", "two-slit", "packet"]))
@click.option("--radii", type=FLOATS)
@click.option("--k", type=FLOATS)
@click.option("--winding", type=int)
@click.option("--mass", type=float)
@click.option("--n-particles", type=int)
@click.option("--points", type=int)
@click.option("--extent", type=float)
@click.option("--dt", type=float)
@click.option("--t-final", type=float)
@click.option("--record-every", type=int)
@click.option("--velocity", type=FLOATS, help="Hydrogen launch velocity vx,vy,vz")
def run_trajectories(**flags):
    return flags


@run.command("relax")
@common_options(ExperimentName.RELAX)
@click.option("--modes", type=SHAPE, help="e.g. 4x4")
@click.option("--box", type=FLOAT_PAIR, help="e.g. 1x1")
@click.option("--mass", type=float)
@click.option("--start", type=click.Choice([s.value for s in RelaxationStart]))
@click.option("--cells", type=SHAPE, help="e.g. 32x32")
@click.option("--n-traj", type=int)
@click.option("--t-final", type=float)
@click.option("--dt", type=float)
@click.option("--n-outputs", type=int)
@click.option("--quadrature-points", type=int)
def run_relax(**flags):
    return flags


@run.command("rankine")
@common_options(ExperimentName.RANKINE)
@click.option("--n", "N", type=int, help="winding number")
@click.option("--eps", type=float, help="normalized energy")
@click.option("--xi0", type=float, help="core radius")
@click.option("--mass", type=float)
@click.option("--tau-max", type=float)
@click.option("--d-tau", type=float)
@click.option("--radii", type=FLOATS)
@click.option("--turns", type=float)
@click.option("--record-every", type=int)
@click.option("--density-points", type=int)
@click.option("--density-extent", type=float)
def run_rankine(**flags):
    return flags


@run.command("clebsch-check")
@common_options(ExperimentName.CLEBSCH_CHECK)
@click.option("--n", "N", type=int)
@click.option("--xi0", type=float)
@click.option("--mass", type=float)
@click.option("--points", type=int)
@click.option("--extent", type=float)
@click.option("--periodic-points", type=int)
@click.option("--probe-radii", type=FLOATS)
@click.option("--steps-per-orbit", type=int)
def run_clebsch_check(**flags):
    return flags


@cli.command("run-config")
@click.argument("config_file", type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None)
@click.option("--output-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
def run_config(config_file: Path, seed: Optional[int], output_dir: Optional[Path]):
    """Run the experiment named inside CONFIG_FILE."""
    click.get_current_context().exit(execute(None, config_file, seed, output_dir, {}))


@cli.command("verify")
@click.argument("manifest", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--rerun", is_flag=True, help="re-execute and compare checksums")
def verify(manifest: Path, rerun: bool):
    """Recompute output checksums recorded in MANIFEST."""
    try:
        report = verify_manifest(manifest, rerun)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _format_validation(e, "manifest."))
    except QBohmError as e:
        return _fail(e.exit_code, e.detail)

    for name, reason in sorted(report.mismatches.items()):
        click.echo(f"FAIL {name}: {reason}")
    for name, reason in sorted(report.rerun_mismatches.items()):
        click.echo(f"FAIL {name} (rerun): {reason}")
    if report.passed:
        click.echo(f"PASS {report.checked} outputs")
        click.get_current_context().exit(EXIT_OK)
    click.get_current_context().exit(EXIT_VERIFY_FAILED)


@cli.command("list-experiments")
def list_experiments():
    for name, experiment in REGISTRY.items():
        click.echo(f"{name.value:<15} {experiment.description}")


if __name__ == "__main__":
    cli()
