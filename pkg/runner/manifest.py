"""
Run manifests: config echo, package versions, wall time and a sha256 checksum
for every output file. `verify` recomputes the checksums and can re-execute a
deterministic run in memory to confirm byte-identical artifacts.
"""
import logging
import os
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from qbohm import __version__
from qbohm.artifacts import Artifact, sha256_file, write_artifacts
from qbohm.errors import InvalidInputError
from runner.config import config
from runner.registry import get_experiment
from runner.schemas import ExperimentConfig, ExperimentResult, OutputRecord, RunManifest, VerifyReport

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ("numpy", "scipy", "pydantic", "click", "PyYAML")


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version(), "qbohm": __version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def check_writable(output_dir: Path) -> None:
    """Create the output directory, failing early when it cannot be written."""
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidInputError(f"cannot create output directory {output_dir}: {e.strerror}") from e
    if not os.access(output_dir, os.W_OK):
        raise InvalidInputError(f"output directory {output_dir} is not writable")


def build_manifest(request: ExperimentConfig, parameters: dict, result: ExperimentResult,
                   started_at: datetime, wall_time_s: float) -> RunManifest:
    experiment = get_experiment(request.experiment)
    return RunManifest(
        experiment=request.experiment,
        parameters=parameters,
        seed=request.seed,
        deterministic=experiment.deterministic,
        versions=package_versions(),
        started_at=started_at.astimezone(timezone.utc).isoformat(),
        wall_time_s=wall_time_s,
        outputs=[
            OutputRecord(name=a.name, sha256=a.sha256, bytes=len(a.text.encode("utf-8")))
            for a in result.artifacts
        ],
        summary=result.summary,
        warnings=result.warnings,
    )


def write_run(result: ExperimentResult, manifest: RunManifest, output_dir: Path) -> Path:
    names = [a.name for a in result.artifacts]
    if config.MANIFEST_NAME in names or len(set(names)) != len(names):
        raise InvalidInputError("artifact names must be unique and distinct from the manifest")
    write_artifacts(result.artifacts, output_dir)
    path = output_dir / config.MANIFEST_NAME
    write_artifacts([Artifact(name=config.MANIFEST_NAME, text=manifest.model_dump_json(indent=2) + "\n")], output_dir)
    logger.info(f"Wrote {len(names)} artifacts and manifest to {output_dir}")
    return path


def load_manifest(path: Path) -> RunManifest:
    if not path.is_file():
        raise InvalidInputError(f"manifest {path} does not exist")
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))


def _compare(recorded: List[OutputRecord], actual: Dict[str, Optional[str]]) -> Dict[str, str]:
    mismatches = {}
    for record in recorded:
        digest = actual.get(record.name)
        if digest is None:
            mismatches[record.name] = "missing"
        elif digest != record.sha256:
            mismatches[record.name] = "checksum mismatch"
    return mismatches


def rerun(manifest: RunManifest) -> List[Artifact]:
    experiment = get_experiment(manifest.experiment)
    params = experiment.params_model.model_validate(manifest.parameters)
    return experiment.run(params, manifest.seed).artifacts


def verify(path: Path, rerun_outputs: bool = False) -> VerifyReport:
    path = Path(path)
    manifest = load_manifest(path)
    directory = path.parent
    on_disk = {
        r.name: sha256_file(directory / r.name) if (directory / r.name).is_file() else None
        for r in manifest.outputs
    }
    report = VerifyReport(manifest=path, checked=len(manifest.outputs), mismatches=_compare(manifest.outputs, on_disk))

    if rerun_outputs:
        if not manifest.deterministic:
            logger.warning(f"{manifest.experiment.value} is not deterministic; skipping rerun")
        else:
            logger.info(f"Re-running {manifest.experiment.value} with seed {manifest.seed}")
            fresh = {a.name: a.sha256 for a in rerun(manifest)}
            report.rerun_mismatches = _compare(manifest.outputs, fresh)
            for name in sorted(set(fresh) - {r.name for r in manifest.outputs}):
                report.rerun_mismatches[name] = "not in manifest"

    for name, reason in {**report.mismatches, **report.rerun_mismatches}.items():
        logger.warning(f"{name}: {reason}")
    return report
