from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from qbohm.artifacts import Artifact
from qbohm.enums import ExperimentName


# ======================================================
# Run request
# ======================================================

class ExperimentConfig(BaseModel):
    """Envelope of a config file: one experiment with its parameter section."""
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    parameters: Dict[str, Any] = {}
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    output_dir: Optional[Path] = None


# ======================================================
# Experiment output
# ======================================================

class ExperimentResult(BaseModel):
    artifacts: List[Artifact]
    summary: Dict[str, Any] = {}
    warnings: List[str] = []


# ======================================================
# Manifest
# ======================================================

class OutputRecord(BaseModel):
    name: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    experiment: ExperimentName
    parameters: Dict[str, Any]
    seed: Optional[int] = None
    deterministic: bool = True
    versions: Dict[str, str] = {}
    started_at: str
    wall_time_s: float
    outputs: List[OutputRecord]
    summary: Dict[str, Any] = {}
    warnings: List[str] = []


class VerifyReport(BaseModel):
    manifest: Path
    checked: int
    mismatches: Dict[str, str] = {}
    rerun_mismatches: Dict[str, str] = {}

    @property
    def passed(self) -> bool:
        return not self.mismatches and not self.rerun_mismatches
