"""
Relaxation toward quantum equilibrium in a 2D box: coarse-grained H-function
and KS distance of a guided ensemble at a handful of output times.
"""
import logging
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from qbohm.artifacts import Artifact, to_json
from qbohm.enums import RelaxationStart
from qbohm.errors import InvalidInputError
from qbohm.relaxation import RelaxationSetup, ks_threshold, run_relaxation
from runner.schemas import ExperimentResult

logger = logging.getLogger(__name__)


class RelaxParams(BaseModel):
    """RelaxationSetup without its seed; the run seed comes from the envelope."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: Tuple[int, int] = (4, 4)
    box: Tuple[float, float] = (1.0, 1.0)
    mass: float = Field(1.0, gt=0)
    start: RelaxationStart = RelaxationStart.GROUND_MODE
    cells: Tuple[int, int] = (16, 16)
    n_traj: int = Field(100_000, ge=1)
    t_final: Optional[float] = Field(None, gt=0)
    dt: float = Field(2e-3, gt=0)
    n_outputs: int = Field(5, ge=1)
    quadrature_points: int = Field(129, ge=9)

    def requires_seed(self) -> bool:
        return True


def run(params: RelaxParams, seed: Optional[int] = None) -> ExperimentResult:
    if seed is None:
        raise InvalidInputError("relaxation samples its ensemble and needs a seed")
    setup = RelaxationSetup(**params.model_dump(), seed=seed)
    report = run_relaxation(setup)

    summary = {
        "outputs": int(report.times.size),
        "h_bar_initial": float(report.h_bar[0]),
        "h_bar_final": float(report.h_bar[-1]),
        "ks_initial": float(report.ks[0]),
        "ks_final": float(report.ks[-1]),
        "ks_threshold_1pct": ks_threshold(setup.n_traj, 0.01),
        "captured_final": int(report.captured_count[-1]),
    }
    logger.info(f"H_bar {summary['h_bar_initial']:.4g} -> {summary['h_bar_final']:.4g}")
    artifacts = report.artifacts("relaxation_report.csv")
    artifacts.append(Artifact(name="relaxation_summary.json", text=to_json(summary)))
    return ExperimentResult(artifacts=artifacts, summary=summary, warnings=list(report.warnings))
