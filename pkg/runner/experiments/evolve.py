"""
Wave-function evolution: split-step quantum or classical (Schrödinger-type) runs
from a closed-form initial state, with norm, continuity and vortex diagnostics.
"""
import logging
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qbohm.artifacts import Artifact, to_json
from qbohm.enums import Boundary, EvolutionMode
from qbohm.errors import InvalidInputError
from qbohm.grid_core import ComplexField, GridSpec, RealField
from qbohm.madelung import decompose, detect_vortices, vortices_to_json
from qbohm.schrodinger import EvolutionConfig, continuity_residual, default_time_step, evolve, sequence_artifacts
from qbohm.states import (
    gaussian_packet,
    harmonic_ground_state,
    harmonic_potential,
    plane_wave,
    two_slit_superposition,
    vortex_pair,
    vortex_state,
)
from runner.schemas import ExperimentResult

logger = logging.getLogger(__name__)


class EvolveParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(1, ge=1, le=2)
    lo: float = -10.0
    hi: float = 10.0
    points: int = Field(256, ge=8)
    state: Literal["gaussian", "harmonic", "vortex", "vortex-pair", "two-slit", "plane-wave"] = "gaussian"
    sigma: float = Field(1.0, gt=0)
    center: Optional[List[float]] = None
    momentum: Optional[List[float]] = None
    k: Optional[List[float]] = None
    omega: float = Field(1.0, gt=0)
    winding: int = 1
    separation: float = Field(4.0, gt=0)
    potential: Literal["none", "harmonic"] = "none"
    mode: EvolutionMode = EvolutionMode.QUANTUM
    classical_a: float = Field(1.0, gt=0)
    mass: float = Field(1.0, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    steps: int = Field(200, ge=1)
    record_every: int = Field(20, ge=1)

    def requires_seed(self) -> bool:
        return False


def _grid(params: EvolveParams) -> GridSpec:
    if params.dim == 1:
        return GridSpec.line(params.lo, params.hi, params.points, Boundary.PERIODIC)
    return GridSpec.square(params.lo, params.hi, params.points, Boundary.PERIODIC)


def initial_state(params: EvolveParams, spec: GridSpec) -> ComplexField:
    if params.state == "gaussian":
        return gaussian_packet(spec, params.sigma, params.center, params.momentum, params.mass)
    if params.state == "harmonic":
        return harmonic_ground_state(spec, params.omega, params.mass)
    if params.state == "two-slit":
        return two_slit_superposition(spec, params.separation, params.sigma, params.mass)
    if params.state == "plane-wave":
        return plane_wave(spec, params.k or [2.0 * np.pi / (params.hi - params.lo)] * spec.dim, params.mass)
    if spec.dim != 2:
        raise InvalidInputError(f"state {params.state!r} needs dim=2", dim=spec.dim)
    if params.state == "vortex":
        return vortex_state(spec, params.winding, tuple(params.center or (0.0, 0.0)), params.mass)
    return vortex_pair(spec, params.separation, params.mass)


def run(params: EvolveParams, seed: Optional[int] = None) -> ExperimentResult:
    spec = _grid(params)
    psi0 = initial_state(params, spec)
    potential: Optional[RealField] = None
    if params.potential == "harmonic":
        potential = harmonic_potential(spec, params.omega, params.mass)

    dt = params.dt or default_time_step(spec, potential, params.mass, params.classical_a)
    cfg = EvolutionConfig(
        dt=dt,
        steps=params.steps,
        potential=potential,
        mode=params.mode,
        classical_a=params.classical_a,
        record_every=params.record_every,
        progress=True,
    )
    seq = evolve(psi0, cfg)

    summary = {
        "dt": dt,
        "snapshots": len(seq),
        "norm_initial": seq.norms[0],
        "norm_final": seq.norms[-1],
        "norm_drift": abs(seq.norms[-1] - seq.norms[0]),
    }
    spacing = np.diff(seq.times)
    if len(seq) >= 3 and np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        summary["continuity_residual"] = continuity_residual(seq)

    artifacts: List[Artifact] = sequence_artifacts(seq, "snapshot")
    if spec.dim == 2:
        vortices = detect_vortices(seq.final)
        fields = decompose(seq.final)
        summary["vortices"] = len(vortices)
        summary["net_winding"] = int(sum(v.winding for v in vortices))
        summary["masked_nodes"] = int(fields.node_mask.sum())
        artifacts.append(Artifact(name="vortices.json", text=vortices_to_json(vortices) + "\n"))
    artifacts.append(Artifact(name="evolve_summary.json", text=to_json(summary)))
    logger.info(f"Evolve finished: {len(seq)} snapshots, norm drift {summary['norm_drift']:.2e}")
    return ExperimentResult(artifacts=artifacts, summary=summary, warnings=list(seq.warnings))
