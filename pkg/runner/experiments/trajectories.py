"""
Trajectory ensembles: analytic flows (plane wave, vortex, hydrogen ground state)
and flows interpolated from split-step evolutions (double-slit analog, 2D packet).
"""
import logging
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from qbohm.artifacts import Artifact, to_json
from qbohm.enums import Boundary, TrajectoryStatus
from qbohm.errors import InvalidInputError
from qbohm.grid_core import GridSpec
from qbohm.relaxation import sample_born
from qbohm.schrodinger import EvolutionConfig, default_time_step, evolve
from qbohm.states import gaussian_packet, two_slit_superposition
from qbohm.trajectories import (
    GridFlow,
    circle_loop,
    ensemble_artifacts,
    hydrogen_force_balance,
    hydrogen_ground_state,
    integrate_guided,
    integrate_second_order,
    kelvin_transport,
    non_crossing_check,
    orbit_periods,
    plane_wave_flow,
    radius_drift,
    vortex_flow,
)
from runner.schemas import ExperimentResult

logger = logging.getLogger(__name__)

GRID_FLOWS = ("two-slit", "packet")


class TrajectoryParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    flow: Literal["vortex", "plane-wave", "hydrogen", "two-slit", "packet"] = "vortex"
    radii: List[float] = [0.5, 1.0]
    starts: Optional[List[List[float]]] = None
    k: List[float] = [1.0, 0.0]
    winding: int = 1
    mass: float = Field(1.0, gt=0)
    n_particles: int = Field(64, ge=1)
    # Grid flows only; defaults to 512 nodes in 1D and 64 per axis in 2D
    points: Optional[int] = Field(None, ge=8)
    extent: float = Field(8.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    # Defaults to 7.0 for the vortex (one full orbit at unit radius) and 1.0 otherwise
    t_final: Optional[float] = Field(None, gt=0)
    record_every: int = Field(10, ge=1)
    # Hydrogen only: launch velocity shared by every start, zero when unset
    velocity: Optional[List[float]] = None

    @field_validator("velocity")
    @classmethod
    def _three_components(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and len(value) != 3:
            raise ValueError("velocity needs 3 components")
        return value

    def requires_seed(self) -> bool:
        return self.flow in GRID_FLOWS and self.starts is None


def _analytic(params: TrajectoryParams, summary: Dict[str, Any]):
    if params.flow == "plane-wave":
        starts = np.asarray(params.starts or [[0.0] * len(params.k)], dtype=float)
        ens = integrate_guided(plane_wave_flow(params.k, params.mass), starts, params.dt,
                               t_final=params.t_final, record_every=params.record_every)
        expected = starts + np.asarray(params.k) / params.mass * params.t_final
        summary["max_position_error"] = float(np.max(np.abs(ens.final_positions - expected)))
        return ens

    if params.flow == "hydrogen":
        starts = np.asarray(params.starts or [[r, 0.0, 0.0] for r in params.radii], dtype=float)
        v0 = np.broadcast_to(np.asarray(params.velocity or [0.0, 0.0, 0.0], dtype=float), starts.shape)
        ens = integrate_second_order(hydrogen_ground_state(), starts, v0, params.dt,
                                     t_final=params.t_final, record_every=params.record_every)
        summary["force_balance"] = hydrogen_force_balance(starts)
        summary["max_displacement"] = float(np.nanmax(np.abs(ens.final_positions - starts)))
        # Zero net force: launched particles coast at their initial speed
        speeds = np.linalg.norm(ens.velocities, axis=2)
        summary["speed_drift"] = float(np.nanmax(np.abs(speeds - np.linalg.norm(v0, axis=1)[:, None])))
        summary["final_radius"] = np.linalg.norm(ens.final_positions, axis=1).tolist()
        return ens

    flow = vortex_flow(params.winding, params.mass)
    starts = np.asarray(params.starts or [[r, 0.0] for r in params.radii], dtype=float)
    ens = integrate_guided(flow, starts, params.dt, t_final=params.t_final, record_every=params.record_every)
    radii = np.hypot(starts[:, 0], starts[:, 1])
    summary["orbit_periods"] = orbit_periods(ens).tolist()
    summary["expected_periods"] = (2.0 * np.pi * params.mass * radii ** 2 / abs(params.winding)).tolist()
    summary["radius_drift"] = radius_drift(ens).tolist()

    # One loop around the vortex, one beside it
    around = kelvin_transport(flow, circle_loop((0.0, 0.0), float(np.max(radii))), params.dt,
                              t_final=params.t_final, record_every=params.record_every)
    beside = kelvin_transport(flow, circle_loop((float(np.max(radii)) + 1.0, 0.0), 0.5), params.dt,
                              t_final=params.t_final, record_every=params.record_every)
    summary["circulation_around"] = float(around.circulation[0])
    summary["circulation_around_drift"] = around.drift
    summary["circulation_beside"] = float(beside.circulation[0])
    summary["circulation_beside_drift"] = beside.drift
    return ens


def _grid_flow(params: TrajectoryParams, seed: Optional[int], summary: Dict[str, Any]):
    half = params.extent
    if params.flow == "two-slit":
        spec = GridSpec.line(-half, half, params.points, Boundary.PERIODIC)
        psi0 = two_slit_superposition(spec, mass=params.mass)
    else:
        spec = GridSpec.square(-half, half, params.points, Boundary.PERIODIC)
        psi0 = gaussian_packet(spec, 1.0, momentum=params.k, mass=params.mass)

    # Snapshots every few integration steps keep time interpolation within its stride limit
    dt_wave = min(default_time_step(spec, mass=params.mass), params.dt)
    record = max(1, int(4.0 * params.dt / dt_wave))
    steps = int(np.ceil(params.t_final / dt_wave))
    seq = evolve(psi0, EvolutionConfig(dt=dt_wave, steps=steps, record_every=record, progress=True))

    if params.starts is not None:
        starts = np.asarray(params.starts, dtype=float)
    else:
        if seed is None:
            raise InvalidInputError("sampled starts need a seed")
        starts = sample_born(psi0, params.n_particles, seed)
    flow = GridFlow(seq)
    ens = integrate_guided(flow, starts, params.dt, t_final=min(params.t_final, seq.times[-1]),
                           record_every=params.record_every)
    report = non_crossing_check(ens)
    summary["non_crossing"] = report.model_dump(mode="json")
    summary["non_crossing_passed"] = report.passed
    summary["wave_dt"] = dt_wave
    return ens


def _with_defaults(params: TrajectoryParams) -> TrajectoryParams:
    update: Dict[str, Any] = {}
    if params.t_final is None:
        update["t_final"] = 7.0 if params.flow == "vortex" else 1.0
    if params.points is None:
        update["points"] = 512 if params.flow == "two-slit" else 64
    return params.model_copy(update=update)


def run(params: TrajectoryParams, seed: Optional[int] = None) -> ExperimentResult:
    params = _with_defaults(params)
    summary: Dict[str, Any] = {"flow": params.flow, "t_final": params.t_final}
    if params.flow in GRID_FLOWS:
        ens = _grid_flow(params, seed, summary)
    else:
        ens = _analytic(params, summary)

    summary["status_counts"] = {s.value: ens.count(s) for s in TrajectoryStatus}
    warnings = []
    captured = ens.count(TrajectoryStatus.NODE_CAPTURED)
    if captured > 0.01 * ens.n_particles:
        warnings.append(f"{captured} of {ens.n_particles} trajectories node-captured")
        logger.warning(warnings[-1])

    names = ["x", "y", "z"][: ens.dim]
    seeds = {"starts": seed} if seed is not None else {}
    artifacts: List[Artifact] = ensemble_artifacts(ens, "trajectories.csv", seeds, coordinate_names=names)
    artifacts.append(Artifact(name="trajectories_summary.json", text=to_json(summary)))
    return ExperimentResult(artifacts=artifacts, summary=summary, warnings=warnings)
