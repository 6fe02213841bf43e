"""
Quantum Rankine vortex: radial profile, Bessel matching, barrier analysis,
profile identities and the orbit portrait.
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qbohm.artifacts import Artifact, to_json
from qbohm.enums import Boundary
from qbohm.grid_core import GridSpec
from qbohm.rankine import (
    RankineParams,
    check_portrait,
    energy_balance_residual,
    origin_curvature,
    radial_euler_residual,
    rankine_artifacts,
    solve_radial,
    trajectory_portrait,
    w_equation_residual,
    w_transform,
)
from runner.schemas import ExperimentResult

logger = logging.getLogger(__name__)


class RankineRunParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    N: int = Field(1, ge=1)
    eps: float = Field(3.0, gt=0)
    xi0: float = Field(1.0, gt=0)
    mass: float = Field(1.0, gt=0)
    tau_max: float = 8.0
    d_tau: float = 1e-3
    radii: List[float] = [0.5, 1.0, 2.0]
    turns: float = Field(1.0, gt=0)
    record_every: int = Field(4, ge=1)
    # 0 skips the density map
    density_points: int = Field(64, ge=0)
    density_extent: float = Field(3.0, gt=0)

    def requires_seed(self) -> bool:
        return False


def run(params: RankineRunParams, seed: Optional[int] = None) -> ExperimentResult:
    rp = RankineParams(N=params.N, eps=params.eps, xi0=params.xi0, mass=params.mass)
    sol = solve_radial(rp, params.tau_max, params.d_tau)
    _, _, barrier = w_transform(sol)
    ens = trajectory_portrait(rp, params.radii, params.turns, record_every=params.record_every)
    portrait = check_portrait(rp, ens)

    xi = np.linspace(0.05, params.tau_max, 400) * rp.xi0
    summary = {
        "params": rp.model_dump(mode="json"),
        "n_prime": rp.n_prime,
        "bessel_fit": sol.fit.model_dump(mode="json"),
        "barrier": barrier.model_dump(mode="json"),
        "origin_curvature": origin_curvature(rp),
        "w_equation_residual": w_equation_residual(sol),
        "energy_balance_residual": energy_balance_residual(rp, xi),
        "radial_euler_residual": radial_euler_residual(rp, xi),
        "portrait": portrait.model_dump(mode="json"),
        "critical_radius": rp.xi0,
    }

    density_spec = None
    if params.density_points:
        half = params.density_extent
        density_spec = GridSpec.square(-half, half, params.density_points, Boundary.DIRICHLET)
    artifacts: List[Artifact] = rankine_artifacts(rp, sol, ens, density_spec)
    artifacts.append(Artifact(name="rankine_summary.json", text=to_json(summary)))
    logger.info(
        f"Rankine N={rp.N} eps={rp.eps:g}: {barrier.regime.value}, "
        f"Bessel residual {sol.fit.residual:.2e}"
    )
    return ExperimentResult(artifacts=artifacts, summary=summary)
