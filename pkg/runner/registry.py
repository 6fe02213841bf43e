from typing import Callable, Dict, Optional, Type

from pydantic import BaseModel, ConfigDict

from qbohm.enums import ExperimentName
from runner.experiments import clebsch_check, evolve, rankine, relax, trajectories
from runner.schemas import ExperimentResult


class Experiment(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: ExperimentName
    params_model: Type[BaseModel]
    run: Callable[[BaseModel, Optional[int]], ExperimentResult]
    description: str
    # Same parameters and seed reproduce byte-identical artifacts
    deterministic: bool = True


REGISTRY: Dict[ExperimentName, Experiment] = {
    ExperimentName.EVOLVE: Experiment(
        name=ExperimentName.EVOLVE,
        params_model=evolve.EvolveParams,
        run=evolve.run,
        description="split-step quantum/classical evolution with norm, continuity and vortex diagnostics",
    ),
    ExperimentName.TRAJECTORIES: Experiment(
        name=ExperimentName.TRAJECTORIES,
        params_model=trajectories.TrajectoryParams,
        run=trajectories.run,
        description="guided and second-order trajectory ensembles, non-crossing and Kelvin transport",
    ),
    ExperimentName.RELAX: Experiment(
        name=ExperimentName.RELAX,
        params_model=relax.RelaxParams,
        run=relax.run,
        description="relaxation to quantum equilibrium in a 2D box (coarse-grained H, KS distance)",
    ),
    ExperimentName.RANKINE: Experiment(
        name=ExperimentName.RANKINE,
        params_model=rankine.RankineRunParams,
        run=rankine.run,
        description="quantum Rankine vortex profile, Bessel matching and orbit portrait",
    ),
    ExperimentName.CLEBSCH_CHECK: Experiment(
        name=ExperimentName.CLEBSCH_CHECK,
        params_model=clebsch_check.ClebschCheckParams,
        run=clebsch_check.run,
        description="Clebsch potential identities: effective fields, vorticity, advection, gauge, Maxwell",
    ),
}


def get_experiment(name: ExperimentName) -> Experiment:
    return REGISTRY[ExperimentName(name)]
