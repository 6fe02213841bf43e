from enum import Enum


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


class EvolutionMode(str, Enum):
    """Which Schrödinger-type equation a run integrates."""
    QUANTUM = "quantum"
    CLASSICAL = "classical"


class Integrator(str, Enum):
    GUIDED_RK4 = "guided-rk4"
    NEWTON_VERLET = "newton-verlet"


class TrajectoryStatus(str, Enum):
    ACTIVE = "active"
    NODE_CAPTURED = "node-captured"
    LEFT_DOMAIN = "left-domain"


class BarrierRegime(str, Enum):
    """Position of the normalized energy relative to the top of U_eff."""
    ABOVE = "above-barrier"
    AT = "at-barrier"
    BELOW = "below-barrier"


class RelaxationStart(str, Enum):
    EQUILIBRIUM = "equilibrium"
    GROUND_MODE = "ground-mode"


class ExperimentName(str, Enum):
    EVOLVE = "evolve"
    TRAJECTORIES = "trajectories"
    RELAX = "relax"
    RANKINE = "rankine"
    CLEBSCH_CHECK = "clebsch-check"
