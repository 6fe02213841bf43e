"""
Property suite for the Clebsch description: effective fields, vorticity and
advection identities, gauge invariance, and the first Maxwell group.
"""
import logging
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qbohm.artifacts import Artifact, format_rows, to_json
from qbohm.clebsch import (
    ClebschPair,
    ExternalEM,
    GaugeTriple,
    ScalarFunction,
    advection_residual,
    effective_field_consistency,
    effective_fields,
    effective_lorentz_force,
    gauge_transform,
    generalized_velocity,
    maxwell_residuals,
    mesh_points,
    phase_gradient_from_psi,
    vorticity_residual,
)
from qbohm.enums import Boundary
from qbohm.grid_core import GridSpec, complex_field
from qbohm.madelung import decompose
from qbohm.rankine import RankineParams, rankine_clebsch_pair, rankine_flow, rankine_phase
from runner.schemas import ExperimentResult

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class ClebschCheckParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    N: int = Field(1, ge=1)
    xi0: float = Field(1.0, gt=0)
    mass: float = Field(1.0, gt=0)
    points: int = Field(256, ge=16)
    extent: float = Field(3.0, gt=0)
    periodic_points: int = Field(64, ge=16)
    probe_radii: List[float] = [0.3, 0.6, 0.8]
    steps_per_orbit: int = Field(400, ge=16)

    def requires_seed(self) -> bool:
        return False


class CheckRecord(BaseModel):
    check: str
    value: float
    tolerance: float
    passed: bool


def _record(name: str, value: float, tolerance: float) -> CheckRecord:
    return CheckRecord(check=name, value=value, tolerance=tolerance, passed=bool(abs(value) <= tolerance))


# ============================================================
# Smooth periodic test fields on [0, 2pi)^2
# ============================================================

def smooth_pair(time_dependent: bool = False) -> ClebschPair:
    """alpha = (1 + s(t)) sin x cos y, beta = sin y + c(t) cos x."""
    s = (lambda t: 0.5 * np.sin(t)) if time_dependent else (lambda t: 0.0)
    ds = (lambda t: 0.5 * np.cos(t)) if time_dependent else (lambda t: 0.0)
    c = (lambda t: t) if time_dependent else (lambda t: 0.0)
    dc = 1.0 if time_dependent else 0.0

    alpha = ScalarFunction.analytic(
        "smooth-alpha",
        lambda q, t: (1 + s(t)) * np.sin(q[:, 0]) * np.cos(q[:, 1]),
        lambda q, t: (1 + s(t)) * np.stack([np.cos(q[:, 0]) * np.cos(q[:, 1]),
                                            -np.sin(q[:, 0]) * np.sin(q[:, 1])], axis=1),
        lambda q, t: ds(t) * np.sin(q[:, 0]) * np.cos(q[:, 1]),
    )
    beta = ScalarFunction.analytic(
        "smooth-beta",
        lambda q, t: np.sin(q[:, 1]) + c(t) * np.cos(q[:, 0]),
        lambda q, t: np.stack([-c(t) * np.sin(q[:, 0]), np.cos(q[:, 1])], axis=1),
        lambda q, t: dc * np.cos(q[:, 0]),
    )
    return ClebschPair(alpha=alpha, beta=beta, name="smooth", params={"time_dependent": time_dependent})


def smooth_phase() -> ScalarFunction:
    """S = sin(x + y)"""
    return ScalarFunction.analytic(
        "smooth-S",
        lambda q, t: np.sin(q[:, 0] + q[:, 1]),
        lambda q, t: np.repeat(np.cos(q[:, 0] + q[:, 1])[:, None], 2, axis=1),
    )


def sine_gauge() -> GaugeTriple:
    """f = sin(beta), g = alpha - cos(beta), h = beta."""
    return GaugeTriple(
        f=lambda a, b, t: np.sin(b),
        g=lambda a, b, t: a - np.cos(b),
        h=lambda a, b, t: b,
        name="sine",
        cyclic_h=True,
    )


def _periodic_grid(n: int) -> GridSpec:
    return GridSpec(dim=2, extent_min=(0.0, 0.0), extent_max=(TWO_PI, TWO_PI), points=(n, n),
                    boundary=Boundary.PERIODIC)


# ============================================================
# Checks
# ============================================================

def rankine_checks(params: ClebschCheckParams) -> List[CheckRecord]:
    rp = RankineParams(N=params.N, xi0=params.xi0, mass=params.mass)
    pair = rankine_clebsch_pair(rp)
    em = ExternalEM.none()
    records = []

    inner = np.array([[r * np.cos(a), r * np.sin(a)] for r in params.probe_radii
                      for a in (0.3, 2.0, 4.1)]) * rp.xi0
    fields = effective_fields(pair, inner, 0.0, rp.e)
    records.append(_record("rankine_B_eff", float(np.max(np.abs(fields.B_eff - rp.B0))), 1e-6))

    spec = GridSpec.square(-params.extent, params.extent, params.points, Boundary.DIRICHLET)
    x, y = spec.mesh()
    core = np.hypot(x, y) < 0.9 * rp.xi0
    flow = rankine_flow(rp)
    records.append(_record("rankine_vorticity_residual",
                           vorticity_residual(flow.velocity, pair, em, rp.mass, spec, region=core), 1e-6))

    period = TWO_PI / rp.omega
    dt = period / params.steps_per_orbit
    adv = advection_residual(pair, flow, inner, dt, t_final=period)
    records.append(_record("rankine_advection_alpha", adv.alpha, 1e-6))
    records.append(_record("rankine_advection_beta", adv.beta, 1e-6))

    # Static beta is not a Lagrangian label: a quarter turn leaves it off by pi/2
    wrong = advection_residual(rankine_clebsch_pair(rp, g_rate=0.0), flow, inner, dt, t_final=period / 4)
    records.append(_record("rankine_wrong_rate_detected", wrong.beta - np.pi / 2, 1e-6))

    S = rankine_phase(rp)
    v = generalized_velocity(S, pair, em, rp.mass, inner)
    records.append(_record("rankine_guidance_matches_profile", float(np.max(np.abs(v - flow.velocity(inner, 0.0)))), 1e-12))
    force = effective_lorentz_force(pair, v, inner, 0.0, rp.e)
    records.append(_record("rankine_lorentz_force", float(np.max(np.abs(force))), 1e-10))

    S_g, pair_g = gauge_transform(S, pair, sine_gauge())
    v_g = generalized_velocity(S_g, pair_g, em, rp.mass, inner)
    records.append(_record("gauge_sine_velocity", float(np.max(np.abs(v_g - v))), 1e-10))
    return records


def smooth_checks(params: ClebschCheckParams) -> List[CheckRecord]:
    spec = _periodic_grid(params.periodic_points)
    em = ExternalEM.none()
    records = []

    psi = complex_field(spec, lambda x, y: (2.0 + np.cos(x) * np.cos(y)) * np.exp(1j * (np.sin(x) + np.cos(y))))
    S = phase_gradient_from_psi(psi)
    madelung = decompose(psi)
    points = mesh_points(spec)
    v = generalized_velocity(S, ClebschPair.zero(), em, psi.mass, points)
    reference = np.column_stack([c.values.ravel() for c in madelung.velocity])
    records.append(_record("irrotational_limit_velocity", float(np.max(np.abs(v - reference))), 1e-12))
    records.append(_record(
        "irrotational_vorticity_residual",
        vorticity_residual(tuple(c.values for c in madelung.velocity), ClebschPair.zero(), em, psi.mass, spec),
        1e-8,
    ))

    pair, phase = smooth_pair(), smooth_phase()
    velocity = lambda q, t: generalized_velocity(phase, pair, em, 1.0, q, t)
    records.append(_record("smooth_vorticity_residual", vorticity_residual(velocity, pair, em, 1.0, spec), 1e-5))

    A0 = (0.3, -0.7)
    drift = generalized_velocity(ScalarFunction.constant(), ClebschPair.zero(), ExternalEM.uniform_vector_potential(A0),
                                 2.0, points[:4])
    records.append(_record("uniform_A_drift", float(np.max(np.abs(drift + np.asarray(A0) / 2.0))), 1e-15))

    moving = smooth_pair(time_dependent=True)
    maxwell = maxwell_residuals(moving, spec, t=0.4)
    records.append(_record("maxwell_curl_A", maxwell["curl_A"], 1e-5))
    records.append(_record("maxwell_faraday", maxwell["faraday"], 1e-5))
    records.append(_record("effective_field_consistency", effective_field_consistency(moving, spec, t=0.4), 1e-5))
    return records


SUITES: Dict[str, Callable[[ClebschCheckParams], List[CheckRecord]]] = {
    "rankine": rankine_checks,
    "smooth": smooth_checks,
}


def run(params: ClebschCheckParams, seed: Optional[int] = None) -> ExperimentResult:
    records: List[CheckRecord] = []
    for name, suite in SUITES.items():
        logger.info(f"Running {name} checks")
        records.extend(suite(params))

    failed = [r.check for r in records if not r.passed]
    warnings = [f"check {name} failed" for name in failed]
    for message in warnings:
        logger.warning(message)
    summary: Dict[str, Any] = {
        "checks": len(records),
        "failed": failed,
        "all_passed": not failed,
    }
    rows = [(r.check, r.value, r.tolerance, r.passed) for r in records]
    artifacts = [
        Artifact(name="clebsch_check.csv", text=format_rows(["check", "value", "tolerance", "passed"], rows)),
        Artifact(name="clebsch_summary.json", text=to_json({**summary, "records": records})),
    ]
    return ExperimentResult(artifacts=artifacts, summary=summary, warnings=warnings)
