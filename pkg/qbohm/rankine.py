"""
Quantum Rankine vortex: a rigidly rotating core of radius xi0 carrying an
effective uniform field, matched to a point-vortex exterior.

The radial amplitude G(tau), tau = xi/xi0, solves

    G'' + G'/tau + [eps + N^2 (tau^2 - 2) H(1 - tau) - (N^2/tau^2) H(tau - 1)] G = 0

with G(0) = 1, G'(0) = 0. Outside the core this is Bessel's equation of order N
in sqrt(eps) tau.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy import special
from scipy.interpolate import make_interp_spline

from qbohm.artifacts import Artifact, format_table
from qbohm.clebsch import ClebschPair, ExternalEM, ScalarFunction, clebsch_flow, effective_fields
from qbohm.enums import BarrierRegime
from qbohm.errors import InvalidInputError, RankDeficientFitError
from qbohm.grid_core import ComplexField, GridSpec, derivative_values
from qbohm.trajectories import (
    AnalyticField,
    TrajectoryEnsemble,
    ensemble_artifacts,
    integrate_guided,
    orbit_periods,
    radius_drift,
)

logger = logging.getLogger(__name__)

MAX_D_TAU = 1e-3
MIN_TAU_MAX = 5.0
FIT_WINDOW_START = 2.0
# Liouville term -1/(4 tau^2) is stiff near the origin
W_RESIDUAL_TAU_MIN = 0.3
# RK4 local error grows like (d_tau/tau)^4 near the axis; the series covers [0, SERIES_TAU]
SERIES_TAU = 0.1
SERIES_MAX_TERMS = 400
STEPS_PER_ORBIT = 400


class RankineParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    N: int = Field(1, ge=1)
    eps: float = Field(3.0, gt=0, description="normalized energy 2 m E xi0^2")
    xi0: float = Field(1.0, gt=0)
    mass: float = Field(1.0, gt=0)
    e: float = Field(1.0, gt=0)

    @computed_field
    @property
    def B0(self) -> float:
        """Core field fixed by phase continuity across xi0."""
        return -2.0 * self.N / (self.e * self.xi0 ** 2)

    @computed_field
    @property
    def omega(self) -> float:
        return -self.e * self.B0 / (2.0 * self.mass)

    @computed_field
    @property
    def energy(self) -> float:
        return self.eps / (2.0 * self.mass * self.xi0 ** 2)

    @property
    def n_prime(self) -> float:
        return -self.e * self.B0 * self.xi0 ** 2 / 2.0


class BesselFit(BaseModel):
    C1: float
    C2: float
    residual: float


class RankineSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: RankineParams
    tau: np.ndarray
    G: np.ndarray
    dG: np.ndarray
    d_tau: float
    fit: Optional[BesselFit] = None

    @property
    def xi(self) -> np.ndarray:
        return self.tau * self.params.xi0

    @property
    def W(self) -> np.ndarray:
        return self.G * np.sqrt(self.tau)

    @property
    def U_eff(self) -> np.ndarray:
        return effective_barrier(self.params.N, self.tau)

    @property
    def v_phi(self) -> np.ndarray:
        return velocity_profile(self.params, self.xi)

    @property
    def V_psi(self) -> np.ndarray:
        return quantum_potential_profile(self.params, self.xi)


class BarrierReport(BaseModel):
    maximum: float
    argmax: float
    regime: BarrierRegime
    inner_limit: float
    outer_limit: float


# ============================================================
# Bessel functions
# ============================================================

def bessel_jy(order: int, x, derivative: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    (J_n(x), Y_n(x)) or their derivatives for x > 0. Y_n is singular on the
    axis, so x <= 0 is rejected; use scipy.special.jv for J_n alone there.
    """
    if order < 0:
        raise InvalidInputError("Bessel order must be non-negative", order=order)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidInputError("Bessel argument must be positive", minimum=float(np.min(x)))
    if derivative == 0:
        return special.jv(order, x), special.yv(order, x)
    return special.jvp(order, x, derivative), special.yvp(order, x, derivative)


# ============================================================
# Radial solve
# ============================================================

def _coefficient(tau: float, eps: float, n2: float) -> float:
    if tau < 1.0:
        return eps + n2 * (tau * tau - 2.0)
    return eps - n2 / (tau * tau)


def origin_series(params: RankineParams) -> Tuple[float, float]:
    """(a, b) of G = 1 + a tau^2 + b tau^4 near the axis."""
    n2 = float(params.N ** 2)
    a = (2.0 * n2 - params.eps) / 4.0
    b = -(n2 + (params.eps - 2.0 * n2) * a) / 16.0
    return a, b


def origin_curvature(params: RankineParams) -> float:
    """G''(0); negative exactly when eps > 2 N^2."""
    return 2.0 * origin_series(params)[0]


def origin_expansion(params: RankineParams, tau) -> Tuple[np.ndarray, np.ndarray]:
    """
    (G, G') from the full core power series G = sum g_k tau^{2k}, with
    4 k^2 g_k = -(eps - 2 N^2) g_{k-1} - N^2 g_{k-2}. Valid for tau <= 1.
    """
    tau = np.asarray(tau, dtype=float)
    c, d = params.eps - 2.0 * params.N ** 2, float(params.N ** 2)
    t2 = tau ** 2
    G = np.ones_like(tau)
    dG = np.zeros_like(tau)
    prev, coeff = 0.0, 1.0
    for k in range(1, SERIES_MAX_TERMS):
        prev, coeff = coeff, -(c * coeff + d * prev) / (4.0 * k * k)
        term = coeff * t2 ** k
        G += term
        dG += 2.0 * k * coeff * tau ** (2 * k - 1)
        if k > 2 and np.all(np.abs(term) <= 1e-17 * np.abs(G)):
            break
    return G, dG


def solve_radial(params: RankineParams, tau_max: float = 8.0, d_tau: float = 1e-3,
                 match: bool = True) -> RankineSolution:
    """
    Origin series up to tau = 0.1, RK4 on (G, G') beyond it.
    d_tau must divide 1 so the core edge falls on a grid point.
    """
    if d_tau <= 0 or d_tau > MAX_D_TAU:
        raise InvalidInputError(f"d_tau must lie in (0, {MAX_D_TAU:g}]", d_tau=d_tau)
    per_unit = 1.0 / d_tau
    if abs(per_unit - round(per_unit)) > 1e-6 * per_unit:
        raise InvalidInputError("d_tau must divide 1", d_tau=d_tau)
    if tau_max < MIN_TAU_MAX:
        raise InvalidInputError(f"tau_max must be at least {MIN_TAU_MAX:g}", tau_max=tau_max)

    h = 1.0 / round(per_unit)
    steps = int(math.ceil(tau_max / h - 1e-9))
    eps, n2 = params.eps, float(params.N ** 2)
    start = max(1, int(round(SERIES_TAU / h)))

    G = np.empty(steps + 1)
    dG = np.empty(steps + 1)
    G[:start + 1], dG[:start + 1] = origin_expansion(params, h * np.arange(start + 1))
    g, p = float(G[start]), float(dG[start])

    def rhs(tau: float, g: float, p: float) -> Tuple[float, float]:
        return p, -p / tau - _coefficient(tau, eps, n2) * g

    for k in range(start, steps):
        tau = k * h
        k1g, k1p = rhs(tau, g, p)
        k2g, k2p = rhs(tau + 0.5 * h, g + 0.5 * h * k1g, p + 0.5 * h * k1p)
        k3g, k3p = rhs(tau + 0.5 * h, g + 0.5 * h * k2g, p + 0.5 * h * k2p)
        k4g, k4p = rhs(tau + h, g + h * k3g, p + h * k3p)
        g += h * (k1g + 2.0 * k2g + 2.0 * k3g + k4g) / 6.0
        p += h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        G[k + 1], dG[k + 1] = g, p

    solution = RankineSolution(params=params, tau=h * np.arange(steps + 1), G=G, dG=dG, d_tau=h)
    logger.info(f"Solved radial profile N={params.N} eps={params.eps:g} on {steps} steps")
    if match:
        solution = solution.model_copy(update={"fit": match_bessel(solution)})
    return solution


def match_bessel(sol: RankineSolution, window_start: float = FIT_WINDOW_START) -> BesselFit:
    """Least-squares C1 J_N(sqrt(eps) tau) + C2 Y_N(sqrt(eps) tau) over [window_start, tau_max]."""
    window = sol.tau >= window_start
    if window.sum() < 2 or sol.tau[-1] < MIN_TAU_MAX:
        raise RankDeficientFitError("fit window holds too few points", window_start=window_start)
    J, Y = bessel_jy(sol.params.N, math.sqrt(sol.params.eps) * sol.tau[window])
    design = np.column_stack([J, Y])
    coefficients, _, rank, _ = np.linalg.lstsq(design, sol.G[window], rcond=None)
    if rank < 2:
        raise RankDeficientFitError("Bessel fit matrix is rank deficient", rank=int(rank))
    residual = float(np.max(np.abs(design @ coefficients - sol.G[window])))
    fit = BesselFit(C1=float(coefficients[0]), C2=float(coefficients[1]), residual=residual)
    logger.debug(f"Bessel match C1={fit.C1:.6g} C2={fit.C2:.6g} residual={residual:.2e}")
    return fit


def bessel_vortex_profile(params: RankineParams, tau) -> np.ndarray:
    """No-core limit: the regular solution J_N(sqrt(eps) tau), zero on the axis for N > 0."""
    return special.jv(params.N, math.sqrt(params.eps) * np.asarray(tau, dtype=float))


def radial_amplitude(sol: RankineSolution, tau) -> np.ndarray:
    """G at arbitrary tau: spline inside the solved range, Bessel fit beyond it."""
    tau = np.asarray(tau, dtype=float)
    spline = make_interp_spline(sol.tau, sol.G, k=3)
    out = spline(np.clip(tau, 0.0, sol.tau[-1]))
    beyond = tau > sol.tau[-1]
    if np.any(beyond):
        fit = sol.fit or match_bessel(sol)
        J, Y = bessel_jy(sol.params.N, math.sqrt(sol.params.eps) * tau[beyond])
        out[beyond] = fit.C1 * J + fit.C2 * Y
    return out


# ============================================================
# Effective barrier
# ============================================================

def effective_barrier(N: int, tau) -> np.ndarray:
    """U_eff = N^2 (2 - tau^2) inside the core, (N^2 - 1/4)/tau^2 outside."""
    tau = np.asarray(tau, dtype=float)
    n2 = float(N ** 2)
    with np.errstate(divide="ignore"):
        outside = (n2 - 0.25) / tau ** 2
    return np.where(tau <= 1.0, n2 * (2.0 - tau ** 2), outside)


def barrier_regime(params: RankineParams) -> BarrierRegime:
    top = 2.0 * params.N ** 2
    if math.isclose(params.eps, top, rel_tol=1e-12):
        return BarrierRegime.AT
    return BarrierRegime.ABOVE if params.eps > top else BarrierRegime.BELOW


def w_transform(sol: RankineSolution) -> Tuple[np.ndarray, np.ndarray, BarrierReport]:
    n2 = float(sol.params.N ** 2)
    report = BarrierReport(
        maximum=2.0 * n2,
        argmax=0.0,
        regime=barrier_regime(sol.params),
        inner_limit=n2,
        outer_limit=n2 - 0.25,
    )
    return sol.W, sol.U_eff, report


def w_equation_residual(sol: RankineSolution, tau_min: float = W_RESIDUAL_TAU_MIN, exact: bool = True) -> float:
    """
    max |W'' + (eps - U) W| by second differences for tau >= tau_min.
    exact=True adds the -1/(4 tau^2) term the tabulated barrier omits inside
    the core; exact=False uses the tabulated barrier and only makes sense for
    tau_min >= 1.
    """
    tau, W, h = sol.tau, sol.W, sol.d_tau
    U = sol.U_eff
    if exact:
        inside = tau < 1.0
        U = U.copy()
        U[inside & (tau > 0)] -= 0.25 / tau[inside & (tau > 0)] ** 2
    d2 = (W[2:] - 2.0 * W[1:-1] + W[:-2]) / h ** 2
    residual = d2 + (sol.params.eps - U[1:-1]) * W[1:-1]
    keep = tau[1:-1] >= tau_min
    return float(np.max(np.abs(residual[keep])))


# ============================================================
# Flow profiles
# ============================================================

def velocity_profile(params: RankineParams, xi) -> np.ndarray:
    """v_phi = omega xi in the core, N/(m xi) outside."""
    xi = np.asarray(xi, dtype=float)
    with np.errstate(divide="ignore"):
        outer = params.N / (params.mass * xi)
    return np.where(xi <= params.xi0, params.omega * xi, outer)


def vorticity_profile(params: RankineParams, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.where(xi < params.xi0, 2.0 * params.omega, 0.0)


def quantum_potential_profile(params: RankineParams, xi) -> np.ndarray:
    """V_psi with the constant fixed to the energy E."""
    xi = np.asarray(xi, dtype=float)
    n2, m, x0 = float(params.N ** 2), params.mass, params.xi0
    with np.errstate(divide="ignore"):
        outer = -n2 / (2.0 * m * xi ** 2)
    inner = n2 / (2.0 * m * x0 ** 4) * (xi ** 2 - 2.0 * x0 ** 2)
    return np.where(xi <= x0, inner, outer) + params.energy


def quantum_potential_slope(params: RankineParams, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n2, m, x0 = float(params.N ** 2), params.mass, params.xi0
    with np.errstate(divide="ignore"):
        outer = n2 / (m * xi ** 3)
    return np.where(xi <= x0, n2 * xi / (m * x0 ** 4), outer)


def radial_euler_residual(params: RankineParams, xi) -> float:
    """max |m v_phi^2 / xi - dV_psi/dxi|"""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise InvalidInputError("radial Euler balance needs xi > 0")
    centripetal = params.mass * velocity_profile(params, xi) ** 2 / xi
    return float(np.max(np.abs(centripetal - quantum_potential_slope(params, xi))))


def orbit_period(params: RankineParams, xi) -> np.ndarray:
    """2 pi / omega in the core, 2 pi m xi^2 / N outside."""
    xi = np.asarray(xi, dtype=float)
    return np.where(xi <= params.xi0, 2.0 * np.pi / params.omega,
                    2.0 * np.pi * params.mass * xi ** 2 / params.N)


# ============================================================
# Clebsch description
# ============================================================

def rankine_clebsch_pair(params: RankineParams, g_rate: Optional[float] = None) -> ClebschPair:
    """
    alpha = N xi^2/xi0^2 - N in the core (0 outside), beta = phi + g(t) with
    dg/dt = g_rate (default -omega, the rate that makes beta a Lagrangian label).
    """
    rate = -params.omega if g_rate is None else float(g_rate)
    N, x0 = params.N, params.xi0

    def alpha_value(q, t):
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        return np.where(r2 <= x0 ** 2, N * r2 / x0 ** 2 - N, 0.0)

    def alpha_gradient(q, t):
        inside = (q[:, 0] ** 2 + q[:, 1] ** 2) <= x0 ** 2
        return np.where(inside[:, None], 2.0 * N * q / x0 ** 2, 0.0)

    alpha = ScalarFunction.analytic("rankine-alpha", alpha_value, alpha_gradient, N=N, xi0=x0)
    beta = ScalarFunction.azimuth(rate=rate)
    return ClebschPair(alpha=alpha, beta=beta, name="rankine", params={"N": N, "xi0": x0, "g_rate": rate})


def rankine_phase(params: RankineParams) -> ScalarFunction:
    """S = N phi"""
    return ScalarFunction.azimuth(rate=0.0, winding=float(params.N))


def rankine_velocity(params: RankineParams, points: np.ndarray, t: float = 0.0) -> np.ndarray:
    q = np.atleast_2d(points)
    xi = np.hypot(q[:, 0], q[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(xi > 0, velocity_profile(params, xi) / xi, 0.0)
    return scale[:, None] * np.stack([-q[:, 1], q[:, 0]], axis=1)


def rankine_flow(params: RankineParams) -> AnalyticField:
    return AnalyticField(
        name="rankine",
        dim=2,
        velocity_fn=lambda q, t: rankine_velocity(params, q, t),
        masses=(params.mass, params.mass),
        params=params.model_dump(mode="json"),
    )


def rankine_clebsch_flow(params: RankineParams, g_rate: Optional[float] = None) -> AnalyticField:
    """The same flow assembled from grad S + alpha grad beta."""
    return clebsch_flow(rankine_phase(params), rankine_clebsch_pair(params, g_rate), ExternalEM.none(), params.mass)


def energy_balance_residual(params: RankineParams, xi) -> float:
    """max |E - (m v)^2/2m - e V_eff - V_psi| along the x axis at radii xi."""
    xi = np.asarray(xi, dtype=float)
    points = np.column_stack([xi, np.zeros_like(xi)])
    V_eff = effective_fields(rankine_clebsch_pair(params), points, 0.0, params.e).V_eff
    kinetic = 0.5 * params.mass * velocity_profile(params, xi) ** 2
    total = kinetic + params.e * V_eff + quantum_potential_profile(params, xi)
    return float(np.max(np.abs(total - params.energy)))


# ============================================================
# Fields on a grid
# ============================================================

def rankine_psi_field(params: RankineParams, sol: RankineSolution, spec: GridSpec, bessel: bool = False) -> ComplexField:
    """G(xi/xi0) e^{i N phi}, or the no-core Bessel profile when `bessel`."""
    if spec.dim != 2:
        raise InvalidInputError("vortex fields are 2D", dim=spec.dim)
    x, y = spec.mesh()
    tau = np.hypot(x, y) / params.xi0
    radial = bessel_vortex_profile(params, tau) if bessel else radial_amplitude(sol, tau.ravel()).reshape(tau.shape)
    phase = np.exp(1j * params.N * np.arctan2(y, x))
    return ComplexField(spec=spec, values=radial * phase, mass=params.mass)


def flux_divergence(params: RankineParams, sol: RankineSolution, spec: GridSpec, band: int = 3) -> float:
    """
    max |div(rho v)| relative to max |rho v| on a grid. Nodes within `band`
    spacings of the core edge are skipped: the flux has a kink there.
    """
    rho = np.abs(rankine_psi_field(params, sol, spec).values) ** 2
    x, y = spec.mesh()
    v = rankine_velocity(params, np.column_stack([x.ravel(), y.ravel()]))
    jx = rho * v[:, 0].reshape(spec.shape)
    jy = rho * v[:, 1].reshape(spec.shape)
    div = derivative_values(jx, spec, 0) + derivative_values(jy, spec, 1)
    keep = np.abs(np.hypot(x, y) - params.xi0) > band * max(spec.spacing)
    return float(np.max(np.abs(div[keep])) / max(np.max(np.hypot(jx, jy)), 1e-300))


# ============================================================
# Trajectories
# ============================================================

def trajectory_portrait(params: RankineParams, radii: Sequence[float], turns: float = 1.0,
                        steps_per_orbit: int = STEPS_PER_ORBIT, record_every: int = 1) -> TrajectoryEnsemble:
    """Orbits started at (xi, 0); runs long enough for the slowest orbit to close `turns` times."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise InvalidInputError("at least one start radius is required")
    if np.any(radii <= 0):
        raise InvalidInputError("start at the stagnation point xi = 0", radii=radii.tolist())
    periods = orbit_period(params, radii)
    dt = float(np.min(periods)) / steps_per_orbit
    t_final = turns * float(np.max(periods)) * (1.0 + 2.0 / steps_per_orbit)
    starts = np.column_stack([radii, np.zeros_like(radii)])
    return integrate_guided(rankine_flow(params), starts, dt, t_final=t_final, record_every=record_every)


class PortraitCheck(BaseModel):
    radii: List[float]
    periods: List[float]
    expected: List[float]
    radius_drift: List[float]


def check_portrait(params: RankineParams, ens: TrajectoryEnsemble) -> PortraitCheck:
    radii = np.hypot(ens.positions[:, 0, 0], ens.positions[:, 0, 1])
    return PortraitCheck(
        radii=radii.tolist(),
        periods=orbit_periods(ens).tolist(),
        expected=orbit_period(params, radii).tolist(),
        radius_drift=radius_drift(ens).tolist(),
    )


# ============================================================
# Artifacts
# ============================================================

def profile_artifact(sol: RankineSolution) -> Artifact:
    table = np.column_stack([sol.tau, sol.G, sol.W, sol.U_eff])
    return Artifact(name="rankine_profile.csv", text=format_table(["tau", "G", "W", "U_eff"], table))


def density_artifact(params: RankineParams, sol: RankineSolution, spec: GridSpec) -> Artifact:
    x, y = spec.mesh()
    rankine = np.abs(rankine_psi_field(params, sol, spec).values) ** 2
    bessel = np.abs(rankine_psi_field(params, sol, spec, bessel=True).values) ** 2
    table = np.column_stack([x.ravel(), y.ravel(), rankine.ravel(), bessel.ravel()])
    return Artifact(name="rankine_density.csv", text=format_table(["x", "y", "rho_rankine", "rho_bessel"], table))


def rankine_artifacts(params: RankineParams, sol: RankineSolution, ens: TrajectoryEnsemble,
                      density_spec: Optional[GridSpec] = None) -> List[Artifact]:
    artifacts = [profile_artifact(sol)]
    artifacts += ensemble_artifacts(ens, "rankine_traj.csv", coordinate_names=["x", "y"], with_status=False)
    if density_spec is not None:
        artifacts.append(density_artifact(params, sol, density_spec))
    return artifacts
