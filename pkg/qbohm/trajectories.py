"""
Bohmian trajectory integration.

Guided trajectories follow dq/dt = v(q, t) (RK4). Second-order trajectories
follow m d2q/dt2 = -grad(V + VQ) (velocity Verlet) with no guidance
constraint, which lets them leave the equilibrium ensemble.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import cKDTree

from qbohm.artifacts import Artifact, format_rows, to_json, write_artifacts
from qbohm.config import config
from qbohm.enums import Integrator, TrajectoryStatus
from qbohm.errors import InvalidInputError, NodeCaptureError
from qbohm.grid_core import GridSpec, Interpolator, derivative_values, with_values
from qbohm.schrodinger import FieldSequence

logger = logging.getLogger(__name__)

# Snapshot stride allowed per integration step for linear time interpolation
MAX_STRIDE_PER_STEP = 5.0
MIN_CHUNK = 256
# Radius under which analytic vortex flows treat a point as on the nodal line
ANALYTIC_NODE_RADIUS = 1e-8


# ============================================================
# Velocity sources
# ============================================================

@runtime_checkable
class VelocitySource(Protocol):
    dim: int
    masses: Tuple[float, ...]

    def velocity(self, points: np.ndarray, t: float) -> np.ndarray: ...

    def captured(self, points: np.ndarray, t: float) -> np.ndarray: ...

    def contains(self, points: np.ndarray) -> np.ndarray: ...

    def wrap(self, points: np.ndarray) -> np.ndarray: ...

    def describe(self) -> Dict[str, Any]: ...


class AnalyticField(BaseModel):
    """
    Closed-form velocity and/or force evaluators on points of shape (n, dim).
    `node_fn` flags points on the nodal set; `bounds` (lo, hi) declares a
    finite domain, None means all of space.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    dim: int = Field(..., ge=1, le=3)
    velocity_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    force_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    node_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    bounds: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    masses: Tuple[float, ...] = ()
    params: Dict[str, Any] = {}

    def model_post_init(self, __context: Any) -> None:
        if not self.masses:
            object.__setattr__(self, "masses", (1.0,) * self.dim)

    def velocity(self, points: np.ndarray, t: float) -> np.ndarray:
        if self.velocity_fn is None:
            raise InvalidInputError(f"analytic field {self.name!r} has no velocity evaluator")
        return np.asarray(self.velocity_fn(points, t), dtype=float).reshape(points.shape)

    def force(self, points: np.ndarray, t: float) -> np.ndarray:
        if self.force_fn is None:
            raise InvalidInputError(f"analytic field {self.name!r} has no force evaluator")
        return np.asarray(self.force_fn(points, t), dtype=float).reshape(points.shape)

    def captured(self, points: np.ndarray, t: float) -> np.ndarray:
        if self.node_fn is None:
            return np.zeros(len(points), dtype=bool)
        return np.asarray(self.node_fn(points, t), dtype=bool)

    def contains(self, points: np.ndarray) -> np.ndarray:
        finite = np.all(np.isfinite(points), axis=1)
        if self.bounds is None:
            return finite
        lo, hi = (np.asarray(b) for b in self.bounds)
        return finite & np.all((points >= lo) & (points <= hi), axis=1)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        return points

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "masses": list(self.masses), **self.params}


class GridFlow:
    """
    Velocity from a snapshot sequence: cubic interpolation of psi and grad psi
    in space, linear interpolation of the velocity in time.
    """

    def __init__(self, seq: FieldSequence, node_threshold: Optional[float] = None):
        self.seq = seq
        self.spec: GridSpec = seq.spec
        self.dim = self.spec.dim
        self.mass = seq.fields[0].mass
        self.masses = (self.mass,) * self.dim
        self.times = np.asarray(seq.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("snapshot times must be strictly increasing")
        self.threshold = config.NODE_THRESHOLD if node_threshold is None else node_threshold
        self._psi = [Interpolator(f) for f in seq.fields]
        self._grad = [
            [Interpolator(with_values(f, derivative_values(f.values, self.spec, axis))) for axis in range(self.dim)]
            for f in seq.fields
        ]
        self._peak = [float(np.max(np.abs(f.values))) for f in seq.fields]

    @property
    def stride(self) -> float:
        return float(np.max(np.diff(self.times))) if self.times.size > 1 else 0.0

    def _locate(self, t: float) -> Tuple[int, float]:
        if t <= self.times[0]:
            return 0, 0.0
        if t >= self.times[-1]:
            return len(self.times) - 1, 0.0
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return i, (t - self.times[i]) / (self.times[i + 1] - self.times[i])

    def _snapshot_velocity(self, index: int, points: np.ndarray) -> np.ndarray:
        psi = self._psi[index](points)
        grad = np.stack([g(points) for g in self._grad[index]], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.imag(grad / psi[:, None]) / self.mass

    def velocity(self, points: np.ndarray, t: float) -> np.ndarray:
        points = self.spec.wrap(points)
        i, lam = self._locate(t)
        v = self._snapshot_velocity(i, points)
        if lam > 0.0:
            v = (1.0 - lam) * v + lam * self._snapshot_velocity(i + 1, points)
        return v

    def captured(self, points: np.ndarray, t: float) -> np.ndarray:
        i, lam = self._locate(t)
        index = i if lam < 0.5 else i + 1
        amplitude = np.abs(self._psi[index](self.spec.wrap(points)))
        return amplitude < self.threshold * self._peak[index]

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.spec.contains(points)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        return self.spec.wrap(points)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": "grid-sequence",
            "spec": self.spec.model_dump(mode="json"),
            "snapshots": int(self.times.size),
            "t_start": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "evolution": self.seq.config,
        }


# ============================================================
# Analytic factories
# ============================================================

def plane_wave_flow(k: Sequence[float], mass: float = 1.0) -> AnalyticField:
    """Uniform flow v = k/m of the plane wave e^{ik.q}."""
    k = np.asarray(k, dtype=float)
    return AnalyticField(
        name="plane-wave",
        dim=k.size,
        velocity_fn=lambda q, t: np.broadcast_to(k / mass, q.shape),
        force_fn=lambda q, t: np.zeros_like(q),
        masses=(mass,) * k.size,
        params={"k": k.tolist(), "mass": mass},
    )


def vortex_flow(winding: int = 1, mass: float = 1.0, center: Sequence[float] = (0.0, 0.0)) -> AnalyticField:
    """Azimuthal flow N/(m xi) of the vortex (x + iy)^N e^{-xi^2/2}."""
    cx, cy = center

    def velocity(q, t):
        x, y = q[:, 0] - cx, q[:, 1] - cy
        r2 = x ** 2 + y ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.stack([-winding * y / (mass * r2), winding * x / (mass * r2)], axis=1)

    def node(q, t):
        return np.hypot(q[:, 0] - cx, q[:, 1] - cy) < ANALYTIC_NODE_RADIUS

    return AnalyticField(
        name="vortex",
        dim=2,
        velocity_fn=velocity,
        node_fn=node,
        masses=(mass, mass),
        params={"winding": winding, "mass": mass, "center": [cx, cy]},
    )


def _radius(q: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(q ** 2, axis=1))


def hydrogen_potentials(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """V = -1/r and VQ = -1/2 + 1/r for R = e^{-r}, m = 1."""
    r = _radius(np.atleast_2d(points))
    return -1.0 / r, -0.5 + 1.0 / r


def _hydrogen_force(q: np.ndarray, t: float) -> np.ndarray:
    r3 = _radius(q)[:, None] ** 3
    grad_v = q / r3
    grad_vq = -q / r3
    return -(grad_v + grad_vq)


def hydrogen_ground_state() -> AnalyticField:
    """3D ground state e^{-r}/sqrt(pi): real wave function, so v = 0."""
    return AnalyticField(
        name="hydrogen-ground-state",
        dim=3,
        velocity_fn=lambda q, t: np.zeros_like(q),
        force_fn=_hydrogen_force,
        node_fn=lambda q, t: _radius(q) == 0.0,
        params={"mass": 1.0, "charge": 1.0},
    )


def hydrogen_force_balance(points: np.ndarray) -> float:
    """max |grad(V + VQ)| over the given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.max(np.linalg.norm(_hydrogen_force(points, 0.0), axis=1)))


def unconfined_ensemble_divergence(F: Callable, U: Callable, x: np.ndarray, y: np.ndarray,
                                   z: np.ndarray) -> float:
    """
    Discrete div(rho v) for rho = F(x, y), v = U(x, y) z-hat on a 3D mesh.
    The flux has no z dependence, so the divergence vanishes identically.
    """
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    flux_z = F(X, Y) * U(X, Y) * np.ones_like(Z)
    # x and y flux components are identically zero
    divergence = np.gradient(flux_z, z, axis=2)
    return float(np.max(np.abs(divergence)))


# ============================================================
# Ensembles
# ============================================================

class TrajectoryEnsemble(BaseModel):
    """
    positions has shape (particles, times, dim); entries after a trajectory
    stops are NaN. velocities is only kept for second-order ensembles.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    positions: np.ndarray
    status: List[TrajectoryStatus]
    stop_index: np.ndarray
    masses: Tuple[float, ...]
    integrator: Integrator
    source: Dict[str, Any] = {}
    config: Dict[str, Any] = {}
    velocities: Optional[np.ndarray] = None

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def final_positions(self) -> np.ndarray:
        return self.positions[:, -1, :]

    def count(self, status: TrajectoryStatus) -> int:
        return sum(1 for s in self.status if s == status)


class _Plan(BaseModel):
    t0: float
    dt: float
    steps: int
    record_every: int

    @property
    def record_steps(self) -> List[int]:
        steps = list(range(0, self.steps + 1, self.record_every))
        if steps[-1] != self.steps:
            steps.append(self.steps)
        return steps

    @property
    def record_times(self) -> np.ndarray:
        return self.t0 + self.dt * np.asarray(self.record_steps, dtype=float)


def _plan(t0: float, t_final: float, dt: float, record_every: int) -> _Plan:
    if dt <= 0:
        raise InvalidInputError("dt must be positive", dt=dt)
    if t_final <= t0:
        raise InvalidInputError("t_final must exceed the start time", t0=t0, t_final=t_final)
    if record_every < 1:
        raise InvalidInputError("record_every must be at least 1", record_every=record_every)
    steps = max(1, int(math.ceil((t_final - t0) / dt - 1e-9)))
    return _Plan(t0=t0, dt=(t_final - t0) / steps, steps=steps, record_every=record_every)


def _chunks(n: int) -> List[slice]:
    size = max(MIN_CHUNK, -(-n // config.THREADS))
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _run_chunks(work: Callable[[slice], Any], n: int) -> list:
    chunks = _chunks(n)
    if len(chunks) == 1:
        return [work(chunks[0])]
    with ThreadPoolExecutor(max_workers=config.THREADS) as pool:
        return list(pool.map(work, chunks))


def _validate_starts(source: VelocitySource, starts: np.ndarray, t0: float) -> np.ndarray:
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if starts.shape[1] != source.dim:
        starts = starts.reshape(-1, source.dim)
    outside = np.flatnonzero(~source.contains(starts))
    if outside.size:
        raise InvalidInputError(f"starts outside the domain: {outside.tolist()}", indices=outside.tolist())
    captured = np.flatnonzero(source.captured(starts, t0))
    if captured.size:
        raise InvalidInputError(f"starts on masked nodes: {captured.tolist()}", indices=captured.tolist())
    return starts


def _guided_chunk(source: VelocitySource, starts: np.ndarray, plan: _Plan):
    n, dim = starts.shape
    record_steps = set(plan.record_steps)
    n_records = len(plan.record_steps)
    out = np.full((n, n_records, dim), np.nan)
    status = np.array([TrajectoryStatus.ACTIVE] * n, dtype=object)
    stop = np.full(n, n_records - 1, dtype=int)

    q = starts.copy()
    active = np.ones(n, dtype=bool)
    out[:, 0] = source.wrap(q)
    record = 1
    dt = plan.dt
    for step in range(1, plan.steps + 1):
        t = plan.t0 + (step - 1) * dt
        idx = np.flatnonzero(active)
        if idx.size:
            qa = q[idx]
            k1 = source.velocity(qa, t)
            k2 = source.velocity(qa + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = source.velocity(qa + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = source.velocity(qa + dt * k3, t + dt)
            qa = qa + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            q[idx] = qa

            finite = np.all(np.isfinite(qa), axis=1)
            left = ~source.contains(np.where(finite[:, None], qa, 0.0)) & finite
            captured = ~finite | source.captured(np.where(finite[:, None], qa, 0.0), t + dt)
            captured &= ~left
            for mask, kind in ((captured, TrajectoryStatus.NODE_CAPTURED), (left, TrajectoryStatus.LEFT_DOMAIN)):
                hit = idx[mask]
                status[hit] = kind
                stop[hit] = record - 1
                active[hit] = False

        if step in record_steps:
            out[active, record] = source.wrap(q[active])
            record += 1
    return out, list(status), stop


def integrate_guided(source: VelocitySource, starts: np.ndarray, dt: float,
                     t_final: Optional[float] = None, t0: Optional[float] = None,
                     record_every: int = 1) -> TrajectoryEnsemble:
    """RK4 on dq/dt = v(q, t); trajectories entering the node mask stop as node-captured."""
    if isinstance(source, GridFlow):
        t0 = source.times[0] if t0 is None else t0
        t_final = source.times[-1] if t_final is None else t_final
        if source.stride > MAX_STRIDE_PER_STEP * dt * (1 + 1e-9):
            raise InvalidInputError(
                f"snapshot stride {source.stride:g} exceeds {MAX_STRIDE_PER_STEP:g} integration steps",
                stride=source.stride,
                dt=dt,
            )
    t0 = 0.0 if t0 is None else float(t0)
    if t_final is None:
        raise InvalidInputError("t_final is required for analytic sources")

    plan = _plan(t0, float(t_final), dt, record_every)
    starts = _validate_starts(source, starts, t0)
    logger.info(f"Integrating {len(starts)} guided trajectories, {plan.steps} RK4 steps of dt={plan.dt:g}")

    results = _run_chunks(lambda s: _guided_chunk(source, starts[s], plan), len(starts))
    positions = np.concatenate([r[0] for r in results], axis=0)
    status = [s for r in results for s in r[1]]
    stop = np.concatenate([r[2] for r in results])

    ens = TrajectoryEnsemble(
        times=plan.record_times,
        positions=positions,
        status=status,
        stop_index=stop,
        masses=tuple(source.masses),
        integrator=Integrator.GUIDED_RK4,
        source=source.describe(),
        config={"dt": plan.dt, "steps": plan.steps, "record_every": record_every, "t0": t0},
    )
    captured = ens.count(TrajectoryStatus.NODE_CAPTURED)
    if captured:
        logger.info(f"{captured} of {ens.n_particles} trajectories node-captured")
    return ens


def _verlet_chunk(field: AnalyticField, starts: np.ndarray, velocities: np.ndarray, plan: _Plan):
    n, dim = starts.shape
    masses = np.asarray(field.masses)
    record_steps = set(plan.record_steps)
    n_records = len(plan.record_steps)
    out_q = np.full((n, n_records, dim), np.nan)
    out_v = np.full((n, n_records, dim), np.nan)
    status = np.array([TrajectoryStatus.ACTIVE] * n, dtype=object)
    stop = np.full(n, n_records - 1, dtype=int)

    q = starts.copy()
    v = velocities.copy()
    acc = field.force(q, plan.t0) / masses
    active = np.ones(n, dtype=bool)
    out_q[:, 0], out_v[:, 0] = q, v
    record = 1
    dt = plan.dt
    for step in range(1, plan.steps + 1):
        t = plan.t0 + step * dt
        idx = np.flatnonzero(active)
        if idx.size:
            q[idx] = q[idx] + dt * v[idx] + 0.5 * dt * dt * acc[idx]
            new_acc = field.force(q[idx], t) / masses
            v[idx] = v[idx] + 0.5 * dt * (acc[idx] + new_acc)
            acc[idx] = new_acc
            left = idx[~field.contains(q[idx])]
            status[left] = TrajectoryStatus.LEFT_DOMAIN
            stop[left] = record - 1
            active[left] = False
        if step in record_steps:
            out_q[active, record] = q[active]
            out_v[active, record] = v[active]
            record += 1
    return out_q, out_v, list(status), stop


def integrate_second_order(field: AnalyticField, starts: np.ndarray, velocities: np.ndarray, dt: float,
                           t_final: float, t0: float = 0.0, record_every: int = 1) -> TrajectoryEnsemble:
    """Velocity Verlet on m d2q/dt2 = F(q, t); leaving the domain stops a trajectory."""
    if not isinstance(field, AnalyticField) or field.force_fn is None:
        raise InvalidInputError("second-order integration needs an analytic field with a force evaluator")
    plan = _plan(float(t0), float(t_final), dt, record_every)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    velocities = np.broadcast_to(np.asarray(velocities, dtype=float), starts.shape).copy()
    outside = np.flatnonzero(~field.contains(starts))
    if outside.size:
        raise InvalidInputError(f"starts outside the domain: {outside.tolist()}", indices=outside.tolist())
    logger.info(f"Integrating {len(starts)} second-order trajectories, {plan.steps} Verlet steps")

    results = _run_chunks(lambda s: _verlet_chunk(field, starts[s], velocities[s], plan), len(starts))
    return TrajectoryEnsemble(
        times=plan.record_times,
        positions=np.concatenate([r[0] for r in results], axis=0),
        velocities=np.concatenate([r[1] for r in results], axis=0),
        status=[s for r in results for s in r[2]],
        stop_index=np.concatenate([r[3] for r in results]),
        masses=tuple(field.masses),
        integrator=Integrator.NEWTON_VERLET,
        source=field.describe(),
        config={"dt": plan.dt, "steps": plan.steps, "record_every": record_every, "t0": float(t0)},
    )


# ============================================================
# Congruence checks
# ============================================================

class NonCrossingReport(BaseModel):
    applicable: bool
    reason: Optional[str] = None
    min_distance: Optional[float] = None
    order_preserved: Optional[bool] = None

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        distinct = self.min_distance is None or self.min_distance > 0.0
        return distinct and self.order_preserved is not False


def non_crossing_check(ens: TrajectoryEnsemble) -> NonCrossingReport:
    if ens.integrator != Integrator.GUIDED_RK4:
        return NonCrossingReport(applicable=False, reason="not guided")

    min_distance = math.inf
    order_preserved = True if ens.dim == 1 else None
    initial_order = np.argsort(ens.positions[:, 0, 0]) if ens.dim == 1 else None
    for k in range(ens.times.size):
        q = ens.positions[:, k, :]
        live = np.all(np.isfinite(q), axis=1)
        if live.sum() >= 2:
            distances, _ = cKDTree(q[live]).query(q[live], k=2)
            min_distance = min(min_distance, float(np.min(distances[:, 1])))
        if ens.dim == 1 and live.sum() >= 2:
            order = initial_order[live[initial_order]]
            if np.any(np.diff(q[order, 0]) <= 0):
                order_preserved = False
    return NonCrossingReport(
        applicable=True,
        min_distance=None if math.isinf(min_distance) else min_distance,
        order_preserved=order_preserved,
    )


class CirculationSeries(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    circulation: np.ndarray

    @property
    def drift(self) -> float:
        return float(np.max(np.abs(self.circulation - self.circulation[0])))


def loop_circulation(points: np.ndarray, velocity: np.ndarray, masses: Sequence[float]) -> float:
    """Trapezoid-rule closed line integral of m v . dl along a polygon."""
    m = np.asarray(masses)
    p = m * velocity
    dq = np.roll(points, -1, axis=0) - points
    p_mid = 0.5 * (p + np.roll(p, -1, axis=0))
    return float(np.sum(p_mid * dq))


def circle_loop(center: Sequence[float], radius: float, vertices: int = 256) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(vertices) / vertices
    return np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])


def kelvin_transport(source: VelocitySource, loop: np.ndarray, dt: float, t_final: Optional[float] = None,
                     t0: Optional[float] = None, record_every: int = 1) -> CirculationSeries:
    """Advect loop vertices as guided trajectories and track the loop circulation."""
    loop = np.asarray(loop, dtype=float)
    try:
        ens = integrate_guided(source, loop, dt, t_final=t_final, t0=t0, record_every=record_every)
    except InvalidInputError as e:
        indices = e.context.get("indices")
        if indices and "masked" in e.detail:
            raise NodeCaptureError(vertex=int(indices[0]), time_index=0) from e
        raise

    captured = [i for i, s in enumerate(ens.status) if s != TrajectoryStatus.ACTIVE]
    if captured:
        vertex = min(captured, key=lambda i: ens.stop_index[i])
        raise NodeCaptureError(vertex=vertex, time_index=int(ens.stop_index[vertex]) + 1)

    series = []
    for k, t in enumerate(ens.times):
        q = ens.positions[:, k, :]
        series.append(loop_circulation(q, source.velocity(q, float(t)), ens.masses))
    return CirculationSeries(times=ens.times, circulation=np.asarray(series))


def orbit_periods(ens: TrajectoryEnsemble, center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """Time for each planar trajectory to sweep 2*pi about `center` (NaN if it never does)."""
    c = np.asarray(center)
    periods = np.full(ens.n_particles, np.nan)
    for i in range(ens.n_particles):
        d = ens.positions[i] - c
        valid = np.all(np.isfinite(d), axis=1)
        angle = np.abs(np.unwrap(np.arctan2(d[valid, 1], d[valid, 0])) - np.arctan2(d[0, 1], d[0, 0]))
        times = ens.times[valid]
        k = np.flatnonzero(angle >= 2.0 * np.pi)
        if k.size and k[0] > 0:
            j = k[0]
            lam = (2.0 * np.pi - angle[j - 1]) / (angle[j] - angle[j - 1])
            periods[i] = times[j - 1] + lam * (times[j] - times[j - 1]) - times[0]
    return periods


def radius_drift(ens: TrajectoryEnsemble, center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    r = np.linalg.norm(ens.positions - np.asarray(center), axis=2)
    return np.nanmax(np.abs(r - r[:, :1]), axis=1)


# ============================================================
# Serialization
# ============================================================

def ensemble_to_csv(ens: TrajectoryEnsemble, coordinate_names: Optional[Sequence[str]] = None,
                    with_status: bool = True) -> str:
    names = list(coordinate_names or [f"q_{k + 1}" for k in range(ens.dim)])
    columns = ["trajectory_id", "t"] + names + (["status"] if with_status else [])
    rows = []
    for i in range(ens.n_particles):
        last = int(ens.stop_index[i])
        for k in range(last + 1):
            q = ens.positions[i, k]
            if not np.all(np.isfinite(q)):
                break
            row = [i, float(ens.times[k])] + [float(x) for x in q]
            if with_status:
                final = ens.status[i] if k == last else TrajectoryStatus.ACTIVE
                row.append(final.value)
            rows.append(row)
    return format_rows(columns, rows)


def ensemble_manifest(ens: TrajectoryEnsemble, seeds: Optional[Dict[str, int]] = None) -> dict:
    return {
        "integrator": ens.integrator.value,
        "config": ens.config,
        "source": ens.source,
        "masses": list(ens.masses),
        "particles": ens.n_particles,
        "records": int(ens.times.size),
        "status_counts": {s.value: ens.count(s) for s in TrajectoryStatus},
        "seeds": seeds or {},
    }


def ensemble_artifacts(ens: TrajectoryEnsemble, name: str = "trajectories.csv",
                       seeds: Optional[Dict[str, int]] = None,
                       coordinate_names: Optional[Sequence[str]] = None,
                       with_status: bool = True) -> List[Artifact]:
    manifest_name = name.rsplit(".", 1)[0] + "_manifest.json"
    return [
        Artifact(name=name, text=ensemble_to_csv(ens, coordinate_names, with_status)),
        Artifact(name=manifest_name, text=to_json(ensemble_manifest(ens, seeds))),
    ]


def write_ensemble(ens: TrajectoryEnsemble, directory: Union[str, Path], name: str = "trajectories.csv",
                   seeds: Optional[Dict[str, int]] = None) -> List[Path]:
    return write_artifacts(ensemble_artifacts(ens, name, seeds), Path(directory))
