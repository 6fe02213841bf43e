"""
Quantum-equilibrium machinery: Born sampling, the ratio f = rho/|psi|^2,
coarse-grained H-function and relaxation runs in a 2D box.

Convention: H_bar = sum_cells dGamma f_bar ln f_bar (relative entropy, >= 0),
so relaxation toward f = 1 means H_bar decreasing to 0.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special, stats

from qbohm.artifacts import Artifact, format_rows, to_json
from qbohm.config import config
from qbohm.enums import RelaxationStart, TrajectoryStatus
from qbohm.errors import InvalidInputError, ProposalTooLooseError
from qbohm.grid_core import ComplexField, GridSpec, Interpolator, RealField
from qbohm.madelung import node_mask_of
from qbohm.schrodinger import BoxSuperposition, box_superposition
from qbohm.trajectories import AnalyticField, integrate_guided

logger = logging.getLogger(__name__)

# Envelope headroom over the tabulated density maximum
ENVELOPE_FACTOR = 1.05
MIN_ACCEPTANCE = 1e-4
MIN_BATCH = 1024
NORMALIZATION_TOLERANCE = 1e-9


# ============================================================
# Densities
# ============================================================

class EnsembleDensity(BaseModel):
    """Either a weighted sample cloud or a density field on a grid."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    field: Optional[RealField] = None

    @model_validator(mode="after")
    def _check(self) -> "EnsembleDensity":
        if (self.positions is None) == (self.field is None):
            raise ValueError("exactly one of positions or field is required")
        if self.field is not None:
            values = self.field.values
            if np.any(values < 0):
                raise ValueError("density must be nonnegative")
            total = float(np.sum(values) * self.field.spec.cell_volume)
            if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValueError(f"density integrates to {total:.12g}, expected 1")
        else:
            if self.weights is None or len(self.weights) != len(self.positions):
                raise ValueError("one weight per sample is required")
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")
            total = float(np.sum(self.weights))
            if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValueError(f"weights sum to {total:.12g}, expected 1")
        return self

    @classmethod
    def from_samples(cls, positions: np.ndarray, weights: Optional[np.ndarray] = None) -> "EnsembleDensity":
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if weights is None:
            weights = np.full(len(positions), 1.0 / len(positions))
        return cls(positions=positions, weights=np.asarray(weights, dtype=float))

    @classmethod
    def from_field(cls, field: RealField) -> "EnsembleDensity":
        return cls(field=field)

    @classmethod
    def delta(cls, point: Sequence[float]) -> "EnsembleDensity":
        """Extreme non-equilibrium: every member at one point."""
        return cls.from_samples(np.asarray(point, dtype=float).reshape(1, -1))


# ============================================================
# Born sampling
# ============================================================

def _bounds(spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(spec.extent_min, dtype=float)
    hi = np.asarray(spec.extent_max, dtype=float)
    return lo, hi


def sample_density(density: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                   envelope: float, n: int, seed: int) -> np.ndarray:
    """
    Rejection sampling against the uniform proposal on the box [lo, hi].
    Batches have fixed sizes so the draw sequence depends only on the seed.
    """
    if n < 1:
        raise InvalidInputError("sample count must be at least 1", n=n)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    volume = float(np.prod(hi - lo))
    acceptance = 1.0 / (envelope * volume)
    if acceptance < MIN_ACCEPTANCE:
        raise ProposalTooLooseError(acceptance)

    rng = np.random.Generator(np.random.PCG64(seed))
    batch = max(MIN_BATCH, int(np.ceil(2 * n / acceptance)))
    accepted: List[np.ndarray] = []
    count = 0
    while count < n:
        proposals = lo + (hi - lo) * rng.random((batch, lo.size))
        u = rng.random(batch) * envelope
        keep = proposals[u < density(proposals)]
        accepted.append(keep)
        count += len(keep)
    return np.concatenate(accepted, axis=0)[:n]


def density_interpolator(psi: ComplexField) -> Callable[[np.ndarray], np.ndarray]:
    interp = Interpolator(RealField(spec=psi.spec, values=psi.density))
    return lambda q: np.clip(interp(q), 0.0, None)


def sample_born(psi: ComplexField, n: int, seed: int) -> np.ndarray:
    """n positions distributed as |psi|^2, shape (n, dim)."""
    if not abs(float(np.sum(psi.density) * psi.spec.cell_volume) - 1.0) <= 1e-6:
        raise InvalidInputError("Born sampling needs a normalized wave function")
    lo, hi = _bounds(psi.spec)
    envelope = ENVELOPE_FACTOR * float(np.max(psi.density))
    samples = sample_density(density_interpolator(psi), lo, hi, envelope, n, seed)
    logger.debug(f"Drew {n} Born samples (seed={seed})")
    return samples


# ============================================================
# f ratio and H-function
# ============================================================

def f_ratio(rho: RealField, psi: ComplexField) -> RealField:
    """rho / |psi|^2 pointwise; NaN on masked nodes."""
    if rho.spec != psi.spec:
        raise InvalidInputError("density and wave function must share a grid")
    weight = psi.density
    mask = node_mask_of(np.sqrt(weight))
    f = np.full(weight.shape, np.nan)
    f[~mask] = rho.values[~mask] / weight[~mask]
    return RealField(spec=psi.spec, values=f)


class CoarseGrain(BaseModel):
    """Per-cell averages of f with their |psi|^2 measure dGamma."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cells: Tuple[int, ...]
    dgamma: np.ndarray
    f_bar: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> "CoarseGrain":
        if abs(float(np.sum(self.dgamma)) - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError("cell measures must sum to 1")
        if np.any(self.f_bar < 0):
            raise ValueError("f_bar must be nonnegative")
        return self


def _cell_index(coords: np.ndarray, lo: float, hi: float, cells: int) -> np.ndarray:
    idx = np.floor((coords - lo) / (hi - lo) * cells).astype(int)
    return np.clip(idx, 0, cells - 1)


def _axis_weights(spec: GridSpec, axis: int, cells: int) -> np.ndarray:
    """
    W[j, i] = length of node i's quadrature interval inside cell j.
    Periodic nodes own [x_i, x_i + h); dirichlet nodes own [x_i - h/2, x_i + h/2]
    clipped to the walls, split between cells when a cell edge cuts it.
    """
    x = spec.coordinates()[axis]
    h = spec.spacing[axis]
    lo, hi = spec.extent_min[axis], spec.extent_max[axis]
    if spec.periodic:
        left, right = x, x + h
    else:
        left, right = np.maximum(x - h / 2, lo), np.minimum(x + h / 2, hi)
    edges = lo + (hi - lo) * np.arange(cells + 1) / cells
    overlap = np.minimum(right[None, :], edges[1:, None]) - np.maximum(left[None, :], edges[:-1, None])
    return np.clip(overlap, 0.0, None)


def _check_cells(spec: GridSpec, cells: Sequence[int]) -> Tuple[int, ...]:
    cells = tuple(int(c) for c in cells)
    if len(cells) != spec.dim or any(c < 1 for c in cells):
        raise InvalidInputError("one positive cell count per axis is required", cells=cells)
    if any(c > n for c, n in zip(cells, spec.points)):
        raise InvalidInputError("more cells than grid nodes along an axis", cells=cells)
    return cells


def _cell_integral(values: np.ndarray, spec: GridSpec, cells: Tuple[int, ...]) -> np.ndarray:
    out = values
    for axis in range(spec.dim):
        # contract the leading grid axis; cell axes accumulate at the back
        out = np.tensordot(out, _axis_weights(spec, axis, cells[axis]), axes=([0], [1]))
    return out


def cell_measure(psi: ComplexField, cells: Sequence[int]) -> np.ndarray:
    """dGamma per cell: integral of |psi|^2 over the cell, renormalized to sum 1."""
    cells = _check_cells(psi.spec, cells)
    weight = _cell_integral(psi.density, psi.spec, cells)
    return weight / np.sum(weight)


def coarse_grain_field(rho: RealField, psi: ComplexField, cells: Sequence[int]) -> CoarseGrain:
    """f_bar = integral of rho over the cell / integral of |psi|^2 over the cell."""
    cells = _check_cells(psi.spec, cells)
    raw = _cell_integral(psi.density, psi.spec, cells)
    total = float(np.sum(raw))
    dgamma = raw / total
    mass = _cell_integral(rho.values, psi.spec, cells) / total
    f_bar = np.divide(mass, dgamma, out=np.zeros_like(mass), where=dgamma > 0)
    return CoarseGrain(cells=cells, dgamma=dgamma, f_bar=f_bar)


def coarse_grain_samples(positions: np.ndarray, psi: ComplexField, cells: Sequence[int],
                         weights: Optional[np.ndarray] = None) -> CoarseGrain:
    """f_bar = weighted cell count / dGamma."""
    cells = _check_cells(psi.spec, cells)
    positions = np.atleast_2d(positions)
    live = np.all(np.isfinite(positions), axis=1)
    positions = positions[live]
    if weights is None:
        weights = np.full(len(positions), 1.0 / max(1, len(positions)))
    else:
        weights = np.asarray(weights, dtype=float)[live]
        weights = weights / np.sum(weights)
    lo, hi = _bounds(psi.spec)
    index = [_cell_index(positions[:, k], lo[k], hi[k], cells[k]) for k in range(psi.spec.dim)]
    flat = np.ravel_multi_index(index, cells)
    counts = np.bincount(flat, weights=weights, minlength=int(np.prod(cells))).reshape(cells)
    dgamma = cell_measure(psi, cells)
    f_bar = np.divide(counts, dgamma, out=np.zeros_like(counts), where=dgamma > 0)
    return CoarseGrain(cells=cells, dgamma=dgamma, f_bar=f_bar)


def h_function(f: Union[RealField, CoarseGrain], psi: Optional[ComplexField] = None) -> float:
    """H = sum dGamma f ln f with 0 ln 0 = 0."""
    if isinstance(f, CoarseGrain):
        return float(np.sum(f.dgamma * special.xlogy(f.f_bar, f.f_bar)))
    if psi is None:
        raise InvalidInputError("a fine-grained H needs the wave function for dGamma")
    dgamma = psi.density * psi.spec.cell_volume
    values = np.nan_to_num(f.values, nan=0.0)
    if np.any(values < 0):
        raise InvalidInputError("f must be nonnegative")
    return float(np.sum(dgamma * special.xlogy(values, values)))


def ks_distance(positions: np.ndarray, psi: ComplexField) -> float:
    """Largest one-sample Kolmogorov-Smirnov statistic over the coordinate marginals of |psi|^2."""
    positions = np.atleast_2d(positions)
    positions = positions[np.all(np.isfinite(positions), axis=1)]
    spec = psi.spec
    density = psi.density
    worst = 0.0
    for axis, x in enumerate(spec.coordinates()):
        others = tuple(a for a in range(spec.dim) if a != axis)
        marginal = np.sum(density, axis=others) if others else density
        if spec.periodic:
            # node masses spread over [x_i - h/2, x_i + h/2]
            h = spec.spacing[axis]
            edges = np.append(x - h / 2, x[-1] + h / 2)
            cdf_values = np.concatenate([[0.0], np.cumsum(marginal)])
        else:
            edges = x
            cdf_values = np.concatenate([[0.0], np.cumsum(0.5 * (marginal[1:] + marginal[:-1]))])
        cdf_values = cdf_values / cdf_values[-1]
        statistic = stats.ks_1samp(
            positions[:, axis], lambda s, e=edges, c=cdf_values: np.interp(s, e, c)
        ).statistic
        worst = max(worst, float(statistic))
    return worst


def ks_threshold(n: int, level: float = 0.01) -> float:
    """Asymptotic one-sample KS critical value (1.63/sqrt(n) at the 1% level)."""
    return float(stats.kstwobign.isf(level) / np.sqrt(n))


# ============================================================
# Box relaxation
# ============================================================

class RelaxationSetup(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: Tuple[int, int] = (4, 4)
    box: Tuple[float, float] = (1.0, 1.0)
    mass: float = Field(1.0, gt=0)
    start: RelaxationStart = RelaxationStart.GROUND_MODE
    cells: Tuple[int, int] = (16, 16)
    n_traj: int = Field(100_000, ge=1)
    # Defaults to two box periods
    t_final: Optional[float] = Field(None, gt=0)
    dt: float = Field(2e-3, gt=0)
    n_outputs: int = Field(5, ge=1)
    quadrature_points: int = Field(129, ge=9)
    seed: int = Field(7, ge=0, lt=2 ** 64)

    @model_validator(mode="after")
    def _check_modes(self) -> "RelaxationSetup":
        if self.modes[0] * self.modes[1] < 4:
            raise ValueError("relaxation needs a superposition of at least 4 eigenmodes")
        if any(c > self.quadrature_points - 1 for c in self.cells):
            raise ValueError("cells must be coarser than the quadrature grid")
        return self


class RelaxationReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    h_bar: np.ndarray
    ks: np.ndarray
    captured_count: np.ndarray
    warnings: List[str] = []
    config: Dict = {}

    def to_csv(self) -> str:
        rows = zip(self.times, self.h_bar, self.ks, self.captured_count)
        return format_rows(["t", "H_bar", "KS", "captured_count"], rows)

    def artifacts(self, name: str = "relaxation_report.csv") -> List[Artifact]:
        manifest = {"config": self.config, "warnings": self.warnings, "outputs": int(self.times.size)}
        return [
            Artifact(name=name, text=self.to_csv()),
            Artifact(name=name.rsplit(".", 1)[0] + "_manifest.json", text=to_json(manifest)),
        ]


def box_flow(box: BoxSuperposition, node_threshold: Optional[float] = None) -> AnalyticField:
    """Guidance field of an exactly evolved box superposition."""
    threshold = config.NODE_THRESHOLD if node_threshold is None else node_threshold
    # |psi| is bounded by the sum of mode amplitudes
    peak = 2.0 / np.sqrt(box.box[0] * box.box[1]) * float(np.sum(np.abs(box.coefficients)))
    return AnalyticField(
        name="box-superposition",
        dim=2,
        velocity_fn=box.velocity,
        node_fn=lambda q, t: np.abs(box.psi(q, t)) < threshold * peak,
        bounds=((0.0, 0.0), tuple(box.box)),
        masses=(box.mass, box.mass),
        params=box.descriptor(),
    )


def ground_mode_density(box: BoxSuperposition) -> Callable[[np.ndarray], np.ndarray]:
    lx, ly = box.box

    def density(q: np.ndarray) -> np.ndarray:
        phi = 2.0 / np.sqrt(lx * ly) * np.sin(np.pi * q[:, 0] / lx) * np.sin(np.pi * q[:, 1] / ly)
        return phi ** 2

    return density


def _initial_samples(setup: RelaxationSetup, box: BoxSuperposition, spec: GridSpec) -> np.ndarray:
    lo, hi = np.zeros(2), np.asarray(box.box)
    if setup.start == RelaxationStart.EQUILIBRIUM:
        density = lambda q: box.density(q, 0.0)
        peak = float(np.max(box.field(spec, 0.0).density))
    else:
        density = ground_mode_density(box)
        peak = 4.0 / (box.box[0] * box.box[1])
    return sample_density(density, lo, hi, ENVELOPE_FACTOR * peak, setup.n_traj, setup.seed)


def run_relaxation(setup: RelaxationSetup, box: Optional[BoxSuperposition] = None) -> RelaxationReport:
    """
    Sample the start distribution, transport it with guided trajectories and
    track the coarse-grained H-function and KS distance at the output times.
    """
    box = box or box_superposition(setup.modes, setup.box, setup.seed, setup.mass)
    spec = box.grid((setup.quadrature_points, setup.quadrature_points))
    t_final = setup.t_final or 2.0 * box.period
    steps = max(1, int(np.ceil(t_final / setup.dt - 1e-9)))
    record_every = max(1, steps // setup.n_outputs)

    starts = _initial_samples(setup, box, spec)
    logger.info(
        f"Relaxation run: {len(box.modes)} modes, start={setup.start.value}, "
        f"{setup.n_traj} trajectories to t={t_final:.4g}"
    )
    ens = integrate_guided(box_flow(box), starts, setup.dt, t_final=t_final, record_every=record_every)

    h_bar, ks, captured = [], [], []
    for k, t in enumerate(ens.times):
        psi_t = box.field(spec, float(t))
        positions = ens.positions[:, k, :]
        h_bar.append(h_function(coarse_grain_samples(positions, psi_t, setup.cells)))
        ks.append(ks_distance(positions, psi_t))
        captured.append(int(np.sum(~np.all(np.isfinite(positions), axis=1))))

    warnings = []
    total_captured = ens.count(TrajectoryStatus.NODE_CAPTURED)
    if total_captured > 0.01 * setup.n_traj:
        message = f"{total_captured} of {setup.n_traj} trajectories node-captured"
        logger.warning(message)
        warnings.append(message)

    return RelaxationReport(
        times=ens.times,
        h_bar=np.asarray(h_bar),
        ks=np.asarray(ks),
        captured_count=np.asarray(captured),
        warnings=warnings,
        config={**setup.model_dump(mode="json"), "t_final": t_final, "superposition": box.descriptor()},
    )


# ============================================================
# f along trajectories
# ============================================================

class FlowConstantReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    f_values: np.ndarray

    @property
    def max_relative_drift(self) -> float:
        ref = self.f_values[:, :1]
        return float(np.nanmax(np.abs(self.f_values - ref) / ref))


def flow_constant_drift(box: BoxSuperposition, rho0: Callable[[np.ndarray], np.ndarray], starts: np.ndarray,
                        dt: float, t_final: float, record_every: int = 1,
                        jacobian_step: float = 1e-5) -> FlowConstantReport:
    """
    f_t(q_t) = rho0(q0) / (J_t |psi_t(q_t)|^2) along guided trajectories,
    with the flow-map Jacobian J_t from central differences of neighbouring starts.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n, dim = starts.shape
    offsets = [np.zeros(dim)]
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = jacobian_step
        offsets += [e, -e]
    cloud = np.concatenate([starts + o for o in offsets], axis=0)
    ens = integrate_guided(box_flow(box), cloud, dt, t_final=t_final, record_every=record_every)
    q = ens.positions.reshape(len(offsets), n, ens.times.size, dim)

    rho_start = rho0(starts)
    f = np.empty((n, ens.times.size))
    for k, t in enumerate(ens.times):
        columns = [(q[1 + 2 * a, :, k, :] - q[2 + 2 * a, :, k, :]) / (2 * jacobian_step) for a in range(dim)]
        jacobian = np.linalg.det(np.stack(columns, axis=2))
        f[:, k] = rho_start / (jacobian * box.density(q[0, :, k, :], float(t)))
    return FlowConstantReport(times=ens.times, f_values=f)
