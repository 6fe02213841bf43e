"""
Time evolution of wave functions.

Quantum mode integrates i dpsi/dt = -lap(psi)/2m + V psi with Strang
split-step Fourier. Classical mode integrates the nonlinear equation whose
phase obeys the classical Hamilton-Jacobi equation: the quantum potential
built from the current amplitude is subtracted inside the potential steps.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import fft
from tqdm import tqdm

from qbohm.artifacts import Artifact, to_json, write_artifacts
from qbohm.config import config
from qbohm.enums import Boundary, EvolutionMode
from qbohm.errors import InvalidInputError
from qbohm.grid_core import (
    ComplexField,
    GridSpec,
    RealField,
    derivative_values,
    field_artifacts,
    norm,
    wavenumbers,
)
from qbohm.madelung import node_mask_of

logger = logging.getLogger(__name__)

# Fraction of initially resolved nodes allowed to collapse before warning
CAUSTIC_FRACTION = 0.10


class EvolutionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dt: float = Field(..., gt=0)
    steps: int = Field(..., ge=1)
    potential: Optional[RealField] = None
    mode: EvolutionMode = EvolutionMode.QUANTUM
    classical_a: float = Field(1.0, gt=0)
    record_every: int = Field(1, ge=1)
    # Integrate toward negative times
    reverse: bool = False
    progress: bool = False

    @property
    def signed_dt(self) -> float:
        return -self.dt if self.reverse else self.dt

    def echo(self) -> dict:
        return {
            "dt": self.dt,
            "steps": self.steps,
            "mode": self.mode.value,
            "classical_a": self.classical_a,
            "record_every": self.record_every,
            "reverse": self.reverse,
            "potential_ref": None if self.potential is None else "grid",
        }


class FieldSequence(BaseModel):
    """Snapshots of an evolution with their times and norms."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: List[float]
    fields: List[ComplexField]
    norms: List[float]
    warnings: List[str] = []
    config: dict = {}

    @property
    def spec(self) -> GridSpec:
        return self.fields[0].spec

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def final(self) -> ComplexField:
        return self.fields[-1]


# ============================================================
# Split-step kernels
# ============================================================

def _check_spectral_grid(spec: GridSpec) -> None:
    if not spec.spectral_ready:
        raise InvalidInputError(
            "split-step evolution needs a periodic power-of-two grid; "
            "use a larger periodic domain with an absorbing margin instead",
            boundary=spec.boundary.value,
            points=spec.points,
        )


def _k_squared(spec: GridSpec) -> np.ndarray:
    axes = [wavenumbers(spec, axis) for axis in range(spec.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return sum(k ** 2 for k in mesh)


def _classical_quantum_potential(values: np.ndarray, spec: GridSpec, mass: float, a: float,
                                 mask: np.ndarray) -> np.ndarray:
    """-(a^2/2m) lap(R)/R, zero on collapsed nodes."""
    R = np.abs(values)
    lap = sum(derivative_values(R, spec, axis, 2) for axis in range(spec.dim))
    out = np.zeros_like(R)
    out[~mask] = -(a ** 2) * lap[~mask] / (2.0 * mass * R[~mask])
    return out


class _SplitStepper:
    """One Strang step: half potential, full kinetic, half potential."""

    def __init__(self, psi0: ComplexField, cfg: EvolutionConfig):
        self.spec = psi0.spec
        self.mass = psi0.mass
        self.cfg = cfg
        self.a = cfg.classical_a if cfg.mode == EvolutionMode.CLASSICAL else 1.0
        dt = cfg.signed_dt
        self.V = np.zeros(self.spec.shape) if cfg.potential is None else np.asarray(cfg.potential.values)
        self.kinetic = np.exp(-1j * self.a * _k_squared(self.spec) * dt / (2.0 * self.mass))
        self.half_static = np.exp(-1j * self.V * dt / (2.0 * self.a))
        self.dt = dt
        self.initial_resolved = ~node_mask_of(np.abs(psi0.values))
        self.caustic_warned = False

    def _half_potential(self, values: np.ndarray) -> np.ndarray:
        if self.cfg.mode == EvolutionMode.QUANTUM:
            return values * self.half_static
        mask = node_mask_of(np.abs(values))
        vq = _classical_quantum_potential(values, self.spec, self.mass, self.a, mask)
        return values * np.exp(-1j * (self.V - vq) * self.dt / (2.0 * self.a))

    def step(self, values: np.ndarray) -> np.ndarray:
        values = self._half_potential(values)
        values = fft.ifftn(fft.fftn(values, workers=config.THREADS) * self.kinetic, workers=config.THREADS)
        return self._half_potential(values)

    def check_caustic(self, values: np.ndarray, time: float) -> Optional[str]:
        if self.caustic_warned or self.cfg.mode != EvolutionMode.CLASSICAL:
            return None
        collapsed = node_mask_of(np.abs(values)) & self.initial_resolved
        resolved = int(self.initial_resolved.sum())
        if resolved and collapsed.sum() > CAUSTIC_FRACTION * resolved:
            self.caustic_warned = True
            message = f"caustic formation at t={time:.6g} ({int(collapsed.sum())} nodes collapsed)"
            logger.warning(message)
            return message
        return None


def _evolve(psi0: ComplexField, cfg: EvolutionConfig) -> FieldSequence:
    _check_spectral_grid(psi0.spec)
    if cfg.potential is not None and cfg.potential.spec != psi0.spec:
        raise InvalidInputError("potential and wave function live on different grids")

    stepper = _SplitStepper(psi0, cfg)
    values = np.array(psi0.values)
    times, fields, norms, warnings = [0.0], [psi0], [norm(psi0)], []

    logger.info(
        f"Evolving {cfg.mode.value} field on {psi0.spec.points} nodes: "
        f"{cfg.steps} steps of dt={stepper.dt:g}"
    )
    for n in tqdm(range(1, cfg.steps + 1), disable=not cfg.progress, desc=f"evolve[{cfg.mode.value}]"):
        values = stepper.step(values)
        t = n * stepper.dt
        message = stepper.check_caustic(values, t)
        if message:
            warnings.append(message)
        if n % cfg.record_every == 0 or n == cfg.steps:
            snapshot = ComplexField(spec=psi0.spec, values=values, mass=psi0.mass,
                                    potential_ref=psi0.potential_ref)
            times.append(t)
            fields.append(snapshot)
            norms.append(norm(snapshot))

    drift = abs(norms[-1] - norms[0])
    logger.debug(f"Norm drift over run: {drift:.3e}")
    return FieldSequence(times=times, fields=fields, norms=norms, warnings=warnings, config=cfg.echo())


def evolve_quantum(psi0: ComplexField, cfg: EvolutionConfig) -> FieldSequence:
    if cfg.mode != EvolutionMode.QUANTUM:
        raise InvalidInputError("evolve_quantum needs mode=quantum", mode=cfg.mode.value)
    return _evolve(psi0, cfg)


def evolve_classical(psi0: ComplexField, cfg: EvolutionConfig) -> FieldSequence:
    if cfg.mode != EvolutionMode.CLASSICAL:
        raise InvalidInputError("evolve_classical needs mode=classical", mode=cfg.mode.value)
    return _evolve(psi0, cfg)


def evolve(psi0: ComplexField, cfg: EvolutionConfig) -> FieldSequence:
    return _evolve(psi0, cfg)


def default_time_step(spec: GridSpec, potential: Optional[RealField] = None, mass: float = 1.0,
                      a: float = 1.0) -> float:
    """Largest dt with dt*max|V| < 0.1 and dt*a*k_max^2/2m < 0.5."""
    k_max_sq = sum((np.pi / h) ** 2 for h in spec.spacing)
    limits = [0.5 * 2.0 * mass / (a * k_max_sq)]
    if potential is not None:
        v_max = float(np.max(np.abs(potential.values)))
        if v_max > 0:
            limits.append(0.1 * a / v_max)
    return 0.99 * min(limits)


# ============================================================
# Diagnostics
# ============================================================

def stationary_residual(psi: ComplexField, V: Optional[RealField], E: float) -> float:
    """max |(-lap/2m + V - E) psi| over unmasked nodes."""
    values = psi.values
    lap = sum(derivative_values(values, psi.spec, axis, 2) for axis in range(psi.spec.dim))
    potential = 0.0 if V is None else V.values
    residual = -lap / (2.0 * psi.mass) + (potential - E) * values
    mask = node_mask_of(np.abs(values))
    if np.all(mask):
        return 0.0
    return float(np.max(np.abs(residual[~mask])))


def probability_current(psi: ComplexField) -> Tuple[np.ndarray, ...]:
    """rho v = Im(conj(psi) grad psi)/m, regular through nodes."""
    return tuple(
        np.imag(np.conj(psi.values) * derivative_values(psi.values, psi.spec, axis)) / psi.mass
        for axis in range(psi.spec.dim)
    )


def continuity_residual(seq: FieldSequence) -> float:
    """max |d_t rho + div(rho v)| with central differences in time over interior snapshots."""
    if len(seq) < 3:
        raise InvalidInputError("continuity check needs at least 3 snapshots", snapshots=len(seq))
    times = np.asarray(seq.times)
    spacing = np.diff(times)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        raise InvalidInputError("continuity check needs uniformly spaced snapshots")
    spec = seq.spec
    residual = 0.0
    for n in range(1, len(seq) - 1):
        drho = (seq.fields[n + 1].density - seq.fields[n - 1].density) / (times[n + 1] - times[n - 1])
        current = probability_current(seq.fields[n])
        divergence = sum(derivative_values(j, spec, axis) for axis, j in enumerate(current))
        residual = max(residual, float(np.max(np.abs(drho + divergence))))
    return residual


def sequence_artifacts(seq: FieldSequence, prefix: str = "snapshot") -> List[Artifact]:
    """One CSV + sidecar per snapshot plus a manifest with times, config echo and norm series."""
    artifacts = []
    files = []
    for index, field in enumerate(seq.fields):
        name = f"{prefix}_{index:04d}.csv"
        artifacts.extend(field_artifacts(field, name))
        files.append(name)
    manifest = {
        "times": seq.times,
        "norms": seq.norms,
        "files": files,
        "config": seq.config,
        "warnings": seq.warnings,
        "spec": seq.spec.model_dump(mode="json"),
    }
    artifacts.append(Artifact(name=f"{prefix}_sequence.json", text=to_json(manifest)))
    return artifacts


def write_sequence(seq: FieldSequence, directory: Union[str, Path], prefix: str = "snapshot") -> List[Path]:
    return write_artifacts(sequence_artifacts(seq, prefix), Path(directory))


# ============================================================
# Exact box eigenmode evolution
# ============================================================

class BoxSuperposition(BaseModel):
    """
    Superposition of hard-wall eigenmodes of the box [0, Lx] x [0, Ly],
    evolved exactly: psi(q, t) = sum_j c_j phi_j(q) exp(-i E_j t).
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    modes: Tuple[Tuple[int, int], ...]
    coefficients: np.ndarray
    box: Tuple[float, float] = (1.0, 1.0)
    mass: float = Field(1.0, gt=0)

    @field_validator("coefficients", mode="before")
    @classmethod
    def _as_complex(cls, v):
        return np.array(v, dtype=complex)

    @model_validator(mode="after")
    def _check(self) -> "BoxSuperposition":
        if len(self.modes) != self.coefficients.size:
            raise ValueError("one coefficient per mode is required")
        if any(n < 1 or m < 1 for n, m in self.modes):
            raise ValueError("mode quantum numbers start at 1")
        total = float(np.sum(np.abs(self.coefficients) ** 2))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"coefficients must be normalized, got sum |c|^2 = {total:.12g}")
        return self

    @property
    def energies(self) -> np.ndarray:
        lx, ly = self.box
        n = np.array([m[0] for m in self.modes], dtype=float)
        m = np.array([m[1] for m in self.modes], dtype=float)
        return np.pi ** 2 * (n ** 2 / lx ** 2 + m ** 2 / ly ** 2) / (2.0 * self.mass)

    @property
    def period(self) -> float:
        """Recurrence time 4mL^2/pi of a square box of the larger side L."""
        return 4.0 * self.mass * max(self.box) ** 2 / np.pi

    def _mode_factors(self, points: np.ndarray):
        """sin/cos of every mode along each axis; trig is evaluated once per distinct quantum number."""
        lx, ly = self.box
        n = np.array([m[0] for m in self.modes])
        m = np.array([m[1] for m in self.modes])
        kx = n * np.pi / lx
        ky = m * np.pi / ly
        norm_const = 2.0 / np.sqrt(lx * ly)
        nx_levels, nx_index = np.unique(n, return_inverse=True)
        ny_levels, ny_index = np.unique(m, return_inverse=True)
        ax = np.outer(points[:, 0], nx_levels * np.pi / lx)
        ay = np.outer(points[:, 1], ny_levels * np.pi / ly)
        sx, cx = np.sin(ax)[:, nx_index], np.cos(ax)[:, nx_index]
        sy, cy = np.sin(ay)[:, ny_index], np.cos(ay)[:, ny_index]
        return norm_const, kx, ky, sx, cx, sy, cy

    def _weights(self, t: float) -> np.ndarray:
        return self.coefficients * np.exp(-1j * self.energies * t)

    def psi(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.atleast_2d(points)
        c, kx, ky, sx, cx, sy, cy = self._mode_factors(points)
        return c * np.einsum("pj,j->p", sx * sy, self._weights(t))

    def gradient(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.atleast_2d(points)
        c, kx, ky, sx, cx, sy, cy = self._mode_factors(points)
        w = self._weights(t)
        gx = c * np.einsum("pj,j->p", kx * cx * sy, w)
        gy = c * np.einsum("pj,j->p", ky * sx * cy, w)
        return np.stack([gx, gy], axis=1)

    def density(self, points: np.ndarray, t: float) -> np.ndarray:
        return np.abs(self.psi(points, t)) ** 2

    def velocity(self, points: np.ndarray, t: float) -> np.ndarray:
        psi = self.psi(points, t)
        grad = self.gradient(points, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.imag(grad / psi[:, None]) / self.mass

    def grid(self, points: Sequence[int]) -> GridSpec:
        """Dirichlet grid covering the box, walls included."""
        return GridSpec(dim=2, extent_min=(0.0, 0.0), extent_max=tuple(self.box),
                        points=tuple(points), boundary=Boundary.DIRICHLET)

    def field(self, spec: GridSpec, t: float) -> ComplexField:
        mesh = spec.mesh()
        points = np.column_stack([m.ravel() for m in mesh])
        return ComplexField(spec=spec, values=self.psi(points, t).reshape(spec.shape), mass=self.mass)

    def descriptor(self) -> dict:
        return {
            "name": "box-superposition",
            "modes": [list(m) for m in self.modes],
            "coefficients_re": self.coefficients.real.tolist(),
            "coefficients_im": self.coefficients.imag.tolist(),
            "box": list(self.box),
            "mass": self.mass,
        }


def box_superposition(modes: Tuple[int, int] = (4, 4), box: Tuple[float, float] = (1.0, 1.0),
                      seed: int = 0, mass: float = 1.0) -> BoxSuperposition:
    """Equal-amplitude superposition of the lowest modes[0] x modes[1] eigenmodes with seeded phases."""
    nx, ny = modes
    labels = tuple((n, m) for n in range(1, nx + 1) for m in range(1, ny + 1))
    rng = np.random.Generator(np.random.PCG64(seed))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(labels))
    coefficients = np.exp(1j * phases) / np.sqrt(len(labels))
    return BoxSuperposition(modes=labels, coefficients=coefficients, box=box, mass=mass)
