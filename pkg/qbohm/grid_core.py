"""
Uniform-grid field containers, derivatives and interpolation.

Natural units (hbar = 1). Periodic axes exclude the right endpoint, dirichlet
axes include both endpoints. Periodic derivatives are spectral, dirichlet
derivatives use 4th-order central differences with one-sided 4th-order
stencils on the two outermost nodes of each edge.
"""
import json
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import fft, ndimage
from scipy.interpolate import RectBivariateSpline, make_interp_spline

from qbohm.artifacts import Artifact, format_table, to_json
from qbohm.config import config
from qbohm.enums import Boundary
from qbohm.errors import InvalidInputError

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-9
# Fractional-index distance under which a query snaps to the stored node value.
NODE_SNAP = 1e-9


# ============================================================
# Grid description
# ============================================================

class GridSpec(BaseModel):
    """Uniform grid over a 1D or 2D box."""
    model_config = ConfigDict(frozen=True)

    dim: int = Field(..., ge=1, le=2)
    extent_min: Tuple[float, ...]
    extent_max: Tuple[float, ...]
    points: Tuple[int, ...]
    boundary: Boundary = Boundary.PERIODIC

    @model_validator(mode="after")
    def _check_axes(self) -> "GridSpec":
        for name in ("extent_min", "extent_max", "points"):
            if len(getattr(self, name)) != self.dim:
                raise ValueError(f"{name} must have {self.dim} entries")
        for lo, hi in zip(self.extent_min, self.extent_max):
            if not hi > lo:
                raise ValueError("extent_max must exceed extent_min on every axis")
        if any(n < 8 for n in self.points):
            raise ValueError("at least 8 points per axis are required")
        return self

    @classmethod
    def line(cls, lo: float, hi: float, n: int, boundary: Boundary = Boundary.PERIODIC) -> "GridSpec":
        return cls(dim=1, extent_min=(lo,), extent_max=(hi,), points=(n,), boundary=boundary)

    @classmethod
    def square(cls, lo: float, hi: float, n: int, boundary: Boundary = Boundary.PERIODIC) -> "GridSpec":
        return cls(dim=2, extent_min=(lo, lo), extent_max=(hi, hi), points=(n, n), boundary=boundary)

    @property
    def periodic(self) -> bool:
        return self.boundary == Boundary.PERIODIC

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> Tuple[float, ...]:
        if self.periodic:
            return tuple((hi - lo) / n for lo, hi, n in zip(self.extent_min, self.extent_max, self.points))
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.extent_min, self.extent_max, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def spectral_ready(self) -> bool:
        return self.periodic and all(n & (n - 1) == 0 for n in self.points)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(lo + h * np.arange(n) for lo, h, n in zip(self.extent_min, self.spacing, self.points))

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.coordinates(), indexing="ij"))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map positions of shape (n, dim) back into a periodic domain."""
        points = np.asarray(points, dtype=float)
        if not self.periodic:
            return points
        lo = np.asarray(self.extent_min)
        length = np.asarray(self.extent_max) - lo
        return lo + np.mod(points - lo, length)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.periodic:
            return np.all(np.isfinite(points), axis=1)
        lo = np.asarray(self.extent_min)
        hi = np.asarray(self.extent_max)
        return np.all((points >= lo) & (points <= hi), axis=1)


# ============================================================
# Field containers
# ============================================================

class _Field(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: GridSpec
    values: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.size != self.spec.size:
            raise ValueError(
                f"value array has {self.values.size} entries, grid has {self.spec.size}"
            )
        if self.values.shape != self.spec.shape:
            object.__setattr__(self, "values", self.values.reshape(self.spec.shape))
        self.values.setflags(write=False)
        return self


class RealField(_Field):
    """Real scalar per node."""

    @field_validator("values", mode="before")
    @classmethod
    def _as_real(cls, v):
        return np.array(v, dtype=float)


class ComplexField(_Field):
    """Discretized wave function."""
    mass: float = Field(1.0, gt=0)
    potential_ref: Optional[str] = None
    normalized: bool = False

    @field_validator("values", mode="before")
    @classmethod
    def _as_complex(cls, v):
        return np.array(v, dtype=complex)

    @model_validator(mode="after")
    def _check_norm(self):
        if self.normalized:
            total = norm(self)
            if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValueError(f"field flagged normalized but integrates to {total:.12g}")
        return self

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


AnyField = Union[RealField, ComplexField]


def real_field(spec: GridSpec, fn: Callable[..., np.ndarray]) -> RealField:
    return RealField(spec=spec, values=np.broadcast_to(fn(*spec.mesh()), spec.shape))


def complex_field(spec: GridSpec, fn: Callable[..., np.ndarray], mass: float = 1.0,
                  potential_ref: Optional[str] = None, normalize_values: bool = False) -> ComplexField:
    values = np.broadcast_to(np.asarray(fn(*spec.mesh()), dtype=complex), spec.shape).copy()
    if normalize_values:
        values = values / np.sqrt(np.sum(np.abs(values) ** 2) * spec.cell_volume)
    return ComplexField(spec=spec, values=values, mass=mass, potential_ref=potential_ref,
                        normalized=normalize_values)


def norm(psi: ComplexField) -> float:
    """Integral of |psi|^2 over the grid."""
    return float(np.sum(np.abs(psi.values) ** 2) * psi.spec.cell_volume)


def normalize(psi: ComplexField) -> ComplexField:
    values = psi.values / np.sqrt(norm(psi))
    return ComplexField(spec=psi.spec, values=values, mass=psi.mass,
                        potential_ref=psi.potential_ref, normalized=True)


def with_values(field: AnyField, values: np.ndarray) -> AnyField:
    """Same field kind and metadata, new node values."""
    if isinstance(field, ComplexField):
        return ComplexField(spec=field.spec, values=values, mass=field.mass,
                            potential_ref=field.potential_ref)
    return RealField(spec=field.spec, values=values)


# ============================================================
# Derivatives
# ============================================================

def _check_axis(spec: GridSpec, axis: int) -> None:
    if not 0 <= axis < spec.dim:
        raise InvalidInputError(f"axis {axis} out of range for a {spec.dim}D grid", axis=axis)


def _check_spectral(spec: GridSpec) -> None:
    if not spec.spectral_ready:
        raise InvalidInputError(
            f"spectral derivatives need a power-of-two point count, got {spec.points}",
            points=spec.points,
        )


def wavenumbers(spec: GridSpec, axis: int) -> np.ndarray:
    return 2.0 * np.pi * fft.fftfreq(spec.points[axis], d=spec.spacing[axis])


def _broadcast_along(k: np.ndarray, axis: int, dim: int) -> np.ndarray:
    shape = [1] * dim
    shape[axis] = k.size
    return k.reshape(shape)


def _fd_first(f: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def _fd_second(f: np.ndarray, h: float) -> np.ndarray:
    h2 = 12 * h * h
    d = np.empty_like(f)
    d[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / h2
    d[0] = (45 * f[0] - 154 * f[1] + 214 * f[2] - 156 * f[3] + 61 * f[4] - 10 * f[5]) / h2
    d[1] = (10 * f[0] - 15 * f[1] - 4 * f[2] + 14 * f[3] - 6 * f[4] + f[5]) / h2
    d[-1] = (45 * f[-1] - 154 * f[-2] + 214 * f[-3] - 156 * f[-4] + 61 * f[-5] - 10 * f[-6]) / h2
    d[-2] = (10 * f[-1] - 15 * f[-2] - 4 * f[-3] + 14 * f[-4] - 6 * f[-5] + f[-6]) / h2
    return d


def _spectral(values: np.ndarray, spec: GridSpec, axis: int, order: int) -> np.ndarray:
    k = wavenumbers(spec, axis)
    n = spec.points[axis]
    if order == 1:
        multiplier = 1j * k
        multiplier[n // 2] = 0.0  # Nyquist mode has no odd derivative
    else:
        multiplier = -(k ** 2)
    multiplier = _broadcast_along(multiplier, axis, spec.dim)
    transformed = fft.fft(values, axis=axis, workers=config.THREADS)
    out = fft.ifft(transformed * multiplier, axis=axis, workers=config.THREADS)
    return out


def _derivative(values: np.ndarray, spec: GridSpec, axis: int, order: int) -> np.ndarray:
    if spec.periodic:
        _check_spectral(spec)
        out = _spectral(values, spec, axis, order)
        return out if np.iscomplexobj(values) else out.real
    stencil = _fd_first if order == 1 else _fd_second
    moved = np.moveaxis(values, axis, 0)
    return np.moveaxis(stencil(moved, spec.spacing[axis]), 0, axis)


def derivative_values(values: np.ndarray, spec: GridSpec, axis: int, order: int = 1) -> np.ndarray:
    """Raw-array derivative used by modules that work on intermediate arrays."""
    _check_axis(spec, axis)
    return _derivative(np.asarray(values), spec, axis, order)


def gradient(field: AnyField, axis: int) -> AnyField:
    """d(field)/d(axis); spectral on periodic grids, 4th-order differences otherwise."""
    _check_axis(field.spec, axis)
    return with_values(field, _derivative(field.values, field.spec, axis, 1))


def laplacian(field: AnyField) -> AnyField:
    total = sum(_derivative(field.values, field.spec, axis, 2) for axis in range(field.spec.dim))
    return with_values(field, total)


# ============================================================
# Interpolation
# ============================================================

class Interpolator:
    """
    Cubic (1D) / bicubic (2D) interpolant of a field, built once and
    evaluated at many points. Queries that land on a node return the stored
    value unchanged.
    """

    def __init__(self, field: AnyField):
        self.spec = field.spec
        self.values = field.values
        self.is_complex = np.iscomplexobj(field.values)
        parts = [field.values.real, field.values.imag] if self.is_complex else [field.values]
        self._lo = np.asarray(self.spec.extent_min)
        self._h = np.asarray(self.spec.spacing)
        if self.spec.periodic:
            self._coefficients = [ndimage.spline_filter(p, order=3, mode="grid-wrap") for p in parts]
        else:
            axes = self.spec.coordinates()
            if self.spec.dim == 1:
                self._splines = [make_interp_spline(axes[0], p, k=3) for p in parts]
            else:
                self._splines = [RectBivariateSpline(axes[0], axes[1], p, kx=3, ky=3, s=0) for p in parts]

    def _evaluate(self, points: np.ndarray) -> list:
        if self.spec.periodic:
            index = ((points - self._lo) / self._h).T
            return [
                ndimage.map_coordinates(c, index, order=3, mode="grid-wrap", prefilter=False)
                for c in self._coefficients
            ]
        if self.spec.dim == 1:
            return [s(points[:, 0]) for s in self._splines]
        return [s.ev(points[:, 0], points[:, 1]) for s in self._splines]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.spec.dim:
            points = points.reshape(-1, self.spec.dim)
        if not self.spec.periodic:
            inside = self.spec.contains(points)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise InvalidInputError(
                    f"point {points[bad].tolist()} outside dirichlet domain",
                    point=points[bad].tolist(),
                )
        else:
            points = self.spec.wrap(points)

        parts = self._evaluate(points)
        out = parts[0] + 1j * parts[1] if self.is_complex else parts[0]

        fractional = (points - self._lo) / self._h
        nearest = np.rint(fractional)
        on_node = np.all(np.abs(fractional - nearest) < NODE_SNAP, axis=1)
        if np.any(on_node):
            idx = nearest[on_node].astype(int)
            if self.spec.periodic:
                idx = np.mod(idx, np.asarray(self.spec.points))
            else:
                idx = np.clip(idx, 0, np.asarray(self.spec.points) - 1)
            out = np.array(out)
            out[on_node] = self.values[tuple(idx.T)]
        return out


def interpolate(field: AnyField, point: Sequence[float]) -> Union[float, complex]:
    """Value of the field at a single off-grid point."""
    value = Interpolator(field)(np.asarray(point, dtype=float).reshape(1, -1))[0]
    return complex(value) if np.iscomplexobj(value) else float(value)


# ============================================================
# Serialization
# ============================================================

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def field_to_csv(field: AnyField) -> str:
    """One row per node: coordinates, re, im (17 significant digits)."""
    coords = [c.ravel() for c in field.spec.mesh()]
    values = np.asarray(field.values).ravel()
    columns = [f"x{i + 1}" for i in range(field.spec.dim)] + ["re", "im"]
    table = np.column_stack(coords + [values.real, np.imag(values)])
    return format_table(columns, table)


def field_sidecar(field: AnyField) -> dict:
    meta = {
        "kind": "complex" if isinstance(field, ComplexField) else "real",
        "spec": field.spec.model_dump(mode="json"),
    }
    if isinstance(field, ComplexField):
        meta["mass"] = field.mass
        meta["potential_ref"] = field.potential_ref
    return meta


def field_artifacts(field: AnyField, name: str) -> List[Artifact]:
    """CSV and JSON sidecar as in-memory artifacts."""
    return [
        Artifact(name=name, text=field_to_csv(field)),
        Artifact(name=str(_sidecar(Path(name))), text=to_json(field_sidecar(field))),
    ]


def write_field(field: AnyField, path: Union[str, Path]) -> Path:
    """Write CSV plus JSON sidecar; returns the sidecar path."""
    path = Path(path)
    csv_artifact, sidecar_artifact = field_artifacts(field, path.name)
    path.write_text(csv_artifact.text)
    sidecar = _sidecar(path)
    sidecar.write_text(sidecar_artifact.text)
    logger.debug(f"Wrote field {path} ({field.spec.size} nodes)")
    return sidecar


def read_field(path: Union[str, Path]) -> AnyField:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    spec = GridSpec.model_validate(meta["spec"])
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    re = table[:, spec.dim].reshape(spec.shape)
    im = table[:, spec.dim + 1].reshape(spec.shape)
    if meta["kind"] == "complex":
        return ComplexField(spec=spec, values=re + 1j * im, mass=meta.get("mass", 1.0),
                            potential_ref=meta.get("potential_ref"))
    return RealField(spec=spec, values=re)
