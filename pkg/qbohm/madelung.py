"""
Polar (Madelung) decomposition of a wave function and the hydrodynamic
diagnostics built on it: velocity, quantum potential, vorticity, quantized
circulation and the quantum stress tensor.
"""
import json
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field
from scipy import ndimage

from qbohm.config import config
from qbohm.errors import InvalidInputError, NodeCrossingError
from qbohm.grid_core import ComplexField, GridSpec, RealField, derivative_values

logger = logging.getLogger(__name__)

# Density floor (relative to max rho) for the stress tensor comparison
STRESS_DENSITY_FLOOR = 1e-6
# Nodes kept away from the node mask in the stress tensor comparison
STRESS_MASK_MARGIN = 2


class MadelungFields(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    R: RealField
    S_principal: RealField
    velocity: Tuple[RealField, ...]
    VQ: RealField
    node_mask: np.ndarray
    mass: float = 1.0

    @property
    def spec(self) -> GridSpec:
        return self.R.spec


class VortexRecord(BaseModel):
    """Nonzero plaquette winding. `cell` is the lower-left node index of the plaquette."""
    cell: Tuple[int, ...]
    center: Tuple[float, ...]
    winding: int

    @computed_field
    @property
    def circulation(self) -> float:
        return 2.0 * np.pi * self.winding


# ============================================================
# Decomposition
# ============================================================

def node_mask_of(R: np.ndarray, node_threshold: Optional[float] = None) -> np.ndarray:
    """True where R falls below node_threshold * max(R)."""
    threshold = config.NODE_THRESHOLD if node_threshold is None else node_threshold
    peak = float(np.max(R)) if R.size else 0.0
    return R < threshold * peak


def principal_phase(psi: np.ndarray) -> np.ndarray:
    """arg(psi) mapped into (-pi, pi]."""
    S = np.angle(psi)
    return np.where(S <= -np.pi, np.pi, S)


def wrap_phase(delta: np.ndarray) -> np.ndarray:
    """Phase differences mapped into (-pi, pi]."""
    return np.pi - np.mod(np.pi - delta, 2.0 * np.pi)


def phase_gradient(psi: ComplexField, node_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, ...]:
    """Im(d_k psi / psi) per axis, zero on masked nodes."""
    values = psi.values
    if node_mask is None:
        node_mask = node_mask_of(np.abs(values))
    out = []
    for axis in range(psi.spec.dim):
        dpsi = derivative_values(values, psi.spec, axis)
        ratio = np.divide(dpsi, values, out=np.zeros_like(dpsi), where=~node_mask)
        out.append(np.imag(ratio))
    return tuple(out)


def quantum_potential(R: RealField, mass: float = 1.0, node_mask: Optional[np.ndarray] = None) -> RealField:
    """
    VQ = -(1/2m) lap(R) / R.
    Masked nodes carry NaN as the "undefined" marker.
    """
    r = R.values
    if node_mask is None:
        node_mask = node_mask_of(r)
    lap = sum(derivative_values(r, R.spec, axis, 2) for axis in range(R.spec.dim))
    vq = np.full(r.shape, np.nan)
    vq[~node_mask] = -lap[~node_mask] / (2.0 * mass * r[~node_mask])
    return RealField(spec=R.spec, values=vq)


def decompose(psi: ComplexField, node_threshold: Optional[float] = None) -> MadelungFields:
    values = psi.values
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("wave function has non-finite values")

    amplitude = np.abs(values)
    mask = node_mask_of(amplitude, node_threshold)
    R = RealField(spec=psi.spec, values=amplitude)
    velocity = tuple(
        RealField(spec=psi.spec, values=g / psi.mass) for g in phase_gradient(psi, mask)
    )
    if np.any(mask):
        logger.debug(f"Masked {int(mask.sum())} of {mask.size} nodes")
    mask.setflags(write=False)
    return MadelungFields(
        R=R,
        S_principal=RealField(spec=psi.spec, values=principal_phase(values)),
        velocity=velocity,
        VQ=quantum_potential(R, psi.mass, mask),
        node_mask=mask,
        mass=psi.mass,
    )


def vorticity(velocity: Sequence[RealField]) -> RealField:
    """Omega = d_x v_y - d_y v_x for a 2D velocity field."""
    vx, vy = velocity
    spec = vx.spec
    if spec.dim != 2:
        raise InvalidInputError("vorticity needs a 2D velocity field", dim=spec.dim)
    omega = derivative_values(vy.values, spec, 0) - derivative_values(vx.values, spec, 1)
    return RealField(spec=spec, values=omega)


# ============================================================
# Circulation and vortices
# ============================================================

def square_loop(lower: Sequence[int], upper: Sequence[int]) -> List[Tuple[int, int]]:
    """Counter-clockwise closed loop of node indices along a rectangle's edges."""
    (i0, j0), (i1, j1) = lower, upper
    if i1 <= i0 or j1 <= j0:
        raise InvalidInputError("upper corner must exceed lower corner", lower=tuple(lower), upper=tuple(upper))
    loop = [(i, j0) for i in range(i0, i1)]
    loop += [(i1, j) for j in range(j0, j1)]
    loop += [(i, j1) for i in range(i1, i0, -1)]
    loop += [(i0, j) for j in range(j1, j0, -1)]
    loop.append((i0, j0))
    return loop


def boundary_loop(spec: GridSpec) -> List[Tuple[int, int]]:
    """Loop along the outermost nodes of a 2D grid."""
    return square_loop((0, 0), (spec.points[0] - 1, spec.points[1] - 1))


def _check_adjacent(spec: GridSpec, a: Tuple[int, ...], b: Tuple[int, ...]) -> None:
    steps = []
    for axis, (ia, ib) in enumerate(zip(a, b)):
        d = ib - ia
        if spec.periodic:
            n = spec.points[axis]
            d = (d + n // 2) % n - n // 2
        steps.append(abs(d))
    if sorted(steps) != [0] * (spec.dim - 1) + [1]:
        raise InvalidInputError(f"loop nodes {a} and {b} are not adjacent", nodes=(a, b))


def circulation_winding(psi: ComplexField, loop: Sequence[Sequence[int]],
                        node_threshold: Optional[float] = None) -> int:
    """Winding number N of the phase around a closed loop of grid nodes."""
    nodes = [tuple(int(i) for i in node) for node in loop]
    if len(nodes) < 3:
        raise InvalidInputError("loop needs at least 3 nodes", length=len(nodes))
    if nodes[0] != nodes[-1]:
        nodes.append(nodes[0])
    for a, b in zip(nodes[:-1], nodes[1:]):
        _check_adjacent(psi.spec, a, b)

    mask = node_mask_of(np.abs(psi.values), node_threshold)
    for node in nodes:
        if mask[node]:
            raise NodeCrossingError(node)

    S = principal_phase(np.array([psi.values[node] for node in nodes]))
    total = float(np.sum(wrap_phase(np.diff(S))))
    return int(np.rint(total / (2.0 * np.pi)))


def plaquette_windings(psi: ComplexField) -> np.ndarray:
    """Winding of every elementary square (i, j)-(i+1, j+1), shape (nx-1, ny-1)."""
    if psi.spec.dim != 2:
        raise InvalidInputError("vortex detection needs a 2D field", dim=psi.spec.dim)
    S = principal_phase(psi.values)
    dx = wrap_phase(S[1:, :] - S[:-1, :])
    dy = wrap_phase(S[:, 1:] - S[:, :-1])
    total = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    return np.rint(total / (2.0 * np.pi)).astype(int)


def detect_vortices(psi: ComplexField) -> List[VortexRecord]:
    windings = plaquette_windings(psi)
    x, y = psi.spec.coordinates()
    hx, hy = psi.spec.spacing
    records = [
        VortexRecord(cell=(int(i), int(j)), center=(float(x[i] + hx / 2), float(y[j] + hy / 2)),
                     winding=int(windings[i, j]))
        for i, j in np.argwhere(windings != 0)
    ]
    logger.info(f"Detected {len(records)} vortices, net winding {int(windings.sum())}")
    return records


def vortices_to_json(records: Sequence[VortexRecord]) -> str:
    return json.dumps([r.model_dump(mode="json") for r in records], indent=2, sort_keys=True)


# ============================================================
# Stress tensor
# ============================================================

def stress_tensor(R: RealField, mass: float = 1.0) -> np.ndarray:
    """sigma_ij = -(1/2m)(R d_ij R - d_i R d_j R), shape (dim, dim, *grid)."""
    spec = R.spec
    r = R.values
    first = [derivative_values(r, spec, i) for i in range(spec.dim)]
    sigma = np.empty((spec.dim, spec.dim) + r.shape)
    for i in range(spec.dim):
        for j in range(i, spec.dim):
            if i == j:
                dij = derivative_values(r, spec, i, 2)
            else:
                dij = derivative_values(first[i], spec, j)
            sigma[i, j] = sigma[j, i] = -(r * dij - first[i] * first[j]) / (2.0 * mass)
    return sigma


def _quantum_force_gradient(r: np.ndarray, spec: GridSpec, mass: float, axis: int) -> np.ndarray:
    """d_axis VQ by the quotient rule on R and its derivatives."""
    lap = sum(derivative_values(r, spec, a, 2) for a in range(spec.dim))
    dlap = derivative_values(lap, spec, axis)
    dr = derivative_values(r, spec, axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(dlap * r - lap * dr) / (2.0 * mass * r ** 2)


def stress_tensor_residual(psi: ComplexField) -> float:
    """max |(1/rho) d_i sigma_ij - d_j VQ| over well-resolved, unmasked nodes."""
    spec = psi.spec
    r = np.abs(psi.values)
    rho = r ** 2
    mask = node_mask_of(r)
    region = rho >= STRESS_DENSITY_FLOOR * float(np.max(rho))
    if np.any(mask):
        region &= ~ndimage.binary_dilation(mask, iterations=STRESS_MASK_MARGIN)
    if not np.any(region):
        logger.warning("Stress tensor residual has an empty evaluation region")
        return 0.0

    sigma = stress_tensor(RealField(spec=spec, values=r), psi.mass)
    residual = 0.0
    for j in range(spec.dim):
        divergence = sum(derivative_values(sigma[i, j], spec, i) for i in range(spec.dim))
        lhs = divergence[region] / rho[region]
        rhs = _quantum_force_gradient(r, spec, psi.mass, j)[region]
        residual = max(residual, float(np.max(np.abs(lhs - rhs))))
    return residual
