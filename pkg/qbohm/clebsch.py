"""
Clebsch-potential description of rotational quantum flows.

A pair (alpha, beta) extends the guidance law to m v = grad S + alpha grad beta - e A
and generates effective electromagnetic fields:

    e A_eff = -alpha grad beta        e V_eff = alpha d_t beta
    e E_eff = d_t alpha grad beta - d_t beta grad alpha
    e B_eff = -(grad alpha x grad beta)

Points are arrays of shape (n, dim); in 2D the magnetic-type fields are the
z component, returned as arrays of shape (n,).
"""
import logging
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from qbohm.enums import TrajectoryStatus
from qbohm.errors import InvalidInputError
from qbohm.grid_core import ComplexField, GridSpec, Interpolator, RealField, derivative_values
from qbohm.madelung import node_mask_of, phase_gradient, wrap_phase
from qbohm.trajectories import AnalyticField, VelocitySource, integrate_guided

logger = logging.getLogger(__name__)

GAUGE_LATTICE = 32
GAUGE_TOLERANCE = 1e-8
# Step of the 4th-order differences used when analytic partials are absent
FD_STEP = 1e-3
# Grid nodes dropped along every dirichlet edge in field residuals
EDGE_MARGIN = 2

PointFn = Callable[[np.ndarray, float], np.ndarray]


# ============================================================
# Scalar functions and pairs
# ============================================================

def _zeros(points: np.ndarray, t: float) -> np.ndarray:
    return np.zeros(len(points))


class ScalarFunction(BaseModel):
    """
    Scalar field with its gradient and time derivative.
    `cyclic` marks angle-valued fields compared modulo 2*pi.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    dim: int = Field(2, ge=1, le=3)
    value_fn: Optional[PointFn] = None
    gradient_fn: PointFn
    time_derivative_fn: PointFn = _zeros
    cyclic: bool = False
    params: Dict[str, Any] = {}

    def value(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.value_fn is None:
            raise InvalidInputError(f"{self.name!r} is known only through its gradient")
        return np.asarray(self.value_fn(np.atleast_2d(points), t), dtype=float)

    def gradient(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.asarray(self.gradient_fn(points, t), dtype=float).reshape(points.shape)

    def time_derivative(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.time_derivative_fn(np.atleast_2d(points), t), dtype=float)

    def descriptor(self) -> Dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "cyclic": self.cyclic, **self.params}

    # -------- constructors --------

    @classmethod
    def analytic(cls, name: str, value: Optional[PointFn], gradient: PointFn,
                 time_derivative: Optional[PointFn] = None, dim: int = 2, cyclic: bool = False,
                 **params: Any) -> "ScalarFunction":
        return cls(name=name, dim=dim, value_fn=value, gradient_fn=gradient,
                   time_derivative_fn=time_derivative or _zeros, cyclic=cyclic, params=params)

    @classmethod
    def constant(cls, c: float = 0.0, dim: int = 2) -> "ScalarFunction":
        return cls(
            name="constant",
            dim=dim,
            value_fn=lambda q, t: np.full(len(q), float(c)),
            gradient_fn=lambda q, t: np.zeros_like(q, dtype=float),
            params={"value": c},
        )

    @classmethod
    def linear(cls, coefficients: Sequence[float], offset: float = 0.0) -> "ScalarFunction":
        """a . q + offset"""
        a = np.asarray(coefficients, dtype=float)
        return cls(
            name="linear",
            dim=a.size,
            value_fn=lambda q, t: q @ a + offset,
            gradient_fn=lambda q, t: np.broadcast_to(a, q.shape),
            params={"coefficients": a.tolist(), "offset": offset},
        )

    @classmethod
    def azimuth(cls, rate: float = 0.0, winding: float = 1.0, center: Sequence[float] = (0.0, 0.0)) -> "ScalarFunction":
        """winding * phi + rate * t about `center` (cyclic)."""
        cx, cy = center

        def value(q, t):
            return winding * np.arctan2(q[:, 1] - cy, q[:, 0] - cx) + rate * t

        def gradient(q, t):
            x, y = q[:, 0] - cx, q[:, 1] - cy
            r2 = x ** 2 + y ** 2
            return winding * np.stack([-y / r2, x / r2], axis=1)

        return cls(
            name="azimuth",
            dim=2,
            value_fn=value,
            gradient_fn=gradient,
            time_derivative_fn=lambda q, t: np.full(len(q), float(rate)),
            cyclic=True,
            params={"rate": rate, "winding": winding, "center": [cx, cy]},
        )

    @classmethod
    def from_field(cls, field: RealField, name: str = "grid") -> "ScalarFunction":
        """Static grid-backed scalar: cubic interpolation of values and spectral/FD gradients."""
        spec = field.spec
        value = Interpolator(field)
        grads = [
            Interpolator(RealField(spec=spec, values=derivative_values(field.values, spec, axis)))
            for axis in range(spec.dim)
        ]
        return cls(
            name=name,
            dim=spec.dim,
            value_fn=lambda q, t: value(q),
            gradient_fn=lambda q, t: np.stack([g(q) for g in grads], axis=1),
            params={"spec": spec.model_dump(mode="json")},
        )


def gradient_from_field(spec: GridSpec, gradients: Sequence[np.ndarray], name: str = "grid-gradient") -> ScalarFunction:
    """Scalar known only through gradient arrays on a grid (e.g. a multivalued phase)."""
    interps = [Interpolator(RealField(spec=spec, values=g)) for g in gradients]
    return ScalarFunction(
        name=name,
        dim=spec.dim,
        gradient_fn=lambda q, t: np.stack([g(q) for g in interps], axis=1),
        params={"spec": spec.model_dump(mode="json")},
    )


def phase_gradient_from_psi(psi: ComplexField) -> ScalarFunction:
    """S of psi through Im(grad psi / psi), zero on masked nodes."""
    mask = node_mask_of(np.abs(psi.values))
    return gradient_from_field(psi.spec, phase_gradient(psi, mask), name="psi-phase")


class ClebschPair(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: ScalarFunction
    beta: ScalarFunction
    name: str = "custom"
    params: Dict[str, Any] = {}

    @classmethod
    def zero(cls, dim: int = 2) -> "ClebschPair":
        return cls(alpha=ScalarFunction.constant(0.0, dim), beta=ScalarFunction.constant(0.0, dim), name="zero")

    @property
    def dim(self) -> int:
        return self.alpha.dim

    def momentum(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        """alpha grad beta"""
        return self.alpha.value(points, t)[:, None] * self.beta.gradient(points, t)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": self.params,
            "alpha": self.alpha.descriptor(),
            "beta": self.beta.descriptor(),
        }


class ExternalEM(BaseModel):
    """External potentials (A, V) with charge e; `B_fn` is the z component in 2D."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A_fn: Optional[PointFn] = None
    V_fn: Optional[PointFn] = None
    B_fn: Optional[PointFn] = None
    e: float = 1.0
    name: str = "none"
    params: Dict[str, Any] = {}

    def A(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.A_fn is None:
            return np.zeros_like(points, dtype=float)
        return np.asarray(self.A_fn(points, t), dtype=float).reshape(points.shape)

    def V(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.V_fn is None:
            return np.zeros(len(np.atleast_2d(points)))
        return np.asarray(self.V_fn(np.atleast_2d(points), t), dtype=float)

    def B(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self.B_fn is None:
            return np.zeros(len(np.atleast_2d(points)))
        return np.asarray(self.B_fn(np.atleast_2d(points), t), dtype=float)

    @classmethod
    def none(cls) -> "ExternalEM":
        return cls()

    @classmethod
    def uniform_vector_potential(cls, A0: Sequence[float], e: float = 1.0) -> "ExternalEM":
        a = np.asarray(A0, dtype=float)
        return cls(A_fn=lambda q, t: np.broadcast_to(a, q.shape), e=e,
                   name="uniform-vector-potential", params={"A0": a.tolist()})

    @classmethod
    def uniform_magnetic_field(cls, B0: float, e: float = 1.0) -> "ExternalEM":
        """Symmetric gauge A = (B0/2)(-y, x)."""
        return cls(
            A_fn=lambda q, t: 0.5 * B0 * np.stack([-q[:, 1], q[:, 0]], axis=1),
            B_fn=lambda q, t: np.full(len(q), float(B0)),
            e=e,
            name="uniform-magnetic-field",
            params={"B0": B0},
        )

    def descriptor(self) -> Dict[str, Any]:
        return {"name": self.name, "e": self.e, **self.params}


# ============================================================
# Effective fields and generalized guidance
# ============================================================

class EffectiveFields(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A_eff: np.ndarray
    V_eff: np.ndarray
    E_eff: np.ndarray
    B_eff: Optional[np.ndarray]


def _cross_z(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def effective_fields(pair: ClebschPair, points: np.ndarray, t: float = 0.0, e: float = 1.0) -> EffectiveFields:
    points = np.atleast_2d(points)
    alpha = pair.alpha.value(points, t)
    grad_alpha = pair.alpha.gradient(points, t)
    grad_beta = pair.beta.gradient(points, t)
    dt_alpha = pair.alpha.time_derivative(points, t)
    dt_beta = pair.beta.time_derivative(points, t)

    A = -alpha[:, None] * grad_beta / e
    V = alpha * dt_beta / e
    E = (dt_alpha[:, None] * grad_beta - dt_beta[:, None] * grad_alpha) / e
    if points.shape[1] == 2:
        B = -_cross_z(grad_alpha, grad_beta) / e
    elif points.shape[1] == 3:
        B = -np.cross(grad_alpha, grad_beta) / e
    else:
        B = None
    return EffectiveFields(A_eff=A, V_eff=V, E_eff=E, B_eff=B)


def generalized_velocity(S: ScalarFunction, pair: ClebschPair, em: ExternalEM, mass: float,
                         points: np.ndarray, t: float = 0.0) -> np.ndarray:
    """v = (grad S + alpha grad beta - e A) / m"""
    points = np.atleast_2d(points)
    momentum = S.gradient(points, t) + pair.momentum(points, t) - em.e * em.A(points, t)
    return momentum / mass


def clebsch_flow(S: ScalarFunction, pair: ClebschPair, em: ExternalEM, mass: float,
                 bounds: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None,
                 node_fn: Optional[PointFn] = None) -> AnalyticField:
    """Generalized guidance field as a trajectory velocity source."""
    return AnalyticField(
        name="clebsch-guidance",
        dim=pair.dim,
        velocity_fn=lambda q, t: generalized_velocity(S, pair, em, mass, q, t),
        node_fn=node_fn,
        bounds=bounds,
        masses=(mass,) * pair.dim,
        params={"S": S.descriptor(), "pair": pair.descriptor(), "em": em.descriptor()},
    )


def effective_lorentz_force(pair: ClebschPair, velocity: np.ndarray, points: np.ndarray,
                            t: float = 0.0, e: float = 1.0) -> np.ndarray:
    """e (E_eff + v x B_eff), in-plane components for 2D flows."""
    fields = effective_fields(pair, points, t, e)
    v = np.atleast_2d(velocity)
    if v.shape[1] == 2:
        v_cross_b = np.stack([v[:, 1] * fields.B_eff, -v[:, 0] * fields.B_eff], axis=1)
    else:
        v_cross_b = np.cross(v, fields.B_eff)
    return e * (fields.E_eff + v_cross_b)


# ============================================================
# Grid residuals
# ============================================================

def mesh_points(spec: GridSpec) -> np.ndarray:
    return np.column_stack([m.ravel() for m in spec.mesh()])


def _region(spec: GridSpec, region: Optional[np.ndarray]) -> np.ndarray:
    mask = np.ones(spec.shape, dtype=bool) if region is None else np.asarray(region, dtype=bool).reshape(spec.shape)
    if not spec.periodic:
        edge = np.zeros(spec.shape, dtype=bool)
        inner = tuple(slice(EDGE_MARGIN, n - EDGE_MARGIN) for n in spec.points)
        edge[inner] = True
        mask = mask & edge
    if not np.any(mask):
        raise InvalidInputError("residual evaluation region is empty")
    return mask


def _check_2d(spec: GridSpec) -> None:
    if spec.dim != 2:
        raise InvalidInputError("grid residuals are defined for 2D fields only", dim=spec.dim)


def _curl(vx: np.ndarray, vy: np.ndarray, spec: GridSpec) -> np.ndarray:
    return derivative_values(vy, spec, 0) - derivative_values(vx, spec, 1)


def _velocity_grid(v: Any, spec: GridSpec, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Velocity as a callable (points, t) or a pair of arrays on the grid."""
    if callable(v):
        values = np.asarray(v(mesh_points(spec), t))
        return values[:, 0].reshape(spec.shape), values[:, 1].reshape(spec.shape)
    vx, vy = v
    return np.asarray(vx.values if isinstance(vx, RealField) else vx), np.asarray(vy.values if isinstance(vy, RealField) else vy)


def vorticity_residual(v: Any, pair: ClebschPair, em: ExternalEM, mass: float, spec: GridSpec,
                       t: float = 0.0, region: Optional[np.ndarray] = None) -> float:
    """max |m curl v + e B - grad alpha x grad beta| over the region."""
    _check_2d(spec)
    vx, vy = _velocity_grid(v, spec, t)
    points = mesh_points(spec)
    source = _cross_z(pair.alpha.gradient(points, t), pair.beta.gradient(points, t)).reshape(spec.shape)
    eB = em.e * em.B(points, t).reshape(spec.shape)
    residual = mass * _curl(vx, vy, spec) + eB - source
    return float(np.max(np.abs(residual[_region(spec, region)])))


def vorticity_transport_residual(v: Any, em: ExternalEM, mass: float, spec: GridSpec,
                                 times: Sequence[float], region: Optional[np.ndarray] = None) -> float:
    """
    max |d_t W + div(v W)| with W = m curl v + e B, the planar form of
    d_t W = curl(v x W). Time derivatives use central differences over `times`;
    a steady velocity may be given as arrays together with a single time.
    """
    _check_2d(spec)
    times = list(times)
    steady = not callable(v)
    if not steady and len(times) < 3:
        raise InvalidInputError("time-dependent transport check needs at least 3 times")
    points = mesh_points(spec)
    mask = _region(spec, region)

    def state(t: float):
        vx, vy = _velocity_grid(v, spec, t)
        W = mass * _curl(vx, vy, spec) + em.e * em.B(points, t).reshape(spec.shape)
        return vx, vy, W

    if steady:
        vx, vy, W = state(times[0])
        flux = derivative_values(vx * W, spec, 0) + derivative_values(vy * W, spec, 1)
        return float(np.max(np.abs(flux[mask])))

    residual = 0.0
    for k in range(1, len(times) - 1):
        _, _, W_prev = state(times[k - 1])
        _, _, W_next = state(times[k + 1])
        vx, vy, W = state(times[k])
        dW = (W_next - W_prev) / (times[k + 1] - times[k - 1])
        flux = derivative_values(vx * W, spec, 0) + derivative_values(vy * W, spec, 1)
        residual = max(residual, float(np.max(np.abs((dW + flux)[mask]))))
    return residual


def maxwell_residuals(pair: ClebschPair, spec: GridSpec, t: float = 0.0, e: float = 1.0,
                      dt: float = FD_STEP, region: Optional[np.ndarray] = None) -> Dict[str, float]:
    """
    First Maxwell group for the effective fields in the plane. div B_eff = 0
    holds when B_eff is the curl of A_eff, so "curl_A" is max |B_z - (curl A_eff)_z|;
    "faraday" is max |d_t B_z + (curl E_eff)_z|.
    """
    _check_2d(spec)
    points = mesh_points(spec)
    mask = _region(spec, region)

    def fields(tau: float) -> EffectiveFields:
        return effective_fields(pair, points, tau, e)

    now = fields(t)
    dB = (fields(t + dt).B_eff - fields(t - dt).B_eff) / (2 * dt)
    Ex = now.E_eff[:, 0].reshape(spec.shape)
    Ey = now.E_eff[:, 1].reshape(spec.shape)
    faraday = dB.reshape(spec.shape) + _curl(Ex, Ey, spec)
    Ax = now.A_eff[:, 0].reshape(spec.shape)
    Ay = now.A_eff[:, 1].reshape(spec.shape)
    curl_a = now.B_eff.reshape(spec.shape) - _curl(Ax, Ay, spec)
    return {
        "curl_A": float(np.max(np.abs(curl_a[mask]))),
        "faraday": float(np.max(np.abs(faraday[mask]))),
    }


def effective_field_consistency(pair: ClebschPair, spec: GridSpec, t: float = 0.0, e: float = 1.0,
                                dt: float = FD_STEP, region: Optional[np.ndarray] = None) -> float:
    """max |E_eff + d_t A_eff + grad V_eff| over the region."""
    _check_2d(spec)
    points = mesh_points(spec)
    mask = _region(spec, region)
    now = effective_fields(pair, points, t, e)
    dA = (effective_fields(pair, points, t + dt, e).A_eff - effective_fields(pair, points, t - dt, e).A_eff) / (2 * dt)
    V = now.V_eff.reshape(spec.shape)
    residual = 0.0
    for axis in range(2):
        r = now.E_eff[:, axis].reshape(spec.shape) + dA[:, axis].reshape(spec.shape) + derivative_values(V, spec, axis)
        residual = max(residual, float(np.max(np.abs(r[mask]))))
    return residual


# ============================================================
# Advection of the potentials
# ============================================================

class AdvectionResidual(BaseModel):
    alpha: float
    beta: float


def _difference(fn: ScalarFunction, start: np.ndarray, end: np.ndarray, t0: float, t1: float) -> float:
    delta = fn.value(end, t1) - fn.value(start, t0)
    if fn.cyclic:
        delta = wrap_phase(delta)
    return float(np.max(np.abs(delta)))


def advection_residual(pair: ClebschPair, source: VelocitySource, probes: np.ndarray, dt: float,
                       t_final: float, t0: float = 0.0) -> AdvectionResidual:
    """Largest change of alpha and beta along probe trajectories (beta modulo 2*pi when cyclic)."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    ens = integrate_guided(source, probes, dt, t_final=t_final, t0=t0, record_every=10 ** 9)
    lost = [i for i, s in enumerate(ens.status) if s != TrajectoryStatus.ACTIVE]
    if lost:
        raise InvalidInputError(f"probes {lost} left the domain or hit a node", indices=lost)
    end = ens.final_positions
    t1 = float(ens.times[-1])
    return AdvectionResidual(
        alpha=_difference(pair.alpha, probes, end, t0, t1),
        beta=_difference(pair.beta, probes, end, t0, t1),
    )


# ============================================================
# Gauge freedom
# ============================================================

GaugeFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def _fd(fn: Callable[[float], np.ndarray], h: float = FD_STEP) -> np.ndarray:
    """4th-order central difference of fn at 0."""
    return (fn(-2 * h) - 8 * fn(-h) + 8 * fn(h) - fn(2 * h)) / (12 * h)


class GaugeTriple(BaseModel):
    """
    (f, g, h) of (alpha, beta, t) with S' = S + f, alpha' = g, beta' = h.
    Partials default to 4th-order finite differences.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    f: GaugeFn
    g: GaugeFn
    h: GaugeFn
    partials: Dict[str, GaugeFn] = {}
    name: str = "custom"
    # h keeps beta angle-valued (shifts of beta by 2*pi shift h by 2*pi)
    cyclic_h: bool = False

    def partial(self, which: str, wrt: str, a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
        key = f"{which}_{wrt}"
        if key in self.partials:
            return np.asarray(self.partials[key](a, b, t), dtype=float)
        fn = getattr(self, which)
        if wrt == "alpha":
            return _fd(lambda d: fn(a + d, b, t))
        if wrt == "beta":
            return _fd(lambda d: fn(a, b + d, t))
        return _fd(lambda d: fn(a, b, t + d))

    @classmethod
    def identity(cls) -> "GaugeTriple":
        return cls(
            f=lambda a, b, t: np.zeros_like(a),
            g=lambda a, b, t: a,
            h=lambda a, b, t: b,
            partials={
                "f_alpha": lambda a, b, t: np.zeros_like(a),
                "f_beta": lambda a, b, t: np.zeros_like(a),
                "f_t": lambda a, b, t: np.zeros_like(a),
                "g_alpha": lambda a, b, t: np.ones_like(a),
                "g_beta": lambda a, b, t: np.zeros_like(a),
                "g_t": lambda a, b, t: np.zeros_like(a),
                "h_alpha": lambda a, b, t: np.zeros_like(a),
                "h_beta": lambda a, b, t: np.ones_like(a),
                "h_t": lambda a, b, t: np.zeros_like(a),
            },
            name="identity",
            cyclic_h=True,
        )


def gauge_constraint_residual(gauge: GaugeTriple, alpha_range: Tuple[float, float] = (-2.0, 2.0),
                              beta_range: Tuple[float, float] = (-np.pi, np.pi), t: float = 0.0) -> float:
    """max of |f_beta + g h_beta - alpha| and |f_alpha + g h_alpha| on a 32 x 32 lattice."""
    a, b = np.meshgrid(np.linspace(*alpha_range, GAUGE_LATTICE), np.linspace(*beta_range, GAUGE_LATTICE),
                       indexing="ij")
    a, b = a.ravel(), b.ravel()
    g = gauge.g(a, b, t)
    first = gauge.partial("f", "beta", a, b, t) + g * gauge.partial("h", "beta", a, b, t) - a
    second = gauge.partial("f", "alpha", a, b, t) + g * gauge.partial("h", "alpha", a, b, t)
    return float(max(np.max(np.abs(first)), np.max(np.abs(second))))


def gauge_transform(S: ScalarFunction, pair: ClebschPair, gauge: GaugeTriple,
                    alpha_range: Tuple[float, float] = (-2.0, 2.0),
                    beta_range: Tuple[float, float] = (-np.pi, np.pi),
                    tolerance: float = GAUGE_TOLERANCE) -> Tuple[ScalarFunction, ClebschPair]:
    """S' = S + f(alpha, beta, t), alpha' = g, beta' = h; gradients follow the chain rule."""
    residual = gauge_constraint_residual(gauge, alpha_range, beta_range)
    if residual > tolerance:
        raise InvalidInputError(
            f"gauge triple violates the gauge constraints (residual {residual:.3e})",
            residual=residual,
            gauge=gauge.name,
        )

    alpha, beta = pair.alpha, pair.beta

    def composed(which: str, base_value: Optional[ScalarFunction] = None) -> ScalarFunction:
        fn = getattr(gauge, which)

        def ab(q, t):
            return alpha.value(q, t), beta.value(q, t)

        def value(q, t):
            a, b = ab(q, t)
            out = fn(a, b, t)
            return out + base_value.value(q, t) if base_value is not None else out

        def gradient(q, t):
            a, b = ab(q, t)
            out = (gauge.partial(which, "alpha", a, b, t)[:, None] * alpha.gradient(q, t)
                   + gauge.partial(which, "beta", a, b, t)[:, None] * beta.gradient(q, t))
            return out + base_value.gradient(q, t) if base_value is not None else out

        def time_derivative(q, t):
            a, b = ab(q, t)
            out = (gauge.partial(which, "alpha", a, b, t) * alpha.time_derivative(q, t)
                   + gauge.partial(which, "beta", a, b, t) * beta.time_derivative(q, t)
                   + gauge.partial(which, "t", a, b, t))
            return out + base_value.time_derivative(q, t) if base_value is not None else out

        has_value = base_value is None or base_value.value_fn is not None
        return ScalarFunction(
            name=f"{gauge.name}:{which}",
            dim=pair.dim,
            value_fn=value if has_value else None,
            gradient_fn=gradient,
            time_derivative_fn=time_derivative,
            cyclic=(which == "h" and beta.cyclic and gauge.cyclic_h),
        )

    S_prime = composed("f", S)
    pair_prime = ClebschPair(alpha=composed("g"), beta=composed("h"), name=f"{pair.name}+{gauge.name}",
                             params=pair.params)
    logger.debug(f"Applied gauge {gauge.name!r} (constraint residual {residual:.2e})")
    return S_prime, pair_prime
