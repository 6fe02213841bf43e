"""
Closed-form wave functions used as initial data and as test oracles.
Each builder returns a ComplexField sampled on the given grid.
"""
from typing import Optional, Sequence

import numpy as np

from qbohm.grid_core import ComplexField, GridSpec, RealField, complex_field, real_field


def plane_wave(spec: GridSpec, k: Sequence[float], mass: float = 1.0) -> ComplexField:
    """e^{i k.q}; on a periodic grid k should be commensurate with the box."""
    k = tuple(k)
    return complex_field(spec, lambda *q: np.exp(1j * sum(ki * qi for ki, qi in zip(k, q))), mass=mass)


def gaussian_packet(spec: GridSpec, sigma: float = 1.0, center: Optional[Sequence[float]] = None,
                    momentum: Optional[Sequence[float]] = None, mass: float = 1.0,
                    normalized: bool = True) -> ComplexField:
    """Packet with |psi|^2 of standard deviation sigma along every axis."""
    center = tuple(center) if center is not None else (0.0,) * spec.dim
    momentum = tuple(momentum) if momentum is not None else (0.0,) * spec.dim

    def fn(*q):
        envelope = np.exp(-sum((qi - ci) ** 2 for qi, ci in zip(q, center)) / (4 * sigma ** 2))
        phase = np.exp(1j * sum(pi * qi for pi, qi in zip(momentum, q)))
        return envelope * phase

    return complex_field(spec, fn, mass=mass, normalize_values=normalized)


def harmonic_ground_state(spec: GridSpec, omega: float = 1.0, mass: float = 1.0) -> ComplexField:
    return complex_field(
        spec,
        lambda *q: np.exp(-mass * omega * sum(qi ** 2 for qi in q) / 2) + 0j,
        mass=mass,
        potential_ref="harmonic",
        normalize_values=True,
    )


def harmonic_potential(spec: GridSpec, omega: float = 1.0, mass: float = 1.0) -> RealField:
    return real_field(spec, lambda *q: 0.5 * mass * omega ** 2 * sum(qi ** 2 for qi in q))


def vortex_state(spec: GridSpec, winding: int = 1, center: Sequence[float] = (0.0, 0.0),
                 mass: float = 1.0) -> ComplexField:
    """(x + iy)^N e^{-(x^2+y^2)/2} about `center`; negative N gives (x - iy)^|N|."""
    cx, cy = center

    def fn(x, y):
        z = (x - cx) + 1j * np.sign(winding or 1) * (y - cy)
        return z ** abs(winding) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 2)

    return complex_field(spec, fn, mass=mass)


def vortex_pair(spec: GridSpec, separation: float = 1.0, mass: float = 1.0) -> ComplexField:
    """(x + iy)(x - d - iy) e^{-(x^2+y^2)/2}: vortex at the origin, antivortex at (d, 0)."""
    return complex_field(
        spec,
        lambda x, y: (x + 1j * y) * (x - separation - 1j * y) * np.exp(-(x ** 2 + y ** 2) / 2),
        mass=mass,
    )


def two_slit_superposition(spec: GridSpec, separation: float = 4.0, sigma: float = 0.5,
                           mass: float = 1.0) -> ComplexField:
    """Two Gaussians at +-separation/2, the 1D analog of a double slit."""
    half = separation / 2

    def fn(x, *rest):
        return (np.exp(-(x - half) ** 2 / (4 * sigma ** 2)) + np.exp(-(x + half) ** 2 / (4 * sigma ** 2))) + 0j

    return complex_field(spec, fn, mass=mass, normalize_values=True)
