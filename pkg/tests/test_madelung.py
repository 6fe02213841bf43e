import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbohm.enums import Boundary
from qbohm.errors import InvalidInputError, NodeCrossingError
from qbohm.grid_core import ComplexField, GridSpec, RealField, complex_field
from qbohm.madelung import (
    boundary_loop,
    circulation_winding,
    decompose,
    detect_vortices,
    principal_phase,
    quantum_potential,
    square_loop,
    stress_tensor_residual,
    vorticity,
    vortices_to_json,
    wrap_phase,
)
from qbohm.states import gaussian_packet, harmonic_ground_state, plane_wave, vortex_pair, vortex_state


def test_plane_wave_velocity_and_zero_quantum_potential():
    spec = GridSpec.line(0.0, 2 * np.pi, 64)
    fields = decompose(plane_wave(spec, [3.0], mass=2.0))
    assert np.allclose(fields.velocity[0].values, 1.5, atol=1e-10)
    assert np.allclose(fields.VQ.values, 0.0, atol=1e-10)
    assert not fields.node_mask.any()


def test_decompose_rejects_non_finite(periodic_line):
    values = np.ones(256, dtype=complex)
    values[3] = np.nan
    with pytest.raises(InvalidInputError):
        decompose(ComplexField(spec=periodic_line, values=values))


def test_principal_phase_range():
    psi = np.exp(1j * np.array([-np.pi, -1.0, 0.0, 3.0, np.pi]))
    S = principal_phase(psi)
    assert np.all(S > -np.pi)
    assert np.all(S <= np.pi)


def test_harmonic_quantum_potential(periodic_line):
    psi = harmonic_ground_state(periodic_line)
    fields = decompose(psi)
    x = periodic_line.coordinates()[0]
    core = np.abs(x) < 4.0
    assert np.max(np.abs(fields.VQ.values[core] - 0.5 * (1 - x[core] ** 2))) < 1e-8
    # R below the node threshold: VQ undefined
    assert np.all(np.isnan(fields.VQ.values[fields.node_mask]))
    assert fields.node_mask[0] and not fields.node_mask[128]


def test_quantum_potential_scales_with_mass(periodic_line):
    psi = harmonic_ground_state(periodic_line)
    R = RealField(spec=periodic_line, values=np.abs(psi.values))
    light = quantum_potential(R, mass=1.0).values
    heavy = quantum_potential(R, mass=4.0).values
    finite = np.isfinite(light)
    assert np.allclose(heavy[finite], light[finite] / 4.0)


@pytest.mark.parametrize("winding", [1, 2, -1, -3])
def test_boundary_winding_counts_enclosed_vortex(vortex_box, winding):
    psi = vortex_state(vortex_box, winding)
    assert circulation_winding(psi, boundary_loop(vortex_box)) == winding


def test_winding_of_loop_without_vortex(vortex_box):
    psi = vortex_state(vortex_box, 1)
    assert circulation_winding(psi, square_loop((40, 40), (50, 50))) == 0


def test_loop_through_node_raises():
    spec = GridSpec.square(-4.0, 4.0, 65, Boundary.DIRICHLET)
    psi = vortex_state(spec, 1)
    with pytest.raises(NodeCrossingError) as info:
        circulation_winding(psi, square_loop((32, 32), (34, 34)))
    assert info.value.node == (32, 32)


def test_loop_nodes_must_be_adjacent(vortex_box):
    psi = vortex_state(vortex_box, 1)
    with pytest.raises(InvalidInputError):
        circulation_winding(psi, [(10, 10), (12, 10), (12, 12), (10, 10)])


def test_detect_vortex_pair(vortex_box):
    psi = vortex_pair(vortex_box, separation=2.0)
    records = sorted(detect_vortices(psi), key=lambda r: r.center[0])
    h = vortex_box.spacing[0]
    assert [r.winding for r in records] == [1, -1]
    assert np.hypot(*records[0].center) < h
    assert np.hypot(records[1].center[0] - 2.0, records[1].center[1]) < h
    assert records[0].circulation == pytest.approx(2 * np.pi)

    dumped = json.loads(vortices_to_json(records))
    assert [d["winding"] for d in dumped] == [1, -1]
    assert dumped[0]["circulation"] == pytest.approx(2 * np.pi)
    assert set(dumped[0]) == {"cell", "center", "winding", "circulation"}


def test_vorticity_of_irrotational_flow_vanishes(unit_torus):
    psi = complex_field(unit_torus, lambda x, y: (2.0 + np.cos(x) * np.cos(y)) * np.exp(1j * (np.sin(x) + np.cos(y))))
    omega = vorticity(decompose(psi).velocity)
    assert np.max(np.abs(omega.values)) < 1e-8


def test_vorticity_needs_2d(periodic_line):
    fields = decompose(gaussian_packet(periodic_line))
    with pytest.raises(InvalidInputError):
        vorticity(fields.velocity + fields.velocity)


def test_stress_tensor_matches_quantum_force():
    spec = GridSpec.square(-12.0, 12.0, 128)
    psi = gaussian_packet(spec, sigma=1.0, momentum=[0.5, -0.3])
    assert stress_tensor_residual(psi) < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-1e3, max_value=1e3))
def test_wrap_phase_is_congruent(delta):
    w = float(wrap_phase(np.asarray(delta)))
    assert -np.pi <= w <= np.pi
    turns = (delta - w) / (2 * np.pi)
    assert abs(turns - round(turns)) < 1e-9
