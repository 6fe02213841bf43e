import numpy as np
import pytest
from pydantic import ValidationError

from qbohm.enums import Boundary, EvolutionMode
from qbohm.errors import InvalidInputError
from qbohm.grid_core import GridSpec, complex_field, norm
from qbohm.schrodinger import (
    BoxSuperposition,
    EvolutionConfig,
    box_superposition,
    continuity_residual,
    default_time_step,
    evolve,
    evolve_classical,
    evolve_quantum,
    sequence_artifacts,
    write_sequence,
    stationary_residual,
)
from qbohm.states import gaussian_packet, harmonic_ground_state, harmonic_potential


def _width(psi) -> float:
    x = psi.spec.coordinates()[0]
    rho = psi.density * psi.spec.cell_volume
    mean = np.sum(x * rho)
    return float(np.sqrt(np.sum((x - mean) ** 2 * rho)))


def test_free_packet_spreads_as_expected():
    spec = GridSpec.line(-40.0, 40.0, 1024)
    psi0 = gaussian_packet(spec, sigma=1.0)
    seq = evolve_quantum(psi0, EvolutionConfig(dt=0.01, steps=200, record_every=50))
    assert seq.times[-1] == pytest.approx(2.0)
    assert len(seq) == 5
    assert _width(seq.final) == pytest.approx(np.sqrt(2.0), rel=1e-6)
    assert max(abs(n - 1.0) for n in seq.norms) < 1e-12


def test_harmonic_ground_state_is_stationary(periodic_line):
    psi0 = harmonic_ground_state(periodic_line)
    V = harmonic_potential(periodic_line)
    assert stationary_residual(psi0, V, 0.5) < 1e-9

    seq = evolve(psi0, EvolutionConfig(dt=1e-3, steps=1000, potential=V, record_every=1000))
    expected = psi0.values * np.exp(-0.5j * seq.times[-1])
    assert np.max(np.abs(seq.final.values - expected)) < 1e-4
    assert np.max(np.abs(seq.final.density - psi0.density)) < 1e-4


def test_reverse_evolution_returns_initial_state(periodic_line):
    psi0 = gaussian_packet(periodic_line, sigma=1.0, momentum=[1.5])
    forward = evolve(psi0, EvolutionConfig(dt=0.01, steps=50))
    back = evolve(forward.final, EvolutionConfig(dt=0.01, steps=50, reverse=True))
    assert back.times[-1] == pytest.approx(-0.5)
    assert np.max(np.abs(back.final.values - psi0.values)) < 1e-10


def test_classical_mode_suppresses_spreading():
    spec = GridSpec.line(-20.0, 20.0, 256)
    psi0 = gaussian_packet(spec, sigma=1.0)
    cfg = dict(dt=2e-3, steps=250, record_every=250)
    quantum = evolve(psi0, EvolutionConfig(**cfg))
    classical = evolve_classical(psi0, EvolutionConfig(mode=EvolutionMode.CLASSICAL, **cfg))
    assert _width(quantum.final) - 1.0 > 0.025
    assert abs(_width(classical.final) - 1.0) < 0.005


def test_classical_focusing_warns_once_and_keeps_going(periodic_line):
    # Converging phase: every classical path meets at x = 0 at t = 0.5
    psi0 = complex_field(periodic_line, lambda x: np.exp(-x ** 2 / 4.0 - 1j * x ** 2), normalize_values=True)
    seq = evolve_classical(psi0, EvolutionConfig(dt=1e-3, steps=300, record_every=100,
                                                 mode=EvolutionMode.CLASSICAL))

    assert len(seq.warnings) == 1
    assert seq.warnings[0].startswith("caustic formation at t=")
    assert seq.times[-1] == pytest.approx(0.3)
    assert len(seq.fields) == 4
    assert np.allclose(seq.norms, seq.norms[0], atol=1e-10)
    assert _width(seq.final) < 0.7 * _width(psi0)


def test_quantum_mode_never_warns_about_caustics(periodic_line):
    psi0 = complex_field(periodic_line, lambda x: np.exp(-x ** 2 / 4.0 - 1j * x ** 2), normalize_values=True)
    seq = evolve(psi0, EvolutionConfig(dt=1e-3, steps=300, record_every=300))
    assert seq.warnings == []


def test_mode_mismatch_is_rejected(periodic_line):
    psi0 = gaussian_packet(periodic_line)
    with pytest.raises(InvalidInputError):
        evolve_classical(psi0, EvolutionConfig(dt=0.01, steps=1))
    with pytest.raises(InvalidInputError):
        evolve_quantum(psi0, EvolutionConfig(dt=0.01, steps=1, mode=EvolutionMode.CLASSICAL))


def test_evolution_needs_periodic_power_of_two_grid():
    psi0 = gaussian_packet(GridSpec.line(-10.0, 10.0, 128, Boundary.DIRICHLET))
    with pytest.raises(InvalidInputError):
        evolve(psi0, EvolutionConfig(dt=0.01, steps=1))


def test_potential_must_share_the_grid(periodic_line):
    psi0 = gaussian_packet(periodic_line)
    other = harmonic_potential(GridSpec.line(-5.0, 5.0, 256))
    with pytest.raises(InvalidInputError):
        evolve(psi0, EvolutionConfig(dt=0.01, steps=1, potential=other))


def test_default_time_step_respects_limits(periodic_line):
    V = harmonic_potential(periodic_line)
    dt = default_time_step(periodic_line, V)
    k_max = np.pi / periodic_line.spacing[0]
    assert dt * np.max(np.abs(V.values)) < 0.1
    assert dt * k_max ** 2 / 2 < 0.5


def test_continuity_holds_for_moving_packet():
    spec = GridSpec.line(-20.0, 20.0, 256)
    psi0 = gaussian_packet(spec, sigma=1.0, momentum=[1.0])
    seq = evolve(psi0, EvolutionConfig(dt=1e-3, steps=10))
    assert continuity_residual(seq) < 1e-5


def test_continuity_needs_three_snapshots(periodic_line):
    seq = evolve(gaussian_packet(periodic_line), EvolutionConfig(dt=0.01, steps=1))
    with pytest.raises(InvalidInputError):
        continuity_residual(seq)


def test_sequence_artifacts_layout(periodic_line, tmp_path):
    seq = evolve(gaussian_packet(periodic_line), EvolutionConfig(dt=0.01, steps=4, record_every=2))
    names = [a.name for a in sequence_artifacts(seq)]
    assert names == [
        "snapshot_0000.csv", "snapshot_0000.json",
        "snapshot_0001.csv", "snapshot_0001.json",
        "snapshot_0002.csv", "snapshot_0002.json",
        "snapshot_sequence.json",
    ]

    paths = write_sequence(seq, tmp_path)
    assert [p.name for p in paths] == names
    assert (tmp_path / "snapshot_sequence.json").read_text().startswith("{")


def test_box_superposition_requires_normalized_coefficients():
    with pytest.raises(ValidationError):
        BoxSuperposition(modes=((1, 1), (1, 2)), coefficients=[1.0, 1.0])
    with pytest.raises(ValidationError):
        BoxSuperposition(modes=((0, 1),), coefficients=[1.0])


def test_box_superposition_properties():
    box = box_superposition((4, 4), seed=11)
    assert len(box.modes) == 16
    assert box.energies[0] == pytest.approx(np.pi ** 2)
    assert box.period == pytest.approx(4.0 / np.pi)

    again = box_superposition((4, 4), seed=11)
    assert np.array_equal(box.coefficients, again.coefficients)

    spec = box.grid((65, 65))
    psi = box.field(spec, 0.3)
    assert norm(psi) == pytest.approx(1.0, abs=1e-10)
    walls = np.array([[0.0, 0.4], [1.0, 0.4], [0.4, 0.0], [0.4, 1.0]])
    assert np.max(np.abs(box.psi(walls, 0.3))) < 1e-12


def test_box_gradient_matches_finite_differences():
    box = box_superposition((3, 3), seed=2)
    q = np.array([[0.31, 0.47], [0.72, 0.18]])
    h = 1e-6
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        fd = (box.psi(q + step, 0.2) - box.psi(q - step, 0.2)) / (2 * h)
        assert np.allclose(box.gradient(q, 0.2)[:, axis], fd, rtol=1e-6, atol=1e-6)
