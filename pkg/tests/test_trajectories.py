import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbohm.enums import Integrator, TrajectoryStatus
from qbohm.errors import InvalidInputError, NodeCaptureError
from qbohm.grid_core import GridSpec
from qbohm.schrodinger import EvolutionConfig, evolve
from qbohm.states import plane_wave
from qbohm.trajectories import (
    AnalyticField,
    GridFlow,
    circle_loop,
    ensemble_artifacts,
    ensemble_to_csv,
    hydrogen_force_balance,
    hydrogen_ground_state,
    hydrogen_potentials,
    integrate_guided,
    integrate_second_order,
    kelvin_transport,
    loop_circulation,
    non_crossing_check,
    orbit_periods,
    plane_wave_flow,
    radius_drift,
    unconfined_ensemble_divergence,
    vortex_flow,
    write_ensemble,
)


def _contracting(node_radius=None, dim=2):
    node = None if node_radius is None else (lambda q, t: np.linalg.norm(q, axis=1) < node_radius)
    return AnalyticField(name="contracting", dim=dim, velocity_fn=lambda q, t: -q, node_fn=node)


def test_plane_wave_trajectories_are_straight_lines():
    ens = integrate_guided(plane_wave_flow([1.0, -0.5], mass=2.0), [[0.0, 0.0], [1.0, 1.0]], dt=0.1, t_final=2.0)
    assert ens.integrator == Integrator.GUIDED_RK4
    assert ens.times[-1] == pytest.approx(2.0)
    expected = np.array([[1.0, -0.5], [2.0, 0.5]])
    assert np.allclose(ens.final_positions, expected, atol=1e-12)
    assert ens.count(TrajectoryStatus.ACTIVE) == 2


def test_many_particles_split_across_workers():
    starts = np.linspace(-5.0, 5.0, 1000).reshape(-1, 1)
    ens = integrate_guided(plane_wave_flow([3.0]), starts, dt=0.05, t_final=1.0)
    assert ens.n_particles == 1000
    assert np.allclose(ens.final_positions, starts + 3.0, atol=1e-12)


@pytest.mark.parametrize("winding", [1, 2, -1])
def test_vortex_orbit_periods(winding):
    radii = np.array([0.5, 1.0])
    starts = np.column_stack([radii, np.zeros(2)])
    period = 2 * np.pi * radii ** 2 / abs(winding)
    ens = integrate_guided(vortex_flow(winding), starts, dt=2e-3, t_final=1.1 * period.max())
    assert np.allclose(orbit_periods(ens), period, rtol=1e-4)
    assert np.max(radius_drift(ens)) < 1e-6


def test_guided_rk4_converges_at_fourth_order():
    # One full orbit at unit radius returns the particle to its start
    errors = []
    for steps in (32, 64, 128):
        ens = integrate_guided(vortex_flow(1), [[1.0, 0.0]], dt=2.0 * np.pi / steps, t_final=2.0 * np.pi)
        assert ens.config["steps"] == steps
        errors.append(float(np.linalg.norm(ens.final_positions[0] - [1.0, 0.0])))

    assert errors[-1] < 1e-5
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    assert all(13.0 < r < 19.0 for r in ratios), ratios


def test_start_on_node_is_rejected():
    with pytest.raises(InvalidInputError):
        integrate_guided(vortex_flow(1), [[0.0, 0.0], [1.0, 0.0]], dt=0.01, t_final=1.0)


def test_start_outside_domain_is_rejected():
    field = AnalyticField(name="box", dim=2, velocity_fn=lambda q, t: np.zeros_like(q),
                          bounds=((-1.0, -1.0), (1.0, 1.0)))
    with pytest.raises(InvalidInputError):
        integrate_guided(field, [[2.0, 0.0]], dt=0.01, t_final=1.0)


def test_trajectory_captured_by_node_stops():
    ens = integrate_guided(_contracting(node_radius=0.1), [[1.0, 0.0], [0.0, 20.0]], dt=0.01, t_final=3.0,
                           record_every=10)
    assert ens.status[0] == TrajectoryStatus.NODE_CAPTURED
    assert ens.status[1] == TrajectoryStatus.ACTIVE
    stop = int(ens.stop_index[0])
    # r = e^{-t} reaches 0.1 near t = 2.3
    assert ens.times[stop] == pytest.approx(2.3, abs=0.11)
    assert np.all(np.isnan(ens.positions[0, stop + 1:]))
    assert np.all(np.isfinite(ens.positions[1]))


def test_trajectory_leaving_domain_stops():
    field = AnalyticField(name="drift", dim=2, velocity_fn=lambda q, t: np.broadcast_to([1.0, 0.0], q.shape),
                          bounds=((-1.0, -1.0), (1.0, 1.0)))
    ens = integrate_guided(field, [[0.0, 0.0]], dt=0.05, t_final=2.0)
    assert ens.status == [TrajectoryStatus.LEFT_DOMAIN]
    assert ens.times[int(ens.stop_index[0])] <= 1.0 + 1e-9


def test_analytic_source_needs_final_time():
    with pytest.raises(InvalidInputError):
        integrate_guided(plane_wave_flow([1.0]), [[0.0]], dt=0.1)


def test_kelvin_circulation_around_vortex():
    series = kelvin_transport(vortex_flow(1), circle_loop((0.0, 0.0), 1.0), dt=5e-3, t_final=1.0, record_every=20)
    assert series.circulation[0] == pytest.approx(2 * np.pi, rel=1e-3)
    assert series.drift < 1e-6


def test_kelvin_circulation_beside_vortex():
    series = kelvin_transport(vortex_flow(1), circle_loop((3.0, 0.0), 1.0), dt=5e-3, t_final=1.0, record_every=20)
    assert np.max(np.abs(series.circulation)) < 1e-3


def test_kelvin_loop_through_node():
    with pytest.raises(NodeCaptureError) as info:
        kelvin_transport(vortex_flow(1), circle_loop((1.0, 0.0), 1.0), dt=5e-3, t_final=1.0)
    assert info.value.vertex == 128
    assert info.value.time_index == 0


def test_kelvin_vertex_captured_during_transport():
    loop = circle_loop((0.0, 0.0), 1.0, vertices=16)
    with pytest.raises(NodeCaptureError) as info:
        kelvin_transport(_contracting(node_radius=0.1), loop, dt=0.01, t_final=3.0)
    assert info.value.time_index > 0


def test_loop_circulation_of_uniform_flow_vanishes():
    loop = circle_loop((0.0, 0.0), 2.0)
    velocity = np.broadcast_to([1.0, 2.0], loop.shape)
    assert loop_circulation(loop, velocity, (1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_hydrogen_ground_state_is_static():
    points = np.array([[1.0, 0.0, 0.0], [0.3, -0.4, 2.0], [5.0, 5.0, 5.0]])
    assert hydrogen_force_balance(points) == 0.0
    V, VQ = hydrogen_potentials(points)
    assert np.allclose(V + VQ, -0.5)

    ens = integrate_second_order(hydrogen_ground_state(), points, np.zeros(3), dt=0.01, t_final=1.0)
    assert ens.integrator == Integrator.NEWTON_VERLET
    assert ens.integrator.value == "newton-verlet"
    assert np.array_equal(ens.final_positions, points)
    assert np.all(ens.velocities[:, -1] == 0.0)


def test_hydrogen_launched_particle_escapes_ballistically():
    start = np.array([[1.0, 0.0, 0.0]])
    ens = integrate_second_order(hydrogen_ground_state(), start, [[0.0, 0.0, 0.3]], dt=0.01, t_final=20.0,
                                 record_every=100)

    speeds = np.linalg.norm(ens.velocities[0], axis=1)
    assert np.allclose(speeds, 0.3, rtol=0.0, atol=1e-8)
    assert np.allclose(ens.positions[0, :, 2], 0.3 * ens.times, atol=1e-8)
    radii = np.linalg.norm(ens.positions[0], axis=1)
    assert np.allclose(radii, np.sqrt(1.0 + 0.09 * ens.times ** 2), atol=1e-8)
    assert radii[-1] > 6.0


def test_second_order_needs_force():
    with pytest.raises(InvalidInputError):
        integrate_second_order(vortex_flow(1), [[1.0, 0.0]], [[0.0, 0.0]], dt=0.01, t_final=1.0)


def test_non_crossing_only_applies_to_guided():
    ens = integrate_second_order(plane_wave_flow([1.0]), [[0.0], [1.0]], [[1.0], [-1.0]], dt=0.1, t_final=2.0)
    report = non_crossing_check(ens)
    assert not report.applicable
    assert report.passed


def test_unconfined_ensemble_has_no_divergence():
    x = y = np.linspace(-2.0, 2.0, 21)
    z = np.linspace(0.0, 1.0, 11)
    F = lambda X, Y: np.exp(-(X ** 2 + Y ** 2))
    U = lambda X, Y: 1.0 + X * Y
    assert unconfined_ensemble_divergence(F, U, x, y, z) == 0.0


def test_grid_flow_rejects_coarse_snapshots():
    spec = GridSpec.line(0.0, 2 * np.pi, 64)
    seq = evolve(plane_wave(spec, [2.0]), EvolutionConfig(dt=0.01, steps=20, record_every=10))
    with pytest.raises(InvalidInputError):
        integrate_guided(GridFlow(seq), [[1.0]], dt=0.01)


def test_grid_flow_follows_plane_wave():
    spec = GridSpec.line(0.0, 2 * np.pi, 64)
    seq = evolve(plane_wave(spec, [2.0]), EvolutionConfig(dt=0.01, steps=20))
    ens = integrate_guided(GridFlow(seq), [[1.0], [3.0]], dt=0.01)
    assert ens.times[-1] == pytest.approx(0.2)
    assert np.allclose(ens.final_positions[:, 0], [1.4, 3.4], atol=1e-4)
    assert ens.source["name"] == "grid-sequence"


def test_ensemble_csv_and_manifest(tmp_path):
    ens = integrate_guided(_contracting(node_radius=0.1), [[1.0, 0.0], [0.0, 20.0]], dt=0.01, t_final=3.0,
                           record_every=100)
    csv_text = ensemble_to_csv(ens)
    lines = csv_text.splitlines()
    assert lines[0] == "trajectory_id,t,q_1,q_2,status"
    assert lines[1].startswith("0,0,1,0,active")
    assert any(line.endswith("node-captured") for line in lines)

    names = [a.name for a in ensemble_artifacts(ens, seeds={"positions": 7})]
    assert names == ["trajectories.csv", "trajectories_manifest.json"]

    written = write_ensemble(ens, tmp_path, name="orbits.csv")
    assert [p.name for p in written] == ["orbits.csv", "orbits_manifest.json"]
    assert written[0].read_text() == csv_text


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(min_value=-50, max_value=50), min_size=2, max_size=12, unique=True))
def test_one_dimensional_guided_flow_keeps_order(starts):
    q0 = np.asarray(starts, dtype=float).reshape(-1, 1) / 10.0
    ens = integrate_guided(_contracting(dim=1), q0, dt=0.05, t_final=1.0)
    report = non_crossing_check(ens)
    assert report.applicable
    assert report.order_preserved
    assert report.passed
