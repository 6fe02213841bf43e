import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbohm.clebsch import (
    ClebschPair,
    ExternalEM,
    GaugeTriple,
    ScalarFunction,
    advection_residual,
    effective_field_consistency,
    effective_fields,
    effective_lorentz_force,
    gauge_constraint_residual,
    gauge_transform,
    generalized_velocity,
    maxwell_residuals,
    mesh_points,
    phase_gradient_from_psi,
    vorticity_residual,
    vorticity_transport_residual,
)
from qbohm.enums import Boundary
from qbohm.errors import InvalidInputError
from qbohm.grid_core import GridSpec, complex_field, real_field
from qbohm.rankine import RankineParams, rankine_clebsch_flow, rankine_clebsch_pair, rankine_flow, rankine_phase
from runner.experiments.clebsch_check import sine_gauge, smooth_pair, smooth_phase

NONE = ExternalEM.none()


@pytest.fixture
def rankine():
    return RankineParams(N=1, xi0=1.0)


@pytest.fixture
def core_probes():
    return np.array([[r * np.cos(a), r * np.sin(a)] for r in (0.3, 0.6, 0.8) for a in (0.3, 2.0, 4.1)])


@pytest.fixture
def rankine_box():
    return GridSpec.square(-3.0, 3.0, 256, Boundary.DIRICHLET)


def test_rankine_effective_fields(rankine, core_probes):
    pair = rankine_clebsch_pair(rankine)
    fields = effective_fields(pair, core_probes)
    assert np.allclose(fields.B_eff, rankine.B0)
    alpha = pair.alpha.value(core_probes)
    assert np.allclose(fields.V_eff, -rankine.omega * alpha)

    outside = np.array([[1.5, 0.0], [0.0, -2.5]])
    assert np.all(effective_fields(pair, outside).B_eff == 0.0)


def test_linear_phase_gives_uniform_velocity():
    points = np.random.default_rng(0).uniform(-1.0, 1.0, size=(10, 2))
    v = generalized_velocity(ScalarFunction.linear([1.0, 2.0]), ClebschPair.zero(), NONE, 2.0, points)
    assert np.allclose(v, [0.5, 1.0])


def test_uniform_magnetic_field_balances_vorticity():
    spec = GridSpec.square(-2.0, 2.0, 64, Boundary.DIRICHLET)
    em = ExternalEM.uniform_magnetic_field(1.5)
    velocity = lambda q, t: generalized_velocity(ScalarFunction.constant(), ClebschPair.zero(), em, 2.0, q, t)
    assert vorticity_residual(velocity, ClebschPair.zero(), em, 2.0, spec) < 1e-10


def test_identity_gauge_satisfies_constraints():
    assert gauge_constraint_residual(GaugeTriple.identity()) == 0.0


def test_gauge_violating_constraints_is_rejected(rankine):
    doubled = GaugeTriple(f=lambda a, b, t: np.zeros_like(a), g=lambda a, b, t: a, h=lambda a, b, t: 2 * b,
                          name="doubled")
    with pytest.raises(InvalidInputError):
        gauge_transform(rankine_phase(rankine), rankine_clebsch_pair(rankine), doubled)


def test_sine_gauge_leaves_velocity_unchanged(rankine):
    S, pair = rankine_phase(rankine), rankine_clebsch_pair(rankine)
    S_g, pair_g = gauge_transform(S, pair, sine_gauge())
    assert pair_g.beta.cyclic
    radii = np.linspace(0.5, 2.0, 7)
    points = np.column_stack([radii * np.cos(1.1), radii * np.sin(1.1)])
    v = generalized_velocity(S, pair, NONE, rankine.mass, points)
    v_g = generalized_velocity(S_g, pair_g, NONE, rankine.mass, points)
    assert np.max(np.abs(v_g - v)) < 1e-9


def test_rankine_core_vorticity(rankine, rankine_box):
    x, y = rankine_box.mesh()
    core = np.hypot(x, y) < 0.9
    pair = rankine_clebsch_pair(rankine)
    residual = vorticity_residual(rankine_flow(rankine).velocity, pair, NONE, rankine.mass, rankine_box, region=core)
    assert residual < 1e-8


def test_smooth_pair_vorticity(unit_torus):
    pair, phase = smooth_pair(), smooth_phase()
    velocity = lambda q, t: generalized_velocity(phase, pair, NONE, 1.0, q, t)
    assert vorticity_residual(velocity, pair, NONE, 1.0, unit_torus) < 1e-8


def test_solid_body_vorticity_is_transported(rankine, rankine_box):
    x, y = rankine_box.mesh()
    core = np.hypot(x, y) < 0.9
    v = (-rankine.omega * y, rankine.omega * x)
    assert vorticity_transport_residual(v, NONE, rankine.mass, rankine_box, [0.0], region=core) < 1e-10


def test_time_dependent_transport_needs_three_times(unit_torus):
    velocity = lambda q, t: generalized_velocity(smooth_phase(), smooth_pair(), NONE, 1.0, q, t)
    with pytest.raises(InvalidInputError):
        vorticity_transport_residual(velocity, NONE, 1.0, unit_torus, [0.0, 0.1])


def test_residuals_need_2d_grid(periodic_line):
    with pytest.raises(InvalidInputError):
        maxwell_residuals(smooth_pair(), periodic_line)


def test_maxwell_and_potential_consistency(unit_torus):
    moving = smooth_pair(time_dependent=True)
    maxwell = maxwell_residuals(moving, unit_torus, t=0.4)
    assert maxwell["curl_A"] < 1e-5
    assert maxwell["faraday"] < 1e-5
    assert effective_field_consistency(moving, unit_torus, t=0.4) < 1e-5


def test_magnetic_field_that_is_not_a_curl_is_flagged(unit_torus, monkeypatch):
    exact = effective_fields

    def doubled_b(*args, **kwargs):
        fields = exact(*args, **kwargs)
        return fields.model_copy(update={"B_eff": 2.0 * fields.B_eff})

    monkeypatch.setattr("qbohm.clebsch.effective_fields", doubled_b)
    maxwell = maxwell_residuals(smooth_pair(time_dependent=True), unit_torus, t=0.4)
    assert maxwell["curl_A"] > 1e-3


def test_potentials_are_advected_in_the_core(rankine, core_probes):
    period = 2 * np.pi / rankine.omega
    adv = advection_residual(rankine_clebsch_pair(rankine), rankine_flow(rankine), core_probes,
                             dt=period / 400, t_final=period)
    assert adv.alpha < 1e-6
    assert adv.beta < 1e-6


def test_static_beta_is_not_a_label(rankine, core_probes):
    period = 2 * np.pi / rankine.omega
    wrong = advection_residual(rankine_clebsch_pair(rankine, g_rate=0.0), rankine_flow(rankine), core_probes,
                               dt=period / 400, t_final=period / 4)
    assert wrong.beta == pytest.approx(np.pi / 2, abs=1e-6)


def test_effective_lorentz_force_vanishes_in_core(rankine, core_probes):
    pair = rankine_clebsch_pair(rankine)
    v = generalized_velocity(rankine_phase(rankine), pair, NONE, rankine.mass, core_probes)
    assert np.allclose(v, rankine_flow(rankine).velocity(core_probes, 0.0), atol=1e-12)
    assert np.max(np.abs(effective_lorentz_force(pair, v, core_probes))) < 1e-10


def test_phase_gradient_from_plane_wave(unit_torus):
    psi = complex_field(unit_torus, lambda x, y: np.exp(1j * (2 * x + y)))
    S = phase_gradient_from_psi(psi)
    points = np.random.default_rng(4).uniform(0.0, 2 * np.pi, size=(20, 2))
    assert np.allclose(S.gradient(points), [2.0, 1.0], atol=1e-8)
    with pytest.raises(InvalidInputError):
        S.value(points)


def test_scalar_from_grid_field(unit_torus):
    S = ScalarFunction.from_field(real_field(unit_torus, lambda x, y: np.sin(x) * np.cos(y)))
    points = mesh_points(unit_torus)[::131]
    expected = np.column_stack([np.cos(points[:, 0]) * np.cos(points[:, 1]),
                                -np.sin(points[:, 0]) * np.sin(points[:, 1])])
    assert np.allclose(S.gradient(points), expected, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    st.floats(0.1, 10.0),
)
def test_uniform_vector_potential_drift(a, A0, mass):
    points = np.array([[0.1, 0.2], [-1.0, 3.0]])
    v = generalized_velocity(ScalarFunction.linear(a), ClebschPair.zero(), ExternalEM.uniform_vector_potential(A0),
                             mass, points)
    assert np.allclose(v, (np.asarray(a) - np.asarray(A0)) / mass)


def test_clebsch_assembled_flow_matches_rankine(rankine, core_probes):
    outside = np.array([[1.5, 0.0], [0.0, -2.5], [-2.0, 2.0]])
    points = np.vstack([core_probes, outside])
    assembled = rankine_clebsch_flow(rankine)
    assert assembled.params["pair"]["name"] == "rankine"
    assert np.allclose(assembled.velocity(points, 0.0), rankine_flow(rankine).velocity(points, 0.0), atol=1e-12)
