import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from qbohm.enums import BarrierRegime, Boundary
from qbohm.errors import InvalidInputError
from qbohm.grid_core import GridSpec
from qbohm.rankine import (
    RankineParams,
    barrier_regime,
    bessel_jy,
    check_portrait,
    effective_barrier,
    energy_balance_residual,
    flux_divergence,
    origin_curvature,
    origin_expansion,
    origin_series,
    quantum_potential_slope,
    radial_amplitude,
    radial_euler_residual,
    rankine_artifacts,
    solve_radial,
    trajectory_portrait,
    velocity_profile,
    vorticity_profile,
    w_equation_residual,
    w_transform,
)


@pytest.fixture(scope="module")
def solution():
    return solve_radial(RankineParams(N=1, eps=3.0), tau_max=8.0, d_tau=1e-3)


def test_derived_parameters():
    p = RankineParams(N=2, eps=3.0, xi0=0.5, mass=2.0)
    assert p.B0 == pytest.approx(-16.0)
    assert p.omega == pytest.approx(4.0)
    assert p.n_prime == pytest.approx(2.0)
    assert p.energy == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        RankineParams(N=0)
    with pytest.raises(ValidationError):
        RankineParams(eps=-1.0)


def test_origin_curvature_sign():
    assert origin_curvature(RankineParams(N=1, eps=3.0)) < 0
    assert origin_curvature(RankineParams(N=1, eps=1.0)) > 0
    assert origin_curvature(RankineParams(N=1, eps=2.0)) == 0.0


def test_origin_expansion_matches_leading_terms():
    p = RankineParams(N=2, eps=5.0)
    a, b = origin_series(p)
    tau = np.array([0.0, 0.01, 0.02])
    G, dG = origin_expansion(p, tau)
    assert G[0] == 1.0 and dG[0] == 0.0
    assert np.allclose(G, 1 + a * tau ** 2 + b * tau ** 4, atol=1e-10)
    assert np.allclose(dG, 2 * a * tau + 4 * b * tau ** 3, atol=1e-8)


@pytest.mark.parametrize("kwargs", [dict(d_tau=2e-3), dict(d_tau=3e-4), dict(tau_max=4.0)])
def test_solve_radial_validation(kwargs):
    with pytest.raises(InvalidInputError):
        solve_radial(RankineParams(), **kwargs)


def test_solution_grid_and_bessel_match(solution):
    assert solution.tau[0] == 0.0
    assert solution.G[0] == 1.0
    assert solution.tau[1000] == pytest.approx(1.0)
    assert solution.tau[-1] == pytest.approx(8.0)
    assert solution.fit.residual < 1e-7
    beyond = np.array([9.0, 10.0])
    J, Y = bessel_jy(1, np.sqrt(3.0) * beyond)
    assert np.allclose(radial_amplitude(solution, beyond), solution.fit.C1 * J + solution.fit.C2 * Y)
    assert radial_amplitude(solution, [0.5])[0] == pytest.approx(solution.G[500], abs=1e-12)


def test_bessel_jy_edges():
    J, Y = bessel_jy(0, 1e-3)
    assert J == pytest.approx(1.0, abs=1e-6)
    assert Y < -4.0
    dJ, _ = bessel_jy(1, 1e-3, derivative=1)
    assert dJ == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(InvalidInputError):
        bessel_jy(0, 0.0)
    with pytest.raises(InvalidInputError):
        bessel_jy(2, [1.0, 0.0])
    with pytest.raises(InvalidInputError):
        bessel_jy(1, -1.0)
    with pytest.raises(InvalidInputError):
        bessel_jy(-1, 1.0)


def test_rk4_converges_at_fourth_order():
    p = RankineParams(N=1, eps=100.0)
    ends = [solve_radial(p, tau_max=5.0, d_tau=h, match=False).G[-1] for h in (1e-3, 5e-4, 2.5e-4)]
    ratio = (ends[0] - ends[1]) / (ends[1] - ends[2])
    assert 10.0 < ratio < 24.0


def test_w_equation_residual(solution):
    assert w_equation_residual(solution) < 1e-4
    assert w_equation_residual(solution, tau_min=1.2, exact=False) < 1e-4


def test_effective_barrier_values():
    U = effective_barrier(1, [0.0, 0.5, 1.0, 2.0])
    assert np.allclose(U, [2.0, 1.75, 1.0, 0.1875])


def test_barrier_report(solution):
    W, U, report = w_transform(solution)
    assert np.allclose(W, solution.G * np.sqrt(solution.tau))
    assert report.maximum == 2.0
    assert report.argmax == 0.0
    assert report.inner_limit == 1.0
    assert report.outer_limit == 0.75
    assert report.regime == BarrierRegime.ABOVE


@pytest.mark.parametrize("eps, regime", [
    (3.0, BarrierRegime.ABOVE),
    (2.0, BarrierRegime.AT),
    (1.0, BarrierRegime.BELOW),
])
def test_barrier_regimes(eps, regime):
    assert barrier_regime(RankineParams(N=1, eps=eps)) == regime


def test_profile_identities():
    p = RankineParams(N=2, eps=7.0, xi0=1.5, mass=0.5)
    xi = np.linspace(0.05, 8.0, 400)
    assert radial_euler_residual(p, xi) < 1e-10
    assert energy_balance_residual(p, xi) < 1e-10
    assert np.allclose(vorticity_profile(p, [0.5, 2.0]), [2 * p.omega, 0.0])
    with pytest.raises(InvalidInputError):
        radial_euler_residual(p, [0.0, 1.0])


def test_orbit_portrait():
    p = RankineParams(N=1, eps=3.0)
    ens = trajectory_portrait(p, [0.5, 2.0])
    check = check_portrait(p, ens)
    assert np.allclose(check.periods, check.expected, rtol=1e-4)
    assert check.expected == pytest.approx([2 * np.pi, 8 * np.pi])
    assert max(check.radius_drift) < 1e-6
    with pytest.raises(InvalidInputError):
        trajectory_portrait(p, [0.0, 1.0])


def test_flux_is_divergence_free(solution):
    spec = GridSpec.square(-3.0, 3.0, 128, Boundary.DIRICHLET)
    assert flux_divergence(solution.params, solution, spec) < 1e-3


def test_rankine_artifact_names(solution):
    ens = trajectory_portrait(solution.params, [0.5], record_every=50)
    spec = GridSpec.square(-2.0, 2.0, 16, Boundary.DIRICHLET)
    artifacts = rankine_artifacts(solution.params, solution, ens, spec)
    assert [a.name for a in artifacts] == [
        "rankine_profile.csv", "rankine_traj.csv", "rankine_traj_manifest.json", "rankine_density.csv",
    ]
    assert artifacts[0].text.splitlines()[0] == "tau,G,W,U_eff"
    assert artifacts[1].text.splitlines()[0] == "trajectory_id,t,x,y"


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 2.0), st.floats(0.5, 3.0))
def test_velocity_is_continuous_at_core_edge(N, xi0, mass):
    p = RankineParams(N=N, xi0=xi0, mass=mass)
    inside, outside = velocity_profile(p, [xi0, xi0 * (1 + 1e-12)])
    assert inside == pytest.approx(outside, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 2.0), st.floats(0.5, 3.0),
       st.lists(st.floats(0.1, 5.0), min_size=1, max_size=10))
def test_radial_euler_balance_holds(N, xi0, mass, scaled):
    p = RankineParams(N=N, xi0=xi0, mass=mass)
    xi = np.asarray(scaled) * xi0
    scale = float(np.max(np.abs(quantum_potential_slope(p, xi))))
    assert radial_euler_residual(p, xi) <= 1e-12 * max(scale, 1.0)
