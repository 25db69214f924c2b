import math

import numpy as np
import pytest
from hypothesis import given
from scipy.interpolate import CubicSpline
from hypothesis import strategies as st

from adsqnm.errors import AmbiguousClassification, OutsideChart
from adsqnm.geometry import (BlackHoleParams, default_delta, delta_r, ergoregion_contains,
                             find_horizon, metric_scalars)
from adsqnm.symbol_flow import (Classification, _sigma_plus_roots, ExitReason, PhasePoint, characteristic_seeds,
                                check_dichotomy, classify, fiber_infinity_points, hamilton_rhs,
                                integrate, l_plus_point, principal_symbol)

P = BlackHoleParams(1.0, 0.3)
HZ = find_horizon(P)


def _fd_field(params, pt, h=1e-6):
    def p_at(**kw):
        d = dict(r=pt.r, theta=pt.theta, phi=pt.phi, xi_r=pt.xi_r, xi_theta=pt.xi_theta,
                 xi_phi=pt.xi_phi, z=pt.z)
        d.update(kw)
        return principal_symbol(params, PhasePoint(**d))

    def d(name):
        v = getattr(pt, name)
        return (p_at(**{name: v + h}) - p_at(**{name: v - h})) / (2 * h)

    c = pt.fiber_scale
    return c * np.array([d("xi_r"), d("xi_theta"), d("xi_phi"), -d("r"), -d("theta"), -d("phi")])


@given(st.floats(0.9, 5.0), st.floats(0.3, 2.8), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-3, 3), st.floats(0.5, 2.0))
def test_hamilton_field_matches_finite_differences(r, th, xr, xh, xp, z):
    pt = PhasePoint(r, th, 0.4, xr, xh, xp, z)
    exact = hamilton_rhs(P, pt)
    fd = _fd_field(P, pt)
    scale = np.abs(exact).max() + 1e-3
    np.testing.assert_allclose(exact, fd, rtol=1e-6, atol=1e-6 * scale)
    assert exact[5] == 0.0


def test_phase_point_chart():
    with pytest.raises(OutsideChart):
        PhasePoint(-1.0, 1.0, 0, 1, 0, 0, 1)
    with pytest.raises(OutsideChart):
        PhasePoint(2.0, 0.0, 0, 1, 0, 0, 1)


def test_elliptic_point():
    pt = PhasePoint(5.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    assert not ergoregion_contains(P, 5.0, 1.0)
    assert classify(P, pt) is Classification.NOT_CHARACTERISTIC


def test_conormal_at_horizon_is_sigma_plus():
    # dr over r = r_+ is characteristic (G^{rr} = 0) and lies on Sigma_+
    pt = PhasePoint(HZ.r_plus, 1.2, 0.0, 1e3, 0.0, 0.0, 1e-9)
    assert classify(P, pt) is Classification.SIGMA_PLUS


def test_reflection_swaps_components():
    rng = np.random.default_rng(3)
    for s in characteristic_seeds(P, 20, rng, horizon=HZ):
        ref = PhasePoint(s.r, s.theta, s.phi, -s.xi_r, -s.xi_theta, -s.xi_phi, -s.z)
        assert classify(P, s) is Classification.SIGMA_PLUS
        assert classify(P, ref) is Classification.SIGMA_MINUS


def test_zero_frequency_rejected():
    with pytest.raises(ValueError):
        classify(P, PhasePoint(2.0, 1.0, 0, 1, 0, 0, 0.0))


def test_ambiguous_pairing():
    # the pure angular covector at the horizon pairs to zero with dt*
    pt = PhasePoint(HZ.r_plus, 1.0, 0.0, 0.0, 1.0, 0.0, 1e-30)
    with pytest.raises(AmbiguousClassification):
        classify(P, pt, tol=1e3, pairing_tol=1e-12)


def test_radial_velocity_negative_on_sigma_plus_at_horizon():
    rng = np.random.default_rng(0)
    count = 0
    while count < 50:
        th = rng.uniform(0.2, math.pi - 0.2)
        z = rng.uniform(1.0, 2.0)
        xh, xp = rng.standard_normal(2)
        roots = _sigma_plus_roots(P, HZ.r_plus, th, xh, xp, z)
        finite = [x for x in roots if abs(x) < 1e6]
        if not finite:
            continue
        pt = PhasePoint(HZ.r_plus, th, 0.0, finite[0], xh, xp, z)
        assert classify(P, pt) is Classification.SIGMA_PLUS
        assert hamilton_rhs(P, pt)[0] < 0
        count += 1


@pytest.mark.parametrize("sign, reason", [(1, ExitReason.CONVERGED_TO_L_PLUS),
                                          (-1, ExitReason.CONVERGED_TO_L_MINUS)])
def test_radial_sets_are_invariant(sign, reason):
    y0 = l_plus_point(HZ, sign, 1.1)
    traj = integrate(P, y0, t_max=5.0, z=1.0, horizon=HZ)
    c = traj.compact
    assert np.abs(c[:, 0] - HZ.r_plus).max() < 1e-12
    assert np.abs(c[:, 3]).max() == 0.0
    assert np.abs(c[:, 4] - sign).max() < 1e-12
    # the field vanishes on L, so the integrator may cover [0, t_max] in one step
    assert traj.exit_reason in (reason, ExitReason.MAX_TIME)


def test_backward_convergence_to_source():
    y0 = l_plus_point(HZ, 1, 1.1)
    y0[0] += 1e-3
    y0[3] = 1e-2
    y0[5] = 0.05
    y0[4:7] /= np.linalg.norm(y0[4:7])
    traj = integrate(P, y0, t_max=-200.0, z=1.5, horizon=HZ)
    assert traj.exit_reason is ExitReason.CONVERGED_TO_L_PLUS


def test_inward_seed_escapes():
    r = HZ.r_plus + 0.5 * default_delta(HZ)
    rng = np.random.default_rng(1)
    hits = 0
    for s in characteristic_seeds(P, 30, rng, horizon=HZ):
        if s.xi_r >= 0:
            continue
        pt = PhasePoint(r, s.theta, 0.0, s.xi_r, s.xi_theta, s.xi_phi, s.z)
        roots = [x for x in _sigma_plus_roots(P, r, s.theta, s.xi_theta, s.xi_phi, s.z) if x < 0]
        if not roots:
            continue
        pt = PhasePoint(r, s.theta, 0.0, roots[0], s.xi_theta, s.xi_phi, s.z)
        traj = integrate(P, pt, t_max=200.0, horizon=HZ)
        assert traj.exit_reason is ExitReason.REACHED_INNER_BOUNDARY
        hits += 1
    assert hits > 0


def test_symbol_conserved_and_classification_invariant():
    rng = np.random.default_rng(7)
    for s in characteristic_seeds(P, 10, rng, horizon=HZ):
        traj = integrate(P, s, t_max=50.0, horizon=HZ)
        assert traj.drift <= 1e-8 * (1 + abs(principal_symbol(P, s)))
        for sample in traj.samples[:: max(1, len(traj.samples) // 10)]:
            if sample.point is not None:
                assert classify(P, sample.point) is Classification.SIGMA_PLUS


def test_homogeneity_of_base_curves():
    rng = np.random.default_rng(11)
    s = characteristic_seeds(P, 1, rng, horizon=HZ)[0]
    s2 = PhasePoint(s.r, s.theta, s.phi, 2 * s.xi_r, 2 * s.xi_theta, 2 * s.xi_phi, 2 * s.z)
    t1 = integrate(P, s, t_max=-20.0, horizon=HZ, rtol=1e-12, atol=1e-14)
    t2 = integrate(P, s2, t_max=-40.0, horizon=HZ, rtol=1e-12, atol=1e-14)
    b1, b2 = t1.compact, t2.compact
    tau = np.linspace(max(b1[:, 7].min(), b2[:, 7].min()), 0.0, 25)
    for col in (0, 1, 2):
        f1 = CubicSpline(b1[::-1, 7], b1[::-1, col])(tau)
        f2 = CubicSpline(b2[::-1, 7], b2[::-1, col])(tau)
        assert np.abs(f1 - f2).max() <= 1e-6


@pytest.mark.parametrize("a", [0.0, 0.3])
def test_dichotomy(a):
    p = BlackHoleParams(1.0, a)
    hz = find_horizon(p)
    rng = np.random.default_rng(42)
    outcomes = [check_dichotomy(p, s, horizon=hz).outcome
                for s in characteristic_seeds(p, 25, rng, horizon=hz)]
    assert "failure" not in outcomes


def test_fiber_infinity_projects_into_ergoregion():
    rng = np.random.default_rng(5)
    for pt in fiber_infinity_points(P, 30, rng, horizon=HZ):
        assert classify(P, pt) is not Classification.NOT_CHARACTERISTIC
        Dr, Dth, _ = metric_scalars(P, pt.r, pt.theta)
        slack = 1e-3 * (1 + pt.r**4)
        assert Dr <= P.a**2 * Dth * math.sin(pt.theta) ** 2 + slack


def test_trajectory_rows_layout():
    rng = np.random.default_rng(2)
    s = characteristic_seeds(P, 1, rng, horizon=HZ)[0]
    traj = integrate(P, s, t_max=10.0, horizon=HZ)
    rows = traj.rows()
    assert all(len(r) == 8 for r in rows)
    assert rows[-1][7] == traj.exit_reason.value
    assert all(r[7] == "" for r in rows[:-1])
    assert delta_r(P, HZ.r_plus) == pytest.approx(0.0, abs=1e-12)
