import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from adsqnm.energy import (cross_term_coefficient, default_probe_samples, hardy_constant,
                           indicial_roots, stress_energy, twisting_potential, upper_bound_probe,
                           verify_identity)
from adsqnm.geometry import BlackHoleParams, find_horizon
from adsqnm.stationary import assemble, build_grid
from oracles import twist_potential_fd


def manufactured(s, x):
    """Twisted profile of ``u = r^{nu - 3/2} e^{-r}``, i.e. ``w = e^{-1/s}``."""
    s = np.asarray(s, dtype=float)
    pos = s > 0
    w = np.where(pos, np.exp(-1.0 / np.where(pos, s, 1.0)), 0.0)
    return w[:, None] * np.ones_like(np.asarray(x, dtype=float))[None, :]


@pytest.mark.parametrize("nu", [0.5, 0.75, 1.2])
def test_twist_matches_finite_differences(nu):
    p = BlackHoleParams(1.0, 0.2, nu)
    g = build_grid(p, 24, 6)
    td = twisting_potential(p, g)
    j, i = 8, 2
    ref = twist_potential_fd(1.0, 0.2, nu, 1.0 / g.s[j], np.arccos(g.x[i]))
    assert td.Q_values[j, i] == pytest.approx(ref, abs=1e-5)


@pytest.mark.parametrize("nu", [0.5, 0.75])
def test_twist_decays_quadratically(nu):
    p = BlackHoleParams(1.0, 0.2, nu)
    assert twisting_potential(p, build_grid(p, 40, 8)).decay_power >= 1.95


def test_twist_vanishes_for_conformal_mass():
    p = BlackHoleParams(1.0, 0.2, 1.5)
    td = twisting_potential(p, build_grid(p, 32, 8))
    assert np.abs(td.Q_values).max() <= 1e-12
    assert np.abs(td.assembled).max() <= 1e-8


def test_zero_mode_has_zero_energy():
    p = BlackHoleParams(1.0, 0.2, 1.5, 1)
    g = build_grid(p, 16, 6)
    for Y in ("T", "K"):
        assert np.all(stress_energy(p, g, np.zeros(g.size), 1.0 + 0.5j, Y=Y)["T"] == 0)


@given(st.floats(0.0, 0.6), st.floats(0.1, 3.0))
def test_cross_term_vanishes_on_horizon(a, theta):
    p = BlackHoleParams(1.0, a)
    hz = find_horizon(p)
    assert abs(cross_term_coefficient(p, hz.r_plus, theta, hz)) <= 1e-10


def _k_decomposition(lam, n=32):
    p = BlackHoleParams(1.0, 0.2, 1.5, 1)
    g = build_grid(p, n, 8, delta=0.0)
    S, X = g.mesh()
    w = (np.exp(-S) * (1 + X)).ravel()
    return g, stress_energy(p, g, w, lam, Y="K", k=1)


def test_f2_nonnegative_with_quartic_growth():
    g, d = _k_decomposition(2.0)
    F2 = d["F2"]
    assert np.all(F2 >= -1e-14)
    assert np.all(F2[-1] == pytest.approx(0.0, abs=1e-12))  # horizon row
    assert np.all(F2[-2] > 0)
    sel = (g.s > 0) & (g.s < 0.1)
    for i in range(g.n_angular):
        slope = stats.linregress(np.log(g.r[sel]), np.log(F2[sel, i])).slope
        assert slope == pytest.approx(4.0, abs=0.1)


def test_e2_grows_at_most_linearly():
    ratios = []
    for lam in (1.0, 4.0, 16.0, 64.0):
        g, d = _k_decomposition(lam)
        E2 = d["E2"][g.s > 0]
        ratios.append(np.nanmax(np.abs(E2)) / (1 + lam))
    assert max(ratios[1:]) <= ratios[0]


def test_identity_converges_for_manufactured_mode():
    p = BlackHoleParams(1.0, 0.2, 1.5)
    rep = verify_identity(p, manufactured, 2 + 1j, n_radial=32, check_convergence=True)
    (n0, r0), (n1, r1) = rep.refinement
    assert (n0, n1) == (32, 64)
    assert r1 <= r0 / 10
    assert abs(rep.boundary_Y_term) <= 1e-12
    order = np.log2(r0 / r1)
    assert order >= 4


def test_horizon_integrand_nonnegative_for_k():
    p = BlackHoleParams(1.0, 0.3, 1.5, 1)
    rep = verify_identity(p, manufactured, 1.5 + 0.3j, Y="K", n_radial=16)
    assert rep.horizon_integrand_min >= 0
    assert rep.horizon_term <= 0  # the inward flux is minus the horizon energy


def test_dirichlet_qnm_boundary_term_vanishes(spectrum_ref, ops_ref):
    _, fine = ops_ref
    e = spectrum_ref.converged()[0]
    rep = verify_identity(fine.params, e.mode, e.lam, grid=fine.grid, n_radial=24)
    scale = max(abs(rep.time_derivative_term), abs(rep.bulk_term), 1e-300)
    assert abs(rep.boundary_Y_term) <= 1e-6 * scale


@pytest.mark.parametrize("lam, k, expected", [
    (1.0, 0, (-2.0, 0.5j)),
])
def test_indicial_hand_example(lam, k, expected):
    out = indicial_roots(BlackHoleParams(1.0, 0.0), lam, k)
    assert out["s_value"] == pytest.approx(expected[0])
    assert out["roots"][0] == 0
    assert out["roots"][1] == pytest.approx(expected[1])


@given(st.floats(0.1, 20.0))
def test_indicial_real_frequency_root_is_imaginary(lam):
    out = indicial_roots(BlackHoleParams(1.0, 0.3), lam, 0)
    assert out["s_value"] != 0
    assert out["roots"][1].real == pytest.approx(0.0, abs=1e-14)


def test_indicial_exceptional_value():
    p = BlackHoleParams(1.0, 0.3, k=2)
    hz = find_horizon(p)
    lam = p.a * 2 / (hz.r_plus**2 + p.a**2)
    out = indicial_roots(p, lam, 2)
    assert abs(out["s_value"]) <= 1e-14
    assert abs(out["roots"][1]) <= 1e-14


def test_hardy_constant_stable():
    p = BlackHoleParams(1.0, 0.2, 0.75)
    family = [(lambda c: (lambda s, x: np.cos(c * s[:, None] ** 2) * (1 + x[None, :] ** 2)))(c)
              for c in (0.5, 1.0, 2.0, 4.0)]
    cs = [hardy_constant(p, family, n_radial=n) for n in (24, 32, 48)]
    assert all(np.isfinite(cs))
    assert max(cs) - min(cs) <= 0.05 * max(cs)


def test_probe_default_samples_avoid_strip():
    lam = default_probe_samples(2.0)
    assert np.all(lam.imag > 0) and np.all(np.abs(lam.real) > 2)


def test_probe_bounded_on_imaginary_axis():
    p = BlackHoleParams(1.0, 0.1)
    op = assemble(p, build_grid(p, 24, 8))
    out = upper_bound_probe(op, 1j * np.linspace(5, 50, 6))
    assert out["lam"].size == 6
    assert out["spread"] <= 1e2


def test_probe_hawking_reall_with_mixed_k():
    p = BlackHoleParams(1.0, 0.2)
    assert find_horizon(p).hawking_reall
    g = build_grid(p, 24, 8)
    for k in (0, 1, 2):
        out = upper_bound_probe(assemble(p, g, k=k), default_probe_samples()[::3])
        assert out["spread"] <= 1e2
