import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adsqnm.errors import NoEigenvaluesInRegion, NotFound
from adsqnm.geometry import BlackHoleParams
from adsqnm.spectra import (SearchRegion, match_pole, polyeig, resolvent_norm, scan_rectangle,
                            solve_qnf)
from adsqnm.stationary import assemble, build_grid, evaluate_at


def test_polyeig_scalar():
    lam, _ = polyeig(np.array([[-1.0]]), np.array([[0.0]]), np.array([[1.0]]))
    np.testing.assert_allclose(np.sort(lam.real), [-1.0, 1.0], atol=1e-14)


@given(st.integers(2, 5), st.integers(0, 10_000))
def test_polyeig_pairs_are_singular(n, seed):
    rng = np.random.default_rng(seed)
    A = [rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(3)]
    A[2] += 3 * np.eye(n)
    lam, V = polyeig(*A)
    assert lam.size == 2 * n
    for j in range(lam.size):
        r = (A[0] + lam[j] * A[1] + lam[j] ** 2 * A[2]) @ V[:, j]
        assert np.linalg.norm(r) <= 1e-8 * (1 + abs(lam[j])) ** 2 * np.linalg.norm(V[:, j])


def test_qnfs_decay_and_are_stable(spectrum_ref):
    conv = spectrum_ref.converged()
    assert len(conv) >= 5
    for e in conv:
        assert e.lam.imag < -1e-8
        assert e.residual <= 1e-8
        assert abs(e.lam - e.coarse_lam) <= 1e-6 * (1 + abs(e.lam))


def test_static_spectrum_symmetric():
    """For a = 0, k = 0 the spectrum is invariant under lam -> -conj(lam)."""
    p = BlackHoleParams(1.0, 0.0)
    op = assemble(p, build_grid(p, 20, 6))
    spec = solve_qnf(op, SearchRegion(-6, 6, -4, 1))
    vals = spec.values()
    for v in vals:
        assert np.min(np.abs(vals + np.conj(v))) <= 1e-6 * (1 + abs(v))


def test_empty_region_raises(ops_ref):
    with pytest.raises(NoEigenvaluesInRegion):
        solve_qnf(ops_ref[0], SearchRegion(2, 3, 50, 60))


def test_resolvent_norm_large_at_qnf_small_far_up(ops_ref, spectrum_ref):
    _, fine = ops_ref
    lam = spectrum_ref.converged()[0].lam
    assert resolvent_norm(fine, lam) > 1e6
    assert resolvent_norm(fine, 1e4j) < 1e-3


def test_resolvent_norm_peaks_on_approach(ops_ref, spectrum_ref):
    _, fine = ops_ref
    lam = spectrum_ref.converged()[0].lam
    vals = [resolvent_norm(fine, lam + d * 1j) for d in (0.5, 0.1, 0.01, 0.001)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_sigma_min_matches_dense_svd():
    p = BlackHoleParams(1.0, 0.1)
    op = assemble(p, build_grid(p, 10, 5))
    z = 3.0 - 0.2j
    from adsqnm.spectra import condense

    (A0, A1, A2), interior, _ = condense(op)
    w = op.weights()[interior]
    A = np.sqrt(w)[:, None] * (A0 + z * A1 + z * z * A2) / np.sqrt(w)[None, :]
    ref = 1.0 / np.linalg.svd(A, compute_uv=False)[-1]
    assert resolvent_norm(op, z) == pytest.approx(ref, rel=1e-10)


def test_scan_dimensions_and_candidates(ops_ref, spectrum_ref):
    coarse, _ = ops_ref
    scan = scan_rectangle(coarse, (2, 8), (-0.4, 0.5), 7, 4, kappa=coarse.grid.horizon.surface_gravity)
    assert scan.values.shape == (4, 7)
    assert len(list(scan.rows())) == 28
    for c in scan.candidates:
        assert scan.values.max() >= 1e4
        assert 2 <= c.real <= 8


def test_scan_rejects_strip_violation(ops_ref):
    with pytest.raises(ValueError):
        scan_rectangle(ops_ref[0], (2, 3), (-2.0, 0.5), 3, 3, kappa=2.0)


def test_match_pole_self_match(spectrum_ref):
    lam = spectrum_ref.converged()[0].lam
    m = match_pole(spectrum_ref, lam.real, 2 * abs(lam.imag), c_match=1.0, gamma=0.0)
    vals = spectrum_ref.values(converged_only=True)
    assert m.within and m.found in vals
    assert m.distance <= abs(lam.imag) + 1e-12
    assert m.distance == pytest.approx(abs(m.found - lam.real))


def test_match_pole_not_found(spectrum_ref):
    with pytest.raises(NotFound) as info:
        match_pole(spectrum_ref, 4.0, 1e-12, gamma=0.0)
    assert info.value.nearest is not None


def test_evaluate_singular_at_converged_pair(spectrum_ref, ops_ref):
    _, fine = ops_ref
    e = spectrum_ref.converged()[0]
    r = evaluate_at(fine, e.lam) @ e.mode
    assert np.linalg.norm(r) <= 1e-4 * np.linalg.norm(e.mode) * np.abs(fine.P0).max()
