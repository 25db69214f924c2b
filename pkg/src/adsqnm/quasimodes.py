"""Trapped quasimodes: Dirichlet-wall eigenmodes cut off and extended by zero.

The construction mirrors what the pole-capture argument consumes: a real
frequency, a unit-norm mode supported in ``r > r1`` and a measured residual
``||P(lambda_sharp) u_sharp||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import collocation
from .errors import CutoffTooSharp, InsufficientResolution, NoTrappedModes
from .geometry import BlackHoleParams, find_horizon, trapping_radius
from .spectra import SearchRegion, dominant_degree, eigenpairs
from .stationary import (BoundaryCondition, DiscreteOperator, assemble, build_grid,
                         evaluate_at, l2_weight, norms, traces)

__all__ = [
    "TruncatedMode",
    "Quasimode",
    "SequenceTable",
    "default_r1",
    "smoothstep",
    "cutoff",
    "solve_truncated",
    "extend_cutoff",
    "residual_sequence",
    "branches",
    "dirichlet_trace",
    "cutoff_residual",
]


@dataclass
class TruncatedMode:
    lam: complex
    mode: np.ndarray
    ell: int
    nearly_real: bool
    op: DiscreteOperator


@dataclass
class Quasimode:
    ell: int
    lambda_sharp: float
    vector: np.ndarray
    residual: float
    r1: float
    transition_width: float
    norm_check: float
    annulus_fraction: float
    op: DiscreteOperator
    grid_residual: float = math.nan


def default_r1(params: BlackHoleParams) -> float:
    """Midpoint between ``r_+`` and the equatorial trapping radius."""
    hz = find_horizon(params)
    return 0.5 * (hz.r_plus + trapping_radius(params, hz))


def smoothstep(t):
    """C^4 transition ``0 -> 1`` on ``[0, 1]`` (degree-9 Hermite polynomial)."""
    t = np.clip(t, 0.0, 1.0)
    return t**5 * (126.0 - 420.0 * t + 540.0 * t**2 - 315.0 * t**3 + 70.0 * t**4)


def cutoff(r, r1: float, width: float):
    """0 for ``r <= r1``, 1 for ``r >= r1 + width``, C^4 in between."""
    r = np.asarray(r, dtype=float)
    return smoothstep((r - r1) / width)


def solve_truncated(params: BlackHoleParams, n_radial: int, n_angular: int,
                    bc: BoundaryCondition | None = None, r1: float | None = None, *,
                    region: SearchRegion | None = None, imag_tol: float = 1e-6):
    """Eigenmodes of ``P`` on ``{r >= r1}`` with a Dirichlet wall at ``r1``.

    Returns the eigenpairs with positive real part sorted by real part.
    Each carries its dominant Legendre degree ``ell`` and a flag telling
    whether it is nearly real (``|Im| <= imag_tol (1 + |Re|)``).

    Raises
    ------
    NoTrappedModes
    """
    bc = bc or BoundaryCondition.dirichlet()
    r1 = default_r1(params) if r1 is None else float(r1)
    grid = build_grid(params, n_radial, n_angular, r_inner=r1)
    op = assemble(params, grid, bc, k=0)
    region = region or SearchRegion(1e-8, math.inf, -math.inf, math.inf)
    pairs = eigenpairs(op, region, vectors=True)
    out = []
    W = (grid.quadrature() * l2_weight(grid, 0)).ravel()
    for lam, v, _par in pairs:
        nrm = math.sqrt(float(np.sum(W * np.abs(v) ** 2)))
        v = v / nrm if nrm > 0 else v
        # fix the phase so that the largest entry is real positive
        j = int(np.argmax(np.abs(v)))
        v = v * (abs(v[j]) / v[j])
        near = abs(lam.imag) <= imag_tol * (1.0 + abs(lam.real))
        out.append(TruncatedMode(lam, v, dominant_degree(op, v), bool(near), op))
    out.sort(key=lambda m: m.lam.real)
    if not any(m.nearly_real for m in out):
        raise NoTrappedModes(f"no nearly-real eigenvalue for wall at r1={r1:.4g}")
    return out


def branches(modes, ell_range) -> dict:
    """Lowest nearly-real mode for each dominant degree in ``ell_range``."""
    out = {}
    for m in modes:
        if m.nearly_real and m.ell in ell_range and m.ell not in out:
            out[m.ell] = m
    return out


def _smoothstep_derivs(t):
    """Values and first two derivatives of :func:`smoothstep` in ``t``."""
    poly = np.polynomial.Polynomial([0, 0, 0, 0, 0, 126.0, -420.0, 540.0, -315.0, 70.0])
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    f = np.where(t >= 1.0, 1.0, 0.0)
    f1 = np.zeros_like(t)
    f2 = np.zeros_like(t)
    f[inside] = poly(t[inside])
    f1[inside] = poly.deriv(1)(t[inside])
    f2[inside] = poly.deriv(2)(t[inside])
    return f, f1, f2


def cutoff_residual(tmode: TruncatedMode, lam: float, r1: float, width: float):
    """Residual density of ``P(lam)(chi w)`` on the truncated grid.

    Uses ``P(chi w) = chi P w + [P, chi] w`` where, for a radial cutoff,
    ``[P, chi] w = -Delta^(chi_ss w + 2 chi_s w_s) + c_1(lam) chi_s w`` with
    the derivatives of ``chi`` taken analytically.  This avoids
    differentiating the finitely smooth cutoff spectrally.

    Returns
    -------
    resid : ndarray, shape (n_radial, n_angular)
        Twisted residual ``q^{-1} P(lam)(q chi w)`` at the nodes (boundary
        and wall rows set to zero).
    chi_w : ndarray
        The cut-off profile on the truncated grid.
    """
    op = tmode.op
    g = op.grid
    W = tmode.mode.reshape(g.n_radial, g.n_angular)
    s = g.s
    with np.errstate(divide="ignore"):
        r = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), np.inf)
    t = (r - r1) / width
    f, f1, f2 = _smoothstep_derivs(np.where(np.isfinite(t), t, 2.0))
    # chain rule r = 1/s
    chi = f
    chi_s = np.where(s > 0, -f1 / (width * np.where(s > 0, s, 1.0) ** 2), 0.0)
    chi_ss = np.where(s > 0, f2 / (width**2 * np.where(s > 0, s, 1.0) ** 4)
                      + 2.0 * f1 / (width * np.where(s > 0, s, 1.0) ** 3), 0.0)
    c = op.meta["coefficients"]
    c2 = c["c2"]
    c1 = c["c1_0"] + lam * c["c1_1"]
    Pw = (evaluate_at(op, lam) @ tmode.mode).reshape(g.n_radial, g.n_angular)
    Ws = g.Ds @ W
    comm = c2 * (chi_ss[:, None] * W + 2.0 * chi_s[:, None] * Ws) + c1 * chi_s[:, None] * W
    resid = chi[:, None] * Pw + comm
    resid[0] = 0.0
    resid[-1] = 0.0
    return resid, chi[:, None] * W


def extend_cutoff(tmode: TruncatedMode, full_op: DiscreteOperator, r1: float,
                  transition_width: float, *, strict: bool = False) -> Quasimode:
    """Cut off a truncated mode near the wall and embed it in the full grid.

    The profile is multiplied by :func:`cutoff`, interpolated to the full
    grid nodes with ``r > r1``, zero-extended and renormalized to unit
    ``L^2`` norm.  The residual ``||P(lambda_sharp) u||_{L^2}`` is computed
    from the commutator form of :func:`cutoff_residual` on the truncated
    grid, where the mode is spectrally resolved; the full-grid value
    ``||evaluate_at(lambda_sharp) u||`` is kept as ``grid_residual`` for
    diagnostics (it is limited by the finite smoothness of the cutoff).

    Raises
    ------
    CutoffTooSharp
        When ``strict`` and the full-grid residual of the extended mode
        exceeds the commutator residual by more than a factor 10, i.e. the
        full grid cannot resolve the transition annulus.
    """
    lam_sharp = float(tmode.lam.real)
    tg = tmode.op.grid
    fg = full_op.grid
    if full_op.parity is not None:
        raise ValueError("extend_cutoff needs an unfolded operator")
    resid, chi_w = cutoff_residual(tmode, lam_sharp, r1, transition_width)
    wt = tg.quadrature() * l2_weight(tg, 0)
    nrm_t = math.sqrt(float(np.sum(wt * np.abs(chi_w) ** 2)))
    dens = wt * np.abs(resid / nrm_t) ** 2
    residual = math.sqrt(float(np.sum(dens)))
    r_t = np.where(tg.s > 0, 1.0 / np.where(tg.s > 0, tg.s, 1.0), np.inf)
    ann = (r_t >= r1) & (r_t <= r1 + transition_width)
    total = float(np.sum(dens))
    frac = min(1.0, float(np.sum(dens[ann]) / total)) if total > 0 else 0.0

    inside = fg.s <= 1.0 / r1
    Wf = np.zeros((fg.n_radial, fg.n_angular), dtype=complex)
    if np.any(inside):
        Wt = tmode.mode.reshape(tg.n_radial, tg.n_angular)
        Wa = collocation.interp_matrix(tg.s, fg.s[inside]) @ Wt
        if fg.n_angular != tg.n_angular or not np.allclose(fg.x, tg.x):
            Wa = Wa @ collocation.interp_matrix(tg.x, fg.x).T
        chi = cutoff(fg.r[inside], r1, transition_width)
        chi[fg.s[inside] == 0.0] = 1.0
        Wf[inside] = chi[:, None] * Wa
    v = Wf.ravel()
    v = v / norms(full_op, v)["l2"]
    rv = evaluate_at(full_op, lam_sharp) @ v
    rv[full_op.boundary] = 0.0
    wf = (fg.quadrature() * l2_weight(fg, full_op.k)).ravel()
    grid_residual = math.sqrt(float(np.sum(wf * np.abs(rv) ** 2)))
    qm = Quasimode(tmode.ell, lam_sharp, v, residual, r1, transition_width,
                   norms(full_op, v)["l2"], frac, full_op, grid_residual)
    if strict and grid_residual > 10.0 * residual:
        raise CutoffTooSharp(
            f"full-grid residual {grid_residual:.2e} exceeds the resolved residual "
            f"{residual:.2e} tenfold (ell={tmode.ell}, width={transition_width})")
    return qm


@dataclass
class SequenceTable:
    ell: np.ndarray
    lambda_sharp: np.ndarray
    residual: np.ndarray
    slope: float
    slope_stderr: float
    lam_slope: float
    lam_intercept: float
    r1: float
    transition_width: float
    quasimodes: list

    def rows(self):
        for i in range(len(self.ell)):
            yield int(self.ell[i]), float(self.lambda_sharp[i]), float(self.residual[i])


def residual_sequence(params: BlackHoleParams, ell_range, bc: BoundaryCondition | None = None, *,
                      n_radial: int = 40, n_angular: int = 24, r1: float | None = None,
                      transition_width: float | None = None,
                      full_op: DiscreteOperator | None = None) -> SequenceTable:
    """Quasimodes for each ``ell`` in ``ell_range`` and their residual trend.

    Fits ``log(residual) = c + slope * ell`` and
    ``lambda_sharp = lam_intercept + lam_slope * ell`` by least squares.

    Raises
    ------
    InsufficientResolution
        Fewer than four branches found.
    """
    bc = bc or BoundaryCondition.dirichlet()
    params = params.with_(k=0)
    hz = find_horizon(params)
    r1 = default_r1(params) if r1 is None else float(r1)
    width = 0.5 * hz.r_plus if transition_width is None else float(transition_width)
    ells = list(ell_range)
    modes = solve_truncated(params, n_radial, n_angular, bc, r1)
    found = branches(modes, set(ells))
    if full_op is None:
        full_op = assemble(params, build_grid(params, n_radial, n_angular, horizon=hz), bc, k=0)
    qms = [extend_cutoff(found[ell], full_op, r1, width) for ell in ells if ell in found]
    if len(qms) < 4:
        raise InsufficientResolution(
            f"only {len(qms)} quasimode branches found for ell in {ells[0]}..{ells[-1]}")
    ell = np.array([q.ell for q in qms])
    lam = np.array([q.lambda_sharp for q in qms])
    res = np.array([q.residual for q in qms])
    fit = stats.linregress(ell, np.log(res))
    lfit = stats.linregress(ell, lam)
    return SequenceTable(ell, lam, res, float(fit.slope), float(fit.stderr),
                         float(lfit.slope), float(lfit.intercept), r1, width, qms)


def dirichlet_trace(qm: Quasimode) -> np.ndarray:
    """Discrete ``gamma_-`` of a quasimode (one value per angular node)."""
    gm, _ = traces(qm.op.grid, qm.vector)
    return gm
