"""Quasinormal frequencies, resolvent scans and quasimode-to-pole matching."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import LinearizationFailure, NoEigenvaluesInRegion, NotFound
from .stationary import DiscreteOperator, evaluate_at

__all__ = [
    "SpectrumEntry",
    "Spectrum",
    "SearchRegion",
    "ResolventScan",
    "PoleMatch",
    "condense",
    "polyeig",
    "eigenpairs",
    "polish",
    "weighted_residual",
    "solve_qnf",
    "resolvent_norm",
    "scan_rectangle",
    "match_pole",
    "dominant_degree",
]

SIGMA_FLOOR = 1e-300


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned box ``re_min <= Re lam <= re_max``, ``im_min <= Im lam <= im_max``."""

    re_min: float = -math.inf
    re_max: float = math.inf
    im_min: float = -math.inf
    im_max: float = math.inf

    def contains(self, lam) -> np.ndarray:
        lam = np.asarray(lam)
        return ((lam.real >= self.re_min) & (lam.real <= self.re_max)
                & (lam.imag >= self.im_min) & (lam.imag <= self.im_max))


@dataclass
class SpectrumEntry:
    lam: complex
    residual: float
    mode: np.ndarray
    converged: bool
    ell_hint: int = -1
    parity: int | None = None
    coarse_lam: complex | None = None


@dataclass
class Spectrum:
    entries: list
    n_radial: int
    n_angular: int
    k: int
    params: object = None

    def converged(self) -> list:
        return [e for e in self.entries if e.converged]

    def values(self, converged_only: bool = False) -> np.ndarray:
        ent = self.converged() if converged_only else self.entries
        return np.array([e.lam for e in ent], dtype=complex)


# ---------------------------------------------------------------------------
# linear algebra kernels


def condense(op: DiscreteOperator):
    """Eliminate the (lambda-independent) boundary rows.

    Boundary rows read ``B_bb w_b + B_bi w_i = 0``; substituting
    ``w_b = -B_bb^{-1} B_bi w_i`` into the interior rows yields a reduced
    quadratic problem on the interior unknowns.

    Returns
    -------
    (A0, A1, A2) : reduced matrices on the interior unknowns
    interior : ndarray of int
    lift : ndarray
        Matrix mapping interior unknowns to the full vector of ``op``.
    """
    n = op.n
    b = np.asarray(op.boundary, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[b] = False
    i = np.nonzero(mask)[0]
    if b.size == 0:
        return (op.P0, op.P1, op.P2), i, np.eye(n)
    if np.any(op.P1[b]) or np.any(op.P2[b]):
        raise LinearizationFailure("boundary rows depend on lambda")
    Bbb = op.P0[np.ix_(b, b)]
    Bbi = op.P0[np.ix_(b, i)]
    try:
        Smat = -sla.solve(Bbb, Bbi)
    except (sla.LinAlgError, ValueError) as exc:
        raise LinearizationFailure(f"boundary block is singular: {exc}") from exc
    red = []
    for P in (op.P0, op.P1, op.P2):
        red.append(P[np.ix_(i, i)] + P[np.ix_(i, b)] @ Smat)
    lift = np.zeros((n, i.size), dtype=complex)
    lift[i, np.arange(i.size)] = 1.0
    lift[b] = Smat
    return tuple(red), i, lift


def polyeig(A0, A1, A2, *, vectors: bool = True):
    """All eigenpairs of ``A0 + lam A1 + lam^2 A2`` (``A2`` invertible).

    The problem is reduced to a standard eigenproblem for the companion
    matrix ``[[0, I], [-A2^{-1} A0, -A2^{-1} A1]]``; a singular ``A2``
    falls back to the generalized pencil.
    """
    n = A0.shape[0]
    A0 = np.asarray(A0, dtype=complex)
    A1 = np.asarray(A1, dtype=complex)
    A2 = np.asarray(A2, dtype=complex)
    d = np.diag(A2)
    if np.count_nonzero(A2 - np.diag(d)) == 0 and np.all(np.abs(d) > 1e-14 * np.max(np.abs(d))):
        inv = (1.0 / d)[:, None]
        C = np.zeros((2 * n, 2 * n), dtype=complex)
        C[:n, n:] = np.eye(n)
        C[n:, :n] = -inv * A0
        C[n:, n:] = -inv * A1
        if vectors:
            lam, V = sla.eig(C, overwrite_a=True, check_finite=False)
        else:
            lam = sla.eigvals(C, overwrite_a=True, check_finite=False)
            V = None
    else:
        C = np.zeros((2 * n, 2 * n), dtype=complex)
        C[:n, n:] = np.eye(n)
        C[n:, :n] = -A0
        C[n:, n:] = -A1
        D = np.eye(2 * n, dtype=complex)
        D[n:, n:] = A2
        try:
            res = sla.eig(C, D, right=vectors, check_finite=False)
        except sla.LinAlgError as exc:
            raise LinearizationFailure(str(exc)) from exc
        lam, V = (res if vectors else (res, None))
        if np.all(~np.isfinite(lam)):
            raise LinearizationFailure("pencil is singular: no finite eigenvalues")
    if V is None:
        return lam, None
    return lam, V[:n]


def weighted_residual(op: DiscreteOperator, lam: complex, v: np.ndarray,
                      weights: np.ndarray | None = None) -> float:
    """``||P(lam) v|| / ||v||`` in quadrature-weighted l2.

    The default weights are the tensor quadrature weights of the grid (the
    same for rows and columns).  Boundary rows are included unweighted.
    """
    if weights is None:
        weights = quadrature_weights(op)
    r = evaluate_at(op, lam) @ v
    num = np.sqrt(np.sum(weights * np.abs(r) ** 2))
    den = np.sqrt(np.sum(weights * np.abs(v) ** 2))
    return float(num / den) if den > 0 else math.inf


def quadrature_weights(op: DiscreteOperator) -> np.ndarray:
    """Tensor quadrature weights per unknown; boundary unknowns get weight 1."""
    g = op.grid
    W = g.quadrature()
    if op.parity is not None:
        W = 2.0 * W[:, g.n_angular // 2:]
    W = W.ravel().copy()
    W[op.boundary] = 1.0
    return W


def polish(op: DiscreteOperator, lam: complex, v: np.ndarray, *, maxit: int = 4,
           tol: float = 1e-14):
    """Newton refinement of an eigenpair of the quadratic problem.

    Solves the bordered system
    ``[[P(lam), P'(lam) v], [c^H, 0]] [dv; dlam] = -[P(lam) v; 0]``
    with ``c = v`` (normalization ``c^H v = 1``).  Returns the refined
    ``(lam, v)``; the input is returned unchanged if Newton diverges.
    """
    n = op.n
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    c = v.copy()
    lam = complex(lam)
    best = (lam, v, np.linalg.norm(evaluate_at(op, lam) @ v))
    for _ in range(maxit):
        P = evaluate_at(op, lam)
        dP = op.P1 + (2.0 * lam) * op.P2
        A = np.zeros((n + 1, n + 1), dtype=complex)
        A[:n, :n] = P
        A[:n, n] = dP @ v
        A[n, :n] = c.conj()
        rhs = np.zeros(n + 1, dtype=complex)
        rhs[:n] = -(P @ v)
        try:
            sol = sla.solve(A, rhs, check_finite=False)
        except sla.LinAlgError:
            break
        v_new = v + sol[:n]
        lam_new = lam + sol[n]
        v_new /= np.linalg.norm(v_new)
        rnew = np.linalg.norm(evaluate_at(op, lam_new) @ v_new)
        if not np.isfinite(rnew):
            break
        if rnew < best[2]:
            best = (lam_new, v_new, rnew)
        step = abs(sol[n])
        lam, v = lam_new, v_new
        if step <= tol * max(1.0, abs(lam)):
            break
    return best[0], best[1]


def eigenpairs(op: DiscreteOperator, region: SearchRegion | None = None, *,
               vectors: bool = True, split_parity: bool = True):
    """Eigenvalues (and vectors on the unfolded grid) of ``op`` in ``region``.

    Equatorial parity is exploited when possible: the even and odd folded
    problems are solved separately, which cuts the dense cost by about 4.

    Returns
    -------
    list of (lam, v_full, parity)
    """
    region = region or SearchRegion()
    out = []
    parts = [op]
    if split_parity and op.parity is None and op.grid.symmetric():
        parts = [op.fold(+1), op.fold(-1)]
    for part in parts:
        (A0, A1, A2), _, lift = condense(part)
        lam, V = polyeig(A0, A1, A2, vectors=vectors)
        keep = np.isfinite(lam) & region.contains(lam)
        for j in np.nonzero(keep)[0]:
            v = part.expand(lift @ V[:, j]) if vectors else None
            out.append((complex(lam[j]), v, part.parity))
    out.sort(key=lambda t: (round(t[0].real, 10), t[0].imag))
    return out


def _fold_like(op: DiscreteOperator, parity):
    return op if parity is None else op.fold(parity)


def dominant_degree(op: DiscreteOperator, v_full: np.ndarray) -> int:
    """Legendre degree carrying most of the angular energy of ``v``.

    The angular profile is taken as the quadrature-weighted radial average
    of ``|w|``-weighted projections; for ``k != 0`` the associated degree
    ``|k| + j`` is reported.
    """
    g = op.grid
    W = v_full.reshape(g.n_radial, g.n_angular)
    rad = g.ws[:, None] * np.ones((1, g.n_angular))
    m = abs(op.k)
    nmax = g.n_angular
    # Legendre basis on the twisted profile (Gegenbauer would be exact for m>0)
    Pl = np.polynomial.legendre.legvander(g.x, nmax - 1)  # (na, nmax)
    coef = (W * rad) @ (g.wx[:, None] * Pl) * (2 * np.arange(nmax) + 1) / 2.0
    energy = np.sum(np.abs(coef) ** 2, axis=0)
    return int(np.argmax(energy)) + m


def solve_qnf(op: DiscreteOperator, search_region: SearchRegion | None = None,
              op_fine: DiscreteOperator | None = None, *, residual_tol: float = 1e-8,
              stability_tol: float = 1e-6, polish_steps: int = 3) -> Spectrum:
    """QNFs of ``op`` inside ``search_region``.

    Each eigenvalue of the coarse problem is compared with the eigenvalues
    of ``op_fine`` (same physics, finer grid); a pair within
    ``stability_tol (1 + |lam|)`` is refined by Newton iteration on the
    fine operator and marked converged when its residual (see
    :func:`weighted_residual`) is below ``residual_tol``.  Without
    ``op_fine`` every entry is reported unconverged.

    Raises
    ------
    NoEigenvaluesInRegion
    """
    region = search_region or SearchRegion()
    coarse = eigenpairs(op, region, vectors=True)
    if not coarse:
        raise NoEigenvaluesInRegion("no eigenvalue of the linearized pencil in the search region")
    g = op.grid
    entries = []
    if op_fine is None:
        for lam, v, par in coarse:
            sub = _fold_like(op, par)
            lam2, vh = polish(sub, lam, sub.restrict(v), maxit=polish_steps)
            res = weighted_residual(sub, lam2, vh)
            ent = SpectrumEntry(lam2, res, sub.expand(vh), False, dominant_degree(op, sub.expand(vh)),
                                par, lam)
            entries.append(ent)
        return Spectrum(entries, g.n_radial, g.n_angular, op.k, op.params)
    # enlarge the fine search box slightly so that boundary cases still match
    pad = 1e-3
    fine_region = SearchRegion(region.re_min - pad, region.re_max + pad,
                               region.im_min - pad, region.im_max + pad)
    fine = eigenpairs(op_fine, fine_region, vectors=True)
    fine_by_par = {}
    for lam, v, par in fine:
        fine_by_par.setdefault(par, []).append((lam, v))
    gf = op_fine.grid
    used = set()
    for lam, v, par in coarse:
        cands = fine_by_par.get(par, [])
        if cands:
            vals = np.array([c[0] for c in cands])
            j = int(np.argmin(np.abs(vals - lam)))
            dist = abs(vals[j] - lam)
        else:
            j, dist = -1, math.inf
        tol = stability_tol * (1.0 + abs(lam))
        sub = _fold_like(op_fine, par)
        if j >= 0 and dist <= tol and (par, j) not in used:
            used.add((par, j))
            lamf, vf = cands[j]
            lam2, vh = polish(sub, lamf, sub.restrict(vf), maxit=polish_steps)
            res = weighted_residual(sub, lam2, vh)
            stable = abs(lam2 - lam) <= tol
            vfull = sub.expand(vh)
            entries.append(SpectrumEntry(lam2, res, vfull, bool(stable and res <= residual_tol),
                                         dominant_degree(op_fine, vfull), par, lam))
        else:
            csub = _fold_like(op, par)
            res = weighted_residual(csub, lam, csub.restrict(v))
            entries.append(SpectrumEntry(lam, res, v, False, dominant_degree(op, v), par, lam))
    entries.sort(key=lambda e: (round(e.lam.real, 10), e.lam.imag))
    return Spectrum(entries, gf.n_radial, gf.n_angular, op.k, op.params)


# ---------------------------------------------------------------------------
# resolvent


def _weighted_interior(op: DiscreteOperator, z: complex):
    """``W^{1/2} P_red(z) W^{-1/2}`` on the interior unknowns.

    ``W`` combines quadrature weights with the ``L^2`` density, so the
    inverse of the smallest singular value approximates the
    ``L^2 -> L^2`` norm of the resolvent.
    """
    (A0, A1, A2), interior, _ = condense(op)
    w = op.weights()[interior]
    sq = np.sqrt(w)
    A = A0 + z * A1 + (z * z) * A2
    return (sq[:, None] * A) / sq[None, :]


def resolvent_norm(op: DiscreteOperator, z: complex) -> float:
    """Discrete surrogate ``1/sigma_min`` of ``||R(z)||`` in the weighted norm.

    For an unfolded operator on a symmetric grid, the parity blocks are
    treated separately and the larger norm is returned.  ``inf`` signals
    an exactly singular matrix.
    """
    parts = [op]
    if op.parity is None and op.grid.symmetric():
        parts = [op.fold(+1), op.fold(-1)]
    best = 0.0
    for part in parts:
        sv = sla.svdvals(_weighted_interior(part, complex(z)), check_finite=False)
        smin = float(sv[-1])
        if smin <= SIGMA_FLOOR:
            return math.inf
        best = max(best, 1.0 / smin)
    return best


@dataclass
class ResolventScan:
    re: tuple
    im: tuple
    h: float
    re_z: np.ndarray
    im_z: np.ndarray
    values: np.ndarray
    candidates: list = field(default_factory=list)

    def rows(self):
        for i, y in enumerate(self.im_z):
            for j, x in enumerate(self.re_z):
                yield x, y, self.values[i, j]


def scan_rectangle(op: DiscreteOperator, re: tuple, im: tuple, n_re: int, n_im: int, *,
                   h: float = 1.0, kappa: float | None = None, threshold: float = 1e4,
                   workers: int = 1) -> ResolventScan:
    """Resolvent-norm map on ``[a, b] + i h [C_-, C_+]``.

    ``im`` is given as ``(C_-, C_+)`` in units of ``h``.  When ``kappa`` is
    supplied, ``C_- > -kappa/2`` is enforced.  Local maxima above
    ``threshold`` are reported as pole candidates.
    """
    c_minus, c_plus = im
    if kappa is not None and not c_minus * h > -0.5 * kappa:
        raise ValueError(f"rectangle leaves the strip Im z > -kappa/2 = {-0.5 * kappa:.4g}")
    re_z = np.linspace(re[0], re[1], int(n_re))
    im_z = np.linspace(c_minus * h, c_plus * h, int(n_im))
    pts = [complex(x, y) for y in im_z for x in re_z]
    folded = [op]
    if op.parity is None and op.grid.symmetric():
        folded = [op.fold(+1), op.fold(-1)]
    condensed = [(condense(f), f.weights()) for f in folded]

    def one(z):
        best = 0.0
        for ((A0, A1, A2), interior, _), w in condensed:
            sq = np.sqrt(w[interior])
            A = (sq[:, None] * (A0 + z * A1 + (z * z) * A2)) / sq[None, :]
            smin = float(sla.svdvals(A, check_finite=False)[-1])
            if smin <= SIGMA_FLOOR:
                return math.inf
            best = max(best, 1.0 / smin)
        return best

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(one, pts))
    else:
        vals = [one(z) for z in pts]
    V = np.array(vals).reshape(len(im_z), len(re_z))
    cands = []
    for i in range(V.shape[0]):
        for j in range(V.shape[1]):
            v = V[i, j]
            if not v > threshold:
                continue
            nb = V[max(i - 1, 0): i + 2, max(j - 1, 0): j + 2]
            if v >= np.max(nb):
                cands.append(complex(re_z[j], im_z[i]))
    return ResolventScan((re[0], re[1]), (c_minus, c_plus), h, re_z, im_z, V, cands)


# ---------------------------------------------------------------------------
# pole matching


@dataclass
class PoleMatch:
    lambda_sharp: float
    residual: float
    window_re: float
    window_im: float
    found: complex | None
    distance: float
    within: bool


def match_pole(spectrum: Spectrum | np.ndarray, lambda_sharp: float, residual: float, *,
               c_match: float = 1e3, gamma: float = 10.0, converged_only: bool = True,
               op: DiscreteOperator | None = None) -> PoleMatch:
    """Find a pole captured by a quasimode.

    The window is ``W = c_match * residual * (1 + lambda_sharp)**gamma`` in
    both directions: a pole qualifies when ``|Re lam - lambda_sharp| <= W``
    and ``0 < -Im lam <= W``.  Among qualifying poles the closest to
    ``lambda_sharp`` is returned.  When ``op`` is given, the chosen pole is
    refined by minimizing ``sigma_min`` locally.

    Raises
    ------
    NotFound
        No pole in the window; carries the nearest pole and its distance.
    """
    if not lambda_sharp > 0 or not residual > 0:
        raise ValueError("lambda_sharp and residual must be positive")
    if isinstance(spectrum, Spectrum):
        vals = spectrum.values(converged_only=converged_only)
    else:
        vals = np.asarray(spectrum, dtype=complex)
    W = c_match * residual * (1.0 + lambda_sharp) ** gamma
    if vals.size == 0:
        raise NotFound("spectrum is empty", None, math.inf)
    d = np.abs(vals - lambda_sharp)
    ok = (np.abs(vals.real - lambda_sharp) <= W) & (vals.imag < 0) & (-vals.imag <= W)
    if not np.any(ok):
        j = int(np.argmin(d))
        raise NotFound(f"no pole within window {W:.3e} of {lambda_sharp:.6g}; "
                       f"nearest {vals[j]:.6g} at distance {d[j]:.3e}", complex(vals[j]), float(d[j]))
    idx = np.nonzero(ok)[0]
    j = idx[int(np.argmin(d[idx]))]
    pole = complex(vals[j])
    if op is not None:
        pole = _refine_sigma_min(op, pole)
    return PoleMatch(float(lambda_sharp), float(residual), W, W, pole,
                     float(abs(pole - lambda_sharp)), True)


def _refine_sigma_min(op: DiscreteOperator, z0: complex) -> complex:
    from scipy.optimize import minimize

    parts = [op.fold(+1), op.fold(-1)] if (op.parity is None and op.grid.symmetric()) else [op]

    def f(xy):
        z = complex(xy[0], xy[1])
        return min(float(sla.svdvals(evaluate_at(p, z))[-1]) for p in parts)

    res = minimize(f, [z0.real, z0.imag], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-300, "maxiter": 400})
    z = complex(res.x[0], res.x[1])
    return z if f(res.x) <= f([z0.real, z0.imag]) else z0
