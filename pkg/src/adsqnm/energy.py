"""Twisted stress-energy, the energy identity and related checks.

Conventions: a mode is ``v = exp(-i lam t*) exp(i k phi*) u(r, theta)``
with ``u = s**(3/2-nu) (1-x**2)**(|k|/2) w`` (see :mod:`adsqnm.stationary`),
and all quantities are evaluated at ``t* = 0``.  ``G = rho^2 g^{-1}``
denotes the Kerr-star conformal dual metric.

In coordinates the identity for ``V = J~^Y`` (``Y = T`` or ``K``) reads,
after dividing out the common factor ``2 pi / (1 - a^2)``,

    2 Im(lam) E + Flux(Y boundary) - Flux(r_in) = Bulk,

with ``E = int rho_E dr dx``, ``rho_E = rho^2 T~(Y, grad t*)``,
``Flux(r) = int Re(Yv . G^{r mu} (d~v-bar)_mu) dx`` and
``Bulk = int Re(P(lam)u . conj(Yu)) dr dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import collocation
from .errors import NonConvergedInput
from .geometry import BlackHoleParams, HorizonData, find_horizon
from .stationary import (BoundaryCondition, DiscreteOperator, GridSpec, _hat_delta, assemble,
                         build_grid, dual_metric_s, evaluate_at, l2_weight, norms,
                         trace_functionals)

__all__ = [
    "TwistData",
    "FluxReport",
    "twist_potential_scaled",
    "twisting_potential",
    "stress_energy",
    "cross_term_coefficient",
    "verify_identity",
    "upper_bound_probe",
    "default_probe_samples",
    "indicial_roots",
    "hardy_constant",
    "mode_interpolant",
]


# ---------------------------------------------------------------------------
# twisting potential


def twist_potential_scaled(params: BlackHoleParams, s, x):
    """Closed form of ``rho^2 (Q + nu^2 - 9/4)`` with ``Q = q^{-1} Box q``."""
    nu, a2, M = params.nu, params.a**2, params.M
    alpha = 1.5 - nu
    return ((2.25 - nu * nu) * (1.0 + a2 - 2.0 * M * s + a2 * s * s)
            - alpha * (2.0 * (1.0 + a2) + 4.0 * a2 * s * s - 6.0 * M * s)
            + (nu * nu - 2.25) * a2 * x * x)


@dataclass
class TwistData:
    nu: float
    twist_exponent: float
    s: np.ndarray
    x: np.ndarray
    Q_values: np.ndarray
    shifted: np.ndarray
    decay_power: float
    decay_powers: np.ndarray
    assembled: np.ndarray


def twisting_potential(params: BlackHoleParams, grid: GridSpec, nu: float | None = None,
                       *, fit_window: tuple = (1e-5, 1e-4), n_fit: int = 16) -> TwistData:
    """``Q = q^{-1} Box_g q`` on the grid and its decay at the boundary.

    ``rho^2 (Q + nu^2 - 9/4)`` is evaluated from its closed form, which is
    exactly zero at ``nu = 3/2``.  The same quantity obtained by applying
    the assembled ``lam = 0``, ``k = 0`` operator to ``w = 1`` is kept in
    ``assembled`` as a cross-check.

    The decay power of ``Q + nu^2 - 9/4`` is the least-squares slope of
    ``log sup_x |.|`` against ``log s`` on ``n_fit`` log-spaced values of
    ``s`` in ``fit_window`` (the supremum runs over the angular nodes).
    The window lies well inside the asymptotic regime: the leading ``s^2``
    coefficient is of size ``a^2`` while the next correction is ``O(M s)``,
    so on grid nodes the fit is preasymptotic for small ``a``.  Per-angle
    slopes on the same window are kept in ``decay_powers``.  The power is
    ``inf`` when the shifted potential vanishes identically.
    """
    nu = params.nu if nu is None else float(nu)
    p = params.with_(nu=nu, k=0)
    S, X = grid.mesh()
    damp = S**2 / (1.0 + p.a**2 * X**2 * S**2)
    shifted = twist_potential_scaled(p, S, X) * damp
    Q = shifted - (nu * nu - 2.25)
    op = assemble(p, grid, BoundaryCondition.dirichlet(), k=0)
    Pq = (op.P0 @ np.ones(grid.size, dtype=complex)).real.reshape(S.shape)
    assembled = np.where(S > 0, Pq * damp, 0.0)

    sf = np.geomspace(fit_window[0], fit_window[1], int(n_fit))
    Sf, Xf = np.meshgrid(sf, grid.x, indexing="ij")
    yf = np.abs(twist_potential_scaled(p, Sf, Xf) * Sf**2 / (1.0 + p.a**2 * Xf**2 * Sf**2))
    logs = np.log(sf)

    def slope(y):
        if np.max(y) == 0.0:
            return np.inf  # identically zero: any power
        ok = y > 0
        return float(stats.linregress(logs[ok], np.log(y[ok])).slope)

    powers = np.array([slope(yf[:, i]) for i in range(grid.n_angular)])
    return TwistData(nu, nu - 1.5, grid.s.copy(), grid.x.copy(), Q, shifted,
                     slope(np.max(yf, axis=1)), powers, assembled)


# ---------------------------------------------------------------------------
# pointwise fields


@dataclass
class _Fields:
    """Twisted-mode fields on a grid, all shaped ``(n_radial, n_angular)``."""

    S: np.ndarray
    X: np.ndarray
    u: np.ndarray       # u at the nodes (0 on the boundary row)
    dr: np.ndarray      # (d~u)_r
    dth: np.ndarray     # (d~u)_theta
    dph: np.ndarray     # (d~u)_phi = i k u
    dt: np.ndarray      # (d~u)_t = -i lam u
    qfac: np.ndarray    # q (1-x^2)^{m/2}


def _fields(grid: GridSpec, w: np.ndarray, lam: complex, k: int) -> _Fields:
    p = grid.params
    m = abs(k)
    W = np.asarray(w, dtype=complex).reshape(grid.n_radial, grid.n_angular)
    S, X = grid.mesh()
    sinth = np.sqrt(1.0 - X * X)
    inner = S > 0
    qfac = np.zeros_like(S)
    qfac[inner] = S[inner] ** (1.5 - p.nu) * sinth[inner] ** m
    Ws = grid.Ds @ W
    Wx = W @ grid.Dx.T
    u = qfac * W
    dr = -(S * S) * qfac * Ws
    dth = qfac * (-sinth * Wx + m * X / sinth * W)
    dph = 1j * k * u
    dt = -1j * lam * u
    return _Fields(S, X, u, dr, dth, dph, dt, qfac)


def _metric_on(grid: GridSpec):
    p = grid.params
    a = p.a
    xi = 1.0 - a * a
    S, X = grid.mesh()
    Gtt, Grt, Gtp, _ = dual_metric_s(p, S, X)
    s_safe = np.where(S > 0, S, 1.0)
    Dh, _ = _hat_delta(p, S)
    Dth = 1.0 - a * a * X * X
    G = {
        "tt": Gtt, "tr": Grt, "tp": Gtp,
        "rr": np.where(S > 0, -Dh / s_safe**4, 0.0),
        "rp": np.full_like(S, -a * xi),
        "hh": -Dth,
        "pp": -(xi**2) / (Dth * (1.0 - X * X)),
    }
    rho2 = np.where(S > 0, 1.0 / s_safe**2, 0.0) + a * a * X * X
    return G, rho2


def _y_factor(lam: complex, k: int, Y: str, horizon: HorizonData) -> complex:
    if Y == "T":
        return -1j * lam
    if Y == "K":
        return -1j * lam + 1j * k * horizon.killing_coeff
    if Y == "Phi":
        return 1j * k
    raise ValueError(f"unknown vector field {Y!r}")


def _y_of_t(Y: str) -> float:
    return 0.0 if Y == "Phi" else 1.0


def _energy_density(grid: GridSpec, F: _Fields, G: dict, rho2, yfac: complex, Y: str):
    """``rho^2 T~(Y, grad t*)`` pointwise."""
    p = grid.params
    Yv = yfac * F.u
    conj = np.conj
    Gt_dv = G["tt"] * conj(F.dt) + G["tr"] * conj(F.dr) + G["tp"] * conj(F.dph)
    GG = (G["tt"] * np.abs(F.dt) ** 2 + G["rr"] * np.abs(F.dr) ** 2
          + G["hh"] * np.abs(F.dth) ** 2 + G["pp"] * np.abs(F.dph) ** 2
          + 2.0 * np.real(G["tr"] * F.dt * conj(F.dr))
          + 2.0 * np.real(G["tp"] * F.dt * conj(F.dph))
          + 2.0 * np.real(G["rp"] * F.dr * conj(F.dph)))
    pot = twist_potential_scaled(p, F.S, F.X)
    out = np.real(Yv * Gt_dv) - 0.5 * _y_of_t(Y) * GG + 0.5 * _y_of_t(Y) * pot * np.abs(F.u) ** 2
    out[F.S == 0] = 0.0
    return out


def _radial_flux(F: _Fields, G: dict, yfac: complex):
    """``Re(Yv . G^{r mu} (d~v-bar)_mu)`` pointwise (finite for ``s > 0``)."""
    conj = np.conj
    Gr_dv = G["tr"] * conj(F.dt) + G["rr"] * conj(F.dr) + G["rp"] * conj(F.dph)
    out = np.real(yfac * F.u * Gr_dv)
    out[F.S == 0] = 0.0
    return out


def stress_energy(params: BlackHoleParams, grid: GridSpec, mode: np.ndarray, lam: complex,
                  Y: str = "T", k: int | None = None) -> dict:
    """Pointwise ``T~(Y, N-bar_t)`` for a twisted mode on ``grid``.

    ``N-bar_t = r A grad t*`` with the closed-form lapse
    ``A = rho / sqrt(G^{tt})``.  For ``Y = 'K'`` the coefficients of the
    decomposition

        T~(K, N-bar_t) = F1 |lam|^2 |u|^2 + F2 |d~_r u|^2 + F3 |d_theta u|^2
                         + E1 k Im(u d~_r u-bar) + E2 |u|^2

    are also returned; ``F1..E1`` are closed form and ``E2`` is extracted
    as the remainder.

    Returns
    -------
    dict with ``'T'`` (the field) and, for ``Y = 'K'``, ``'F1', 'F2',
    'F3', 'E1', 'E2'``.  Entries on the conformal-boundary row are 0.
    """
    k = params.k if k is None else int(k)
    hz = grid.horizon
    F = _fields(grid, mode, lam, k)
    G, rho2 = _metric_on(grid)
    yfac = _y_factor(lam, k, Y, hz)
    dens = _energy_density(grid, F, G, rho2, yfac, Y)
    inner = F.S > 0
    scale = np.zeros_like(F.S)
    r = np.where(inner, 1.0 / np.where(inner, F.S, 1.0), 0.0)
    scale[inner] = r[inner] / (np.sqrt(rho2[inner]) * np.sqrt(G["tt"][inner]))
    # T~(Y, N-bar_t) = r A T~(Y, grad t) = r/(rho sqrt(G^tt)) * rho^2 T~(Y, grad t)
    T = scale * dens
    out = {"T": T}
    if Y == "K":
        Om = hz.killing_coeff
        g = {key: np.where(inner, G[key] / np.where(inner, rho2, 1.0), 0.0) for key in G}
        rA = np.where(inner, r * np.sqrt(np.where(inner, rho2, 1.0)) / np.sqrt(G["tt"]), 0.0)
        F1 = 0.5 * rA * g["tt"]
        F2 = -0.5 * rA * g["rr"]
        F3 = -0.5 * rA * g["hh"]
        E1 = -rA * (Om * g["tr"] - g["rp"])
        u2 = np.abs(F.u) ** 2
        known = (F1 * abs(lam) ** 2 * u2 + F2 * np.abs(F.dr) ** 2 + F3 * np.abs(F.dth) ** 2
                 + E1 * k * np.imag(F.u * np.conj(F.dr)))
        with np.errstate(divide="ignore", invalid="ignore"):
            E2 = np.where(u2 > 1e-300, (T - known) / np.where(u2 > 1e-300, u2, 1.0), np.nan)
        out.update(F1=F1, F2=F2, F3=F3, E1=E1, E2=E2)
    return out


def cross_term_coefficient(params: BlackHoleParams, r, theta, horizon: HorizonData | None = None):
    """Coefficient of ``Re(Phi v . d~_r v-bar)`` in ``T~(K, N_t)``.

    Equals ``A (Omega g^{t r} - g^{r phi})`` with ``Omega = a/(r_+^2+a^2)``,
    which is proportional to ``a G^{tr} - (r_+^2 + a^2) G^{r phi}`` and so
    vanishes on the horizon.
    """
    from .geometry import conformal_dual_metric, metric_scalars

    hz = horizon or find_horizon(params)
    G = conformal_dual_metric(params, r, theta)
    _, _, rho2 = metric_scalars(params, r, theta)
    A = np.sqrt(rho2) / np.sqrt(G["tt"])
    return A * (hz.killing_coeff * G["tr"] - G["rp"]) / rho2


# ---------------------------------------------------------------------------
# energy identity


@dataclass
class FluxReport:
    bulk_term: float
    boundary_Y_term: float
    horizon_term: float
    time_derivative_term: float
    residual: float
    relative_residual: float
    refinement: tuple = ()
    horizon_integrand_min: float = math.nan
    n_radial: int = 0
    details: dict = field(default_factory=dict)


def mode_interpolant(grid: GridSpec, vector: np.ndarray):
    """Barycentric interpolant ``w(s, x)`` of a grid function."""
    W = np.asarray(vector).reshape(grid.n_radial, grid.n_angular)

    def w(s, x):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        Is = collocation.interp_matrix(grid.s, s)
        Ix = collocation.interp_matrix(grid.x, x)
        return Is @ W @ Ix.T

    return w


def _identity_terms(params: BlackHoleParams, mode, lam: complex, bc: BoundaryCondition,
                    n_radial: int, n_angular: int, Y: str, k: int, hz: HorizonData) -> dict:
    grid = build_grid(params, n_radial, n_angular, delta=0.0, horizon=hz)
    S, X = grid.mesh()
    W = np.asarray(mode(grid.s, grid.x), dtype=complex).reshape(grid.n_radial, grid.n_angular)
    op = assemble(params, grid, bc, k=k)
    F = _fields(grid, W, lam, k)
    G, rho2 = _metric_on(grid)
    yfac = _y_factor(lam, k, Y, hz)
    m = abs(k)
    nu = params.nu
    inner = S > 0
    s_safe = np.where(inner, S, 1.0)
    quad = grid.quadrature()
    # energy: int rho_E dr dx with dr = ds / s^2
    rhoE = _energy_density(grid, F, G, rho2, yfac, Y)
    E = float(np.sum(quad * np.where(inner, rhoE / s_safe**2, 0.0)))
    time_term = 2.0 * lam.imag * E
    # bulk: Re(P u conj(Y u)); P u = q (1-x^2)^{m/2} (P~ w)
    Pw = (evaluate_at(op, lam) @ W.ravel()).reshape(W.shape)
    bulk_int = np.where(inner, np.real(F.qfac * Pw * np.conj(yfac * F.u)) / s_safe**2, 0.0)
    bulk = float(np.sum(quad * bulk_int))
    # flux through the conformal boundary from the traces
    cm, cp = trace_functionals(grid, nu)
    K = cm.size
    gm = cm @ W[:K]
    gp = cp @ W[:K]
    sin2m = (1.0 - grid.x**2) ** m
    Dh0 = 1.0
    fluxY = float(np.sum(grid.wx * (-Dh0) * np.real(yfac * gm * np.conj(gp)) * sin2m))
    # flux at the inner radius (the horizon when delta = 0)
    flux_r = _radial_flux(F, G, yfac)
    flux_in = float(np.sum(grid.wx * flux_r[-1]))
    lhs = time_term + fluxY - flux_in
    resid = abs(lhs - bulk)
    scale = max(abs(time_term), abs(fluxY), abs(flux_in), abs(bulk), 1e-300)
    # |K v|^2 on the horizon row
    Kfac = _y_factor(lam, k, "K", hz)
    hor = np.abs(Kfac * F.u[-1]) ** 2
    return dict(bulk=bulk, fluxY=fluxY, flux_in=flux_in, time=time_term, energy=E,
                residual=resid, relative=resid / scale, horizon_integrand=hor,
                gamma_minus=gm, gamma_plus=gp)


def verify_identity(params: BlackHoleParams, mode, lam: complex, bc: BoundaryCondition | None = None,
                    *, Y: str = "T", k: int | None = None, n_radial: int = 32,
                    n_angular: int = 8, grid: GridSpec | None = None,
                    check_convergence: bool = False) -> FluxReport:
    """Evaluate each term of the energy identity on ``X_0`` by quadrature.

    Parameters
    ----------
    mode : callable or ndarray
        Either ``w(s, x)`` returning the twisted profile on the tensor
        product of its arguments, or a grid vector (``grid`` required),
        which is interpolated.
    n_radial : int
        The identity is evaluated at ``n_radial`` and ``2 n_radial``; the
        finer value is reported and both residuals are kept in
        ``refinement``.
    check_convergence : bool
        Raise :class:`NonConvergedInput` when the finer residual is not
        smaller than the coarser one.

    Notes
    -----
    All terms omit the common factor ``2 pi / (1 - a^2)``.  The horizon
    term is the flux ``int Re(Yv . G^{r mu} d~v-bar_mu) dx`` at ``r_+``;
    for ``Y = K`` it equals ``-(1-a^2)(r_+^2+a^2) int |Kv|^2 dx``.
    """
    bc = bc or BoundaryCondition.dirichlet()
    k = params.k if k is None else int(k)
    hz = find_horizon(params)
    if not callable(mode):
        if grid is None:
            raise ValueError("a grid is needed to interpolate a mode vector")
        mode = mode_interpolant(grid, mode)
    lam = complex(lam)
    coarse = _identity_terms(params, mode, lam, bc, n_radial, n_angular, Y, k, hz)
    fine = _identity_terms(params, mode, lam, bc, 2 * n_radial, n_angular, Y, k, hz)
    if check_convergence and not fine["residual"] < coarse["residual"]:
        raise NonConvergedInput(
            f"identity defect did not decrease under refinement "
            f"({coarse['residual']:.3e} -> {fine['residual']:.3e})")
    return FluxReport(
        bulk_term=fine["bulk"], boundary_Y_term=fine["fluxY"], horizon_term=fine["flux_in"],
        time_derivative_term=fine["time"], residual=fine["residual"],
        relative_residual=fine["relative"],
        refinement=((n_radial, coarse["residual"]), (2 * n_radial, fine["residual"])),
        horizon_integrand_min=float(np.min(fine["horizon_integrand"])),
        n_radial=2 * n_radial,
        details={"coarse": coarse, "fine": fine})


# ---------------------------------------------------------------------------
# upper half-plane probe


def default_probe_samples(c0: float = 2.0) -> np.ndarray:
    """``x + i y`` on ``x in {5, 7.5, ..., 20}``, ``y in {0.5, 1, 2, 3.5, 5}``.

    Samples with ``|x| <= c0`` are dropped (the excluded strip).
    """
    xs = np.linspace(5.0, 20.0, 7)
    ys = np.array([0.5, 1.0, 2.0, 3.5, 5.0])
    lam = (xs[None, :] + 1j * ys[:, None]).ravel()
    return lam[np.abs(lam.real) > c0]


def upper_bound_probe(op: DiscreteOperator, samples=None, *, c0: float = 2.0,
                      workers: int = 1) -> dict:
    """``resolvent_norm(lam) |lam| Im lam`` over upper half-plane samples.

    Returns
    -------
    dict with ``lam`` (samples), ``product`` and ``spread`` (max/min).
    """
    from concurrent.futures import ThreadPoolExecutor

    from .spectra import resolvent_norm

    samples = default_probe_samples(c0) if samples is None else np.asarray(samples, dtype=complex)
    samples = samples[(samples.imag > 0) & (np.abs(samples.real) > c0) | (samples.real == 0)
                      & (samples.imag > 0)]

    def one(z):
        return resolvent_norm(op, z) * abs(z) * z.imag

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            prod = np.array(list(ex.map(one, samples)))
    else:
        prod = np.array([one(z) for z in samples])
    spread = float(np.max(prod) / np.min(prod)) if prod.size else math.nan
    return {"lam": samples, "product": prod, "spread": spread}


# ---------------------------------------------------------------------------
# horizon indicial roots


def indicial_roots(params: BlackHoleParams, lam: complex, k: int | None = None,
                   horizon: HorizonData | None = None) -> dict:
    """Indicial data of ``P(lam)`` at the horizon.

    ``s(lam, k) = 2 (1 - a^2)(a k - (r_+^2 + a^2) lam)`` and the roots of
    ``Delta_r'(r_+) m^2 + i s m = 0``, namely ``0`` and
    ``-i s / Delta_r'(r_+)``.
    """
    from .geometry import delta_r_prime

    k = params.k if k is None else int(k)
    hz = horizon or find_horizon(params)
    a = params.a
    rp = hz.r_plus
    sval = 2.0 * (1.0 - a * a) * (a * k - (rp * rp + a * a) * complex(lam))
    dprime = float(delta_r_prime(params, rp))
    return {"s_value": complex(sval), "roots": (0j, complex(-1j * sval / dprime))}


# ---------------------------------------------------------------------------
# Hardy-type absorption


def hardy_constant(params: BlackHoleParams, family, *, delta_h: float = 0.1,
                   n_radial: int = 32, n_angular: int = 8) -> float:
    """Smallest ``C`` with ``int_Y |gamma_- u|^2 <= delta_h ||u||_H1^2 + C ||u||_L2^2``.

    ``family`` is an iterable of callables ``w(s, x)``; the boundary mass is
    ``2 pi / (1 - a^2) int |gamma_- w|^2 (1-x^2)^{|k|} dx`` (the induced
    measure on ``Y``).  Returns the maximum over the family of
    ``(boundary - delta_h H1^2) / L2^2`` (clipped below at 0).
    """
    grid = build_grid(params, n_radial, n_angular, delta=0.0)
    op = assemble(params, grid, BoundaryCondition.dirichlet())
    cm, _ = trace_functionals(grid)
    m = abs(params.k)
    xi = 1.0 - params.a**2
    best = 0.0
    for w in family:
        W = np.asarray(w(grid.s, grid.x), dtype=complex).reshape(grid.n_radial, grid.n_angular)
        gm = cm @ W[: cm.size]
        bmass = 2.0 * np.pi / xi * float(np.sum(grid.wx * np.abs(gm) ** 2 * (1 - grid.x**2) ** m))
        nr = norms(op, W.ravel())
        c = (bmass - delta_h * nr["h1"] ** 2) / nr["l2"] ** 2
        best = max(best, c)
    return float(best)
