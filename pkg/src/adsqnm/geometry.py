"""Kerr-AdS geometry in units with cosmological constant -3.

Index order for every 4x4 tensor in this module is ``(t, r, theta, phi)``;
in the Kerr-star chart ``t`` and ``phi`` stand for ``t*`` and ``phi*``.
The metric signature is ``(+, -, -, -)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DegenerateHorizon, NoHorizon, OutsideChart, QuadratureFailure

__all__ = [
    "BlackHoleParams",
    "HorizonData",
    "Chart",
    "SpacetimePoint",
    "delta_r",
    "delta_r_prime",
    "metric_scalars",
    "find_horizon",
    "f_plus",
    "conformal_dual_metric",
    "conformal_dual_metric_derivatives",
    "inverse_metric",
    "kerr_star_shift",
    "ergoregion_contains",
    "validate_extension",
    "default_delta",
    "trapping_radius",
]


@dataclass(frozen=True)
class BlackHoleParams:
    """Physical configuration.

    Parameters
    ----------
    M : float
        Mass, positive.
    a : float
        Rotation parameter, ``|a| < 1``.
    nu : float
        Klein-Gordon mass parameter; the field mass squared is ``nu**2 - 9/4``.
    k : int
        Axial mode number (eigenvalue of ``D_phi``).
    """

    M: float
    a: float
    nu: float = 1.5
    k: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.M) and self.M > 0):
            raise ValueError(f"mass must be positive, got M={self.M}")
        if not (math.isfinite(self.a) and abs(self.a) < 1):
            raise ValueError(f"rotation must satisfy |a| < 1, got a={self.a}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be positive, got nu={self.nu}")
        if int(self.k) != self.k:
            raise ValueError(f"axial mode k must be an integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    def with_(self, **changes) -> "BlackHoleParams":
        """Copy with some fields replaced."""
        fields = dict(M=self.M, a=self.a, nu=self.nu, k=self.k)
        fields.update(changes)
        return BlackHoleParams(**fields)


@dataclass(frozen=True)
class HorizonData:
    r_plus: float
    surface_gravity: float
    killing_coeff: float
    hawking_reall: bool


class Chart(enum.Enum):
    BOYER_LINDQUIST = "BoyerLindquist"
    KERR_STAR = "KerrStar"


@dataclass(frozen=True)
class SpacetimePoint:
    r: float
    theta: float
    chart: Chart = Chart.KERR_STAR


def delta_r(params: BlackHoleParams, r):
    """``(r^2 + a^2)(1 + r^2) - 2 M r``."""
    a2 = params.a**2
    return (r * r + a2) * (1.0 + r * r) - 2.0 * params.M * r


def delta_r_prime(params: BlackHoleParams, r):
    """Closed-form ``d Delta_r / dr``."""
    return 4.0 * r**3 + 2.0 * (1.0 + params.a**2) * r - 2.0 * params.M


def metric_scalars(params: BlackHoleParams, r, theta):
    """Return ``(Delta_r, Delta_theta, rho^2)`` with numpy broadcasting."""
    c2 = np.cos(theta) ** 2
    a2 = params.a**2
    return delta_r(params, r), 1.0 - a2 * c2, r * r + a2 * c2


def find_horizon(params: BlackHoleParams, *, tol: float = 1e-12) -> HorizonData:
    """Locate the outermost simple root of ``Delta_r``.

    A geometric grid on ``(0, 10(1+M))`` brackets every sign change, each
    bracket is refined with Brent's method and the largest root is
    Newton-polished.

    Raises
    ------
    NoHorizon
        ``Delta_r > 0`` for all ``r > 0``.
    DegenerateHorizon
        The outermost root is (numerically) double.
    """
    rmax = 10.0 * (1.0 + params.M)
    grid = np.geomspace(1e-8, rmax, 4001)
    vals = delta_r(params, grid)
    f = lambda r: delta_r(params, r)  # noqa: E731
    change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if change.size == 0:
        # a tangential (double) root produces no sign change; look for it
        i = int(np.argmin(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-14})
        scale = 1.0 + res.x**4
        if res.fun <= 1e-10 * scale:
            raise DegenerateHorizon(
                f"Delta_r has a double root near r={res.x:.6g} (M={params.M}, a={params.a})")
        raise NoHorizon(
            f"Delta_r > 0 for all r > 0 (min {res.fun:.3e} at r={res.x:.4g}); "
            f"M={params.M}, a={params.a} describes a naked singularity")
    j = change[-1]
    r = optimize.brentq(f, grid[j], grid[j + 1], xtol=1e-15, rtol=1e-15, maxiter=200)
    for _ in range(3):
        d = delta_r_prime(params, r)
        if d == 0:
            break
        step = f(r) / d
        r_new = r - step
        if abs(f(r_new)) <= abs(f(r)):
            r = r_new
        if abs(step) <= 4e-16 * r:
            break
    dprime = float(delta_r_prime(params, r))
    if dprime <= 1e-8 * (1.0 + r**3):
        raise DegenerateHorizon(f"Delta_r'(r+) = {dprime:.3e} is not positive at r+={r:.6g}")
    if abs(f(r)) > tol * (1.0 + r**4):
        raise NoHorizon(f"root refinement failed: |Delta_r(r+)| = {abs(f(r)):.3e}")
    a2 = params.a**2
    kappa = dprime / (2.0 * (1.0 - a2) * (r * r + a2))
    return HorizonData(
        r_plus=float(r),
        surface_gravity=float(kappa),
        killing_coeff=float(params.a / (r * r + a2)),
        hawking_reall=bool(abs(params.a) < r * r),
    )


def default_delta(horizon: HorizonData) -> float:
    """Horizon extension depth ``0.05 r_+``."""
    return 0.05 * horizon.r_plus


def f_plus(params: BlackHoleParams, r):
    """Slice function derivative ``(a^2 - 1)/(r^2 + 1)``."""
    return (params.a**2 - 1.0) / (r * r + 1.0)


def conformal_dual_metric(params: BlackHoleParams, r, theta):
    """Components of ``G = rho^2 g^{-1}`` in the Kerr-star chart.

    Returns a dict keyed by ``'tt', 'tr', 'tp', 'rr', 'rp', 'hh', 'pp'``
    (``h`` = theta, ``p`` = phi); missing pairs (``th``, ``rh``, ``hp``)
    vanish identically. Every entry is polynomial in ``Delta_r`` and hence
    smooth across ``r = r_+``.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    a = params.a
    xi = 1.0 - a * a
    Dr = delta_r(params, r)
    Dth = 1.0 - a * a * np.cos(theta) ** 2
    sin2 = np.sin(theta) ** 2
    fp = f_plus(params, r)
    R = r * r + a * a
    return {
        "tt": -Dr * fp**2 - 2.0 * xi * fp * R - xi**2 * a * a * sin2 / Dth,
        "tr": -Dr * fp - xi * R,
        "tp": -xi * a * fp - xi**2 * a / Dth,
        "rr": -Dr + 0.0 * theta,
        "rp": -xi * a + 0.0 * (r + theta),
        "hh": -Dth + 0.0 * r,
        "pp": -(xi**2) / (Dth * sin2) + 0.0 * r,
    }


def conformal_dual_metric_derivatives(params: BlackHoleParams, r, theta):
    """Closed-form ``d/dr`` and ``d/dtheta`` of :func:`conformal_dual_metric`.

    Returns
    -------
    dr, dth : dict
        Same keys as :func:`conformal_dual_metric`.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    a = params.a
    a2 = a * a
    xi = 1.0 - a2
    Dr = delta_r(params, r)
    dDr = delta_r_prime(params, r)
    c, s = np.cos(theta), np.sin(theta)
    Dth = 1.0 - a2 * c * c
    dDth = 2.0 * a2 * c * s
    fp = f_plus(params, r)
    dfp = -2.0 * r * (a2 - 1.0) / (r * r + 1.0) ** 2
    R = r * r + a2
    dR = 2.0 * r
    z = 0.0 * (r + theta)
    d_r = {
        "tt": -dDr * fp**2 - 2.0 * Dr * fp * dfp - 2.0 * xi * (dfp * R + fp * dR) + z,
        "tr": -dDr * fp - Dr * dfp - xi * dR + z,
        "tp": -xi * a * dfp + z,
        "rr": -dDr + z,
        "rp": z,
        "hh": z,
        "pp": z,
    }
    # d/dtheta of sin^2/Dth and of 1/(Dth sin^2)
    d_sin2_over = (2.0 * s * c * Dth - s * s * dDth) / Dth**2
    d_inv = -(dDth * s * s + Dth * 2.0 * s * c) / (Dth * s * s) ** 2
    d_th = {
        "tt": -xi**2 * a2 * d_sin2_over + z,
        "tr": z,
        "tp": xi**2 * a * dDth / Dth**2 + z,
        "rr": z,
        "rp": z,
        "hh": -dDth + z,
        "pp": -(xi**2) * d_inv + z,
    }
    return d_r, d_th


_IDX = {"t": 0, "r": 1, "h": 2, "p": 3}


def _assemble4(comp) -> np.ndarray:
    out = np.zeros((4, 4))
    for key, val in comp.items():
        i, j = _IDX[key[0]], _IDX[key[1]]
        out[i, j] = out[j, i] = float(val)
    return out


def inverse_metric(params: BlackHoleParams, point: SpacetimePoint,
                   horizon: HorizonData | None = None,
                   delta: float | None = None) -> np.ndarray:
    """Dual metric ``g^{-1}`` at ``point`` as a symmetric 4x4 array.

    Raises
    ------
    OutsideChart
        Boyer-Lindquist needs ``r > r_+``; Kerr-star needs ``r > r_+ - delta``
        and ``0 < theta < pi``.
    """
    horizon = horizon or find_horizon(params)
    delta = default_delta(horizon) if delta is None else delta
    r, theta = float(point.r), float(point.theta)
    if not (0.0 < theta < math.pi):
        raise OutsideChart(f"theta={theta} outside (0, pi)")
    a = params.a
    Dr, Dth, rho2 = metric_scalars(params, r, theta)
    if point.chart is Chart.BOYER_LINDQUIST:
        if not r > horizon.r_plus:
            raise OutsideChart(f"Boyer-Lindquist chart needs r > r+={horizon.r_plus}, got r={r}")
        xi2 = (1.0 - a * a) ** 2
        sin2 = math.sin(theta) ** 2
        R = r * r + a * a
        comp = {
            "tt": -xi2 * a * a * sin2 / Dth + xi2 * R * R / Dr,
            "tp": -xi2 * a / Dth + xi2 * a * R / Dr,
            "pp": -xi2 / (Dth * sin2) + xi2 * a * a / Dr,
            "rr": -Dr,
            "hh": -Dth,
        }
        return _assemble4(comp) / rho2
    if not r > horizon.r_plus - delta:
        raise OutsideChart(
            f"Kerr-star chart needs r > r+ - delta = {horizon.r_plus - delta}, got r={r}")
    G = conformal_dual_metric(params, r, theta)
    return _assemble4(G) / rho2


def _shift_integrands(params: BlackHoleParams):
    a = params.a
    xi = 1.0 - a * a

    def ft(r):
        return xi * (r * r + a * a) / delta_r(params, r) + f_plus(params, r)

    def fphi(r):
        return a * xi / delta_r(params, r)

    return ft, fphi


def kerr_star_shift(params: BlackHoleParams, r: float, *, rtol: float = 1e-10,
                    horizon: HorizonData | None = None) -> tuple[float, float]:
    """Return ``(F_t(r), F_phi(r))``, both normalized to vanish at infinity.

    The tail is compactified with ``u = 1/r`` so that
    ``F(r) = -int_0^{1/r} F'(1/u) u^{-2} du``.

    Raises
    ------
    QuadratureFailure
        Error estimate above ``rtol`` (typically very close to ``r_+``,
        where the integrands behave like ``1/Delta_r``).
    """
    horizon = horizon or find_horizon(params)
    if not r > horizon.r_plus:
        raise OutsideChart(f"Kerr-star shift defined for r > r+={horizon.r_plus}, got r={r}")
    ft, fphi = _shift_integrands(params)
    out = []
    for fn in (ft, fphi):
        g = lambda u, fn=fn: 0.0 if u == 0.0 else fn(1.0 / u) / (u * u)  # noqa: E731
        val, err = integrate.quad(g, 0.0, 1.0 / r, epsabs=1e-15, epsrel=rtol * 1e-2, limit=400)
        if err > rtol * abs(val) + 1e-14:
            raise QuadratureFailure(
                f"shift quadrature at r={r}: error estimate {err:.2e} exceeds tolerance")
        out.append(-val)
    return out[0], out[1]


def ergoregion_contains(params: BlackHoleParams, r, theta):
    """True where ``Delta_r <= a^2 Delta_theta sin^2(theta)``."""
    Dr, Dth, _ = metric_scalars(params, r, theta)
    return Dr <= params.a**2 * Dth * np.sin(theta) ** 2


def validate_extension(params: BlackHoleParams, horizon: HorizonData, delta: float,
                       n: int = 64) -> bool:
    """Check that ``[r_+ - delta, r_+]`` is a valid horizon extension.

    Requires ``Delta_r' > 0`` there and ``dt*`` to be timelike-dual,
    i.e. ``G(dt*, dt*) > 0`` in the mostly-minus signature.
    """
    r = np.linspace(horizon.r_plus - delta, horizon.r_plus, n)
    if not np.all(delta_r_prime(params, r) > 0) or np.any(r <= 0):
        return False
    th = np.linspace(1e-3, math.pi - 1e-3, 33)
    G = conformal_dual_metric(params, r[:, None], th[None, :])
    return bool(np.all(G["tt"] > 0))


def trapping_radius(params: BlackHoleParams, horizon: HorizonData | None = None) -> float:
    """Radius maximizing the equatorial, axisymmetric effective potential.

    The potential is the ratio of the angular-momentum coefficient to the
    frequency coefficient in the separated radial symbol,
    ``Delta_r / (r^2 + a^2)^2``, whose maximum marks the photon orbit.
    """
    horizon = horizon or find_horizon(params)
    a2 = params.a**2
    V = lambda r: -delta_r(params, r) / (r * r + a2) ** 2  # noqa: E731
    rp = horizon.r_plus
    grid = np.geomspace(rp * (1 + 1e-6), 100.0 * (1.0 + rp), 4000)
    i = int(np.argmin(V(grid)))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(V, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x)
