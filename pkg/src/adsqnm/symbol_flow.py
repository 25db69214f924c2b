"""Principal symbol, characteristic set and rescaled Hamilton flow.

The covector is ``zeta = xi . dx - z dt*`` on the Kerr-star chart
``(t*, r, theta, phi*)`` and the principal symbol is

    p = -g^{-1}(zeta, zeta) = -G(zeta, zeta) / rho^2,

with ``G = rho^2 g^{-1}`` from :func:`adsqnm.geometry.conformal_dual_metric`.
``normalization='conformal'`` uses ``-G(zeta, zeta)`` instead (the symbol
of ``rho^2`` times the wave operator); both have the same null set and
the same unparametrized null bicharacteristics.

Integration is carried out on the fiber-compactified chart
``(r, theta, phi, rho, eta)`` with ``rho = 1/|xi|`` and ``eta = xi/|xi|``
(Euclidean norm in coordinates).  Writing ``pt(x, eta, w) = p(x, eta, w)``
with ``w = z rho`` one has ``p(x, xi, z) = pt / rho^2`` and the field
``<xi>^{-1} H_p`` becomes, with ``c = 1/sqrt(1 + rho^2)``,

    x'   = c d_eta pt,
    eta' = -c (d_x pt - eta (eta . d_x pt)),
    rho' = c rho (eta . d_x pt).

This is smooth down to ``rho = 0`` so the chart is used throughout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853

from .errors import AmbiguousClassification, OutsideChart, StepSizeUnderflow
from .geometry import (BlackHoleParams, HorizonData, conformal_dual_metric,
                       conformal_dual_metric_derivatives, default_delta, ergoregion_contains,
                       find_horizon)

__all__ = [
    "PhasePoint",
    "Classification",
    "ExitReason",
    "FlowSample",
    "FlowTrajectory",
    "DichotomyResult",
    "principal_symbol",
    "pairing",
    "classify",
    "hamilton_rhs",
    "integrate",
    "characteristic_seeds",
    "check_dichotomy",
    "fiber_infinity_points",
    "l_plus_point",
]


@dataclass(frozen=True)
class PhasePoint:
    """A covector ``xi . dx - z dt*`` over the base point ``(r, theta, phi*)``."""

    r: float
    theta: float
    phi: float
    xi_r: float
    xi_theta: float
    xi_phi: float
    z: float

    def __post_init__(self):
        vals = (self.r, self.theta, self.phi, self.xi_r, self.xi_theta, self.xi_phi, self.z)
        if not all(math.isfinite(float(v)) for v in vals):
            raise OutsideChart("phase point has non-finite components")
        if self.r <= 0 or not 0.0 < self.theta < math.pi:
            raise OutsideChart(f"base point (r={self.r}, theta={self.theta}) outside chart")

    @property
    def xi(self) -> np.ndarray:
        return np.array([self.xi_r, self.xi_theta, self.xi_phi])

    @property
    def fiber_scale(self) -> float:
        """``<xi>^{-1} = (1 + |xi|^2)^{-1/2}``."""
        return 1.0 / math.sqrt(1.0 + float(self.xi @ self.xi))


class Classification(enum.Enum):
    SIGMA_PLUS = "SigmaPlus"
    SIGMA_MINUS = "SigmaMinus"
    NOT_CHARACTERISTIC = "NotCharacteristic"


class ExitReason(enum.Enum):
    REACHED_INNER_BOUNDARY = "ReachedInnerBoundary"
    REACHED_OUTER_BOUND = "ReachedOuterBound"
    CONVERGED_TO_L_PLUS = "ConvergedToL_plus"
    CONVERGED_TO_L_MINUS = "ConvergedToL_minus"
    MAX_TIME = "MaxTime"


# ---------------------------------------------------------------------------
# quadratic form and its derivatives


def _form(G: dict, Z):
    """``G(Z, Z)`` for ``Z = (Z_t, Z_r, Z_theta, Z_phi)``."""
    Zt, Zr, Zh, Zp = Z
    return (G["tt"] * Zt * Zt + G["rr"] * Zr * Zr + G["hh"] * Zh * Zh + G["pp"] * Zp * Zp
            + 2.0 * (G["tr"] * Zt * Zr + G["tp"] * Zt * Zp + G["rp"] * Zr * Zp))


def _apply(G: dict, Z):
    """``G Z`` (index raised), components ``(t, r, theta, phi)``."""
    Zt, Zr, Zh, Zp = Z
    return (G["tt"] * Zt + G["tr"] * Zr + G["tp"] * Zp,
            G["tr"] * Zt + G["rr"] * Zr + G["rp"] * Zp,
            G["hh"] * Zh,
            G["tp"] * Zt + G["rp"] * Zr + G["pp"] * Zp)


def _rho2(params: BlackHoleParams, r, theta):
    return r * r + params.a**2 * np.cos(theta) ** 2


def _symbol_and_grad(params: BlackHoleParams, r, theta, Z, normalization: str):
    """``p``, ``d_x p = (d_r, d_theta)`` and ``d_Z p`` for ``p = -G(Z,Z)/w``."""
    G = conformal_dual_metric(params, r, theta)
    dGr, dGh = conformal_dual_metric_derivatives(params, r, theta)
    q = _form(G, Z)
    qr = _form(dGr, Z)
    qh = _form(dGh, Z)
    GZ = _apply(G, Z)
    if normalization == "conformal":
        w, wr, wh = 1.0, 0.0, 0.0
    elif normalization == "metric":
        w = _rho2(params, r, theta)
        wr = 2.0 * r
        wh = -2.0 * params.a**2 * math.cos(theta) * math.sin(theta)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    p = -q / w
    dp_r = -qr / w + q * wr / w**2
    dp_h = -qh / w + q * wh / w**2
    dZ = tuple(-2.0 * c / w for c in GZ)
    return float(p), float(dp_r), float(dp_h), tuple(float(c) for c in dZ)


def principal_symbol(params: BlackHoleParams, pt: PhasePoint, *,
                     normalization: str = "metric") -> float:
    """``p = -g^{-1}(xi . dx - z dt*, xi . dx - z dt*)``."""
    Z = (-pt.z, pt.xi_r, pt.xi_theta, pt.xi_phi)
    G = conformal_dual_metric(params, pt.r, pt.theta)
    q = float(_form(G, Z))
    if normalization == "conformal":
        return -q
    return -q / float(_rho2(params, pt.r, pt.theta))


def pairing(params: BlackHoleParams, pt: PhasePoint) -> float:
    """``<xi>^{-1} g^{-1}(xi . dx - z dt*, dt*)``."""
    G = conformal_dual_metric(params, pt.r, pt.theta)
    Z = (-pt.z, pt.xi_r, pt.xi_theta, pt.xi_phi)
    val = float(_apply(G, Z)[0]) / float(_rho2(params, pt.r, pt.theta))
    return val * pt.fiber_scale


def classify(params: BlackHoleParams, pt: PhasePoint, *, tol: float = 1e-6,
             pairing_tol: float = 1e-12) -> Classification:
    """Classify a covector as on ``Sigma_+``, ``Sigma_-`` or off the characteristic set.

    ``NotCharacteristic`` iff ``|p| > tol <xi>^2``.  On the characteristic
    set ``Sigma_+`` is the component on which the pairing with ``dt*`` is
    negative, i.e. the component containing the conormal direction
    ``+dr`` over the horizon (``G^{tr}(r_+) < 0``), where ``H_p r < 0``.
    """
    if pt.z == 0:
        raise ValueError("classification requires z != 0")
    scale = 1.0 + float(pt.xi @ pt.xi)
    if abs(principal_symbol(params, pt)) > tol * scale:
        return Classification.NOT_CHARACTERISTIC
    pr = pairing(params, pt)
    if abs(pr) <= pairing_tol:
        raise AmbiguousClassification(f"pairing with dt* is {pr:.3e} on the characteristic set")
    return Classification.SIGMA_PLUS if pr < 0 else Classification.SIGMA_MINUS


def hamilton_rhs(params: BlackHoleParams, pt: PhasePoint, *, normalization: str = "metric"):
    """``<xi>^{-1} H_p`` in components ``(r, theta, phi, xi_r, xi_theta, xi_phi)``.

    Uses ``x' = d_xi p`` and ``xi' = -d_x p`` with closed-form metric
    derivatives.  With ``normalization='conformal'`` the radial component
    over ``r = r_+`` equals ``<xi>^{-1}(-2 G(zeta, dr))``.
    """
    Z = (-pt.z, pt.xi_r, pt.xi_theta, pt.xi_phi)
    _, dp_r, dp_h, dZ = _symbol_and_grad(params, pt.r, pt.theta, Z, normalization)
    c = pt.fiber_scale
    return np.array([c * dZ[1], c * dZ[2], c * dZ[3], -c * dp_r, -c * dp_h, 0.0])


# ---------------------------------------------------------------------------
# compactified flow


def _compact_rhs(params, z, normalization):
    def rhs(t, y):
        r, th, _, rho, er, eh, ep, _ = y
        Z = (-z * rho, er, eh, ep)
        _, dp_r, dp_h, dZ = _symbol_and_grad(params, r, th, Z, normalization)
        c = 1.0 / math.sqrt(1.0 + rho * rho)
        proj = er * dp_r + eh * dp_h
        return np.array([
            c * dZ[1], c * dZ[2], c * dZ[3],
            c * rho * proj,
            -c * (dp_r - er * proj),
            -c * (dp_h - eh * proj),
            -c * (0.0 - ep * proj),
            c,
        ])
    return rhs


def _compact_symbol(params, z, y, normalization):
    r, th, _, rho, er, eh, ep, _ = y
    Z = (-z * rho, er, eh, ep)
    G = conformal_dual_metric(params, r, th)
    q = float(_form(G, Z))
    return -q if normalization == "conformal" else -q / float(_rho2(params, r, th))


def _to_compact(pt: PhasePoint) -> np.ndarray:
    n = float(np.linalg.norm(pt.xi))
    if n == 0.0:
        raise OutsideChart("zero fiber covector has no compactified representative")
    return np.array([pt.r, pt.theta, pt.phi, 1.0 / n, pt.xi_r / n, pt.xi_theta / n,
                     pt.xi_phi / n, 0.0])


def _from_compact(y: np.ndarray, z: float) -> PhasePoint:
    r, th, ph, rho, er, eh, ep, _ = y
    inv = 1.0 / rho
    return PhasePoint(float(r), float(th), float(ph), er * inv, eh * inv, ep * inv, z)


def l_plus_point(horizon: HorizonData, sign: int = 1, theta: float = math.pi / 2) -> np.ndarray:
    """Compactified coordinates of a point of ``L_+`` (``sign=-1``: ``L_-``)."""
    return np.array([horizon.r_plus, theta, 0.0, 0.0, float(sign), 0.0, 0.0, 0.0])


@dataclass
class FlowSample:
    t: float
    point: PhasePoint | None
    p_value: float
    fiber_scale: float
    compact: np.ndarray


@dataclass
class FlowTrajectory:
    samples: list
    exit_reason: ExitReason
    z: float
    normalization: str = "metric"
    drift: float = 0.0
    rtol: float = 1e-10

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def compact(self) -> np.ndarray:
        """Rows ``(r, theta, phi, rho, eta_r, eta_theta, eta_phi, base_time)``."""
        return np.array([s.compact for s in self.samples])

    @property
    def r(self) -> np.ndarray:
        return self.compact[:, 0]

    @property
    def p_values(self) -> np.ndarray:
        return np.array([s.p_value for s in self.samples])

    def rows(self):
        """CSV rows ``(t, r, theta, xi_r, xi_theta, xi_phi, p, exit_reason)``."""
        out = []
        last = len(self.samples) - 1
        for i, s in enumerate(self.samples):
            y = s.compact
            rho = y[3]
            xi = y[4:7] / rho if rho > 0 else np.full(3, np.inf) * np.sign(y[4:7])
            out.append((s.t, y[0], y[1], xi[0], xi[1], xi[2], s.p_value,
                        self.exit_reason.value if i == last else ""))
        return out


def _distance_to_L(y: np.ndarray, r_plus: float, sign: int) -> float:
    return (abs(y[0] - r_plus) + abs(y[3]) + abs(y[4] - sign) + abs(y[5]) + abs(y[6]))


def _run(params, y0, z, hz, delta, t_max, r_outer, rtol, atol, max_steps, normalization,
         converge_tol, sustain, p0):
    rhs = _compact_rhs(params, z, normalization)
    solver = DOP853(rhs, 0.0, y0, t_max, rtol=rtol, atol=atol)
    r_in = hz.r_plus - delta
    samples = []
    drift = 0.0

    def record(t, y):
        nonlocal drift
        pt_ = _compact_symbol(params, z, y, normalization)
        rho = y[3]
        # p = pt/rho^2; report the drift normalized by <xi>^2 = (1 + rho^2)/rho^2
        drift = max(drift, abs(pt_ - p0 * rho * rho) / (1.0 + rho * rho))
        try:
            point = _from_compact(y, z) if rho > 0 else None
        except OutsideChart:
            point = None
        p_val = pt_ / (rho * rho) if rho > 0 else math.inf
        samples.append(FlowSample(float(t), point, float(p_val),
                                  float(rho / math.sqrt(1.0 + rho * rho)), y.copy()))

    record(0.0, y0)
    streak = {1: 0, -1: 0}
    for _ in range(max_steps):
        msg = solver.step()
        if solver.status == "failed" or msg is not None and solver.status != "finished":
            traj = FlowTrajectory(samples, ExitReason.MAX_TIME, z, normalization, drift, rtol)
            raise StepSizeUnderflow(f"integration failed at t={solver.t:.6g}: {msg}", traj)
        y = solver.y
        if not np.all(np.isfinite(y)) or not 0.0 < y[1] < math.pi or y[0] <= 0:
            traj = FlowTrajectory(samples, ExitReason.MAX_TIME, z, normalization, drift, rtol)
            raise StepSizeUnderflow(f"left the chart at t={solver.t:.6g}", traj)
        record(solver.t, y)
        if y[0] <= r_in:
            return samples, ExitReason.REACHED_INNER_BOUNDARY, drift
        if y[0] >= r_outer:
            return samples, ExitReason.REACHED_OUTER_BOUND, drift
        for sgn in (1, -1):
            if _distance_to_L(y, hz.r_plus, sgn) < converge_tol:
                streak[sgn] += 1
                if streak[sgn] >= sustain:
                    reason = (ExitReason.CONVERGED_TO_L_PLUS if sgn == 1
                              else ExitReason.CONVERGED_TO_L_MINUS)
                    return samples, reason, drift
            else:
                streak[sgn] = 0
        if solver.status == "finished":
            return samples, ExitReason.MAX_TIME, drift
    return samples, ExitReason.MAX_TIME, drift


def integrate(params: BlackHoleParams, start: PhasePoint | np.ndarray,
              horizon_window: float | None = None, t_max: float = 100.0, *,
              z: float | None = None, r_outer: float | None = None, rtol: float = 1e-10,
              atol: float = 1e-12, max_steps: int = 200_000, normalization: str = "metric",
              converge_tol: float = 1e-6, sustain: int = 10, drift_tol: float = 1e-8,
              horizon: HorizonData | None = None) -> FlowTrajectory:
    """Integrate ``<xi>^{-1} H_p`` from ``start`` up to flow time ``t_max``.

    Parameters
    ----------
    start : PhasePoint or ndarray
        A phase point, or compactified coordinates
        ``(r, theta, phi, rho, eta_r, eta_theta, eta_phi, base_time)``
        (then ``z`` is required); the latter allows starting on
        ``rho = 0``.
    horizon_window : float
        ``delta``; the run stops once ``r <= r_+ - delta``.
    t_max : float
        Final flow time; negative values integrate backward.
    r_outer : float
        Stop once ``r >= r_outer`` (default ``50 (1 + M)``).
    drift_tol : float
        Target for ``max |p(t) - p(0)| / <xi(t)>^2``; the run is repeated
        with a tenfold tighter tolerance (down to ``1e-13``) while the
        target is missed.

    Returns
    -------
    FlowTrajectory
        Accepted steps with their symbol values; ``base_time`` in the
        compact rows accumulates ``c dt``, the parameter in which the base
        curves of ``(x, c xi; c z)`` and ``(x, xi; z)`` coincide.

    Raises
    ------
    StepSizeUnderflow
        If the integrator fails; the partial trajectory is attached.
    """
    hz = horizon or find_horizon(params)
    delta = default_delta(hz) if horizon_window is None else float(horizon_window)
    if isinstance(start, PhasePoint):
        z = start.z
        y0 = _to_compact(start)
    else:
        if z is None:
            raise ValueError("z is required for compactified starts")
        y0 = np.asarray(start, dtype=float).copy()
    r_outer = 50.0 * (1.0 + params.M) if r_outer is None else float(r_outer)
    rho0 = y0[3]
    p0 = _compact_symbol(params, z, y0, normalization) / rho0**2 if rho0 > 0 else 0.0
    tol = rtol
    while True:
        samples, reason, drift = _run(params, y0, z, hz, delta, t_max, r_outer, tol,
                                      atol * tol / rtol, max_steps, normalization,
                                      converge_tol, sustain, p0)
        if drift <= drift_tol * (1.0 + abs(p0)) or tol <= 1e-13:
            return FlowTrajectory(samples, reason, z, normalization, drift, tol)
        tol /= 10.0


# ---------------------------------------------------------------------------
# seeds and the escape dichotomy


def _sigma_plus_roots(params, r, theta, xi_theta, xi_phi, z):
    """Real ``xi_r`` with ``p = 0`` and negative ``dt*`` pairing."""
    G = conformal_dual_metric(params, r, theta)
    A = float(G["rr"])
    B = float(-z * G["tr"] + G["rp"] * xi_phi)
    C = float(G["tt"] * z * z - 2 * z * G["tp"] * xi_phi + G["hh"] * xi_theta**2
              + G["pp"] * xi_phi**2)
    if abs(A) < 1e-14 * (abs(B) + abs(C) + 1.0):
        roots = [-C / (2 * B)] if B != 0 else []
    else:
        disc = B * B - A * C
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        # numerically stable pair
        qv = -(B + math.copysign(sq, B))
        roots = [qv / A] + ([C / qv] if qv != 0 else [])
    out = []
    for xr in roots:
        pr = float(_apply(G, (-z, xr, xi_theta, xi_phi))[0])
        if pr < 0:
            out.append(xr)
    return out


def characteristic_seeds(params: BlackHoleParams, n: int, rng: np.random.Generator, *,
                         z_range=(1.0, 2.0), delta: float | None = None,
                         theta_margin: float = 0.2, horizon: HorizonData | None = None):
    """Random points of ``Sigma_+`` with ``|r - r_+| <= delta``.

    ``r``, ``theta``, ``z`` are uniform, ``xi_theta``, ``xi_phi`` standard
    normal, and ``xi_r`` is a ``Sigma_+`` root of ``p = 0`` (chosen at
    random when both roots qualify).  Draws without such a root are
    rejected.
    """
    hz = horizon or find_horizon(params)
    delta = default_delta(hz) if delta is None else float(delta)
    seeds = []
    while len(seeds) < n:
        r = rng.uniform(hz.r_plus - delta, hz.r_plus + delta)
        th = rng.uniform(theta_margin, math.pi - theta_margin)
        z = rng.uniform(*z_range)
        xh, xp = rng.standard_normal(2)
        roots = _sigma_plus_roots(params, r, th, xh, xp, z)
        if not roots:
            continue
        xr = roots[int(rng.integers(len(roots)))]
        seeds.append(PhasePoint(r, th, 0.0, xr, xh, xp, z))
    return seeds


@dataclass
class DichotomyResult:
    outcome: str  # "escaped_inner", "source_branch" or "failure"
    forward: FlowTrajectory
    backward: FlowTrajectory | None = None
    details: dict = field(default_factory=dict)


def check_dichotomy(params: BlackHoleParams, seed: PhasePoint, delta: float | None = None, *,
                    t_forward: float = 200.0, t_backward: float = 200.0,
                    horizon: HorizonData | None = None) -> DichotomyResult:
    """Test the escape dichotomy for a seed on ``Sigma_+`` near the horizon.

    Either the forward trajectory reaches ``r <= r_+ - delta`` or it leaves
    ``{|r - r_+| <= delta}`` forward and converges to ``L_+`` backward.
    """
    hz = horizon or find_horizon(params)
    delta = default_delta(hz) if delta is None else float(delta)
    fwd = integrate(params, seed, delta, t_forward, r_outer=hz.r_plus + delta, horizon=hz)
    if fwd.exit_reason is ExitReason.REACHED_INNER_BOUNDARY:
        return DichotomyResult("escaped_inner", fwd)
    if fwd.exit_reason is not ExitReason.REACHED_OUTER_BOUND:
        return DichotomyResult("failure", fwd, details={"reason": "stayed in the window"})
    bwd = integrate(params, seed, delta, -t_backward, r_outer=50.0 * (1.0 + params.M),
                    horizon=hz)
    if bwd.exit_reason is ExitReason.CONVERGED_TO_L_PLUS:
        return DichotomyResult("source_branch", fwd, bwd)
    return DichotomyResult("failure", fwd, bwd, details={"reason": bwd.exit_reason.value})


def fiber_infinity_points(params: BlackHoleParams, n: int, rng: np.random.Generator, *,
                          rho: float = 1e-3, z: float = 1.0, r_range=None,
                          horizon: HorizonData | None = None):
    """Characteristic covectors with ``1/|xi| <= rho`` and fixed ``z``.

    A direction ``(eta_r, eta_theta, eta_phi)`` is found by drawing
    ``eta_theta``, ``eta_phi`` and solving ``p(x, eta, z rho) = 0`` for a
    ``Sigma_+`` root ``eta_r`` (either sign of the draw); draws with
    ``|eta| < 1`` are rejected.  The returned covector is ``eta / rho`` with
    frequency ``z``, so ``1/|xi| = rho/|eta| <= rho``.
    """
    hz = horizon or find_horizon(params)
    lo, hi = r_range or (hz.r_plus * 0.9, hz.r_plus * 3.0 + 2.0)
    pts = []
    tries = 0
    while len(pts) < n and tries < 200 * n:
        tries += 1
        r = rng.uniform(lo, hi)
        th = rng.uniform(0.1, math.pi - 0.1)
        eh, ep = 2.0 * rng.standard_normal(2)
        roots = _sigma_plus_roots(params, r, th, eh, ep, z * rho)
        if not roots:
            continue
        er = roots[0]
        if er * er + eh * eh + ep * ep < 1.0:
            continue
        pts.append(PhasePoint(r, th, 0.0, er / rho, eh / rho, ep / rho, z))
    return pts
