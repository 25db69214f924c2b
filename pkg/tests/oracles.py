"""Independent reference computations shared by the tests.

Nothing here imports the package's discretization code: the symbolic
operator is rebuilt from the Boyer-Lindquist dual metric and the Kerr-star
Jacobian, so agreement with the assembled matrices is a genuine check.
"""
from __future__ import annotations

import functools

import numpy as np
import sympy as sp

r, th, t, ph = sp.symbols("r theta t phi", real=True)
M_, a_, nu_, lam_ = sp.symbols("M a nu lam")


@functools.lru_cache(maxsize=None)
def kerr_star_dual_metric():
    """``rho^2 g^{-1}`` in ``(t*, r, theta, phi*)`` as a sympy Matrix."""
    Xi = 1 - a_**2
    Dr = (r**2 + a_**2) * (1 + r**2) - 2 * M_ * r
    Dth = 1 - a_**2 * sp.cos(th) ** 2
    R = r**2 + a_**2
    # Boyer-Lindquist, signature (+,-,-,-)
    vT = sp.Matrix([R, 0, 0, a_])                       # (r^2+a^2) d_t + a d_phi
    vP = sp.Matrix([a_ * sp.sin(th) ** 2, 0, 0, 1])     # a sin^2 d_t + d_phi
    er = sp.Matrix([0, 1, 0, 0])
    eh = sp.Matrix([0, 0, 1, 0])
    G_bl = (Xi**2 / Dr) * vT * vT.T - (Xi**2 / (Dth * sp.sin(th) ** 2)) * vP * vP.T \
        - Dr * er * er.T - Dth * eh * eh.T
    fplus = (a_**2 - 1) / (r**2 + 1)
    Ft = fplus + Xi * R / Dr
    Fp = a_ * Xi / Dr
    J = sp.Matrix([[1, Ft, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, Fp, 0, 1]])
    return J * G_bl * J.T


@functools.lru_cache(maxsize=None)
def conformal_wave_operator(profile: str, k: int = 0):
    """Lambdified ``e^{i lam t} rho^2 (Box + nu^2 - 9/4)(e^{-i lam t} e^{i k phi} u)``.

    ``profile`` is a sympy-parsable expression in ``r`` and ``theta`` giving
    ``u``.  The result is a function ``(r, theta, M, a, nu, lam)``.
    """
    G = kerr_star_dual_metric()
    u = sp.sympify(profile, locals={"r": r, "theta": th})
    f = sp.exp(-sp.I * lam_ * t + sp.I * k * ph) * u
    X = (t, r, th, ph)
    sin = sp.sin(th)
    expr = 0
    for m in range(4):
        inner = sum(G[m, n] * sp.diff(f, X[n]) for n in range(4))
        expr += sp.diff(sin * inner, X[m])
    expr = expr / sin
    rho2 = r**2 + a_**2 * sp.cos(th) ** 2
    expr = expr + rho2 * (nu_**2 - sp.Rational(9, 4)) * f
    expr = (expr * sp.exp(sp.I * lam_ * t - sp.I * k * ph)).subs({t: 0, ph: 0})
    return sp.lambdify((r, th, M_, a_, nu_, lam_), expr, "numpy")


def twist_potential_fd(M, a, nu, rr, theta, h=1e-3):
    """``q^{-1} Box_g q`` for ``q = r^{nu - 3/2}`` by central differences.

    Uses ``rho^2 Box f = (1/sin) d_mu (sin G^{mu nu} d_nu f)`` with the
    symbolic dual metric; only the ``r`` and ``theta`` derivatives act on a
    function of ``r`` alone.
    """
    G = kerr_star_dual_metric()
    Grr = sp.lambdify((r, th, M_, a_), G[1, 1], "numpy")
    q = lambda x: x ** (nu - 1.5)  # noqa: E731

    def flux(x):
        dq = (q(x + h) - q(x - h)) / (2 * h)
        return Grr(x, theta, M, a) * dq

    box = (flux(rr + h) - flux(rr - h)) / (2 * h)
    rho2 = rr**2 + a**2 * np.cos(theta) ** 2
    return box / (rho2 * q(rr))
