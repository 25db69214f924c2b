"""Collocation discretization of the stationary Klein-Gordon operator.

The operator ``P(lambda) = rho^2 (Box_g + nu^2 - 9/4)`` with ``D_t* -> -lambda``
and ``D_phi* -> k`` is discretized on ``s = 1/r`` (Chebyshev-Lobatto) times
``x = cos(theta)`` (Gauss-Legendre).  The working unknown is the twisted
profile ``w`` defined by

    u = s**(3/2 - nu) * (1 - x**2)**(|k|/2) * w,

so that the stored matrices represent ``q^{-1} P(lambda) q`` with
``q = s**(3/2-nu) (1-x^2)**(|k|/2)``.  Row ``(j, i)`` is the equation at
``(s_j, x_i)``; rows with ``s_j = 0`` carry the boundary condition and the
horizon-side end carries no condition at all.

Flattened index of node ``(j, i)`` is ``j * n_angular + i``.
"""
from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import collocation
from .errors import AssemblyFailure, InvalidCounts
from .geometry import BlackHoleParams, HorizonData, default_delta, find_horizon

__all__ = [
    "BCKind",
    "BoundaryCondition",
    "GridSpec",
    "DiscreteOperator",
    "build_grid",
    "assemble",
    "evaluate_at",
    "norms",
    "semiclassical_rescale",
    "trace_functionals",
    "traces",
    "l2_weight",
    "dump_operator",
    "load_operator",
]

MIN_RADIAL = 8
MIN_ANGULAR = 4


class BCKind(enum.Enum):
    DIRICHLET = "dirichlet"
    ROBIN = "robin"


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary operator at the conformal boundary.

    ``Dirichlet`` imposes ``gamma_- u = 0``; ``Robin`` imposes
    ``gamma_+ u + beta gamma_- u = 0`` with real ``beta``, either a constant
    or a callable of ``theta`` (axisymmetric by construction).
    """

    kind: BCKind = BCKind.DIRICHLET
    beta: float | object = 0.0

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls(BCKind.DIRICHLET)

    @classmethod
    def robin(cls, beta) -> "BoundaryCondition":
        return cls(BCKind.ROBIN, beta)

    def beta_values(self, theta: np.ndarray) -> np.ndarray:
        if callable(self.beta):
            vals = np.asarray(self.beta(theta), dtype=complex)
        else:
            vals = np.full(theta.shape, self.beta, dtype=complex)
        if np.any(np.abs(vals.imag) > 0):
            raise ValueError("Robin function beta must be real-valued")
        return vals.real


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Tensor grid on ``[s_min, s_max] x (-1, 1)``.

    ``s_min`` is always 0 (the conformal boundary).  ``s_max`` equals
    ``1/(r_+ - delta)`` for the full problem or ``1/r_inner`` for a
    truncated one.
    """

    params: BlackHoleParams
    horizon: HorizonData
    n_radial: int
    n_angular: int
    delta: float
    s: np.ndarray
    Ds: np.ndarray
    Dss: np.ndarray
    ws: np.ndarray
    x: np.ndarray
    Dx: np.ndarray
    Dxx: np.ndarray
    wx: np.ndarray
    r_inner: float
    truncated: bool = False

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.x)

    @property
    def r(self) -> np.ndarray:
        """Radial nodes; ``inf`` at the conformal boundary."""
        with np.errstate(divide="ignore"):
            return 1.0 / self.s

    def mesh(self):
        """``(S, X)`` arrays of shape ``(n_radial, n_angular)``."""
        return np.meshgrid(self.s, self.x, indexing="ij")

    def quadrature(self) -> np.ndarray:
        """Tensor quadrature weights for ``ds dx`` on the grid."""
        return np.outer(self.ws, self.wx)

    def symmetric(self) -> bool:
        return self.n_angular % 2 == 0


def build_grid(params: BlackHoleParams, n_radial: int, n_angular: int, *,
               delta: float | None = None, r_inner: float | None = None,
               horizon: HorizonData | None = None) -> GridSpec:
    """Nodes, differentiation matrices and quadrature weights.

    Parameters
    ----------
    n_radial, n_angular : int
        Node counts (at least 8 and 4).
    delta : float, optional
        Horizon extension depth; defaults to ``0.05 r_+``.
    r_inner : float, optional
        Inner radius of a truncated grid (a Dirichlet wall is placed there
        by :func:`assemble`).  Overrides ``delta``.

    Raises
    ------
    InvalidCounts
    """
    if int(n_radial) < MIN_RADIAL or int(n_angular) < MIN_ANGULAR:
        raise InvalidCounts(
            f"need n_radial >= {MIN_RADIAL} and n_angular >= {MIN_ANGULAR}, "
            f"got ({n_radial}, {n_angular})")
    horizon = horizon or find_horizon(params)
    delta = default_delta(horizon) if delta is None else float(delta)
    truncated = r_inner is not None
    if truncated:
        if not r_inner > horizon.r_plus:
            raise ValueError(f"truncation radius {r_inner} must exceed r+={horizon.r_plus}")
        rin = float(r_inner)
    else:
        if not (0.0 <= delta < horizon.r_plus):
            raise ValueError(f"delta={delta} must lie in [0, r+)")
        rin = horizon.r_plus - delta
    s_max = 1.0 / rin
    xc, D = collocation.cheb_lobatto(int(n_radial))
    s = 0.5 * s_max * (1.0 - xc)
    s[0] = 0.0
    s[-1] = s_max
    Ds = D * (-2.0 / s_max)
    ws = collocation.clenshaw_curtis(int(n_radial)) * (0.5 * s_max)
    x, wx, Dx = collocation.gauss_legendre(int(n_angular))
    return GridSpec(params=params, horizon=horizon, n_radial=int(n_radial),
                    n_angular=int(n_angular), delta=delta, s=s, Ds=Ds, Dss=Ds @ Ds,
                    ws=ws, x=x, Dx=Dx, Dxx=Dx @ Dx, wx=wx, r_inner=rin,
                    truncated=truncated)


# ---------------------------------------------------------------------------
# coefficient functions in (s, x)


def _hat_delta(p: BlackHoleParams, s):
    """``s^4 Delta_r(1/s) = (1 + a^2 s^2)(1 + s^2) - 2 M s^3`` and its s-derivative."""
    a2 = p.a**2
    D = (1.0 + a2 * s * s) * (1.0 + s * s) - 2.0 * p.M * s**3
    dD = 2.0 * s * (1.0 + a2) + 4.0 * a2 * s**3 - 6.0 * p.M * s * s
    return D, dD


def dual_metric_s(p: BlackHoleParams, s, x):
    """Kerr-star ``G`` components written in ``(s, x)``; regular at ``s = 0``.

    Returns ``G^{tt}, G^{rt}, G^{t phi}`` and ``d_r G^{rt}``.
    """
    a, M = p.a, p.M
    xi = 1.0 - a * a
    s2 = s * s
    Dth = 1.0 - a * a * x * x
    sin2 = 1.0 - x * x
    Gtt = xi**2 * (((1.0 + a * a * s2) * (1.0 + s2) + 2.0 * M * s**3) / (1.0 + s2) ** 2
                   - a * a * sin2 / Dth)
    Grt = -2.0 * M * xi * s / (1.0 + s2)
    Gtp = xi**2 * a * (s2 / (1.0 + s2) - 1.0 / Dth)
    dGrt = -2.0 * M * xi * s2 * (s2 - 1.0) / (1.0 + s2) ** 2
    return Gtt, Grt, Gtp, dGrt


def l2_weight(grid: GridSpec, k: int | None = None) -> np.ndarray:
    """Density of ``|u|^2 r^{-1} dS_t`` with respect to ``|w|^2 ds dx``.

    Includes the ``2 pi`` from the axial integral.  The conformal-boundary
    row gets weight 0 (it is a boundary node, and the density is singular
    there for ``nu > 1/2``).
    """
    p = grid.params
    k = p.k if k is None else k
    m = abs(k)
    S, X = grid.mesh()
    Gtt, _, _, _ = dual_metric_s(p, S, X)
    xi = 1.0 - p.a**2
    W = np.zeros_like(S)
    inner = S > 0
    Si = S[inner]
    W[inner] = (2.0 * np.pi * Si ** (1.0 - 2.0 * p.nu) * (1.0 - X[inner] ** 2) ** m
                * np.sqrt((1.0 + p.a**2 * X[inner] ** 2 * Si**2) * Gtt[inner]) / xi)
    return W


# ---------------------------------------------------------------------------
# traces at the conformal boundary


def trace_functionals(grid: GridSpec, nu: float | None = None, n_fit: int | None = None):
    """Linear functionals recovering ``gamma_-`` and ``gamma_+`` from ``w``.

    Near ``s = 0`` a member of the boundary class has the two-branch form
    ``w = A(s^2) + s^{2 nu} B(s^2)``.  The functionals are obtained by a
    least-squares fit of that form (``J`` terms per branch) on the first
    ``n_fit`` radial nodes, giving ``gamma_- = A(0)`` and
    ``gamma_+ = -2 nu B(0)``.  When ``2 nu`` is an odd integer the two
    branches together span all polynomials and the fit is a one-sided
    polynomial stencil.

    Returns
    -------
    c_minus, c_plus : ndarray, shape (n_fit,)
        Weights acting on ``w[0:n_fit]`` at a fixed angle.
    """
    nu = grid.params.nu if nu is None else nu
    n = grid.n_radial
    if n_fit is None:
        n_fit = min(n, max(6, int(round(0.2 * n)) + 1))
    J = max(1, (n_fit - 1) // 2)
    s = grid.s[:n_fit]
    scale = s[-1]
    t = s / scale
    cols = [t ** (2 * j) for j in range(J)] + [t ** (2 * nu + 2 * j) for j in range(J)]
    V = np.stack(cols, axis=1)
    pinv = np.linalg.pinv(V, rcond=1e-13)
    c_minus = pinv[0]
    c_plus = -2.0 * nu * pinv[J] / scale ** (2.0 * nu)
    return c_minus, c_plus


def traces(grid: GridSpec, w: np.ndarray, nu: float | None = None):
    """Apply :func:`trace_functionals` to a grid function ``w``.

    ``w`` may be flat or shaped ``(n_radial, n_angular)``; returns arrays of
    length ``n_angular`` with ``(gamma_- w, gamma_+ w)``.
    """
    W = np.asarray(w).reshape(grid.n_radial, grid.n_angular)
    cm, cp = trace_functionals(grid, nu)
    K = cm.size
    return cm @ W[:K], cp @ W[:K]


# ---------------------------------------------------------------------------
# the discrete operator


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Quadratic matrix polynomial ``P0 + lam P1 + lam^2 P2``.

    Attributes
    ----------
    boundary : ndarray of int
        Row (= column) indices that carry boundary conditions; these rows
        are independent of ``lam``.
    parity : {None, +1, -1}
        Equatorial parity when the operator has been folded onto the
        half-grid ``x > 0`` (see :meth:`fold`).
    """

    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    params: BlackHoleParams
    grid: GridSpec
    bc: BoundaryCondition
    k: int
    nu: float
    boundary: np.ndarray
    parity: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.P0.shape[0]

    def angular_indices(self) -> np.ndarray:
        """Angular node indices carried by the unknowns."""
        na = self.grid.n_angular
        if self.parity is None:
            return np.arange(na)
        return np.arange(na // 2, na)

    def fold(self, parity: int) -> "DiscreteOperator":
        """Restrict to equatorially even (+1) or odd (-1) functions.

        The coefficients are invariant under ``x -> -x`` and Gauss-Legendre
        nodes are symmetric, so the restriction is exact: unknowns live on
        the nodes with ``x > 0`` and mirror columns are added with sign
        ``parity``.
        """
        if self.parity is not None:
            raise ValueError("operator is already folded")
        g = self.grid
        if not g.symmetric():
            raise ValueError("folding needs an even number of angular nodes")
        na, nr = g.n_angular, g.n_radial
        pos = np.arange(na // 2, na)
        mir = na - 1 - pos
        J = np.arange(nr)[:, None] * na
        keep = (J + pos[None, :]).ravel()
        mirror = (J + mir[None, :]).ravel()
        mats = []
        for P in (self.P0, self.P1, self.P2):
            mats.append(P[np.ix_(keep, keep)] + parity * P[np.ix_(keep, mirror)])
        bset = set(self.boundary.tolist())
        bnd = np.array([i for i, kk in enumerate(keep) if kk in bset], dtype=int)
        return DiscreteOperator(mats[0], mats[1], mats[2], self.params, self.grid, self.bc,
                                self.k, self.nu, bnd, parity, dict(self.meta))

    def expand(self, v: np.ndarray) -> np.ndarray:
        """Map a vector of this operator to the full tensor grid."""
        v = np.asarray(v)
        if self.parity is None:
            return v
        g = self.grid
        na, nr = g.n_angular, g.n_radial
        half = v.reshape(nr, na // 2)
        full = np.empty((nr, na), dtype=np.result_type(v, float))
        full[:, na // 2:] = half
        full[:, : na // 2] = self.parity * half[:, ::-1]
        return full.ravel()

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`expand` (takes the ``x > 0`` half)."""
        if self.parity is None:
            return np.asarray(v_full)
        g = self.grid
        return np.asarray(v_full).reshape(g.n_radial, g.n_angular)[:, g.n_angular // 2:].ravel()

    def weights(self) -> np.ndarray:
        """Quadrature times ``L^2`` density, per unknown of this operator.

        For a folded operator the weights are doubled so that discrete
        norms agree with the norm of the expanded vector.
        """
        W = (self.grid.quadrature() * l2_weight(self.grid, self.k))
        if self.parity is None:
            return W.ravel()
        return 2.0 * W[:, self.grid.n_angular // 2:].ravel()


def assemble(params: BlackHoleParams, grid: GridSpec, bc: BoundaryCondition | None = None,
             k: int | None = None) -> DiscreteOperator:
    """Assemble ``(P0, P1, P2)`` for the twisted unknown ``w``.

    For ``nu in (0, 1)`` the boundary rows impose ``bc``; for ``nu >= 1``
    the Dirichlet branch is selected automatically (``w(0) = 0``).  A
    truncated grid additionally gets a Dirichlet wall at ``r_inner``.

    Raises
    ------
    AssemblyFailure
        A coefficient is non-finite at some node.
    """
    bc = bc or BoundaryCondition.dirichlet()
    k = params.k if k is None else int(k)
    if abs(k) > grid.n_angular:
        raise AssemblyFailure(f"|k|={abs(k)} exceeds n_angular={grid.n_angular}")
    p = params
    nu, a, M = p.nu, p.a, p.M
    a2 = a * a
    m = abs(k)
    alpha = 1.5 - nu
    xi = 1.0 - a2
    nr, na = grid.n_radial, grid.n_angular
    n = nr * na

    s = grid.s
    S, X = grid.mesh()
    Dh, dDh = _hat_delta(p, S)
    Gtt, Grt, Gtp, dGrt = dual_metric_s(p, S, X)
    Dth = 1.0 - a2 * X * X
    B0 = -2j * k * a * xi  # 2 i k G^{r phi}
    Blam = -2j * Grt       # coefficient of lam in B = -2 i lam G^{rt} + 2 i k G^{r phi}
    s_safe = np.where(S > 0, S, 1.0)
    inv_s = np.where(S > 0, 1.0 / s_safe, 0.0)

    # radial second/first order coefficients (zero-th power of lam unless noted)
    c2 = -Dh
    c1_0 = (2.0 * nu - 1.0) * Dh * inv_s - dDh - S * S * B0
    c1_1 = -S * S * Blam
    # zeroth-order coefficients
    c0_0 = ((2.25 - nu * nu) * (1.0 + a2 - 2.0 * M * S + a2 * S * S)
            - alpha * (2.0 * (1.0 + a2) + 4.0 * a2 * S * S - 6.0 * M * S)
            - alpha * S * B0
            + (nu * nu - 2.25) * a2 * X * X)
    c0_1 = -alpha * S * Blam - 1j * dGrt + 2.0 * k * Gtp
    c0_2 = -Gtt
    # twisted angular operator
    a2_ang = -(1.0 - X * X) * Dth
    a1_ang = 2.0 * (m + 1) * X * Dth + 2.0 * a2 * X * (1.0 - X * X)
    a0_ang = (m * Dth - 2.0 * a2 * m * X * X
              + m * m * (xi**2 + (a2 * a2 - 2.0 * a2) * X * X + a2 * a2 * X**4) / Dth)

    coeffs = dict(c2=c2, c1_0=c1_0, c1_1=c1_1, c0_0=c0_0, c0_1=c0_1, c0_2=c0_2,
                  a2_ang=a2_ang, a1_ang=a1_ang, a0_ang=a0_ang)
    interior = np.ones((nr, na), dtype=bool)
    interior[0] = False
    if grid.truncated:
        interior[-1] = False
    for name, val in coeffs.items():
        bad = ~np.isfinite(np.asarray(val)) & interior
        if np.any(bad):
            j, i = np.argwhere(bad)[0]
            raise AssemblyFailure(
                f"coefficient {name} non-finite at node (s={s[j]:.6g}, x={grid.x[i]:.6g})")

    Ir, Ia = np.eye(nr), np.eye(na)
    DsK = np.kron(grid.Ds, Ia)
    DssK = np.kron(grid.Dss, Ia)
    DxK = np.kron(Ir, grid.Dx)
    DxxK = np.kron(Ir, grid.Dxx)

    def diag(c):
        return np.asarray(c, dtype=complex).ravel()[:, None]

    P0 = (diag(c2) * DssK + diag(c1_0) * DsK + diag(a2_ang) * DxxK + diag(a1_ang) * DxK
          + np.diag((np.asarray(c0_0) + a0_ang).ravel().astype(complex)))
    P1 = diag(c1_1) * DsK + np.diag(np.asarray(c0_1, dtype=complex).ravel())
    P2 = np.diag(np.asarray(c0_2, dtype=complex).ravel())

    # boundary rows at s = 0
    brows = np.arange(na)
    P0[brows] = 0.0
    P1[brows] = 0.0
    P2[brows] = 0.0
    robin = bc.kind is BCKind.ROBIN and 0.0 < nu < 1.0
    if robin:
        cm, cp = trace_functionals(grid, nu)
        beta = bc.beta_values(grid.theta)
        K = cm.size
        for i in range(na):
            cols = np.arange(K) * na + i
            P0[i, cols] = cp + beta[i] * cm
    else:
        P0[brows, brows] = 1.0
    boundary = [brows]
    if grid.truncated:
        wall = np.arange((nr - 1) * na, n)
        P0[wall] = 0.0
        P1[wall] = 0.0
        P2[wall] = 0.0
        P0[wall, wall] = 1.0
        boundary.append(wall)
    for P in (P0, P1, P2):
        if not np.all(np.isfinite(P)):
            j = int(np.argwhere(~np.isfinite(P))[0][0])
            raise AssemblyFailure(f"non-finite matrix entry in row {j}")
    meta = {"robin": robin, "coefficients": coeffs}
    return DiscreteOperator(P0, P1, P2, params, grid, bc, k, nu,
                            np.concatenate(boundary), None, meta)


def evaluate_at(op: DiscreteOperator, lam: complex) -> np.ndarray:
    """``P0 + lam P1 + lam^2 P2``."""
    lam = complex(lam)
    if lam == 0:
        return op.P0.copy()
    return op.P0 + lam * op.P1 + (lam * lam) * op.P2


def semiclassical_rescale(op: DiscreteOperator, h: float, z: complex) -> np.ndarray:
    """``P_h(z) = h^2 P(z/h) = h^2 P0 + h z P1 + z^2 P2``."""
    if not h > 0:
        raise ValueError("h must be positive")
    z = complex(z)
    return (h * h) * op.P0 + (h * z) * op.P1 + (z * z) * op.P2


def _spatial_h1_density(grid: GridSpec, k: int, w: np.ndarray) -> np.ndarray:
    """``r^2 h^{-1}(d~u, d~u-bar)`` divided by the ``L^2`` density factor.

    With ``d~u = q d(w Y)`` (``Y`` the angular twist) and
    ``rho^2 h^{-1}(xi, xi) = -G(xi, xi) + |G(dt, xi)|^2 / G^{tt}`` for
    spatial covectors, the result multiplies ``|q|^2`` in the same way as
    ``|u|^2`` does, so it can be integrated against :func:`l2_weight`.
    """
    p = grid.params
    a = p.a
    xi = 1.0 - a * a
    m = abs(k)
    W = w.reshape(grid.n_radial, grid.n_angular)
    S, X = grid.mesh()
    Gtt, Grt, Gtp, _ = dual_metric_s(p, S, X)
    Dth = 1.0 - a * a * X * X
    sin2 = 1.0 - X * X
    # components of q^{-1} Y^{-1} d~u in (r, theta, phi)
    dr = -(S * S) * (grid.Ds @ W)                      # d/dr = -s^2 d/ds
    sinth = np.sqrt(sin2)
    dth = -sinth * (W @ grid.Dx.T) + m * X / sinth * W  # d/dtheta of (w sin^m)/sin^m
    dph = 1j * k * W
    Grr = -(Dth * 0.0) - _hat_delta(p, S)[0] / np.where(S > 0, S, 1.0) ** 4
    Grp = -a * xi
    Ghh = -Dth
    Gpp = -(xi**2) / (Dth * sin2)
    GG = (Grr * np.abs(dr) ** 2 + Ghh * np.abs(dth) ** 2 + Gpp * np.abs(dph) ** 2
          + 2.0 * Grp * np.real(dr * np.conj(dph)))
    Gt = Grt * dr + Gtp * dph
    rho2 = np.where(S > 0, 1.0 / np.where(S > 0, S, 1.0) ** 2, 0.0) + a * a * X * X
    r2 = np.where(S > 0, 1.0 / np.where(S > 0, S, 1.0) ** 2, 0.0)
    dens = r2 * (-GG + np.abs(Gt) ** 2 / Gtt) / np.where(rho2 > 0, rho2, 1.0)
    dens[S == 0] = 0.0
    return dens


def norms(op: DiscreteOperator, vector: np.ndarray) -> dict:
    """Quadrature approximations of ``||u||_{L^2}`` and ``||u||_{H^1}``.

    The norms are square roots of the weighted integrals displayed in the
    definition of the function spaces.  ``vector`` holds ``w`` on the
    unknowns of ``op`` (folded or not).
    """
    v = op.expand(np.asarray(vector))
    g = op.grid
    Wq = g.quadrature() * l2_weight(g, op.k)
    w2 = np.abs(v.reshape(g.n_radial, g.n_angular)) ** 2
    l2sq = float(np.sum(Wq * w2))
    h1sq = l2sq + float(np.sum(Wq * _spatial_h1_density(g, op.k, v)))
    return {"l2": np.sqrt(max(l2sq, 0.0)), "h1": np.sqrt(max(h1sq, 0.0))}


# ---------------------------------------------------------------------------
# binary dump

_MAGIC = b"ADSQOP01"
_HEADER = struct.Struct("<8sIIIid4d")


def dump_operator(op: DiscreteOperator, fh) -> None:
    """Write ``(P0, P1, P2)`` in a little-endian binary layout.

    Layout: header ``<8s I I I i d 4d`` holding the magic ``ADSQOP01``,
    matrix dimension, ``n_radial``, ``n_angular``, ``k``, ``nu`` and
    ``(M, a, delta, parity)`` (parity 0 when unfolded); then the three
    matrices, each row-major ``complex128`` (``<c16``).
    """
    close = False
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        fh = open(fh, "wb")
        close = True
    try:
        g = op.grid
        fh.write(_HEADER.pack(_MAGIC, op.n, g.n_radial, g.n_angular, op.k, op.nu,
                              op.params.M, op.params.a, g.delta, float(op.parity or 0)))
        for P in (op.P0, op.P1, op.P2):
            fh.write(np.ascontiguousarray(P, dtype="<c16").tobytes())
    finally:
        if close:
            fh.close()


def load_operator(fh) -> dict:
    """Read a dump written by :func:`dump_operator` into a plain dict."""
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        data = open(fh, "rb").read()
    else:
        data = fh.read()
    buf = io.BytesIO(data)
    magic, n, nr, na, k, nu, M, a, delta, parity = _HEADER.unpack(buf.read(_HEADER.size))
    if magic != _MAGIC:
        raise ValueError("not an operator dump")
    mats = [np.frombuffer(buf.read(16 * n * n), dtype="<c16").reshape(n, n) for _ in range(3)]
    return {"n": n, "n_radial": nr, "n_angular": na, "k": k, "nu": nu, "M": M, "a": a,
            "delta": delta, "parity": int(parity), "P0": mats[0], "P1": mats[1], "P2": mats[2]}
