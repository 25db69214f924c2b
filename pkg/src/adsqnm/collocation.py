"""Spectral collocation primitives: Chebyshev-Lobatto and Gauss-Legendre."""
from __future__ import annotations

import numpy as np


def cheb_lobatto(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Lobatto nodes on [-1, 1] and their differentiation matrix.

    Parameters
    ----------
    n : int
        Number of nodes (n >= 2).

    Returns
    -------
    x : ndarray, shape (n,)
        Nodes ``cos(pi j/(n-1))``, descending from 1 to -1.
    D : ndarray, shape (n, n)
        Differentiation matrix; the diagonal uses the negative-sum
        trick so that ``D @ ones`` vanishes to rounding.
    """
    N = n - 1
    j = np.arange(n)
    # symmetric evaluation of the nodes improves accuracy near +-1
    x = np.sin(np.pi * (N - 2 * j) / (2 * N))
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the nodes of :func:`cheb_lobatto`."""
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    inner = theta[1:-1]
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(N * inner) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / N
    return w


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights for arbitrary distinct nodes, scaled to max 1."""
    dX = x[:, None] - x[None, :]
    np.fill_diagonal(dX, 1.0)
    # products in log space avoid under/overflow for moderately large n
    logabs = np.sum(np.log(np.abs(dX)), axis=1)
    sign = np.prod(np.sign(dX), axis=1)
    w = sign * np.exp(-(logabs - logabs.min()))
    return w / np.max(np.abs(w))


def diff_matrix(x: np.ndarray) -> np.ndarray:
    """First-derivative collocation matrix on arbitrary nodes."""
    w = barycentric_weights(x)
    dX = x[:, None] - x[None, :]
    n = len(x)
    D = np.outer(1.0 / w, w) / (dX + np.eye(n))
    np.fill_diagonal(D, 0.0)
    D -= np.diag(D.sum(axis=1))
    return D


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes (ascending), weights and differentiation matrix."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w, diff_matrix(x)


def interp_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Barycentric interpolation matrix from ``nodes`` to ``targets``.

    Targets that coincide with a node reproduce the nodal value exactly.
    """
    w = barycentric_weights(nodes)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    diff = targets[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        K = w[None, :] / diff
        K = K / K.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        K[rows] = exact[rows].astype(float)
    return K
