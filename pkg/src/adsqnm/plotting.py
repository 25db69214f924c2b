"""SVG figures rendered from the run tables.

Figures are written with a fixed ``svg.hashsalt``, no date metadata and
text converted to paths, so reruns give identical files.
"""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["PLOT_KINDS", "plot_spectrum", "plot_residual_trend", "plot_scan_heatmap",
           "plot_flow_portrait", "style"]

PLOT_KINDS = ("spectrum", "residual_trend", "scan_heatmap", "flow_portrait")

_RC = {
    "svg.hashsalt": "adsqnm",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.6),
    "axes.spines.top": False,
    "axes.spines.right": False,
}


@contextmanager
def style():
    with matplotlib.rc_context(_RC):
        yield


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_spectrum(qnf_rows: list[dict], path, match_rows: list[dict] | None = None) -> Path:
    """Converged QNFs in the complex plane with matched quasimodes on the real axis."""
    with style():
        fig, ax = plt.subplots()
        conv = [r for r in qnf_rows if r["converged"]]
        ax.axhline(0.0, color="k", lw=0.8)
        ax.plot([r["re_lambda"] for r in conv], [r["im_lambda"] for r in conv], "o",
                ms=4, color="C0", label=f"converged QNF ({len(conv)})", gid="qnf-markers")
        if match_rows:
            ax.plot([r["lambda_sharp"] for r in match_rows], [0.0] * len(match_rows), "x",
                    color="C3", label="quasimode", gid="quasimode-markers")
            for r in match_rows:
                ax.annotate("", xy=(r["re_pole"], r["im_pole"]), xytext=(r["lambda_sharp"], 0.0),
                            arrowprops={"arrowstyle": "->", "color": "C3", "lw": 0.6})
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        ax.legend(loc="lower left", fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_residual_trend(qm_rows: list[dict], path) -> Path:
    """``log10`` quasimode residual against ``ell`` with the fitted line."""
    ell = np.array([r["ell"] for r in qm_rows], dtype=float)
    res = np.array([r["residual"] for r in qm_rows], dtype=float)
    with style():
        fig, ax = plt.subplots()
        ax.semilogy(ell, res, "o", color="C0", label="residual")
        if ell.size >= 2:
            slope, icpt = np.polyfit(ell, np.log(res), 1)
            xs = np.linspace(ell.min(), ell.max(), 50)
            ax.semilogy(xs, np.exp(icpt + slope * xs), "-", color="C1",
                        label=f"fit: slope {slope:.3f} per unit ell", gid="fit-line")
        ax.set_xlabel(r"$\ell$")
        ax.set_ylabel(r"$\|P(\lambda^\sharp)u^\sharp\|$")
        ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_scan_heatmap(scan_rows: list[dict], path) -> Path:
    """``log10`` resolvent norm over the scanned rectangle."""
    re = np.array([r["re_z"] for r in scan_rows])
    im = np.array([r["im_z"] for r in scan_rows])
    val = np.array([r["inv_sigma_min"] for r in scan_rows])
    xs, ys = np.unique(re), np.unique(im)
    Z = np.full((ys.size, xs.size), np.nan)
    Z[np.searchsorted(ys, im), np.searchsorted(xs, re)] = np.log10(val)
    with style():
        fig, ax = plt.subplots()
        mesh = ax.pcolormesh(xs, ys, Z, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=r"$\log_{10}\|P(z)^{-1}\|$")
        ax.set_xlabel("Re z")
        ax.set_ylabel("Im z")
        ax.grid(False)
        fig.tight_layout()
        return _save(fig, path)


def plot_flow_portrait(trajectories: list[list[dict]], path, r_plus: float | None = None) -> Path:
    """Trajectories in the ``(r, xi_r / <xi>)`` plane with direction arrows."""
    with style():
        fig, ax = plt.subplots()
        for i, rows in enumerate(trajectories):
            r = np.array([q["r"] for q in rows])
            xi = np.array([[q["xi_r"], q["xi_theta"], q["xi_phi"]] for q in rows], dtype=float)
            y = xi[:, 0] / np.sqrt(1.0 + np.sum(xi * xi, axis=1))
            ax.plot(r, y, "-", lw=0.7, color=f"C{i % 10}")
            if r.size > 2:
                j = r.size // 2
                ax.annotate("", xy=(r[j + 1], y[j + 1]), xytext=(r[j], y[j]),
                            arrowprops={"arrowstyle": "->", "color": f"C{i % 10}", "lw": 0.8})
        if r_plus is not None:
            ax.axvline(r_plus, color="k", ls="--", lw=0.8)
            ax.plot([r_plus, r_plus], [1.0, -1.0], "s", color="k", ms=4)
            ax.annotate(r"$L_+$", (r_plus, 1.0), xytext=(4, -10), textcoords="offset points")
            ax.annotate(r"$L_-$", (r_plus, -1.0), xytext=(4, 4), textcoords="offset points")
        ax.set_xlabel("r")
        ax.set_ylabel(r"$\xi_r/\langle\xi\rangle$")
        ax.set_ylim(-1.05, 1.05)
        fig.tight_layout()
        return _save(fig, path)
