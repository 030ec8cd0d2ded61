"""Figures written next to the delimited reports.

Everything renders off-screen with the Agg backend; each function takes the
data already written to CSV/JSON and an output path.  PNG metadata is
stripped so identical data give identical files.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
STYLE = {
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.dpi": 150,
    "svg.hashsalt": "selfsim",
}


def _figure(width: float = 4.0):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    return fig, ax


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def spectrum_figure(report: dict, path) -> None:
    """Eigenvalues in the complex plane; persistent ones filled."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ev = report["eigenvalues"]
        re = np.array([e["re"] for e in ev])
        im = np.array([e["im"] for e in ev])
        pers = np.array([bool(e.get("persistent")) for e in ev])
        ax.plot(re[~pers], im[~pers], "o", mfc="none", color="0.5", label="grid-dependent")
        ax.plot(re[pers], im[pers], "o", color="C0", label="persistent")
        ax.axvline(0.0, color="k", lw=0.5)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        ax.set_title(f"n={report['n']}  alpha={report['alpha']}  beta={report['beta']}  "
                     f"nu={report['nu']}")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def continuation_figure(nu, lam, lam0: complex, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        nu = np.asarray(nu)
        lam = np.asarray(lam)
        ax.plot(nu, lam.real, "o-", color="C0", label=r"Re $\lambda_\nu$")
        ax.axhline(0.5 * lam0.real, color="C3", ls="--", label=r"Re $\lambda_0$/2")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel(r"$\nu$")
        ax.set_ylabel(r"Re $\lambda$")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def separation_figure(curve: np.ndarray, slope: float, predicted: float, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        t, ln = curve[:, 0], curve[:, 1]
        ax.plot(np.log10(t), ln / math.log(10), "o", color="C0", label="measured")
        k = len(t) // 2
        ref = ln[k] / math.log(10) + predicted * (np.log10(t) - np.log10(t[k]))
        ax.plot(np.log10(t), ref, "-", color="C3", label=f"slope {predicted:.4g}")
        ax.set_xlabel(r"$\log_{10} t$")
        ax.set_ylabel(r"$\log_{10}\|\theta_1-\theta_2\|_{L^2}$")
        ax.set_title(f"fitted slope {slope:.6g}")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def residual_figure(rows: list, path) -> None:
    """rows: (branch, tau, m, relative residual)."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for eps, marker in ((1.0, "o"), (-1.0, "x")):
            sel = [(tau, m, r) for e, tau, m, r in rows if e == eps and r > 0]
            if sel:
                tau, m, r = map(np.array, zip(*sel))
                ax.semilogy(m + 0.1 * eps, r, marker, ls="none",
                            label=f"branch {'+' if eps > 0 else '-'}")
        ax.set_xlabel("harmonic m")
        ax.set_ylabel("relative residual")
        ax.legend(loc="best", frameon=False)
        _save(fig, path)


def search_figure(history: list, path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        vals = np.array([v for _, v in history], dtype=float)
        vals = vals[np.isfinite(vals)]
        ax.plot(np.sort(vals)[::-1], "o-", color="C0")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel("candidate rank")
        ax.set_ylabel(r"Re $\lambda_{\max}$ of $L_0$")
        _save(fig, path)


def regimes_figure(sweep: np.ndarray, names: list, path) -> None:
    """sweep columns: alpha, beta, flag_1, ..., flag_k."""
    with plt.rc_context(STYLE):
        k = len(names)
        fig, axes = plt.subplots(1, k, figsize=(1.6 * k, 1.8), sharey=True)
        for j, ax in enumerate(np.atleast_1d(axes)):
            ax.scatter(sweep[:, 0], sweep[:, 1], c=sweep[:, 2 + j], s=4, cmap="viridis",
                       vmin=0, vmax=1)
            ax.set_title(names[j], fontsize=6)
            ax.set_xlabel(r"$\alpha$")
        np.atleast_1d(axes)[0].set_ylabel(r"$\beta$")
        _save(fig, path)
