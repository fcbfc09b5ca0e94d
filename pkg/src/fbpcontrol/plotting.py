"""Figures for rate studies and optimal profiles (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from fbpcontrol.norms import RateTable  # noqa: E402

PANELS = (
    ("e_gamma_W1inf", r"$|\gamma - \gamma_h|_{W^{1,\infty}}$", 0.5),
    ("e_y_W1p", r"$|y - y_h|_{W^{1,p}}$", 0.5),
    ("e_u_L2", r"$\|u - u_h\|_{L^2}$", 1.0),
)

# fixed metadata keeps the PNG bytes reproducible
_META = {"Software": None, "Creation Time": None}


def _guide(ax, dofs, errors, order):
    """Reference line ``dofs^-order`` through the first data point."""
    d = np.asarray(dofs, float)
    ax.loglog(d, errors[0] * (d / d[0]) ** (-order), "k--", lw=0.8, label=f"slope -{order:g}")


def rate_figure(table: RateTable, path, title: str = ""):
    fig, axes = plt.subplots(1, len(PANELS), figsize=(4.2 * len(PANELS), 3.6), constrained_layout=True)
    for ax, (key, label, order) in zip(axes, PANELS):
        drawn = False
        for (lam, _radius), rows in table.groups().items():
            pts = [(r["dofs"], r[key]) for r in rows if np.isfinite(r[key]) and r[key] > 0]
            if len(pts) < 2:
                continue
            d, e = map(np.array, zip(*pts))
            ax.loglog(d, e, "o-", ms=4, label=rf"$\lambda$={lam:.0e}")
            if not drawn:
                _guide(ax, d, e, order)
                drawn = True
        ax.set_xlabel("DOFs")
        ax.set_title(label)
        ax.grid(True, which="both", lw=0.3)
        ax.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def profile_figure(profiles: dict, target, path):
    """``profiles`` maps lambda to ``(x1, G, U)``; ``target`` is ``(x, gamma_d)``."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6), constrained_layout=True)
    a1.plot(*target, "k--", lw=1, label=r"$\gamma_d$")
    for lam, (x, G, U) in sorted(profiles.items(), reverse=True):
        a1.plot(x, G, label=rf"$\lambda$={lam:.0e}")
        a2.plot(x, U, label=rf"$\lambda$={lam:.0e}")
    a1.set_title(r"optimal $\gamma$")
    a2.set_title(r"optimal $u$")
    for ax in (a1, a2):
        ax.set_xlabel(r"$x_1$")
        ax.grid(True, lw=0.3)
        ax.legend(fontsize=7)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path
