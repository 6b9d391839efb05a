"""SVG figures for estimates, characterization curves and rate studies.

Figures are drawn with the Agg backend and saved as SVG with a fixed hash
salt and no timestamp, so identical data give identical bytes.
"""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .formats import write_atomic  # noqa: E402

__all__ = ["STYLES", "plot_estimates", "plot_characterization", "plot_rates", "save_svg"]

STYLES = {
    "true": dict(color="red", linestyle=":", label="True"),
    "mle": dict(color="blue", linestyle="-", label="MLE"),
    "lse": dict(color="black", linestyle="-.", label="LSE"),
}

_RC = {
    "svg.hashsalt": "concavedeconv",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
}


def save_svg(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    write_atomic(path, buf.getvalue())


def plot_estimates(path, curves, title=""):
    """Distribution function curves; ``curves`` maps ``true``/``mle``/``lse`` to ``(x, F)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for key in ("true", "mle", "lse"):
            if key in curves:
                x, y = curves[key]
                ax.plot(x, y, **STYLES[key])
        ax.set_xlabel("x")
        ax.set_ylabel("F(x)")
        ax.set_ylim(0.0, 1.05)
        ax.set_title(title)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        save_svg(fig, path)


def plot_characterization(path, mle_curve, lse_curve, mle_kinks=None, lse_kinks=None, title=""):
    """Two panels: MLE slack against its bound 1, LSE ``H_n - Y_n`` against 0."""
    with plt.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.5))
        x, y = mle_curve
        left.plot(x, y, **STYLES["mle"])
        left.axhline(1.0, color="grey", linewidth=0.8)
        if mle_kinks is not None and len(mle_kinks[0]):
            left.plot(*mle_kinks, "o", color="blue", markersize=4)
        left.set_xlabel(r"$\theta$")
        left.set_ylabel("slack")
        x, y = lse_curve
        right.plot(x, y, **STYLES["lse"])
        right.axhline(0.0, color="grey", linewidth=0.8)
        if lse_kinks is not None and len(lse_kinks[0]):
            right.plot(*lse_kinks, "o", color="black", markersize=4)
        right.set_xlabel(r"$\theta$")
        right.set_ylabel(r"$H_n - Y_n$")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        save_svg(fig, path)


def plot_rates(path, n, value_err, deriv_err, value_slope, deriv_slope):
    """Log-log plot of median errors with the fitted lines."""
    n = np.asarray(n, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for err, slope, marker, label in (
            (value_err, value_slope, "o", "value"),
            (deriv_err, deriv_slope, "s", "derivative"),
        ):
            err = np.asarray(err, dtype=float)
            icpt = np.mean(np.log(err) - slope * np.log(n))
            ax.loglog(n, err, marker, color="black", label=f"{label} (slope {slope:.3f})")
            ax.loglog(n, np.exp(icpt + slope * np.log(n)), "-", color="grey", linewidth=0.8)
        ax.set_xlabel("n")
        ax.set_ylabel("median absolute error")
        ax.legend(frameon=False)
        fig.tight_layout()
        save_svg(fig, path)
