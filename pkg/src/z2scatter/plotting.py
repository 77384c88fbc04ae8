"""Static figures for the command-line reports (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f")
STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "z2scatter",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else {"Date": None})
    plt.close(fig)
    return path


def density_plot(path, chi, err=None, exact=None, title: str = "") -> Path:
    """Bar chart of chi_n with optional error bars and exact markers."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        n = np.arange(len(chi))
        ax.bar(n, chi, color=COLORS[0], alpha=0.7, yerr=err, capsize=2, label="sampled")
        if exact is not None:
            ax.plot(n, exact, "o", color=COLORS[1], ms=4, label="exact")
            ax.legend()
        ax.set_xlabel("site n")
        ax.set_ylabel(r"$\chi_n$")
        ax.set_ylim(0, 1)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def density_heatmap(path, times, chi_rows, title: str = "") -> Path:
    """chi_n(t) as an image, time running upward."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        data = np.asarray(chi_rows)
        im = ax.imshow(data, origin="lower", aspect="auto", cmap="viridis", vmin=0, vmax=1,
                       extent=(-0.5, data.shape[1] - 0.5, times[0] - 0.5, times[-1] + 0.5)
                       if len(times) > 1 else None)
        fig.colorbar(im, ax=ax, label=r"$\chi_n$")
        ax.set_xlabel("site n")
        ax.set_ylabel("t")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def series_plot(path, curves: dict, ylabel: str, title: str = "", ylim=None) -> Path:
    """Several (t, y, err) curves on one axis; ``err`` may be None."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for i, (label, (t, y, e)) in enumerate(curves.items()):
            c = COLORS[i % len(COLORS)]
            if e is None:
                ax.plot(t, y, "-", color=c, label=label)
            else:
                ax.errorbar(t, y, yerr=e, fmt="o", color=c, ms=3, capsize=2, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if ylim is not None:
            ax.set_ylim(*ylim)
        ax.legend()
        if title:
            ax.set_title(title)
        return _save(fig, path)


def fidelity_plot(path, momenta, fidelities: dict) -> Path:
    """F_k against k, one marker series per order."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for i, (label, f) in enumerate(fidelities.items()):
            ax.plot(momenta, f, "o-", color=COLORS[i % len(COLORS)], ms=4, label=label)
        ax.set_xlabel(r"$k$")
        ax.set_ylabel(r"$F_k$")
        ax.legend()
        return _save(fig, path)
