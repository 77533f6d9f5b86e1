"""Report figures (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.4, 4.0),
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path, stamp: str | None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if stamp:
        fig.text(0.99, 0.01, stamp, ha="right", va="bottom", fontsize=6, color="0.5")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Description": stamp or ""})
    plt.close(fig)
    return path


def plot_states(states: dict, path, stamp: str | None = None, title: str = "") -> Path:
    """|psi|^2 of several normalised states on one axis."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, st in states.items():
            v = st.values
            dens = np.abs(v) ** 2 / (np.sum(np.abs(v) ** 2) * st.dx)
            ax.plot(st.x, dens, label=label, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel(r"$|\psi_t(x)|^2$")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path, stamp)


def plot_series(times, series: dict, path, ylabel: str, logy: bool = False, stamp: str | None = None,
                max_lines: int = 20) -> Path:
    """One line per trajectory (first ``max_lines``) plus the ensemble mean."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, arr in series.items():
            a = np.atleast_2d(arr)
            for row in a[:max_lines]:
                ax.plot(times, np.abs(row) if logy else row, lw=0.6, alpha=0.4)
            if a.shape[0] > 1:
                m = np.median(np.abs(a), axis=0) if logy else a.mean(axis=0)
                ax.plot(times, m, "k", lw=1.6, label=f"{label} ({'median' if logy else 'mean'})")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        return _save(fig, path, stamp)


def plot_histogram(values, path, xlabel: str, stamp: str | None = None, bins: int = 40) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(values, dtype=float), bins=bins, color="C0", alpha=0.8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        return _save(fig, path, stamp)


def plot_projector_norms(n, log_norms, path, stamp: str | None = None) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        n = np.asarray(n)
        ax.plot(n, log_norms, "o-", ms=3)
        ax.set_xlabel("n")
        ax.set_ylabel(r"$\ln\|P_n\|$")
        return _save(fig, path, stamp)
