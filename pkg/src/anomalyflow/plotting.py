"""Figures rendered next to the diagnostics CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import read_series  # noqa: E402


def _positive(vs):
    v = np.asarray(vs, dtype=float)
    return np.where(v > 0, v, np.nan)


def plot_monitor(directory) -> Path | None:
    """Four-panel summary of a run: bounds, L^p integrals, balanced residual, eigenvalue."""
    directory = Path(directory)
    data_dir = directory / "plot_data"
    if not data_dir.is_dir():
        return None

    def series(name):
        path = data_dir / f"{name}.csv"
        return read_series(path) if path.exists() else ([], [])

    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
    ax = axes[0, 0]
    for name in ("B", "C0"):
        ax.plot(*series(name), marker="o", ms=3, label=name)
    ax.set_ylabel("measured bound")
    ax.legend()

    ax = axes[0, 1]
    for name, label in (
        ("int_G0_p", r"$\int G_0^p$"),
        ("int_G1_p", r"$\int G_1^p$"),
        ("int_G2_p", r"$\int G_2^p$"),
        ("int_G_p", r"$\int G^p$"),
        ("int_Gprime_p", r"$\int G'^p$"),
    ):
        t, v = series(name)
        if t and np.any(np.asarray(v) > 0):
            ax.semilogy(t, _positive(v), marker="o", ms=3, label=label)
    ax.set_ylabel("test-function integrals")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)

    ax = axes[1, 0]
    t, v = series("balanced_residual")
    if t:
        ax.semilogy(t, np.maximum(np.asarray(v), 1e-18), marker="o", ms=3)
    ax.set_ylabel(r"max $|d(\|\Omega\|\omega^2)|$")
    ax.set_xlabel("t")

    ax = axes[1, 1]
    ax.plot(*series("min_eigenvalue"), marker="o", ms=3)
    ax.set_ylabel(r"min eigenvalue of $g$")
    ax.set_xlabel("t")

    fig.tight_layout()
    out = directory / "monitor.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_identities(entries, path) -> Path:
    """Bar chart of identity residuals against their tolerances (log scale)."""
    path = Path(path)
    names = [e.name for e in entries]
    res = np.array([e.residual for e in entries], dtype=float)
    tol = np.array([e.tolerance for e in entries], dtype=float)
    shown = np.where(np.isfinite(res), np.maximum(res, 1e-17), np.nan)
    fig, ax = plt.subplots(figsize=(max(5, 1.1 * len(names)), 3.8))
    x = np.arange(len(names))
    colors = ["tab:green" if e.status == "PASS" else "tab:gray" if e.status == "NOT_APPLICABLE" else "tab:red" for e in entries]
    ax.bar(x, shown, color=colors)
    ax.scatter(x, tol, marker="_", s=400, color="k", label="tolerance")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("residual")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
