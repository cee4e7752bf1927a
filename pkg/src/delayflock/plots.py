"""Figure rendering for run artifacts.  Writes files, never shows."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_diagnostics_figure(times, d_x, d_v, lyap, path):
    """Two panels: diameters over time, and velocity diameter with the
    dissipation functional on a log scale."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax1.plot(times, d_x, label="d_X", color="tab:blue")
    ax1.plot(times, d_v, label="d_V", color="tab:orange")
    ax1.set_xlabel("t")
    ax1.set_ylabel("diameter")
    ax1.legend(frameon=False)

    pos = d_v > 0
    if np.any(pos):
        ax2.semilogy(np.asarray(times)[pos], np.asarray(d_v)[pos],
                     label="d_V", color="tab:orange")
    if lyap is not None:
        lyap = np.asarray(lyap, dtype=float)
        ok = np.isfinite(lyap) & (lyap > 0)
        if np.any(ok):
            ax2.semilogy(np.asarray(times)[ok], lyap[ok],
                         label="lyapunov", color="tab:green")
    ax2.set_xlabel("t")
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_convergence_figure(rows, path):
    """Cauchy distances of the particle-count refinement, log-log."""
    ns = [row.n for row in rows]
    w1 = [max(row.w1, 1e-300) for row in rows]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(ns, w1, "o-", color="tab:blue")
    ax.set_xlabel("N")
    ax.set_ylabel("W1(f^N_T, f^{2N}_T)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_stability_figure(times, w1, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(times, w1, color="tab:blue")
    ax.set_xlabel("t")
    ax.set_ylabel("W1 between runs")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_halanay_figure(t, u, gamma, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.semilogy(t, np.maximum(u, 1e-300), label="oracle u(t)", color="tab:blue")
    ax.semilogy(t, np.exp(-gamma * t), "--", label="exp(-gamma t)",
                color="tab:red")
    ax.set_xlabel("t")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
