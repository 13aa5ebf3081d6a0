"""Matplotlib figures for the CLI report path (rendered to files, Agg only)."""

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_surface(table, path, title="Fermi surface"):
    pts = table.points()
    closed = np.vstack([pts, pts[:1]])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(closed[:, 0], closed[:, 1], "-", lw=1.2, color="tab:blue")
    half = np.pi / 2
    box = np.array([[-half, -half], [half, -half], [half, half], [-half, half], [-half, -half]])
    ax.plot(box[:, 0], box[:, 1], "--", lw=0.8, color="gray", label="half cell")
    ax.plot([table.center[0]], [table.center[1]], "+", color="black", ms=8)
    ax.set_aspect("equal")
    ax.set_xlabel("p1")
    ax.set_ylabel("p2")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_trace(trace, path):
    ns = [r.n for r in trace.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label in (("f0", "|f_n|_0"), ("f1", "|f_n|_1"), ("f3r", "|f_n|_3r")):
        vals = trace.norm_track(key)
        mask = vals > 0
        if mask.any():
            ax.semilogy(np.array(ns)[mask], vals[mask], "o-", ms=3, label=label)
    resid = trace.norm_track("residual")
    mask = resid > 0
    if mask.any():
        ax.semilogy(np.array(ns)[mask], resid[mask], "s--", ms=3, label="residual")
    ax.set_xlabel("iteration n")
    ax.set_ylabel("norm")
    ax.set_title(f"counterterm iteration (lambda = {trace.lam:g})")
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_ledger(ledger, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    js = np.array(ledger.scales, dtype=float)
    for vals, label in ((ledger.norm0, "|K_j|_0"), (ledger.norm1, "|K_j|_1"), (ledger.norm2, "|K_j|_2")):
        v = np.array(vals)
        mask = v > 0
        if mask.any():
            ax.semilogy(js[mask], v[mask], "o-", ms=3, label=label)
    ax.set_xlabel("scale j")
    ax.set_ylabel("norm")
    ax.set_title(f"scale ledger, fitted decay {ledger.gamma_fit:.3f} (base M = {ledger.M:g})")
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_volume(eps3, values, errors, path, slope=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(eps3, values, yerr=errors, fmt="o-", ms=4, capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps3")
    ax.set_ylabel("overlap volume")
    title = "shell overlap volume"
    if slope is not None:
        title += f" (fitted exponent {slope:.3f})"
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
