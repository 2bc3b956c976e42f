"""Figure rendering for the batch pipelines.

Every figure is written to a file next to the CSV carrying the same
data; nothing interactive.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reliability import ReliabilityCurve


def save_pf_curves(curves: dict[str, ReliabilityCurve], path, title=""):
    """Overlayed first-passage probability curves vs threshold."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for i, (name, c) in enumerate(curves.items()):
        style = "-" if i == 0 else "--"
        ax.semilogy(c.thresholds, np.clip(c.pf, 1e-12, None), style, label=name)
        if i == 0:
            ax.fill_between(
                c.thresholds,
                np.clip(c.ci_low, 1e-12, None),
                np.clip(c.ci_high, 1e-12, None),
                alpha=0.15,
            )
    ax.set_xlabel("threshold")
    ax.set_ylabel("first-passage probability")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_histograms(samples: dict[str, np.ndarray], path, title="", bins=60):
    """Histograms of per-trace maximum responses."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for name, m in samples.items():
        ax.hist(m, bins=bins, density=True, histtype="step", label=name)
    ax.set_xlabel("max response")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trace_overlays(times, reference, predicted, path, title="", n_traces=4):
    """A few reference vs surrogate trajectories."""
    n = min(n_traces, reference.shape[0])
    fig, axes = plt.subplots(n, 1, figsize=(7, 1.9 * n), sharex=True)
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.plot(times, reference[i], "-", lw=1.0, label="reference")
        ax.plot(times, predicted[i], "--", lw=1.0, label="surrogate")
        if i == 0:
            ax.legend(loc="upper right", fontsize=8)
            if title:
                ax.set_title(title)
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
