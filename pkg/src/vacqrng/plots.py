"""Figure rendering for report artifacts (PSDs and theory curves)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_psds", "plot_curves"]


def plot_psds(path, psds: dict, log_floor: float = 1e-12) -> None:
    """Render named one-sided PSD traces (dB) to an image file.

    Only the lower half of each two-sided spectrum is shown.
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, psd in psds.items():
        half = psd.M // 2
        freq = np.arange(half) / psd.M
        ax.plot(freq, 10 * np.log10(np.maximum(psd.values[:half], log_floor)),
                label=label, lw=1.0)
    ax.set_xlabel("frequency [cycles/sample]")
    ax.set_ylabel("PSD [dB]")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_curves(path, x, curves: dict, xlabel: str, ylabel: str = "min-entropy [bits/sample]") -> None:
    """Render named curves over a common x axis to an image file."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, y in curves.items():
        ax.plot(x, y, label=str(label), lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
