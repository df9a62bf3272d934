"""Figure rendering for the command line report paths.

Every report command drops a PNG next to its delimited table. All
rendering is headless (Agg backend).
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ContractError
from .faults import SweepRow
from .network import EpochStats


def _grouped(rows: list[SweepRow]) -> tuple[list[float], np.ndarray, np.ndarray]:
    acc = defaultdict(list)
    for row in rows:
        acc[row.ber].append(row.accuracy)
    bers = sorted(acc)
    means = np.array([np.mean(acc[b]) for b in bers])
    stds = np.array([np.std(acc[b]) for b in bers])
    return bers, means, stds


def save_ber_plot(sweeps: list[tuple[str, list[SweepRow]]], path) -> None:
    """Mean accuracy over bit error rate with one curve per sweep."""
    if not sweeps:
        raise ContractError("need at least one sweep to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    linthresh = None
    for label, rows in sweeps:
        bers, means, stds = _grouped(rows)
        positive = [b for b in bers if b > 0]
        if positive:
            smallest = min(positive)
            linthresh = smallest if linthresh is None else min(linthresh, smallest)
        ax.errorbar(bers, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xscale("symlog", linthresh=linthresh or 1e-3)
    ax.set_xlabel("bit error rate")
    ax.set_ylabel("mean accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_plot(log: list[EpochStats], path) -> None:
    """Loss, accuracy, and mean logit margin over epochs."""
    if not log:
        raise ContractError("empty training log")
    epochs = [r.epoch for r in log]
    fig, axes = plt.subplots(3, 1, figsize=(6.0, 7.5), sharex=True)
    axes[0].plot(epochs, [r.loss for r in log])
    axes[0].set_ylabel("loss")
    axes[1].plot(epochs, [r.accuracy for r in log])
    axes[1].set_ylabel("accuracy")
    axes[2].plot(epochs, [r.mlm for r in log])
    axes[2].set_ylabel("mean logit margin")
    axes[2].set_xlabel("epoch")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_margin_hist(margins, path) -> None:
    """Histogram of per-sample top-2 margins."""
    margins = np.asarray(margins, dtype=np.float64)
    if margins.size == 0:
        raise ContractError("no margins to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(margins, bins=min(60, max(10, margins.size // 20)))
    ax.set_xlabel("top-2 logit margin")
    ax.set_ylabel("samples")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
