"""Figure rendering for pipeline artifacts.

Plots are a convenience layer over the CSV outputs (which remain the
machine-readable source of truth); everything renders through the Agg
backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataset import Dataset
from .kinematics import ChainGeometry, JointRatios
from .models import FitReport

_DPI = 150


def validation_figure(path, ds: Dataset, predictions: dict):
    """Measured outputs against each model's free-run simulation.

    predictions maps a label to an (m, q) array aligned with ds.outputs.
    """
    t = ds.outputs.time
    Y = ds.outputs.values
    q = Y.shape[1]
    fig, axes = plt.subplots(q, 1, sharex=True, figsize=(8, 2.4 * q),
                             squeeze=False)
    for i in range(q):
        ax = axes[i, 0]
        ax.plot(t, Y[:, i], "k-", lw=1.2, label="measured")
        for label, Yhat in predictions.items():
            ax.plot(t, np.asarray(Yhat)[:, i], lw=0.9, label=label)
        ax.set_ylabel(f"y{i + 1} [rad]")
        ax.grid(alpha=0.3)
    axes[0, 0].legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def tracking_figure(path, log):
    """Reference vs measured joints plus the applied tendon forces."""
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
    for i in range(2):
        axes[i].plot(log.time_s, log.reference[:, i], "k--", lw=1.0,
                     label="reference")
        axes[i].plot(log.time_s, log.measured[:, i], lw=1.1,
                     label="measured")
        axes[i].set_ylabel(f"q{i + 1} [rad]")
        axes[i].grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    for j in range(log.forces.shape[1]):
        axes[2].plot(log.time_s, log.forces[:, j], lw=0.9,
                     label=f"f{j + 1}")
    axes[2].set_ylabel("force [N]")
    axes[2].set_xlabel("time [s]")
    axes[2].grid(alpha=0.3)
    axes[2].legend(loc="upper right", fontsize=8, ncol=4)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def end_effector_figure(path, P_ref: np.ndarray, P_sim: np.ndarray):
    """Planar view of two end-effector paths (reference and achieved)."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.plot(P_ref[:, 0], P_ref[:, 1], "k--", lw=1.0, label="reference")
    ax.plot(P_sim[:, 0], P_sim[:, 1], lw=1.1, label="achieved")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def comparison_figure(path, fits: dict):
    """Per-channel and mean fit bars for each identification method."""
    labels = list(fits.keys())
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / 3
    xs = np.arange(len(labels))
    for j, (name, pick) in enumerate(
            (("y1", lambda r: r.per_channel_fit[0]),
             ("y2", lambda r: r.per_channel_fit[1]),
             ("mean", lambda r: r.mean_fit))):
        vals = [pick(fits[lb]) if isinstance(fits[lb], FitReport) else np.nan
                for lb in labels]
        ax.bar(xs + (j - 1) * width, vals, width, label=name)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.set_ylabel("fit [%]")
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
