"""Matplotlib figures for training curves, evaluation summaries and trajectories."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import raster_map  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "svg.hashsalt": "echonav",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_training_curves(records: list, path) -> Path:
    """Mean reward, losses and validation metrics against the update index."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
        upd = [r["update"] for r in records]
        axes[0].plot(upd, [r["mean_reward"] for r in records], color="tab:blue")
        axes[0].set_title("mean step reward")
        for key, col in (("policy_loss", "tab:red"), ("value_loss", "tab:purple"), ("entropy", "tab:gray")):
            axes[1].plot(upd, [r[key] for r in records], label=key, color=col)
        axes[1].legend(frameon=False)
        axes[1].set_title("PPO losses")
        val = [r for r in records if r.get("val_sr") is not None]
        for key in ("val_sr", "val_spl", "val_sna"):
            axes[2].plot([r["update"] for r in val], [r[key] for r in val], marker="o", label=key[4:].upper())
        axes[2].set_ylim(0, 100)
        axes[2].legend(frameon=False)
        axes[2].set_title("validation (%)")
        for ax in axes:
            ax.set_xlabel("update")
        fig.tight_layout()
        return _save(fig, path)


def plot_eval_summary(summaries: dict, path) -> Path:
    """Grouped bars of SPL/SR/SNA, one group per labelled summary."""
    labels = list(summaries)
    metrics = ("spl", "sr", "sna")
    x = np.arange(len(labels))
    width = 0.25
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(labels) + 2), 3.4))
        for k, m in enumerate(metrics):
            ax.bar(x + (k - 1) * width, [summaries[l][m] for l in labels], width, label=m.upper())
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_ylim(0, 100)
        ax.set_ylabel("%")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_trajectory(record: dict, path, grid=None) -> Path:
    img = raster_map(record, grid, cell_px=12)
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(img, interpolation="nearest")
        ax.set_axis_off()
        status = "success" if record.get("success") else "failure"
        ax.set_title(f"scene {record['scene']['seed']}  {status}  {len(record.get('actions', []))} actions")
        fig.tight_layout()
        return _save(fig, path)
