"""Figure rendering for run reports. Everything draws through the Agg
backend straight to files — no display server needed."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tensor import ContractError  # noqa: E402

_DPI = 120


def training_curves(report, path):
    """Objective-vs-epoch line per module from a TrainReport."""
    if not report.trajectories:
        raise ContractError("report has no trajectories")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    names = report.config.get("objectives")
    for k, traj in enumerate(report.trajectories):
        label = f"module {k}" if names is None else f"module {k} ({names[k]})"
        ax.plot(range(len(traj)), traj, marker="o", markersize=3, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective")
    ax.set_title(f"{report.architecture} [{report.mode}] "
                 f"test acc {report.test_accuracy:.3f}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def info_plane_figure(points, path, title=None):
    """The layer trajectory in the (I(T;X), I(T;Y)) plane, layers joined
    in forward order."""
    if not points:
        raise ContractError("no info-plane points to draw")
    tx = [p.i_tx_bits for p in points]
    ty = [p.i_ty_bits for p in points]
    fig, ax = plt.subplots(figsize=(5.0, 4.5))
    ax.plot(tx, ty, "-", color="0.6", zorder=1)
    ax.scatter(tx, ty, c=range(len(points)), cmap="viridis", zorder=2)
    for p in points:
        ax.annotate(f"L{p.layer_index}", (p.i_tx_bits, p.i_ty_bits),
                    textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("I(T; X) bits")
    ax.set_ylabel("I(T; Y) bits")
    ax.set_title(title or "information plane")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def embedding_figure(layers: dict, path, max_layers: int = 4):
    """Per-layer 2-D PCA scatter colored by class, from a parsed embedding
    export (see probe.read_embeddings)."""
    if not layers:
        raise ContractError("no embedding layers to draw")
    keys = sorted(layers)[-max_layers:]
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3.2),
                             squeeze=False)
    for ax, k in zip(axes[0], keys):
        rec = layers[k]
        pca = np.asarray(rec["pca"])
        ax.scatter(pca[:, 0], pca[:, 1], c=rec["labels"], cmap="tab10",
                   s=8, alpha=0.8)
        ax.set_title(f"layer {k}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
