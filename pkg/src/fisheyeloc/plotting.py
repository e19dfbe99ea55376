"""Report figures rendered straight to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Polygon  # noqa: E402

# fixed metadata keeps repeated runs byte-identical
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_pr_curves(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path: str | Path) -> Path:
    """Raw precision/recall along the ranking, one line per label."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (recall, precision) in curves.items():
        ax.plot(np.r_[0.0, recall], np.r_[1.0, precision], drawstyle="steps-post", label=label)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.grid(alpha=0.3)
    if curves:
        ax.legend(loc="lower left")
    return _save(fig, path)


def plot_bucket_bars(
    values: Mapping[str, float | None], path: str | Path, ylabel: str, title: str | None = None
) -> Path:
    """One bar per distance bucket (or strategy); undefined values are left blank."""
    labels = list(values)
    heights = [np.nan if values[k] is None else values[k] for k in labels]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(range(len(labels)), np.nan_to_num(heights), color="#4878a8")
    for bar, h in zip(bars, heights):
        if np.isfinite(h):
            ax.annotate(f"{h:.3g}", (bar.get_x() + bar.get_width() / 2, h), ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(labels)), labels)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def plot_scene(scene, annotations: Sequence, path: str | Path, estimates: Mapping[str, Sequence] | None = None) -> Path:
    """Image-plane boxes beside the floor plan with true and estimated positions."""
    model = scene.model
    fig, (img, floor) = plt.subplots(1, 2, figsize=(10, 5))

    radius = model.f * model.r_max
    img.add_patch(Circle((model.u0, model.v0), radius, fill=False, color="0.6"))
    for ann in annotations:
        if ann.box is None:
            continue
        img.add_patch(Polygon(ann.box.to_rotated(model.principal).corners(), fill=False, color="#c44e52"))
        img.plot(ann.anchor.u, ann.anchor.v, "k.", ms=3)
    img.plot(model.u0, model.v0, "b+")
    img.set_xlim(model.u0 - radius, model.u0 + radius)
    img.set_ylim(model.v0 + radius, model.v0 - radius)
    img.set_aspect("equal")
    img.set_title("image plane")

    truth = np.array([a.world for a in annotations]).reshape(-1, 2)
    floor.plot(truth[:, 0], truth[:, 1], "ko", mfc="none", label="ground truth")
    for (label, pts), marker in zip((estimates or {}).items(), "x+^v"):
        pts = np.array(pts, dtype=float).reshape(-1, 2)
        floor.plot(pts[:, 0], pts[:, 1], marker, label=label)
    floor.plot(0, 0, "b+")
    floor.set_aspect("equal")
    floor.invert_yaxis()
    floor.set_xlabel("X [m]")
    floor.set_ylabel("Y [m]")
    floor.set_title(f"floor, Z = {model.Z:g} m")
    floor.legend(loc="upper right", fontsize=8)
    floor.grid(alpha=0.3)
    return _save(fig, path)
