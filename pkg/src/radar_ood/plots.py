"""Report figures written next to the text/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .radar_sim import SceneLabel  # noqa: E402

# no timestamps or version strings, so reruns give identical bytes
_PNG_META = {"Software": None}

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def roc_points(id_scores, ood_scores) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) for OOD-positive thresholds swept from high to low."""
    s = np.concatenate([id_scores, ood_scores])
    y = np.concatenate([np.zeros(len(id_scores)), np.ones(len(ood_scores))])
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = ends + 1 - tp
    return np.r_[0.0, fp / len(id_scores)], np.r_[0.0, tp / len(ood_scores)]


def _save(fig, path) -> None:
    fig.savefig(Path(path), metadata=_PNG_META)
    plt.close(fig)


def roc_figure(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path, aurocs: Mapping[str, float] | None = None) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        for name, (id_s, ood_s) in curves.items():
            fpr, tpr = roc_points(np.asarray(id_s), np.asarray(ood_s))
            label = name if aurocs is None else f"{name} ({100 * aurocs[name]:.2f}%)"
            ax.plot(fpr, tpr, lw=1.4, label=label)
        ax.plot([0, 1], [0, 1], "k:", lw=0.8)
        ax.set_xlabel("false positive rate (ID flagged OOD)")
        ax.set_ylabel("true positive rate (OOD flagged OOD)")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.legend(loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def score_distribution_figure(panels: Mapping[str, tuple[np.ndarray, np.ndarray]], path, thresholds: Mapping[str, float] | None = None) -> None:
    thresholds = thresholds or {}
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.0), squeeze=False)
        for ax, (name, (id_s, ood_s)) in zip(axes[0], panels.items()):
            bins = np.histogram_bin_edges(np.concatenate([id_s, ood_s]), bins=40)
            ax.hist(id_s, bins=bins, alpha=0.6, density=True, label="ID")
            ax.hist(ood_s, bins=bins, alpha=0.6, density=True, label="OOD")
            if name in thresholds:
                ax.axvline(thresholds[name], color="k", ls="--", lw=1, label="tau")
            ax.set_title(name)
            ax.set_xlabel("score")
            ax.legend()
        fig.tight_layout()
        _save(fig, path)


def sample_rdis_figure(rdis: Sequence, path, per_label: int = 3) -> None:
    by_label: dict[int, list] = {}
    for r in rdis:
        bucket = by_label.setdefault(int(r.label), [])
        if len(bucket) < per_label:
            bucket.append(r)
    labels = sorted(by_label)
    if not labels:
        return
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, axes = plt.subplots(len(labels), per_label, figsize=(2.0 * per_label, 2.0 * len(labels)), squeeze=False)
        for row, lab in zip(axes, labels):
            for ax, r in zip(row, by_label[lab] + [None] * per_label):
                ax.set_xticks([])
                ax.set_yticks([])
                if r is None:
                    ax.axis("off")
                    continue
                ax.imshow(r.pixels, vmin=0, vmax=1, cmap="viridis", aspect="auto", interpolation="nearest")
                ax.set_title(f"{SceneLabel(lab).name} #{r.frame_id}", fontsize=7)
        fig.tight_layout()
        _save(fig, path)
