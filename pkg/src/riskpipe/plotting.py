"""Report figures rendered next to the result documents (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from riskpipe import metrics  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def importance_bars(importances: dict[str, float], path, top=20):
    items = sorted(importances.items(), key=lambda kv: -kv[1])[:top]
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(items) + 1.2))
    names = [k for k, _ in items][::-1]
    ax.barh(names, [v for _, v in items][::-1], color="tab:blue")
    ax.set_xlabel("importance")
    ax.set_title("Feature importances")
    return _save(fig, path)


def confusion_plot(y_true, y_pred, labels, path, title="Confusion matrix"):
    cm, classes = metrics.confusion_matrix(y_true, y_pred)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.imshow(cm, cmap="Blues")
    ticks = np.arange(classes.size)
    names = [labels(c) for c in classes]
    ax.set_xticks(ticks, names, rotation=45, ha="right")
    ax.set_yticks(ticks, names)
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    return _save(fig, path)


def predicted_vs_true(y_true, y_pred, path, title="Predicted vs true"):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(y_true, y_pred, s=12, alpha=0.7)
    lo = float(min(np.min(y_true), np.min(y_pred)))
    hi = float(max(np.max(y_true), np.max(y_pred)))
    ax.plot([lo, hi], [lo, hi], color="grey", lw=1)
    ax.set_xlabel("true")
    ax.set_ylabel("predicted")
    ax.set_title(title)
    return _save(fig, path)


def cluster_scatter(X, assigned, path, title="Clusters (first two principal components)"):
    X = np.asarray(X, dtype=float)
    centred = X - X.mean(axis=0)
    if X.shape[1] >= 2:
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        Z = centred @ vt[:2].T
    else:
        Z = np.column_stack([centred[:, 0], np.zeros(X.shape[0])])
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(Z[:, 0], Z[:, 1], c=assigned, cmap="tab10", s=12)
    ax.legend(*sc.legend_elements(), title="cluster", fontsize="small", loc="best")
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_title(title)
    return _save(fig, path)


def render_figures(result, stem: str, directory) -> list[Path]:
    """Draw whatever the run produced; returns the written file paths."""
    d = result.details
    out = []
    directory = Path(directory)
    tag = "training" if result.phase == "training" else "predict"
    schema = d.get("label_schema")

    def label(c):
        if schema is not None and schema.kind == "categorical":
            return schema.categories[int(c)]
        return f"{c:g}"

    if d.get("importances"):
        out.append(importance_bars(d["importances"], directory / f"{stem}_{tag}_importances.png"))
    if d.get("task") == "clustering" and "X" in d and d["X"].shape[0] > 0:
        out.append(cluster_scatter(d["X"], d["assigned"], directory / f"{stem}_{tag}_clusters.png"))
    for key, suffix in (("y", "train"), ("y_test", "test")):
        truth, pred = d.get(f"{key}_true"), d.get(f"{key}_pred")
        if truth is None:
            continue
        keep = ~np.isnan(truth)
        if not keep.any():
            continue
        if d["task"] == "classification":
            out.append(confusion_plot(truth[keep], pred[keep], label,
                                      directory / f"{stem}_{tag}_confusion_{suffix}.png"))
        else:
            out.append(predicted_vs_true(truth[keep], pred[keep],
                                         directory / f"{stem}_{tag}_scatter_{suffix}.png"))
    return out
