"""Report rendering: JSON, aligned text table, delimited per-sample
predictions, and matplotlib figures written next to them."""

from __future__ import annotations

import csv
import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport


def write_predictions_csv(path, sample_ids, labels, preds):
    """Delimited output: one row per sample, observed and predicted per task."""
    preds = np.asarray(preds)
    n_tasks = preds.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["sample_id"]
        for t in range(n_tasks):
            header += [f"observed_{t}", f"predicted_{t}"]
        writer.writerow(header)
        for k, sample_id in enumerate(sample_ids):
            row = [sample_id]
            for t in range(n_tasks):
                obs = labels[k][t]
                row += ["" if obs is None else repr(float(obs)),
                        repr(float(preds[k, t]))]
            writer.writerow(row)


def _scatter_figure(y, y_hat, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(y, y_hat, s=14, alpha=0.7, edgecolors="none")
    lo = min(min(y), min(y_hat))
    hi = max(max(y), max(y_hat))
    ax.plot([lo, hi], [lo, hi], "k--", linewidth=0.8)
    ax.set_xlabel("observed")
    ax.set_ylabel("predicted")
    ax.set_title("Predicted vs observed")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _roc_figure(labels, scores, path):
    order = np.argsort(-np.asarray(scores))
    y = np.asarray(labels)[order]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y == 0)
    tpr = tps / max(tps[-1], 1)
    fpr = fps / max(fps[-1], 1)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(np.concatenate([[0], fpr]), np.concatenate([[0], tpr]))
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _residual_figure(y, y_hat, path):
    resid = np.asarray(y) - np.asarray(y_hat)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(resid, bins=min(30, max(5, len(resid) // 4)))
    ax.set_xlabel("observed - predicted")
    ax.set_ylabel("count")
    ax.set_title("Residuals")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(report: EvalReport, outdir, sample_ids=None, labels=None,
                 preds=None, task_kind="regression"):
    """Write report.json / report.txt, per-sample predictions.csv, and
    figures for whichever task kind applies. Returns the file list."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        fh.write(report.to_json())
    written.append(path)

    path = os.path.join(outdir, "report.txt")
    with open(path, "w") as fh:
        fh.write(report.to_table())
    written.append(path)

    if sample_ids is not None and preds is not None:
        path = os.path.join(outdir, "predictions.csv")
        write_predictions_csv(path, sample_ids, labels, preds)
        written.append(path)

        preds = np.asarray(preds)
        if task_kind == "regression":
            pairs = [(labels[k][0], preds[k, 0]) for k in range(len(sample_ids))
                     if labels[k][0] is not None]
            if len(pairs) >= 2:
                y = [p[0] for p in pairs]
                y_hat = [p[1] for p in pairs]
                for name, fn in (("scatter.png", _scatter_figure),
                                 ("residuals.png", _residual_figure)):
                    path = os.path.join(outdir, name)
                    fn(y, y_hat, path)
                    written.append(path)
        else:
            pairs = [(labels[k][0], preds[k, 0]) for k in range(len(sample_ids))
                     if labels[k][0] is not None
                     and not (isinstance(labels[k][0], float)
                              and math.isnan(labels[k][0]))]
            ys = {p[0] for p in pairs}
            if len(ys) == 2:
                path = os.path.join(outdir, "roc.png")
                _roc_figure([p[0] for p in pairs], [p[1] for p in pairs], path)
                written.append(path)
    return written
