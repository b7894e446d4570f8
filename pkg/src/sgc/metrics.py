"""Evaluation statistics: regression enrichment factor, correlation and
error metrics, and ROC-AUC.

All computations are float64 regardless of model precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

DEFAULT_CHI = 0.05


def _as_1d(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size != y_hat.size:
        raise NumericError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise NumericError("empty input")
    return y, y_hat


def ef_chi_regression(y, y_hat, chi=DEFAULT_CHI):
    """Mean observed-label z-score of the top chi fraction of predictions.

    Samples are ranked by prediction, descending; ties break toward the
    lower input index. z-scores use the population standard deviation of
    all observed values. chi = 1 returns exactly 0.
    """
    y, y_hat = _as_1d(y, y_hat)
    n = y.size
    if n < 2:
        raise NumericError("need at least 2 samples")
    if not 0.0 < chi <= 1.0:
        raise NumericError(f"chi must be in (0, 1], got {chi}")
    sigma = y.std()  # population
    if sigma == 0.0:
        raise NumericError("degenerate label distribution")
    k = max(1, int(math.floor(chi * n + 0.5)))
    order = np.argsort(-y_hat, kind="stable")
    top = order[:k]
    z = (y[top] - y.mean()) / sigma
    if k == n:
        return 0.0
    return float(z.mean())


def _require_variance(a, name):
    if np.std(a) == 0.0:
        raise NumericError(f"zero variance in {name}")


def pearson(y, y_hat):
    y, y_hat = _as_1d(y, y_hat)
    if y.size < 2:
        raise NumericError("need at least 2 samples")
    _require_variance(y, "observed values")
    _require_variance(y_hat, "predictions")
    yc = y - y.mean()
    pc = y_hat - y_hat.mean()
    return float((yc * pc).sum() / np.sqrt((yc ** 2).sum() * (pc ** 2).sum()))


def average_ranks(a):
    """1-based ranks; ties receive the average of their rank range."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(y, y_hat):
    y, y_hat = _as_1d(y, y_hat)
    return pearson(average_ranks(y), average_ranks(y_hat))


def r2(y, y_hat):
    y, y_hat = _as_1d(y, y_hat)
    _require_variance(y, "observed values")
    ss_res = ((y - y_hat) ** 2).sum()
    ss_tot = ((y - y.mean()) ** 2).sum()
    return float(1.0 - ss_res / ss_tot)


def rmse(y, y_hat):
    y, y_hat = _as_1d(y, y_hat)
    return float(np.sqrt(((y - y_hat) ** 2).mean()))


def mue(y, y_hat):
    y, y_hat = _as_1d(y, y_hat)
    return float(np.abs(y - y_hat).mean())


def residual_stdev(y, y_hat):
    """Population standard deviation of the residuals y - y_hat."""
    y, y_hat = _as_1d(y, y_hat)
    return float(np.std(y - y_hat))


def roc_auc(labels, scores):
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal)."""
    labels, scores = _as_1d(labels, scores)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise NumericError("roc_auc requires both classes")
    ranks = average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


REGRESSION_METRICS = ("r2", "ef_chi", "pearson", "spearman", "rmse", "mue", "stdev")


@dataclass
class EvalReport:
    """Per-metric values; for multitask, per-task lists plus the mean."""

    metrics: dict
    n: int
    chi: float
    per_task: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"metrics": self.metrics, "n": self.n,
                           "chi": self.chi, "per_task": self.per_task},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(metrics=d["metrics"], n=d["n"], chi=d["chi"],
                   per_task=d.get("per_task", {}))

    def to_table(self):
        names = list(self.metrics)
        width = max(len(n) for n in names) + 2
        lines = [f"{'metric':<{width}}value",
                 "-" * (width + 12)]
        for name in names:
            lines.append(f"{name:<{width}}{self.metrics[name]: .6f}")
        lines.append(f"{'n':<{width}}{self.n:d}")
        lines.append(f"{'chi':<{width}}{self.chi:g}")
        return "\n".join(lines) + "\n"


def regression_report(y, y_hat, chi=DEFAULT_CHI):
    y, y_hat = _as_1d(y, y_hat)
    return EvalReport(
        metrics={
            "r2": r2(y, y_hat),
            "ef_chi": ef_chi_regression(y, y_hat, chi),
            "pearson": pearson(y, y_hat),
            "spearman": spearman(y, y_hat),
            "rmse": rmse(y, y_hat),
            "mue": mue(y, y_hat),
            "stdev": residual_stdev(y, y_hat),
        },
        n=int(y.size), chi=chi)


def classification_report(labels, scores, chi=DEFAULT_CHI):
    """Multitask ROC-AUC; labels/scores are (n, T) with NaN marking absences."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.ndim == 1:
        labels = labels[:, None]
        scores = scores[:, None]
    aucs = []
    for t in range(labels.shape[1]):
        mask = ~np.isnan(labels[:, t])
        aucs.append(roc_auc(labels[mask, t], scores[mask, t]))
    return EvalReport(
        metrics={"roc_auc": float(np.mean(aucs))},
        n=int(labels.shape[0]), chi=chi,
        per_task={"roc_auc": aucs})
