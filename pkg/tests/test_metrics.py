import math

import numpy as np
import pytest

from sgc.errors import NumericError
from sgc.metrics import (EvalReport, average_ranks, classification_report,
                         ef_chi_regression, mue, pearson, r2,
                         regression_report, residual_stdev, rmse, roc_auc,
                         spearman)


def ef_oracle(y, y_hat, chi):
    """Direct transcription of the enrichment definition: sort a list of
    (prediction, index) pairs, take the top k, average the z-scores."""
    y = [float(v) for v in y]
    n = len(y)
    k = max(1, math.floor(chi * n + 0.5))
    if k == n:
        return 0.0
    order = sorted(range(n), key=lambda i: (-y_hat[i], i))
    mean = sum(y) / n
    sigma = math.sqrt(sum((v - mean) ** 2 for v in y) / n)
    return sum((y[i] - mean) / sigma for i in order[:k]) / k


def test_ef_chi_one_is_exactly_zero():
    y = [1.0, 2.0, 3.0, 4.0]
    assert ef_chi_regression(y, [4.0, 3.0, 2.0, 1.0], chi=1.0) == 0.0


def test_ef_quarter_selects_single_best():
    # y = [0,0,0,4]: mean 1, population sigma sqrt(3); perfect ranking
    # puts the 4 on top, z = 3/sqrt(3)
    y = [0.0, 0.0, 0.0, 4.0]
    y_hat = [0.1, 0.2, 0.3, 9.0]
    assert ef_chi_regression(y, y_hat, chi=0.25) == pytest.approx(
        3.0 / math.sqrt(3.0), abs=1e-12)


def test_ef_matches_oracle_on_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        y = rng.normal(size=n)
        y_hat = rng.normal(size=n)
        chi = float(rng.uniform(0.02, 1.0))
        assert ef_chi_regression(y, y_hat, chi) == pytest.approx(
            ef_oracle(y, y_hat, chi), abs=1e-12)


def test_ef_ties_break_toward_lower_index():
    y = [5.0, -5.0, 0.0, 0.0]
    y_hat = [1.0, 1.0, 0.0, 0.0]
    top_z = ef_chi_regression(y, y_hat, chi=0.25)
    assert top_z > 0  # index 0 (y=5) wins the tie, not index 1 (y=-5)


def test_ef_invariant_to_affine_label_shift_scale():
    rng = np.random.default_rng(1)
    y = rng.normal(size=20)
    y_hat = rng.normal(size=20)
    base = ef_chi_regression(y, y_hat, 0.1)
    assert ef_chi_regression(3.0 * y + 7.0, y_hat, 0.1) == pytest.approx(
        base, abs=1e-12)


def test_ef_invariant_to_monotone_prediction_transform():
    rng = np.random.default_rng(2)
    y = rng.normal(size=25)
    y_hat = rng.normal(size=25)
    base = ef_chi_regression(y, y_hat, 0.2)
    assert ef_chi_regression(y, np.exp(y_hat), 0.2) == pytest.approx(
        base, abs=1e-12)


def test_ef_upper_bound_is_max_zscore_average():
    rng = np.random.default_rng(3)
    y = rng.normal(size=30)
    z = (y - y.mean()) / y.std()
    k = max(1, math.floor(0.1 * 30 + 0.5))
    best = np.sort(z)[::-1][:k].mean()
    for seed in range(20):
        y_hat = np.random.default_rng(seed).normal(size=30)
        assert ef_chi_regression(y, y_hat, 0.1) <= best + 1e-12


def test_ef_can_exceed_one():
    y = np.concatenate([np.zeros(19), [10.0]])
    y_hat = y.copy()
    assert ef_chi_regression(y, y_hat, 0.05) > 1.0


def test_ef_errors():
    with pytest.raises(NumericError):
        ef_chi_regression([1.0], [1.0], 0.5)
    with pytest.raises(NumericError):
        ef_chi_regression([1.0, 2.0], [1.0, 2.0], 0.0)
    with pytest.raises(NumericError):
        ef_chi_regression([2.0, 2.0], [1.0, 2.0], 0.5)


def _scalar_pearson(y, p):
    n = len(y)
    my = sum(y) / n
    mp = sum(p) / n
    num = sum((a - my) * (b - mp) for a, b in zip(y, p))
    dy = math.sqrt(sum((a - my) ** 2 for a in y))
    dp = math.sqrt(sum((b - mp) ** 2 for b in p))
    return num / (dy * dp)


def test_pearson_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        y = list(rng.normal(size=n))
        p = list(rng.normal(size=n))
        assert pearson(y, p) == pytest.approx(_scalar_pearson(y, p), abs=1e-10)


def test_pearson_perfect_and_inverted():
    y = [1.0, 2.0, 3.0]
    assert pearson(y, [2.0, 4.0, 6.0]) == pytest.approx(1.0)
    assert pearson(y, [3.0, 2.0, 1.0]) == pytest.approx(-1.0)


def test_spearman_rank_based():
    y = [1.0, 2.0, 3.0, 4.0]
    assert spearman(y, [10.0, 100.0, 1e4, 1e8]) == pytest.approx(1.0)


def test_spearman_matches_rank_pearson_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(3, 25))
        y = rng.normal(size=n)
        p = rng.normal(size=n)
        oracle = _scalar_pearson(list(average_ranks(y)), list(average_ranks(p)))
        assert spearman(y, p) == pytest.approx(oracle, abs=1e-10)


def test_average_ranks_with_ties():
    assert list(average_ranks([3.0, 1.0, 3.0, 2.0])) == [3.5, 1.0, 3.5, 2.0]


def test_r2_rmse_mue_stdev_scalar_oracles():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        y = rng.normal(size=n)
        p = rng.normal(size=n)
        res = [a - b for a, b in zip(y, p)]
        my = sum(y) / n
        ss_res = sum(r ** 2 for r in res)
        ss_tot = sum((a - my) ** 2 for a in y)
        mr = sum(res) / n
        assert r2(y, p) == pytest.approx(1 - ss_res / ss_tot, abs=1e-10)
        assert rmse(y, p) == pytest.approx(math.sqrt(ss_res / n), abs=1e-10)
        assert mue(y, p) == pytest.approx(sum(abs(r) for r in res) / n, abs=1e-10)
        assert residual_stdev(y, p) == pytest.approx(
            math.sqrt(sum((r - mr) ** 2 for r in res) / n), abs=1e-10)


def test_rmse_never_below_residual_stdev():
    rng = np.random.default_rng(7)
    for _ in range(50):
        y = rng.normal(size=10)
        p = rng.normal(size=10) + 2.0
        assert rmse(y, p) >= residual_stdev(y, p) - 1e-12


def _roc_trapezoid_oracle(labels, scores):
    """Integrate the ROC curve by trapezoids over score thresholds."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    n_pos = (labels == 1).sum()
    n_neg = (labels == 0).sum()
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores), reverse=True):
        sel = scores >= t
        pts.append(((labels[sel] == 0).sum() / n_neg,
                    (labels[sel] == 1).sum() / n_pos))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return auc


def test_roc_auc_matches_trapezoid_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(4, 30))
        labels = rng.integers(0, 2, size=n).astype(float)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.normal(size=n), 1)  # force some ties
        assert roc_auc(labels, scores) == pytest.approx(
            _roc_trapezoid_oracle(labels, scores), abs=1e-10)


def test_roc_auc_known_values():
    assert roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert roc_auc([0, 1], [0.5, 0.5]) == 0.5


def test_roc_auc_single_class_error():
    with pytest.raises(NumericError):
        roc_auc([1, 1], [0.2, 0.3])


def test_length_mismatch_and_empty_errors():
    with pytest.raises(NumericError):
        pearson([1.0, 2.0], [1.0])
    with pytest.raises(NumericError):
        rmse([], [])


def test_regression_report_contains_all_metrics():
    rng = np.random.default_rng(9)
    y = rng.normal(size=40)
    p = y + rng.normal(scale=0.3, size=40)
    rep = regression_report(y, p, chi=0.1)
    assert set(rep.metrics) == {"r2", "ef_chi", "pearson", "spearman",
                                "rmse", "mue", "stdev"}
    assert rep.n == 40
    assert rep.metrics["pearson"] > 0.8


def test_classification_report_masks_absent_labels():
    labels = np.array([[1, np.nan], [0, 1.0], [1, 0.0], [np.nan, 1.0]])
    scores = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.5, 0.6]])
    rep = classification_report(labels, scores)
    assert rep.per_task["roc_auc"] == [1.0, 1.0]
    assert rep.metrics["roc_auc"] == 1.0


def test_report_json_round_trip():
    rep = regression_report([1.0, 2.0, 3.0], [1.1, 2.2, 2.7])
    back = EvalReport.from_json(rep.to_json())
    assert back.metrics == rep.metrics
    assert back.n == rep.n
    assert back.chi == rep.chi


def test_report_table_lists_every_metric():
    rep = regression_report([1.0, 2.0, 3.0], [1.1, 2.2, 2.7])
    table = rep.to_table()
    for name in rep.metrics:
        assert name in table
