import math

import numpy as np
import pytest

from sgc.chemio import featurize
from sgc.errors import ConfigError
from sgc.graphbuild import build_graph
from sgc.harness import (DEFAULT_GRID, ExperimentConfig, Sample,
                         build_samples, evaluate, format_median_stdev,
                         hyperparameter_search, load_date_csv,
                         partition_kfold, train)
from sgc.model import ModelConfig, PotentialNetModel
from conftest import make_system

VOCAB = (6, 7, 8, 16)


def _model_cfg(**kw):
    kw.setdefault("element_vocab", VOCAB)
    kw.setdefault("f_bond", 4)
    kw.setdefault("f_spatial", 4)
    kw.setdefault("f_gather", 4)
    kw.setdefault("fc_widths", (4, 1))
    return ModelConfig(**kw)


def _dataset(n, cfg, seed=0, size_range=(3, 9)):
    """Samples whose label is the atom count, a signal the summed gather
    output can represent."""
    span = size_range[1] - size_range[0]
    out = []
    for i in range(n):
        # cycle through sizes so every contiguous slice has label variance
        n_atoms = size_range[0] + i % span
        s = make_system(n_atoms, seed=seed * 1000 + i, sample_id=f"s{i}")
        g = build_graph(s, featurize(s, cfg.element_vocab), cfg.schema)
        out.append(Sample(f"s{i}", g, (float(n_atoms),)))
    return out


def test_train_single_epoch_validates_once():
    cfg = _model_cfg()
    data = _dataset(8, cfg)
    rec = train(PotentialNetModel(cfg), data[:6], data[6:], epochs=1, lr=1e-3)
    assert len(rec.val_scores) == 1
    assert rec.best_epoch == 0
    assert rec.checkpoint


def test_train_rerun_is_bit_identical():
    cfg = _model_cfg(seed=3)
    data = _dataset(8, cfg)
    recs = [train(PotentialNetModel(_model_cfg(seed=3)), data[:6], data[6:],
                  epochs=3, lr=1e-3, seed=11) for _ in range(2)]
    assert recs[0].val_scores == recs[1].val_scores
    for name in recs[0].checkpoint:
        assert np.array_equal(recs[0].checkpoint[name], recs[1].checkpoint[name])


def test_train_rejects_overlapping_or_empty_folds():
    cfg = _model_cfg()
    data = _dataset(4, cfg)
    with pytest.raises(ConfigError, match="overlap"):
        train(PotentialNetModel(cfg), data, data[:1], epochs=1, lr=1e-3)
    with pytest.raises(ConfigError):
        train(PotentialNetModel(cfg), [], data, epochs=1, lr=1e-3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_diverging_run_marked_failed():
    cfg = _model_cfg()
    data = _dataset(8, cfg)
    rec = train(PotentialNetModel(cfg), data[:6], data[6:], epochs=10,
                lr=1e12, optimizer="sgd")
    assert rec.failed
    assert "non-finite" in rec.failure_reason


def test_train_learns_atom_count_signal():
    cfg = _model_cfg(seed=1)
    data = _dataset(20, cfg, size_range=(3, 12))
    rec = train(PotentialNetModel(cfg), data[:14], data[14:], epochs=40,
                lr=1e-2, batch_size=4, seed=2)
    assert not rec.failed
    assert rec.best_val_score > 0.8


def test_evaluate_chi_one_enrichment_zero():
    cfg = _model_cfg()
    data = _dataset(10, cfg, size_range=(3, 12))
    report = evaluate(PotentialNetModel(cfg), data, chi=1.0)
    assert report.metrics["ef_chi"] == 0.0
    assert report.n == 10


def test_partition_kfold_disjoint_and_exhaustive():
    ids = [f"x{i}" for i in range(11)]
    folds = partition_kfold(ids, 3, seed=0)
    flat = [i for f in folds for i in f]
    assert sorted(flat) == sorted(ids)
    assert len(flat) == len(set(flat))
    assert all(folds)


def test_partition_kfold_temporal_order():
    ids = ["a", "b", "c", "d"]
    dates = {"a": "2019-03", "b": "2017-01", "c": "2020-06", "d": "2018-09"}
    folds = partition_kfold(ids, 2, seed=0, dates=dates)
    assert folds == [["b", "d"], ["a", "c"]]


def test_partition_kfold_k_too_large():
    with pytest.raises(ConfigError):
        partition_kfold(["a"], 2, seed=0)


def test_experiment_config_validation_and_grid_merge():
    cfg = ExperimentConfig(dataset={}, grid={"lr": [5e-4]})
    assert cfg.grid["lr"] == [5e-4]
    assert cfg.grid["f_bond"] == DEFAULT_GRID["f_bond"]
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset={}, epochs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset={}, k_folds=1)
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset={}, optimizer="lbfgs")


def _tiny_experiment(**kw):
    # a linear head avoids dead-ReLU collapse in these tiny models
    grid = {
        "f_bond": [4], "f_spatial": [4], "bond_K": [1], "spatial_K": [1],
        "f_gather": [4], "K": [1], "fc_widths": [[1]],
        "lr": [1e-3], "weight_decay": [0.0], "dropout": [0.0],
    }
    grid.update(kw.pop("grid", {}))
    return ExperimentConfig(
        dataset={},
        model={"element_vocab": list(VOCAB), "f_bond": 4, "f_spatial": 4,
               "f_gather": 4, "fc_widths": [1]},
        grid=grid, epochs=2, k_folds=2, batch_size=4, **kw)


def test_hyperparameter_search_single_sample():
    config = _tiny_experiment()
    data = _dataset(8, config.model_config(), size_range=(3, 10))
    best, table, report = hyperparameter_search(config, 1, data)
    assert len(table) == 1
    assert best["index"] == 0
    assert not best["failed"]
    assert report is None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_hyperparameter_search_skips_diverging_configs():
    config = _tiny_experiment(grid={"lr": [1e-3, 1e12]}, optimizer="sgd")
    data = _dataset(10, config.model_config(), size_range=(3, 10))
    best, table, _ = hyperparameter_search(config, 6, data)
    lrs = {e["hyperparams"]["lr"] for e in table}
    assert lrs == {1e-3, 1e12}
    assert best["hyperparams"]["lr"] == 1e-3
    for e in table:
        if e["hyperparams"]["lr"] == 1e12:
            assert e["failed"]
            assert e["val_score"] == -math.inf


def test_hyperparameter_search_parallel_matches_serial():
    config = _tiny_experiment()
    data = _dataset(8, config.model_config(), size_range=(3, 10))
    best_s, table_s, _ = hyperparameter_search(config, 3, data, n_workers=1)
    best_p, table_p, _ = hyperparameter_search(config, 3, data, n_workers=3)
    assert best_s["index"] == best_p["index"]
    assert [e["val_score"] for e in table_s] == [e["val_score"] for e in table_p]
    assert [e["hyperparams"] for e in table_s] == [e["hyperparams"] for e in table_p]


def test_hyperparameter_search_test_summary_format():
    config = _tiny_experiment()
    data = _dataset(10, config.model_config(), size_range=(3, 10))
    best, table, report = hyperparameter_search(config, 1, data[:8],
                                                test_samples=data[8:] + data[:2])
    assert set(report["summary"]) == {"r2", "ef_chi", "pearson", "spearman",
                                      "rmse", "mue", "stdev"}
    import re
    for text in report["summary"].values():
        assert re.fullmatch(r"-?\d+\.\d{3} \(\d+\.\d{3}\)", text)


def test_format_median_stdev_oracle():
    values = [0.625, 0.668, 0.711]
    med = float(np.median(values))
    sd = float(np.std(values))
    assert format_median_stdev(values) == f"{med:.3f} ({sd:.3f})"
    assert format_median_stdev([0.668, 0.625, 0.711]) == "0.668 (0.035)"


def test_build_samples_attaches_labels_and_filters_pocket():
    cfg = _model_cfg()
    systems = [make_system(4, n_protein=30, seed=7, sample_id="a"),
               make_system(5, seed=8, sample_id="b")]
    samples = build_samples(systems, {"a": [1.5]}, cfg)
    assert samples[0].labels == (1.5,)
    assert samples[1].labels == (None,)
    assert samples[0].graph.n_atoms <= 34


def test_load_date_csv():
    table = load_date_csv("id,date\np1,2014-05\np2,2009-11\n")
    assert table == {"p1": "2014-05", "p2": "2009-11"}


def test_overfits_tiny_training_set():
    cfg = _model_cfg(seed=5, fc_widths=(1,))
    data = _dataset(8, cfg, size_range=(3, 12))
    model = PotentialNetModel(cfg)
    rec = train(model, data[:6], data[6:], epochs=120, lr=1e-2,
                batch_size=6, seed=4)
    assert not rec.failed
    # final-epoch weights should have memorized the training samples
    report = evaluate(model, data[:6], chi=1.0)
    assert report.metrics["rmse"] < 1.0
