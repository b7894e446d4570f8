"""Training loop, K-fold cross-validation, random hyperparameter search
over the documented grid, and metric aggregation.

Test labels are only ever read inside `evaluate`; selection uses
validation folds exclusively.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import chemio, graphbuild
from .errors import ConfigError, NumericError
from .metrics import (DEFAULT_CHI, classification_report, pearson,
                      regression_report, roc_auc)
from .model import ModelConfig, PotentialNetModel, loss as sample_loss
from .diffcore import Adam, SGD, backward, scale

# Hyperparameter domains used by random search unless overridden.
DEFAULT_GRID = {
    "f_bond": [64, 128],
    "f_spatial": [64, 128],
    "bond_K": [1, 2],
    "spatial_K": [1, 2, 3],
    "f_gather": [64, 128],
    "K": [1, 2, 3],
    "fc_widths": [[128, 32, 1], [128, 1], [64, 32, 1], [64, 1]],
    "lr": [1e-3, 2e-4],
    "weight_decay": [0.0, 1e-7, 1e-5, 1e-3],
    "dropout": [0.0, 0.25, 0.4, 0.5],
}

DEFAULT_EPOCHS = 100   # ligand-task cap
DEFAULT_BATCH_SIZE = 32


@dataclass(frozen=True)
class Sample:
    sample_id: str
    graph: graphbuild.GraphTensors
    labels: tuple


@dataclass
class RunRecord:
    hyperparams: dict
    seed: int
    best_epoch: int = -1
    best_val_score: float = -math.inf
    val_scores: list = field(default_factory=list)
    checkpoint: dict = field(default_factory=dict)
    failed: bool = False
    failure_reason: str = ""


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    epochs: int = DEFAULT_EPOCHS
    k_folds: int = 3
    seed: int = 0
    chi: float = DEFAULT_CHI
    batch_size: int = DEFAULT_BATCH_SIZE
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    fold_order: str = "random"
    date_csv: str = ""

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.fold_order not in ("random", "temporal"):
            raise ConfigError(f"unknown fold order {self.fold_order!r}")
        grid = dict(DEFAULT_GRID)
        grid.update(self.grid)
        self.grid = grid

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def model_config(self, **overrides):
        d = dict(self.model)
        d.update(overrides)
        if "schema" in d and isinstance(d["schema"], dict):
            d["schema"] = graphbuild.EdgeSchema.from_dict(d["schema"])
        if "fc_widths" in d:
            d["fc_widths"] = tuple(d["fc_widths"])
        if "element_vocab" in d:
            d["element_vocab"] = tuple(d["element_vocab"])
        return ModelConfig(**d)


def build_samples(systems, labels_table, model_cfg: ModelConfig,
                  pocket_cutoff=graphbuild.DEFAULT_POCKET_CUTOFF,
                  strip_h=False):
    """Featurize systems and attach labels; samples without labels are kept
    with an all-absent label vector."""
    samples = []
    for s in systems:
        if strip_h:
            s = chemio.strip_hydrogens(s)
        if s.n_ligand < s.n_atoms:
            s = graphbuild.pocket_filter(s, pocket_cutoff)
        x = chemio.featurize(s, model_cfg.element_vocab)
        g = graphbuild.build_graph(s, x, model_cfg.schema)
        labels = labels_table.get(s.sample_id, [None] * model_cfg.task_count)
        samples.append(Sample(s.sample_id, g, tuple(labels)))
    return samples


def _validation_score(model, samples, task_kind):
    preds = np.vstack([model.forward(s.graph, train=False).value[0]
                       for s in samples])
    if task_kind == "regression":
        pairs = [(s.labels[0], preds[k, 0]) for k, s in enumerate(samples)
                 if s.labels[0] is not None]
        y = [p[0] for p in pairs]
        y_hat = [p[1] for p in pairs]
        return pearson(y, y_hat)
    aucs = []
    for t in range(preds.shape[1]):
        y = [s.labels[t] for s in samples if s.labels[t] is not None]
        sc = [preds[k, t] for k, s in enumerate(samples)
              if s.labels[t] is not None]
        aucs.append(roc_auc(y, sc))
    return float(np.mean(aucs))


def train(model: PotentialNetModel, train_samples, valid_samples,
          epochs, lr, weight_decay=0.0, batch_size=DEFAULT_BATCH_SIZE,
          seed=0, optimizer="adam", hyperparams=None):
    """Shuffled minibatch training; keeps the best-validation-epoch
    checkpoint. A NaN loss marks the run failed."""
    if not train_samples or not valid_samples:
        raise ConfigError("train and valid folds must be nonempty")
    overlap = ({s.sample_id for s in train_samples} &
               {s.sample_id for s in valid_samples})
    if overlap:
        raise ConfigError(f"folds overlap: {sorted(overlap)[:3]}")
    record = RunRecord(hyperparams=hyperparams or {}, seed=seed)
    kind = model.config.task_kind
    rng = np.random.default_rng(seed)
    params = model.parameters()
    opt_cls = Adam if optimizer == "adam" else SGD
    opt = opt_cls(params, lr=lr, weight_decay=weight_decay)
    labeled = [s for s in train_samples
               if any(v is not None for v in s.labels)]
    if not labeled:
        raise ConfigError("no labeled training samples")

    for epoch in range(epochs):
        order = rng.permutation(len(labeled))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            opt.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                s = labeled[idx]
                pred = model.forward(s.graph, train=True, rng=rng)
                l = scale(sample_loss(pred, s.labels, kind), 1.0 / len(batch))
                backward(l)
                batch_loss += float(l.value)
            if not math.isfinite(batch_loss):
                record.failed = True
                record.failure_reason = f"non-finite loss at epoch {epoch}"
                return record
            opt.step()
        try:
            score = _validation_score(model, valid_samples, kind)
        except NumericError:
            score = -math.inf
        record.val_scores.append(score)
        if score > record.best_val_score:
            record.best_val_score = score
            record.best_epoch = epoch
            record.checkpoint = model.state_dict()
    if not record.checkpoint:
        record.failed = True
        record.failure_reason = "no epoch produced a finite validation score"
    return record


def evaluate(model: PotentialNetModel, samples, chi=DEFAULT_CHI):
    """Full metric suite on a labeled sample set."""
    preds = np.vstack([model.forward(s.graph, train=False).value[0]
                       for s in samples])
    kind = model.config.task_kind
    if kind == "regression":
        y, y_hat = [], []
        for k, s in enumerate(samples):
            if s.labels[0] is not None:
                y.append(s.labels[0])
                y_hat.append(preds[k, 0])
        return regression_report(y, y_hat, chi)
    labels = np.array([[math.nan if v is None else v for v in s.labels]
                       for s in samples])
    return classification_report(labels, preds, chi)


def partition_kfold(ids, k, seed, dates=None):
    """K disjoint, exhaustive folds; random shuffle by default, contiguous
    date-ordered cuts when `dates` is given."""
    ids = list(ids)
    if k > len(ids):
        raise ConfigError(f"k={k} exceeds {len(ids)} samples")
    if dates is not None:
        order = sorted(range(len(ids)), key=lambda i: (dates[ids[i]], ids[i]))
    else:
        order = list(np.random.default_rng(seed).permutation(len(ids)))
    folds = [[] for _ in range(k)]
    bounds = np.linspace(0, len(ids), k + 1).astype(int)
    for f in range(k):
        folds[f] = [ids[i] for i in order[bounds[f]:bounds[f + 1]]]
    return folds


def _sample_grid(grid, rng, task_count):
    hp = {}
    for key in sorted(grid):
        values = grid[key]
        hp[key] = values[int(rng.integers(len(values)))]
    widths = list(hp["fc_widths"])
    widths[-1] = task_count
    hp["fc_widths"] = tuple(widths)
    return hp


def _run_cv(config: ExperimentConfig, hp, samples_by_id, folds, seed):
    """Train K models, each holding out one fold for validation; returns
    per-fold records."""
    records = []
    model_keys = ("f_bond", "f_spatial", "bond_K", "spatial_K", "f_gather",
                  "K", "fc_widths", "dropout")
    overrides = {k: hp[k] for k in model_keys if k in hp}
    for f, held_out in enumerate(folds):
        train_ids = [i for g, fold in enumerate(folds) if g != f for i in fold]
        model_cfg = config.model_config(seed=seed + f, **overrides)
        model = PotentialNetModel(model_cfg)
        rec = train(model,
                    [samples_by_id[i] for i in train_ids],
                    [samples_by_id[i] for i in held_out],
                    epochs=config.epochs,
                    lr=hp.get("lr", config.lr),
                    weight_decay=hp.get("weight_decay", config.weight_decay),
                    batch_size=config.batch_size,
                    seed=seed + f,
                    optimizer=config.optimizer,
                    hyperparams=hp)
        records.append(rec)
    return records


def hyperparameter_search(config: ExperimentConfig, n_samples,
                          train_samples, test_samples=None, n_workers=1):
    """Uniform random search; selection by mean best-epoch validation score
    over K folds. Returns (best entry, full table, test report or None).

    Per-sample seeds derive from the master seed, so results do not depend
    on worker scheduling.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    samples_by_id = {s.sample_id: s for s in train_samples}
    folds = partition_kfold(sorted(samples_by_id), config.k_folds, config.seed)
    task_count = config.model_config().task_count

    def run_one(i):
        rng = np.random.default_rng(config.seed + 1000 + i)
        hp = _sample_grid(config.grid, rng, task_count)
        records = _run_cv(config, hp, samples_by_id, folds, config.seed)
        ok = [r for r in records if not r.failed]
        score = (float(np.mean([r.best_val_score for r in records]))
                 if len(ok) == len(records) else -math.inf)
        return {"index": i, "hyperparams": hp, "val_score": score,
                "failed": len(ok) != len(records), "records": records}

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            table = list(pool.map(run_one, range(n_samples)))
    else:
        table = [run_one(i) for i in range(n_samples)]
    table.sort(key=lambda e: e["index"])
    viable = [e for e in table if not e["failed"]]
    if not viable:
        raise NumericError("all hyperparameter runs failed")
    best = max(viable, key=lambda e: (e["val_score"], -e["index"]))

    test_report = None
    if test_samples is not None:
        test_report = _final_test_evaluation(config, best, samples_by_id,
                                             folds, test_samples)
    return best, table, test_report


def _final_test_evaluation(config, best, samples_by_id, folds, test_samples):
    """Re-run the K folds at the selected hyperparameters; report each
    metric as median over folds with the stdev in parentheses."""
    hp = best["hyperparams"]
    records = _run_cv(config, hp, samples_by_id, folds, config.seed)
    model_keys = ("f_bond", "f_spatial", "bond_K", "spatial_K", "f_gather",
                  "K", "fc_widths", "dropout")
    overrides = {k: hp[k] for k in model_keys if k in hp}
    per_fold = []
    for f, rec in enumerate(records):
        if rec.failed:
            continue
        model = PotentialNetModel(config.model_config(seed=config.seed + f,
                                                      **overrides))
        model.load_state_dict(rec.checkpoint)
        per_fold.append(evaluate(model, test_samples, config.chi))
    if not per_fold:
        raise NumericError("all final-fold runs failed")
    summary = {}
    for name in per_fold[0].metrics:
        values = [r.metrics[name] for r in per_fold]
        summary[name] = format_median_stdev(values)
    return {"summary": summary, "per_fold": [r.metrics for r in per_fold]}


def format_median_stdev(values):
    """Median with population stdev in parentheses, e.g. '0.668 (0.043)'."""
    values = np.asarray(values, dtype=np.float64)
    return f"{np.median(values):.3f} ({np.std(values):.3f})"


def load_date_csv(text):
    import csv as _csv
    import io as _io
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = _csv.reader(_io.StringIO(text))
    next(reader, None)
    return {row[0]: row[1] for row in reader if row}
