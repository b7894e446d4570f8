"""Batch command line interface.

Subcommands: featurize, split, train, evaluate, hpsearch.
Exit codes: 0 ok, 2 parse error, 3 config error, 4 numeric failure.
The SGC_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import chemio, cvsplit, graphbuild, harness, report
from .diffcore import load_checkpoint, save_checkpoint
from .errors import ConfigError, NumericError, ParseError
from .model import PotentialNetModel


def _load_systems(dataset_cfg):
    systems = []
    if dataset_cfg.get("sdf"):
        with open(dataset_cfg["sdf"], "rb") as fh:
            systems += chemio.parse_sdf(fh.read())
    if dataset_cfg.get("pdb_dir"):
        resname = dataset_cfg.get("ligand_resname")
        if not resname:
            raise ConfigError("pdb_dir requires ligand_resname")
        for name in sorted(os.listdir(dataset_cfg["pdb_dir"])):
            if not name.endswith(".pdb"):
                continue
            with open(os.path.join(dataset_cfg["pdb_dir"], name), "rb") as fh:
                s = chemio.parse_pdb(fh.read(), resname)
            systems.append(type(s)(atoms=s.atoms, bonds=s.bonds,
                                   n_ligand=s.n_ligand,
                                   sample_id=os.path.splitext(name)[0]))
    if not systems:
        raise ConfigError("dataset provides no systems (need sdf or pdb_dir)")
    return systems


def _load_experiment(path):
    with open(path) as fh:
        config = harness.ExperimentConfig.from_json(fh.read())
    env_seed = os.environ.get("SGC_SEED")
    if env_seed is not None:
        config.seed = int(env_seed)
    return config


def _load_dataset(config):
    dataset_cfg = config.dataset
    systems = _load_systems(dataset_cfg)
    tasks, table = [], {}
    if dataset_cfg.get("labels"):
        with open(dataset_cfg["labels"], "rb") as fh:
            tasks, table = chemio.load_labels(fh.read())
    model_cfg = config.model_config()
    if tasks and model_cfg.task_count != len(tasks):
        raise ConfigError(f"model has {model_cfg.task_count} tasks but label "
                          f"table has {len(tasks)}")
    samples = harness.build_samples(
        systems, table, model_cfg,
        pocket_cutoff=dataset_cfg.get("pocket_cutoff",
                                      graphbuild.DEFAULT_POCKET_CUTOFF),
        strip_h=dataset_cfg.get("strip_hydrogens", False))
    return samples, model_cfg


def _split_by_folds(samples, folds: cvsplit.FoldAssignment):
    by_fold = {"train": [], "valid": [], "test": []}
    for s in samples:
        fold = folds.assignment.get(s.sample_id)
        if fold is not None:
            by_fold[fold].append(s)
    return by_fold


def cmd_featurize(args):
    dataset_cfg = {"sdf": args.sdf, "pdb_dir": args.pdb_dir,
                   "ligand_resname": args.ligand_resname}
    systems = _load_systems(dataset_cfg)
    labels_table = {}
    if args.labels:
        with open(args.labels, "rb") as fh:
            _, labels_table = chemio.load_labels(fh.read())
    os.makedirs(args.out, exist_ok=True)
    schema = graphbuild.EdgeSchema()
    index_rows = []
    for s in systems:
        if args.strip_hydrogens:
            s = chemio.strip_hydrogens(s)
        if s.n_ligand < s.n_atoms:
            s = graphbuild.pocket_filter(s, args.pocket_cutoff)
        x = chemio.featurize(s)
        g = graphbuild.build_graph(s, x, schema)
        path = os.path.join(args.out, f"{s.sample_id}.sgc")
        graphbuild.save_graph(g, path)
        index_rows.append([s.sample_id, path, g.n_atoms, g.n_ligand,
                           len(labels_table.get(s.sample_id, []))])
    with open(os.path.join(args.out, "index.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "cache", "n_atoms", "n_ligand", "n_labels"])
        writer.writerows(index_rows)
    print(f"featurized {len(index_rows)} systems into {args.out}")
    return 0


def cmd_split(args):
    fractions = tuple(float(v) for v in args.fractions.split(","))
    seed = int(os.environ.get("SGC_SEED", args.seed))
    if args.method == "random":
        with open(args.ids, "rb") as fh:
            _, table = chemio.load_labels(fh.read())
        assignment = cvsplit.random_split(sorted(table), fractions, seed)
    else:
        if args.distance == "matrix":
            with open(args.matrix, "rb") as fh:
                ids, D = cvsplit.load_distance_csv(fh.read())
        else:
            with open(args.sequences) as fh:
                reader = csv.reader(fh)
                next(reader, None)
                pairs = [(row[0], row[1]) for row in reader if row]
            ids = [p[0] for p in pairs]
            D = cvsplit.identity_distance_matrix([p[1] for p in pairs])
        if args.n_clusters:
            labels = cvsplit.ward_cluster(D, n_clusters=args.n_clusters)
        else:
            labels = cvsplit.ward_cluster(D, merge_threshold=args.merge_threshold)
        assignment = cvsplit.assign_folds(labels, fractions, seed, ids=ids)
    with open(args.out, "w") as fh:
        fh.write(assignment.to_csv())
    print(json.dumps(assignment.provenance))
    return 0


def cmd_train(args):
    config = _load_experiment(args.config)
    samples, model_cfg = _load_dataset(config)
    with open(args.folds) as fh:
        folds = cvsplit.FoldAssignment.from_csv(fh.read())
    by_fold = _split_by_folds(samples, folds)
    model = PotentialNetModel(config.model_config(seed=config.seed))
    rec = harness.train(model, by_fold["train"], by_fold["valid"],
                        epochs=config.epochs, lr=config.lr,
                        weight_decay=config.weight_decay,
                        batch_size=config.batch_size, seed=config.seed,
                        optimizer=config.optimizer)
    if rec.failed:
        raise NumericError(f"training failed: {rec.failure_reason}")
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.sgck")
    save_checkpoint(rec.checkpoint, ckpt_path)
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump({"best_epoch": rec.best_epoch,
                   "best_val_score": rec.best_val_score,
                   "val_scores": rec.val_scores,
                   "seed": rec.seed}, fh, indent=2)
    print(f"best epoch {rec.best_epoch}, validation score "
          f"{rec.best_val_score:.4f}; checkpoint at {ckpt_path}")
    return 0


def cmd_evaluate(args):
    config = _load_experiment(args.config)
    samples, model_cfg = _load_dataset(config)
    if args.folds:
        with open(args.folds) as fh:
            folds = cvsplit.FoldAssignment.from_csv(fh.read())
        samples = _split_by_folds(samples, folds)[args.fold]
    if not samples:
        raise ConfigError("no samples selected for evaluation")
    model = PotentialNetModel(config.model_config(seed=config.seed))
    model.load_state_dict(load_checkpoint(args.checkpoint))
    rep = harness.evaluate(model, samples, chi=args.chi)
    preds = np.vstack([model.forward(s.graph).value[0] for s in samples])
    written = report.write_report(
        rep, args.out, sample_ids=[s.sample_id for s in samples],
        labels=[s.labels for s in samples], preds=preds,
        task_kind=model_cfg.task_kind)
    print(rep.to_table())
    print("wrote: " + ", ".join(written))
    return 0


def cmd_hpsearch(args):
    config = _load_experiment(args.config)
    samples, _ = _load_dataset(config)
    with open(args.folds) as fh:
        folds = cvsplit.FoldAssignment.from_csv(fh.read())
    by_fold = _split_by_folds(samples, folds)
    pool = by_fold["train"] + by_fold["valid"]
    best, table, test_report = harness.hyperparameter_search(
        config, args.n, pool,
        test_samples=by_fold["test"] or None,
        n_workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "search.json"), "w") as fh:
        json.dump({
            "best": {"index": best["index"],
                     "hyperparams": _jsonable(best["hyperparams"]),
                     "val_score": best["val_score"]},
            "table": [{"index": e["index"],
                       "hyperparams": _jsonable(e["hyperparams"]),
                       "val_score": e["val_score"],
                       "failed": e["failed"]} for e in table],
            "test": test_report,
        }, fh, indent=2)
    print(f"selected configuration #{best['index']} with validation score "
          f"{best['val_score']:.4f}")
    if test_report:
        for name, value in test_report["summary"].items():
            print(f"  test {name}: {value}")
    return 0


def _jsonable(hp):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in hp.items()}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sgc", description="Spatial graph convolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="parse and cache graph tensors")
    p.add_argument("--sdf")
    p.add_argument("--pdb-dir")
    p.add_argument("--ligand-resname")
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--strip-hydrogens", action="store_true")
    p.add_argument("--pocket-cutoff", type=float,
                   default=graphbuild.DEFAULT_POCKET_CUTOFF)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("split", help="construct train/valid/test folds")
    p.add_argument("--method", choices=["random", "agglomerative"], required=True)
    p.add_argument("--distance", choices=["computed-sequence", "matrix"],
                   default="matrix")
    p.add_argument("--matrix")
    p.add_argument("--sequences")
    p.add_argument("--ids", help="labels CSV supplying sample ids (random split)")
    p.add_argument("--fractions", default="0.75,0.17,0.08")
    p.add_argument("--n-clusters", type=int)
    p.add_argument("--merge-threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model on fixed folds")
    p.add_argument("--config", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--folds")
    p.add_argument("--fold", choices=["train", "valid", "test"], default="test")
    p.add_argument("--chi", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hpsearch", help="random hyperparameter search")
    p.add_argument("--config", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hpsearch)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
