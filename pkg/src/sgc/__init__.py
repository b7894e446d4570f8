"""Spatial graph convolutions for molecular property prediction."""

__version__ = "0.1.0"

from .chemio import (Atom, Bond, MolecularSystem, featurize, load_labels,
                     parse_pdb, parse_sdf)
from .graphbuild import (EdgeSchema, GraphTensors, bond_only_view,
                         build_adjacency, build_distance_matrix, build_graph)
from .model import ModelConfig, PotentialNetModel, loss, predict_batch
from .metrics import (EvalReport, ef_chi_regression, mue, pearson, r2,
                      regression_report, rmse, roc_auc, spearman)
from .cvsplit import (FoldAssignment, assign_folds, random_split,
                      sequence_identity, ward_cluster)

__all__ = [
    "Atom", "Bond", "MolecularSystem", "featurize", "load_labels",
    "parse_pdb", "parse_sdf",
    "EdgeSchema", "GraphTensors", "bond_only_view", "build_adjacency",
    "build_distance_matrix", "build_graph",
    "ModelConfig", "PotentialNetModel", "loss", "predict_batch",
    "EvalReport", "ef_chi_regression", "mue", "pearson", "r2",
    "regression_report", "rmse", "roc_auc", "spearman",
    "FoldAssignment", "assign_folds", "random_split", "sequence_identity",
    "ward_cluster",
]
