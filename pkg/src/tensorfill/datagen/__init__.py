"""Benchmark tensor generators."""
from .hpo import GridAxis, default_axes, generate_hpo_grid, geometric_axis
from .learners import DecisionTree, TinyMLP, f1_score, knn_predict, make_blobs
from .query import (
    Predicate,
    QueryTemplate,
    QueryTypeError,
    Table,
    generate_query_tensor,
    make_table,
    query_counts,
    random_template,
)
from .synthetic import cp_tensor, generate_lowrank, generate_smooth, smooth_lipschitz_bounds

__all__ = [
    "DecisionTree",
    "TinyMLP",
    "f1_score",
    "knn_predict",
    "make_blobs",
    "GridAxis",
    "default_axes",
    "generate_hpo_grid",
    "geometric_axis",
    "Predicate",
    "QueryTemplate",
    "QueryTypeError",
    "Table",
    "generate_query_tensor",
    "make_table",
    "query_counts",
    "random_template",
    "cp_tensor",
    "generate_lowrank",
    "generate_smooth",
    "smooth_lipschitz_bounds",
]
