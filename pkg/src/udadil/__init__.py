"""Unsupervised multi-domain clustering via Wasserstein dictionary learning.

Each domain's (pseudo-labeled) empirical distribution is represented as a
Wasserstein barycenter of shared learned atoms; cluster ids are matched
across domains by an assignment over pairwise Wasserstein costs, and unseen
domains are adapted to by fitting barycentric coordinates alone.
"""

from .alignment import (
    ClusterAssignment,
    align_to_reference,
    cluster_cost_matrix,
    solve_assignment,
)
from .barycenter import (
    BarycenterResult,
    LabeledDistribution,
    free_support_barycenter,
    labeled_barycenter,
)
from .dictionary import (
    Dictionary,
    barycentric_regression,
    init_atoms,
    labeled_ground_cost,
    load_dictionary,
    save_dictionary,
    simplex_project,
    train_dictionary,
)
from .errors import DataFormatError, SolverError, UdadilError
from .kernels import active_backend
from .metrics import (
    EvalReport,
    adjusted_rand_index,
    clustering_accuracy,
    evaluate,
    kmeans,
)
from .ot import (
    DiscreteDistribution,
    TransportPlan,
    barycentric_map,
    solve_exact_ot,
    solve_sinkhorn,
    squared_euclidean_cost,
    wasserstein_distance,
)
from .pipeline import (
    ClusterModel,
    DomainDataset,
    assign_clusters,
    compute_domain_centroids,
    generate_pseudo_labels,
    infer,
    load_model,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "ClusterModel",
    "BarycenterResult",
    "DataFormatError",
    "Dictionary",
    "DiscreteDistribution",
    "DomainDataset",
    "EvalReport",
    "LabeledDistribution",
    "SolverError",
    "TransportPlan",
    "UdadilError",
    "active_backend",
    "adjusted_rand_index",
    "align_to_reference",
    "assign_clusters",
    "barycentric_map",
    "barycentric_regression",
    "cluster_cost_matrix",
    "clustering_accuracy",
    "compute_domain_centroids",
    "evaluate",
    "free_support_barycenter",
    "generate_pseudo_labels",
    "infer",
    "init_atoms",
    "kmeans",
    "labeled_barycenter",
    "labeled_ground_cost",
    "load_dictionary",
    "load_model",
    "save_dictionary",
    "save_model",
    "simplex_project",
    "solve_assignment",
    "solve_exact_ot",
    "solve_sinkhorn",
    "squared_euclidean_cost",
    "train",
    "train_dictionary",
    "wasserstein_distance",
]
