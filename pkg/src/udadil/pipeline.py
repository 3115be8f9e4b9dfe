"""End-to-end training over source domains and inference on unseen targets.

Training alternates pseudo-labeling, cross-domain cluster alignment,
dictionary learning, and centroid refinement; inference fits barycentric
coordinates for the new domain against the frozen atoms and reuses the
centroid construction.  Ground-truth labels, when present on datasets, are
carried for evaluation only and are structurally invisible to training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .alignment import ClusterAssignment, align_to_reference
from .barycenter import LabeledDistribution, free_support_barycenter
from .dictionary import (
    Dictionary,
    barycentric_regression,
    dictionary_from_arrays,
    dictionary_to_arrays,
    train_dictionary,
)
from .kernels import assign_nearest, pairwise_sqdist
from .metrics import kmeans
from .ot import DiscreteDistribution, barycentric_map, solve_exact_ot
from ._npz import read_archive, write_archive

MODEL_FORMAT = "udadil-model-v1"


@dataclass(frozen=True)
class DomainDataset:
    """A feature matrix plus optional evaluation-only ground-truth labels."""

    features: np.ndarray
    truth_labels: np.ndarray | None = None
    name: str = "domain"

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.size == 0:
            raise ValueError(f"features must be a non-empty 2-D matrix, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite entries")
        object.__setattr__(self, "features", features)
        if self.truth_labels is not None:
            labels = np.asarray(self.truth_labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise ValueError(
                    f"{labels.size} truth labels for {features.shape[0]} points"
                )
            object.__setattr__(self, "truth_labels", labels)

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ClusterModel:
    """Trained artifact: dictionary, per-domain centroids, label convention."""

    dictionary: Dictionary
    reference_domain: str
    per_domain_centroids: dict[str, np.ndarray]
    n_clusters: int
    config: dict = field(default_factory=dict)
    run_log: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, c in self.per_domain_centroids.items():
            c = np.asarray(c, dtype=np.float64)
            if c.shape[0] != self.n_clusters or not np.all(np.isfinite(c)):
                raise ValueError(
                    f"centroids for domain {name!r} must be a finite "
                    f"({self.n_clusters}, d) matrix, got {c.shape}"
                )
            self.per_domain_centroids[name] = c


def _features_of(domain) -> np.ndarray:
    feats = getattr(domain, "features", domain)
    return np.asarray(feats, dtype=np.float64)


def generate_pseudo_labels(
    domain, n_clusters: int, seed: int = 0, n_restarts: int = 10
) -> ClusterAssignment:
    """K-Means pseudo-labels with random-point initialization."""
    return kmeans(_features_of(domain), n_clusters, seed=seed, n_restarts=n_restarts).assignment


def compute_domain_centroids(
    dictionary: Dictionary,
    alpha,
    domain,
    n_clusters: int,
    seed: int = 0,
    bary_tol: float = 1e-5,
    bary_max_iter: int = 50,
    bary_restarts: int = 3,
) -> np.ndarray:
    """Cluster centroids for one domain from the dictionary.

    An n_clusters-point barycenter of the atoms' feature clouds under
    `alpha` provides prototypes (best of `bary_restarts` seeded runs);
    these are displaced onto the domain by the barycentric map of the
    exact prototype-to-domain transport plan.  Prototypes are ordered
    lexicographically before displacement so repeated calls are stable.
    """
    feats = _features_of(domain)
    clouds = dictionary.atom_clouds()
    seeds = np.random.SeedSequence(seed).generate_state(bary_restarts)
    best = None
    for s in seeds:
        res = free_support_barycenter(
            clouds, alpha, n_clusters,
            tol=bary_tol, max_iter=bary_max_iter, seed=int(s),
        )
        if best is None or res.objective < best.objective:
            best = res
    prototypes = best.distribution.support
    prototypes = prototypes[np.lexsort(prototypes.T[::-1])]

    C = pairwise_sqdist(prototypes, feats)
    plan = solve_exact_ot(
        C,
        np.full(n_clusters, 1.0 / n_clusters),
        np.full(feats.shape[0], 1.0 / feats.shape[0]),
    )
    return barycentric_map(plan, feats)


def assign_clusters(features, centroids) -> ClusterAssignment:
    """Nearest-centroid hard assignment; ties go to the lowest index."""
    X = np.asarray(features, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] == 0:
        raise ValueError("centroids must be a non-empty 2-D matrix")
    if X.shape[1] != c.shape[1]:
        raise ValueError(
            f"features have dimension {X.shape[1]}, centroids {c.shape[1]}"
        )
    labels, _ = assign_nearest(X, c)
    return ClusterAssignment(labels, c.shape[0])


@dataclass(frozen=True)
class _TrainDomain:
    # Deliberately label-free: training code only ever sees this view.
    features: np.ndarray
    name: str


def train(
    sources: list[DomainDataset],
    n_clusters: int,
    rounds: int = 3,
    dict_config: dict | None = None,
    seed: int = 0,
    reference: str | None = None,
    early_stop_change: float = 0.01,
    subsample_cap: int = 500,
) -> ClusterModel:
    """Run the full multi-domain training loop and return the model.

    Stages: pseudo-labels per domain, alignment to the reference domain,
    atom initialization (first round), then per round dictionary training
    (warm-started), centroid computation, re-assignment and re-alignment.
    Stops early when every domain's label-change fraction drops below
    `early_stop_change`.
    """
    if len(sources) < 2:
        raise ValueError("training needs at least two source domains")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    doms = [_TrainDomain(s.features, s.name) for s in sources]
    names = [d.name for d in doms]
    if len(set(names)) != len(names):
        raise ValueError(f"domain names must be unique, got {names}")
    d0 = doms[0].features.shape[1]
    for d in doms:
        if d.features.shape[1] != d0:
            raise ValueError("all source domains must share the feature dimension")
    if reference is None:
        reference = names[0]
    if reference not in names:
        raise ValueError(f"reference domain {reference!r} not among {names}")
    cfg = dict(dict_config or {})

    ss = np.random.SeedSequence(seed)

    def next_seed() -> int:
        return int(ss.spawn(1)[0].generate_state(1)[0])

    def _stage(stage, round_idx, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            exc.args = (f"[round {round_idx}, stage {stage}] {exc}",)
            raise

    clouds = {d.name: DiscreteDistribution.uniform(d.features) for d in doms}

    assignments = {
        d.name: _stage(
            "pseudo-labels", 0, generate_pseudo_labels, d, n_clusters, next_seed()
        )
        for d in doms
    }
    align_seed = next_seed()
    ref_pair = (clouds[reference], assignments[reference])
    other_names = [n for n in names if n != reference]
    aligned = _stage(
        "alignment", 0, align_to_reference,
        ref_pair, [(clouds[n], assignments[n]) for n in other_names],
        subsample_cap, align_seed,
    )
    assignments.update(dict(zip(other_names, aligned)))

    atoms = None
    coords = None
    dictionary = None
    round_logs = []
    subsampled = any(
        np.bincount(a.labels, minlength=n_clusters).max() > subsample_cap
        for a in assignments.values()
    )
    for r in range(1, rounds + 1):
        labeled = [
            LabeledDistribution.uniform(
                doms[i].features, assignments[names[i]].labels, n_clusters
            )
            for i in range(len(doms))
        ]
        dictionary = _stage(
            "dictionary", r, train_dictionary,
            labeled, k_atoms=len(doms),
            init_atoms_result=atoms, init_coords=coords,
            seed=next_seed(), **cfg,
        )
        atoms, coords = dictionary.atoms, dictionary.coords

        centroids = {}
        new_assign = {}
        for i, d in enumerate(doms):
            centroids[d.name] = _stage(
                "centroids", r, compute_domain_centroids,
                dictionary, coords[i], d.features, n_clusters, next_seed(),
            )
            new_assign[d.name] = _stage(
                "assignment", r, assign_clusters, d.features, centroids[d.name]
            )

        # Re-align against the reference's *previous* labeling so cluster
        # ids keep one convention across rounds (warm starts rely on it).
        aligned = _stage(
            "alignment", r, align_to_reference,
            (clouds[reference], assignments[reference]),
            [(clouds[n], new_assign[n]) for n in names],
            subsample_cap, align_seed,
        )
        new_assign = dict(zip(names, aligned))

        change = {
            n: float(np.mean(new_assign[n].labels != assignments[n].labels))
            for n in names
        }
        assignments = new_assign
        round_logs.append(
            {
                "round": r,
                "dict_loss": dictionary.loss_trace[-1] if dictionary.loss_trace else None,
                "label_change": change,
            }
        )
        if max(change.values()) < early_stop_change:
            break

    config = {
        "n_clusters": n_clusters,
        "rounds": rounds,
        "seed": seed,
        "reference_domain": reference,
        "early_stop_change": early_stop_change,
        "subsample_cap": subsample_cap,
        "dict_config": cfg,
    }
    run_log = {
        "rounds": round_logs,
        "completed_rounds": len(round_logs),
        "clusters_subsampled_for_alignment": bool(subsampled),
    }
    return ClusterModel(
        dictionary, reference, centroids, n_clusters, config, run_log
    )


def infer(
    model: ClusterModel, target, seed: int = 0
) -> tuple[ClusterAssignment, np.ndarray]:
    """Cluster an unseen domain: fit barycentric coordinates, derive centroids.

    Returns (assignment, alpha).  Only the target's features are read.
    """
    feats = _features_of(target)
    if feats.shape[1] != model.dictionary.dim:
        raise ValueError(
            f"target dimension {feats.shape[1]} != model dimension "
            f"{model.dictionary.dim}"
        )
    ss = np.random.SeedSequence(seed)
    s1, s2 = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    reg = barycentric_regression(
        model.dictionary.atoms,
        DiscreteDistribution.uniform(feats),
        seed=s1,
    )
    centroids = compute_domain_centroids(
        model.dictionary, reg.alpha, feats, model.n_clusters, seed=s2
    )
    return assign_clusters(feats, centroids), reg.alpha


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: ClusterModel, path) -> None:
    arrays = dictionary_to_arrays(model.dictionary, prefix="dict_")
    names = list(model.per_domain_centroids)
    meta = {
        "reference_domain": model.reference_domain,
        "n_clusters": model.n_clusters,
        "centroid_domains": names,
        "config": model.config,
        "run_log": model.run_log,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    for i, name in enumerate(names):
        arrays[f"centroids_{i}"] = model.per_domain_centroids[name]
    write_archive(path, MODEL_FORMAT, arrays)


def load_model(path) -> ClusterModel:
    arrays = read_archive(path, MODEL_FORMAT)
    meta = json.loads(bytes(arrays["meta_json"]).decode())
    dictionary = dictionary_from_arrays(arrays, prefix="dict_")
    centroids = {
        name: arrays[f"centroids_{i}"]
        for i, name in enumerate(meta["centroid_domains"])
    }
    return ClusterModel(
        dictionary,
        meta["reference_domain"],
        centroids,
        int(meta["n_clusters"]),
        meta["config"],
        meta["run_log"],
    )
