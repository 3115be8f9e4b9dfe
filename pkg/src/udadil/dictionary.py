"""Wasserstein dictionary learning over labeled point clouds.

A dictionary is a set of K labeled atoms plus one barycentric-coordinate
row per training domain; training makes the label-aware barycenter of the
atoms under each row match that domain's pseudo-labeled cloud.  Gradients
flow through an unrolled fixed-point barycenter with entropic (Sinkhorn)
transport plans; evaluation elsewhere uses exact OT.

torch is used as the autodiff engine for this module only; all public
inputs and outputs are numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .barycenter import (
    LabeledDistribution,
    class_quotas,
    default_label_penalty,
    label_penalty_cost,
)
from .errors import SolverError
from .ot import DiscreteDistribution, check_simplex
from ._npz import read_archive, write_archive

DICT_FORMAT = "udadil-dict-v1"

_DTYPE = torch.float64


@dataclass
class Dictionary:
    """K labeled atoms plus per-domain barycentric coordinates on the simplex."""

    atoms: list[LabeledDistribution]
    coords: np.ndarray
    n_classes: int
    config: dict = field(default_factory=dict)
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a dictionary needs at least one atom")
        sizes = {a.base.n_points for a in self.atoms}
        if len(sizes) != 1:
            raise ValueError(f"atom support sizes differ: {sorted(sizes)}")
        counts0 = self.atoms[0].class_counts()
        for k, a in enumerate(self.atoms[1:], start=1):
            if a.n_classes != self.n_classes or not np.array_equal(
                a.class_counts(), counts0
            ):
                raise ValueError(f"atom {k} has mismatched per-class counts")
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != len(self.atoms):
            raise ValueError(
                f"coords shape {coords.shape} does not match {len(self.atoms)} atoms"
            )
        for row in coords:
            check_simplex(row, "coords row")
        self.coords = coords

    @property
    def k_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_atom(self) -> int:
        return self.atoms[0].base.n_points

    @property
    def dim(self) -> int:
        return self.atoms[0].support.shape[1]

    def atom_clouds(self) -> list[DiscreteDistribution]:
        """The atoms' feature clouds with labels dropped."""
        return [a.base for a in self.atoms]


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_atoms(
    domains: list[LabeledDistribution],
    n_atom: int,
    shift: float = 0.1,
    seed: int = 0,
) -> list[LabeledDistribution]:
    """One atom per domain: a stratified sample nudged towards the others.

    Atom k is n_atom points sampled classwise from domain k, displaced by
    shift * (mean of the other domains' pooled points - mean of domain k).
    Per-class counts are identical across atoms.
    """
    K = len(domains)
    if K < 2:
        raise ValueError(
            "init_atoms needs at least two domains (the cross-domain mean "
            "is undefined for a single domain)"
        )
    if not 0.0 <= shift <= 1.0:
        raise ValueError(f"shift must lie in [0, 1], got {shift}")
    n_classes = domains[0].n_classes
    d = domains[0].support.shape[1]
    for k, dom in enumerate(domains):
        if dom.n_classes != n_classes:
            raise ValueError(f"domain {k} has n_classes={dom.n_classes} != {n_classes}")
        if dom.support.shape[1] != d:
            raise ValueError(f"domain {k} has dimension {dom.support.shape[1]} != {d}")

    freqs = np.zeros(n_classes)
    for dom in domains:
        freqs += dom.class_counts() / dom.base.n_points
    quotas = class_quotas(freqs, n_atom)

    rng = np.random.default_rng(seed)
    atoms = []
    for k, dom in enumerate(domains):
        chunks = []
        for c in range(n_classes):
            pool = np.flatnonzero(dom.labels == c)
            if pool.size < quotas[c]:
                raise ValueError(
                    f"domain {k} has {pool.size} points of class {c} but the "
                    f"atom quota is {quotas[c]}"
                )
            chunks.append(rng.choice(pool, size=quotas[c], replace=False))
        idx = np.concatenate(chunks)
        support = dom.support[idx].copy()
        mu_k = dom.support.mean(axis=0)
        others = np.concatenate(
            [d2.support for j, d2 in enumerate(domains) if j != k], axis=0
        )
        support += shift * (others.mean(axis=0) - mu_k)
        labels = np.repeat(np.arange(n_classes), quotas)
        atoms.append(LabeledDistribution.uniform(support, labels, n_classes))
    return atoms


def labeled_ground_cost(
    A: LabeledDistribution, B: LabeledDistribution, beta: float
) -> np.ndarray:
    """Squared Euclidean cost plus beta wherever class labels disagree."""
    if A.support.shape[1] != B.support.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {A.support.shape[1]} vs "
            f"{B.support.shape[1]}"
        )
    if A.n_classes != B.n_classes:
        raise ValueError(f"n_classes differ: {A.n_classes} vs {B.n_classes}")
    return label_penalty_cost(A.support, A.labels, B.support, B.labels, beta)


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex_project expects a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex_project expects finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


# ---------------------------------------------------------------------------
# differentiable reconstruction loss (torch internals)
# ---------------------------------------------------------------------------

def _sqcost_t(X: torch.Tensor, Y: torch.Tensor) -> torch.Tensor:
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    return sq.clamp_min(0.0)


def _labeled_cost_t(X, lx, Y, ly, beta: float) -> torch.Tensor:
    C = _sqcost_t(X, Y)
    if beta > 0:
        C = C + beta * (lx[:, None] != ly[None, :]).to(C.dtype)
    return C


def _sinkhorn_t(C: torch.Tensor, epsilon: float | None, n_iters: int) -> torch.Tensor:
    # Fixed iteration count keeps the unrolled graph a smooth function of
    # its inputs (no tolerance-triggered jumps under finite differencing).
    # C may be batched (..., n, m); uniform marginals throughout.
    eps = (
        0.1 * C.mean(dim=(-2, -1), keepdim=True) + 1e-9
        if epsilon is None
        else epsilon
    )
    n, m = C.shape[-2], C.shape[-1]
    loga = -math.log(n)
    logb = -math.log(m)
    f = torch.zeros(C.shape[:-1], dtype=C.dtype)
    g = torch.zeros((*C.shape[:-2], m), dtype=C.dtype)
    for _ in range(n_iters):
        f = _eps_mul(eps, loga - torch.logsumexp((g.unsqueeze(-2) - C) / eps, dim=-1))
        g = _eps_mul(eps, logb - torch.logsumexp((f.unsqueeze(-1) - C) / eps, dim=-2))
    return torch.exp((f.unsqueeze(-1) + g.unsqueeze(-2) - C) / eps)


def _eps_mul(eps, x):
    if isinstance(eps, torch.Tensor):
        return eps.squeeze(-1) * x
    return eps * x


def _unrolled_barycenter_t(
    atoms_stack, atom_labels, coords_row, X0, x_labels,
    beta, epsilon, n_inner, sinkhorn_iters,
):
    # atoms_stack: (K, m, d); one batched Sinkhorn per inner step covers all
    # atoms at once (identical label patterns make the costs stackable).
    X = X0
    nb = X0.shape[0]
    penalty = None
    if beta > 0:
        penalty = beta * (x_labels[:, None] != atom_labels[None, :]).to(X0.dtype)
    for _ in range(n_inner):
        C = _batched_cost(X, atoms_stack, penalty)
        P = _sinkhorn_t(C, epsilon, sinkhorn_iters)
        maps = nb * torch.bmm(P, atoms_stack)  # (K, nb, d)
        X = (coords_row[:, None, None] * maps).sum(dim=0)
    return X


def _batched_cost(X, atoms_stack, penalty):
    sq = (
        (X * X).sum(1)[None, :, None]
        + (atoms_stack * atoms_stack).sum(2)[:, None, :]
        - 2.0 * torch.einsum("nd,kmd->knm", X, atoms_stack)
    ).clamp_min(0.0)
    if penalty is not None:
        sq = sq + penalty.unsqueeze(0)
    return sq


def reconstruction_loss(
    atom_batches: list[np.ndarray],
    atom_batch_labels: list[np.ndarray],
    coords: np.ndarray,
    domain_batches: list[np.ndarray],
    domain_batch_labels: list[np.ndarray],
    warm_starts: list[np.ndarray],
    warm_labels: list[np.ndarray],
    beta: float,
    epsilon: float | None = None,
    n_inner: int = 5,
    sinkhorn_iters: int = 60,
    with_grads: bool = False,
):
    """Total labeled-Sinkhorn reconstruction loss of the domains.

    For each domain row of `coords`, runs `n_inner` unrolled fixed-point
    steps of the label-aware entropic barycenter of the atom batches from
    the given warm start, then evaluates the labeled Sinkhorn cost to the
    domain batch.  Returns (loss, atom_grads, coords_grad, new_warm_starts);
    the gradient slots are None unless `with_grads`.

    This single code path is used by each training step and by the
    finite-difference gradient check.
    """
    first = np.asarray(atom_batch_labels[0])
    for lab in atom_batch_labels[1:]:
        if not np.array_equal(np.asarray(lab), first):
            raise ValueError(
                "atom batches must share one label pattern (equal per-class "
                "quotas) so their transport costs can be stacked"
            )
    atoms_t = [
        torch.tensor(a, dtype=_DTYPE, requires_grad=with_grads)
        for a in atom_batches
    ]
    atoms_stack = torch.stack(atoms_t)
    alab_t = torch.as_tensor(first, dtype=torch.int64)
    coords_t = torch.tensor(coords, dtype=_DTYPE, requires_grad=with_grads)

    total = torch.zeros((), dtype=_DTYPE)
    new_warm = []
    for ell, (Dl, Dlab) in enumerate(zip(domain_batches, domain_batch_labels)):
        X0 = torch.as_tensor(warm_starts[ell], dtype=_DTYPE)
        xlab = torch.as_tensor(warm_labels[ell], dtype=torch.int64)
        X = _unrolled_barycenter_t(
            atoms_stack, alab_t, coords_t[ell], X0, xlab,
            beta, epsilon, n_inner, sinkhorn_iters,
        )
        Dl_t = torch.as_tensor(Dl, dtype=_DTYPE)
        dlab_t = torch.as_tensor(Dlab, dtype=torch.int64)
        C = _labeled_cost_t(X, xlab, Dl_t, dlab_t, beta)
        P = _sinkhorn_t(C, epsilon, sinkhorn_iters)
        total = total + (P * C).sum()
        new_warm.append(X.detach().numpy())

    if not with_grads:
        return float(total.detach()), None, None, new_warm
    total.backward()
    atom_grads = [
        t.grad.numpy() if t.grad is not None else np.zeros_like(b)
        for t, b in zip(atoms_t, atom_batches)
    ]
    coords_grad = (
        coords_t.grad.numpy()
        if coords_t.grad is not None
        else np.zeros_like(coords)
    )
    return float(total.detach()), atom_grads, coords_grad, new_warm


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _stratified_indices(rng, labels, classes, quotas) -> np.ndarray:
    chunks = []
    for c, q in zip(classes, quotas):
        pool = np.flatnonzero(labels == c)
        chunks.append(rng.choice(pool, size=q, replace=pool.size < q))
    return np.concatenate(chunks)


def _auto_atom_size(domains: list[LabeledDistribution], cap: int = 200) -> int:
    """Largest atom size whose stratified per-class quotas every domain can
    fill without replacement (pseudo-label imbalance shrinks it below the
    plain min-domain-size default)."""
    n_classes = domains[0].n_classes
    freqs = np.zeros(n_classes)
    for dom in domains:
        freqs += dom.class_counts() / dom.base.n_points
    mins = np.min([dom.class_counts() for dom in domains], axis=0)
    n = min(cap, min(dom.base.n_points for dom in domains))
    while n > n_classes:
        if np.all(class_quotas(freqs, n) <= mins):
            return n
        n -= 1
    return n_classes


def train_dictionary(
    domains: list[LabeledDistribution],
    k_atoms: int | None = None,
    n_atom: int | None = None,
    lr: float = 0.1,
    batch_size: int | None = None,
    n_iter: int = 200,
    epsilon: float | None = None,
    beta: float | None = None,
    seed: int = 0,
    init_atoms_result: list[LabeledDistribution] | None = None,
    init_coords: np.ndarray | None = None,
    shift: float = 0.1,
    n_inner: int = 5,
    sinkhorn_iters: int = 60,
) -> Dictionary:
    """Learn atoms and barycentric coordinates by stochastic gradient descent.

    Per iteration: class-stratified minibatches are drawn from every domain
    and every atom, the differentiable barycenter/Sinkhorn loss is evaluated
    (see `reconstruction_loss`), and plain SGD steps are applied to the atom
    support points and to the coordinate rows, which are re-projected onto
    the simplex after every step.  `n_iter=0` returns the initialization
    unchanged (used by degenerate-path smoke checks).
    """
    if not domains:
        raise ValueError("train_dictionary needs at least one domain")
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    n_classes = domains[0].n_classes
    for k, dom in enumerate(domains):
        if dom.n_classes != n_classes:
            raise ValueError(f"domain {k} has n_classes={dom.n_classes} != {n_classes}")
    if batch_size is None:
        batch_size = 8 * n_classes
    if batch_size < n_classes:
        raise ValueError(
            f"batch_size={batch_size} < n_classes={n_classes}"
        )
    if n_atom is None and init_atoms_result is None:
        n_atom = _auto_atom_size(domains)

    rng = np.random.default_rng(seed)
    if init_atoms_result is not None:
        atoms = init_atoms_result
        if k_atoms is not None and k_atoms != len(atoms):
            raise ValueError(
                f"k_atoms={k_atoms} but {len(atoms)} initial atoms were given"
            )
    else:
        if k_atoms is not None and k_atoms != len(domains):
            raise ValueError(
                "without an explicit initialization, the number of atoms "
                f"must equal the number of domains ({len(domains)}), got {k_atoms}"
            )
        atoms = init_atoms(domains, n_atom, shift, int(rng.integers(2**31)))
    K = len(atoms)
    atom_labels = [a.labels.copy() for a in atoms]
    atom_supports = [a.support.copy() for a in atoms]

    if init_coords is not None:
        coords = np.asarray(init_coords, dtype=np.float64).copy()
        if coords.shape != (len(domains), K):
            raise ValueError(
                f"init_coords shape {coords.shape} != ({len(domains)}, {K})"
            )
    else:
        coords = np.full((len(domains), K), 1.0 / K)

    if beta is None:
        beta = default_label_penalty(
            np.concatenate([dom.support for dom in domains], axis=0),
            seed=int(rng.integers(2**31)),
        )

    # Per-domain batch composition: equal quotas over the classes present.
    batch_plan = []
    for dom in domains:
        present = np.flatnonzero(dom.class_counts() > 0)
        quotas = class_quotas(np.ones(present.size), batch_size)
        batch_plan.append((present, quotas, np.repeat(present, quotas)))

    warm = [None] * len(domains)
    trace: list[float] = []
    for it in range(n_iter):
        dom_batches, dom_batch_labels = [], []
        atom_batches_per_dom = []
        for ell, dom in enumerate(domains):
            present, quotas, pattern = batch_plan[ell]
            didx = _stratified_indices(rng, dom.labels, present, quotas)
            dom_batches.append(dom.support[didx])
            dom_batch_labels.append(pattern)
            abatch = []
            for k in range(K):
                aidx = _stratified_indices(rng, atom_labels[k], present, quotas)
                abatch.append((aidx, atom_supports[k][aidx]))
            atom_batches_per_dom.append(abatch)
            if warm[ell] is None:
                warm[ell] = sum(
                    coords[ell, k] * abatch[k][1] for k in range(K)
                )

        # One graph per domain; atoms appear as domain-specific minibatches,
        # so gradients are scattered back into the full atom arrays.
        loss_total = 0.0
        atom_grad_full = [np.zeros_like(s) for s in atom_supports]
        coords_grad = np.zeros_like(coords)
        for ell in range(len(domains)):
            pattern = batch_plan[ell][2]
            abatch = atom_batches_per_dom[ell]
            loss, agrads, cgrad, new_warm = reconstruction_loss(
                [b for _, b in abatch],
                [pattern] * K,
                coords[ell : ell + 1],
                [dom_batches[ell]],
                [dom_batch_labels[ell]],
                [warm[ell]],
                [pattern],
                beta=beta,
                epsilon=epsilon,
                n_inner=n_inner,
                sinkhorn_iters=sinkhorn_iters,
                with_grads=True,
            )
            loss_total += loss
            warm[ell] = new_warm[0]
            coords_grad[ell] += cgrad[0]
            for k in range(K):
                np.add.at(atom_grad_full[k], abatch[k][0], agrads[k])
        if not np.isfinite(loss_total):
            raise SolverError(f"non-finite dictionary loss at iteration {it}")
        trace.append(loss_total)

        for k in range(K):
            atom_supports[k] -= lr * atom_grad_full[k]
        coords -= lr * coords_grad
        for ell in range(coords.shape[0]):
            coords[ell] = simplex_project(coords[ell])

    final_atoms = [
        LabeledDistribution.uniform(atom_supports[k], atom_labels[k], n_classes)
        for k in range(K)
    ]
    config = {
        "k_atoms": K,
        "n_atom": int(final_atoms[0].base.n_points),
        "lr": lr,
        "batch_size": batch_size,
        "n_iter": n_iter,
        "epsilon": epsilon,
        "beta": beta,
        "seed": seed,
        "shift": shift,
        "n_inner": n_inner,
        "sinkhorn_iters": sinkhorn_iters,
    }
    return Dictionary(final_atoms, coords, n_classes, config, trace)


# ---------------------------------------------------------------------------
# barycentric regression (inference-time coordinates)
# ---------------------------------------------------------------------------

@dataclass
class RegressionResult:
    alpha: np.ndarray
    objective: float
    objective_trace: list[float]


def barycentric_regression(
    atoms: list[LabeledDistribution],
    target: DiscreteDistribution,
    lr: float = 0.2,
    n_iter: int = 40,
    epsilon: float | None = None,
    seed: int = 0,
    n_inner: int = 5,
    sinkhorn_iters: int = 30,
    batch_cap: int = 128,
    support_cap: int = 128,
    stop_tol: float = 1e-6,
) -> RegressionResult:
    """Fit simplex weights so the atoms' barycenter matches `target`.

    Atoms are frozen and their labels ignored: the ground cost to the
    unlabeled target is feature-only.  Projected gradient descent on the
    weights with max-normalized steps on a 1/sqrt(t) schedule (raw unrolled
    gradients vary over orders of magnitude and a fixed step either stalls
    or catapults across the simplex).  Stops early once the weights pin.
    Returns the optimized weights and the final objective.
    """
    if not atoms:
        raise ValueError("barycentric_regression needs at least one atom")
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    clouds = [a.support for a in atoms]
    d = clouds[0].shape[1]
    if target.dim != d:
        raise ValueError(f"target dimension {target.dim} != atom dimension {d}")
    K = len(clouds)
    rng = np.random.default_rng(seed)
    stack = np.stack(clouds)

    def _target_batch():
        n = target.n_points
        if n <= batch_cap:
            return target.support
        return target.support[rng.choice(n, batch_cap, replace=False)]

    def _loss_and_grad(alpha_np, X_warm, tb, with_grad=True):
        alpha_t = torch.tensor(alpha_np, dtype=_DTYPE, requires_grad=with_grad)
        X = torch.as_tensor(X_warm, dtype=_DTYPE)
        nb = X.shape[0]
        atoms_stack = torch.as_tensor(stack, dtype=_DTYPE)
        for _ in range(n_inner):
            C = _batched_cost(X, atoms_stack, None)
            P = _sinkhorn_t(C, epsilon, sinkhorn_iters)
            maps = nb * torch.bmm(P, atoms_stack)
            X = (alpha_t[:, None, None] * maps).sum(dim=0)
        C = _sqcost_t(X, torch.as_tensor(tb, dtype=_DTYPE))
        P = _sinkhorn_t(C, epsilon, sinkhorn_iters)
        loss = (P * C).sum()
        if with_grad:
            loss.backward()
            return float(loss.detach()), alpha_t.grad.numpy(), X.detach().numpy()
        return float(loss.detach()), None, X.detach().numpy()

    alpha = np.full(K, 1.0 / K)
    n_bary = clouds[0].shape[0]
    keep = (
        np.arange(n_bary)
        if n_bary <= support_cap
        else rng.choice(n_bary, support_cap, replace=False)
    )
    if K == 1:
        X0 = clouds[0][keep].copy()
        loss, _, _ = _loss_and_grad(alpha, X0, _target_batch(), with_grad=False)
        return RegressionResult(np.array([1.0]), loss, [loss])

    X_warm = sum(alpha[k] * clouds[k][keep] for k in range(K))
    trace = []
    stalled = 0
    for t in range(n_iter):
        loss, grad, X_warm = _loss_and_grad(alpha, X_warm, _target_batch())
        if not np.isfinite(loss):
            raise SolverError(f"non-finite regression loss at iteration {t}")
        trace.append(loss)
        scale = np.abs(grad).max()
        step = lr / np.sqrt(1.0 + t)
        new_alpha = simplex_project(alpha - step * grad / (scale + 1e-12))
        stalled = stalled + 1 if np.abs(new_alpha - alpha).max() < stop_tol else 0
        alpha = new_alpha
        if stalled >= 3:
            break
    final, _, _ = _loss_and_grad(alpha, X_warm, _target_batch(), with_grad=False)
    trace.append(final)
    return RegressionResult(alpha, final, trace)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def dictionary_to_arrays(d: Dictionary, prefix: str = "") -> dict[str, np.ndarray]:
    arrays = {
        f"{prefix}coords": d.coords,
        f"{prefix}n_classes": np.array([d.n_classes], dtype=np.int64),
        f"{prefix}k_atoms": np.array([d.k_atoms], dtype=np.int64),
        f"{prefix}loss_trace": np.asarray(d.loss_trace, dtype=np.float64),
        f"{prefix}config_json": np.frombuffer(
            json.dumps(d.config, sort_keys=True).encode(), dtype=np.uint8
        ),
    }
    for k, atom in enumerate(d.atoms):
        arrays[f"{prefix}atom_{k}_support"] = atom.support
        arrays[f"{prefix}atom_{k}_labels"] = atom.labels
    return arrays


def dictionary_from_arrays(arrays, prefix: str = "") -> Dictionary:
    n_classes = int(arrays[f"{prefix}n_classes"][0])
    k_atoms = int(arrays[f"{prefix}k_atoms"][0])
    atoms = [
        LabeledDistribution.uniform(
            arrays[f"{prefix}atom_{k}_support"],
            arrays[f"{prefix}atom_{k}_labels"],
            n_classes,
        )
        for k in range(k_atoms)
    ]
    config = json.loads(bytes(arrays[f"{prefix}config_json"]).decode())
    return Dictionary(
        atoms,
        arrays[f"{prefix}coords"],
        n_classes,
        config,
        list(map(float, arrays[f"{prefix}loss_trace"])),
    )


def save_dictionary(d: Dictionary, path) -> None:
    write_archive(path, DICT_FORMAT, dictionary_to_arrays(d))


def load_dictionary(path) -> Dictionary:
    return dictionary_from_arrays(read_archive(path, DICT_FORMAT))
