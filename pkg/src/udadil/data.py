"""Dataset files, run configuration, and synthetic benchmark generation.

Formats:

* CSV -- one row per point, comma-separated, '.' decimal, no quoting.  An
  optional header row may name a final integer column ``label`` holding
  ground-truth labels.  Values are written at 17 significant digits, which
  round-trips float64 exactly.
* UDDL binary -- little-endian: magic ``UDDL``, uint32 version (1), uint64
  n and d, uint8 has_labels, n*d float64 features, then n int32 labels.
* Config files -- flat ``key = value`` text, '#' comments allowed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .pipeline import DomainDataset

_MAGIC = b"UDDL"
_VERSION = 1


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

def _parse_csv(path: Path) -> DomainDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataFormatError(f"{path}: empty file")

    header = None
    try:
        [float(cell) for cell in rows[0]]
    except ValueError:
        header = rows[0]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header but no data rows")
    has_labels = header is not None and header[-1].strip() == "label"
    expected = len(header) if header is not None else len(rows[0])
    feats = []
    labels = []
    for lineno, row in enumerate(rows, start=2 if header is not None else 1):
        if len(row) != expected:
            raise DataFormatError(
                f"{path}: line {lineno} has {len(row)} cells, expected {expected}"
            )
        try:
            values = [float(cell) for cell in row]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if has_labels:
            if values[-1] != int(values[-1]):
                raise DataFormatError(
                    f"{path}: line {lineno}: label {row[-1]!r} is not an integer"
                )
            labels.append(int(values[-1]))
            values = values[:-1]
        feats.append(values)
    return DomainDataset(
        np.asarray(feats, dtype=np.float64),
        np.asarray(labels, dtype=np.int64) if has_labels else None,
        name=path.stem,
    )


def _parse_binary(path: Path) -> DomainDataset:
    blob = path.read_bytes()

    def need(offset: int, count: int):
        if len(blob) < offset + count:
            raise DataFormatError(
                f"{path}: truncated at offset {len(blob)}, needed {offset + count} bytes"
            )

    need(0, 4 + struct.calcsize("<IQQB"))
    if blob[:4] != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r} at offset 0")
    version, n, d, has_labels = struct.unpack_from("<IQQB", blob, 4)
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version} at offset 4")
    off = 4 + struct.calcsize("<IQQB")
    need(off, 8 * n * d)
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    off += 8 * n * d
    labels = None
    if has_labels:
        need(off, 4 * n)
        labels = np.frombuffer(blob, dtype="<i4", count=n, offset=off).astype(np.int64)
        off += 4 * n
    if len(blob) != off:
        raise DataFormatError(f"{path}: {len(blob) - off} trailing bytes at offset {off}")
    return DomainDataset(feats.astype(np.float64), labels, name=path.stem)


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "binary-matrix"):
            raise ValueError(f"unknown format {fmt!r}; use 'csv' or 'binary-matrix'")
        return fmt
    if path.suffix.lower() == ".csv":
        return "csv"
    if path.suffix.lower() in (".uddl", ".bin"):
        return "binary-matrix"
    raise ValueError(f"cannot infer format from {path.name!r}; pass fmt=")


def load_dataset(path, fmt: str | None = None) -> DomainDataset:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: no such file")
    if _format_of(path, fmt) == "csv":
        return _parse_csv(path)
    return _parse_binary(path)


def save_dataset(ds: DomainDataset, path, fmt: str | None = None) -> None:
    path = Path(path)
    if _format_of(path, fmt) == "csv":
        lines = []
        if ds.truth_labels is not None:
            lines.append(
                ",".join([f"f{j}" for j in range(ds.dim)] + ["label"])
            )
        for i in range(ds.n_points):
            row = ",".join(f"{x:.17g}" for x in ds.features[i])
            if ds.truth_labels is not None:
                row += f",{ds.truth_labels[i]}"
            lines.append(row)
        path.write_text("\n".join(lines) + "\n")
    else:
        has_labels = ds.truth_labels is not None
        parts = [
            _MAGIC,
            struct.pack("<IQQB", _VERSION, ds.n_points, ds.dim, int(has_labels)),
            np.ascontiguousarray(ds.features, dtype="<f8").tobytes(),
        ]
        if has_labels:
            parts.append(np.ascontiguousarray(ds.truth_labels, dtype="<i4").tobytes())
        path.write_bytes(b"".join(parts))


def read_labels_file(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not out:
        raise DataFormatError(f"{path}: no labels found")
    return np.asarray(out, dtype=np.int64)


def write_labels_file(labels, path) -> None:
    Path(path).write_text("\n".join(str(int(v)) for v in np.asarray(labels)) + "\n")


def write_vector_file(values, path) -> None:
    Path(path).write_text(
        "\n".join(f"{float(v):.17g}" for v in np.asarray(values)) + "\n"
    )


# ---------------------------------------------------------------------------
# flat key=value configs
# ---------------------------------------------------------------------------

def _parse_value(raw: str, kind, key: str, path):
    raw = raw.strip()
    if kind in (int, float) and raw == "auto":
        return "auto"
    try:
        return kind(raw)
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad value for {key}: {exc}") from exc


def _read_kv(path, known: dict) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}: line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise DataFormatError(f"{path}: line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(raw, known[key], key, path)
    return out


def _write_kv(obj, path) -> None:
    lines = []
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, float):
            lines.append(f"{f.name} = {value:.17g}")
        else:
            lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class RunConfig:
    """Training hyperparameters; 'auto' leaves the library default in charge."""

    n_clusters: int = 4
    rounds: int = 3
    seed: int = 0
    lr: float = 0.1
    n_iter: int = 200
    batch_size: int | str = "auto"
    epsilon: float | str = "auto"
    beta: float | str = "auto"
    n_atom: int | str = "auto"
    shift: float = 0.1
    reference_domain: str = "auto"
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 1000
    barycenter_tol: float = 1e-5
    barycenter_max_iter: int = 100
    early_stop_change: float = 0.01

    def __post_init__(self):
        for key in ("n_clusters", "rounds", "n_iter", "sinkhorn_max_iter",
                    "barycenter_max_iter"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be >= 1")
        for key in ("batch_size", "n_atom"):
            v = getattr(self, key)
            if v != "auto" and int(v) < 1:
                raise ValueError(f"{key} must be >= 1 or 'auto'")
        for key in ("lr", "sinkhorn_tol", "barycenter_tol", "early_stop_change"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be > 0")
        if not 0.0 <= self.shift <= 1.0:
            raise ValueError("shift must lie in [0, 1]")
        if self.epsilon != "auto" and float(self.epsilon) <= 0:
            raise ValueError("epsilon must be > 0 or 'auto'")
        if self.beta != "auto" and float(self.beta) < 0:
            raise ValueError("beta must be >= 0 or 'auto'")

    def dictionary_kwargs(self) -> dict:
        def opt(v):
            return None if v == "auto" else v

        return {
            "lr": self.lr,
            "n_iter": self.n_iter,
            "batch_size": opt(self.batch_size),
            "epsilon": opt(self.epsilon),
            "beta": opt(self.beta),
            "n_atom": opt(self.n_atom),
            "shift": self.shift,
        }

    @classmethod
    def load(cls, path) -> "RunConfig":
        kinds = {
            "n_clusters": int, "rounds": int, "seed": int, "lr": float,
            "n_iter": int, "batch_size": int, "epsilon": float, "beta": float,
            "n_atom": int, "shift": float, "reference_domain": str,
            "sinkhorn_tol": float, "sinkhorn_max_iter": int,
            "barycenter_tol": float, "barycenter_max_iter": int,
            "early_stop_change": float,
        }
        return cls(**_read_kv(path, kinds))

    def save(self, path) -> None:
        _write_kv(self, path)


@dataclass
class SyntheticSpec:
    """Shape of a synthetic multi-domain benchmark."""

    n_domains: int = 3
    n_clusters: int = 4
    d: int = 10
    points_per_cluster: int = 50
    cluster_separation: float = 4.0
    translation_scale: float = 1.0
    rotation_scale: float = 0.5
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_domains < 1 or self.n_clusters < 1 or self.d < 1:
            raise ValueError("n_domains, n_clusters and d must be >= 1")
        if self.points_per_cluster < 2:
            raise ValueError("points_per_cluster must be >= 2")
        if self.cluster_separation <= 0:
            raise ValueError("cluster_separation must be > 0")
        if self.translation_scale < 0 or self.rotation_scale < 0 or self.noise_sigma < 0:
            raise ValueError("shift scales and noise_sigma must be >= 0")

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        kinds = {
            "n_domains": int, "n_clusters": int, "d": int,
            "points_per_cluster": int, "cluster_separation": float,
            "translation_scale": float, "rotation_scale": float,
            "noise_sigma": float, "seed": int,
        }
        return cls(**_read_kv(path, kinds))

    def save(self, path) -> None:
        _write_kv(self, path)


def _random_rotation(rng, d: int, max_angle: float) -> np.ndarray:
    # Rotation by a bounded angle in a random 2-plane; identity for d == 1.
    angle = rng.uniform(0.0, max_angle)
    if d < 2:
        return np.eye(d)
    q, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    u, v = q[:, 0], q[:, 1]
    return (
        np.eye(d)
        + (np.cos(angle) - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + np.sin(angle) * (np.outer(u, v) - np.outer(v, u))
    )


def synth_generate(spec: SyntheticSpec) -> list[DomainDataset]:
    """Shared cluster sample, one rigid per-domain disturbance each.

    Cluster means are rejection-sampled Gaussians with pairwise distance at
    least `cluster_separation`; every domain is the same base point set
    under its own seeded rotation (angle <= rotation_scale) and translation
    (norm <= translation_scale).
    """
    rng = np.random.default_rng(spec.seed)
    k, d = spec.n_clusters, spec.d
    means = None
    for _ in range(10000):
        cand = rng.normal(size=(k, d)) * spec.cluster_separation
        dist = np.sqrt(
            np.maximum(
                ((cand[:, None, :] - cand[None, :, :]) ** 2).sum(-1), 0.0
            )
        )
        if k == 1 or dist[np.triu_indices(k, 1)].min() >= spec.cluster_separation:
            means = cand
            break
    if means is None:
        raise ValueError(
            "could not place cluster means after 10000 attempts; lower "
            "cluster_separation or raise d"
        )

    ppc = spec.points_per_cluster
    base = np.concatenate(
        [means[c] + spec.noise_sigma * rng.normal(size=(ppc, d)) for c in range(k)]
    )
    labels = np.repeat(np.arange(k), ppc)

    domains = []
    for m in range(spec.n_domains):
        R = _random_rotation(rng, d, spec.rotation_scale)
        direction = rng.normal(size=d)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else direction
        t = rng.uniform(0.0, spec.translation_scale) * direction
        domains.append(
            DomainDataset(base @ R.T + t, labels.copy(), name=f"domain_{m:02d}")
        )
    return domains
