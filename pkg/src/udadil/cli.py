"""Command-line interface.

Subcommands: synth, train, infer, evaluate, baseline-kmeans, benchmark.
Exit codes: 0 success, 1 usage error, 2 data/solver error.  All randomness
flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    RunConfig,
    SyntheticSpec,
    load_dataset,
    read_labels_file,
    save_dataset,
    synth_generate,
    write_labels_file,
    write_vector_file,
)
from .errors import UdadilError
from .metrics import evaluate, kmeans
from .pipeline import infer, load_model, save_model, train

_DATASET_SUFFIXES = (".csv", ".uddl", ".bin")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="udadil", description=__doc__)
    p.add_argument("--version", action="version", version=f"udadil {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[], help="generate synthetic domain-shifted datasets")
    sp.add_argument("--spec", required=True, help="SyntheticSpec key=value file")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--format", choices=["csv", "binary-matrix"], default="csv")
    sp.add_argument("--seed", type=int, default=None, help="override the spec seed")

    tp = sub.add_parser("train", help="train a model on source datasets")
    tp.add_argument("sources", nargs="+", help="two or more dataset files")
    tp.add_argument("--out", required=True, help="model archive path")
    tp.add_argument("--config", default=None, help="RunConfig key=value file")
    tp.add_argument("--log", default=None, help="run-log JSON path (default: OUT.log.json)")
    tp.add_argument("--seed", type=int, default=None, help="override the config seed")
    tp.add_argument("--threads", type=int, default=1)

    ip = sub.add_parser("infer", help="cluster an unseen target domain")
    ip.add_argument("--model", required=True)
    ip.add_argument("--target", required=True)
    ip.add_argument("--out", required=True, help="labels output (one integer per line)")
    ip.add_argument("--alpha-out", default=None, help="default: OUT.alpha.txt")
    ip.add_argument("--seed", type=int, default=0)
    ip.add_argument("--threads", type=int, default=1)

    ep = sub.add_parser("evaluate", help="score predictions against ground truth")
    ep.add_argument(
        "--domain",
        nargs=3,
        action="append",
        metavar=("NAME", "PRED", "TRUTH"),
        required=True,
        help="prediction labels file and truth (labels file or labeled dataset)",
    )
    ep.add_argument("--out", default=None, help="report CSV path (default: stdout)")

    kp = sub.add_parser("baseline-kmeans", help="K-Means labels for one dataset")
    kp.add_argument("--data", required=True)
    kp.add_argument("--k", type=int, required=True)
    kp.add_argument("--out", required=True)
    kp.add_argument("--seed", type=int, default=0)
    kp.add_argument("--restarts", type=int, default=10)

    bp = sub.add_parser(
        "benchmark",
        help="hold-one-out comparison of the pipeline against K-Means",
    )
    group = bp.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="SyntheticSpec file (generate domains)")
    group.add_argument("--data", nargs="+", help="labeled dataset files")
    bp.add_argument("--config", default=None)
    bp.add_argument("--n-clusters", type=int, default=None)
    bp.add_argument("--seed", type=int, default=None)
    bp.add_argument("--out", default=None, help="report CSV path (default: stdout)")
    bp.add_argument("--threads", type=int, default=1)
    return p


def _set_threads(n: int) -> None:
    import torch

    torch.set_num_threads(max(1, n))


def _load_truth(path: str):
    p = Path(path)
    if p.suffix.lower() in _DATASET_SUFFIXES:
        ds = load_dataset(p)
        if ds.truth_labels is None:
            raise UdadilError(f"{path}: dataset has no label column")
        return ds.truth_labels
    return read_labels_file(p)


def _cmd_synth(args) -> int:
    spec = SyntheticSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if args.format == "csv" else ".uddl"
    for ds in synth_generate(spec):
        path = out_dir / f"{ds.name}{ext}"
        save_dataset(ds, path, args.format)
        print(path)
    return 0


def _run_config(path: str | None) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


def _cmd_train(args) -> int:
    _set_threads(args.threads)
    cfg = _run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    sources = [load_dataset(p) for p in args.sources]
    reference = None if cfg.reference_domain == "auto" else cfg.reference_domain
    model = train(
        sources,
        cfg.n_clusters,
        rounds=cfg.rounds,
        dict_config=cfg.dictionary_kwargs(),
        seed=cfg.seed,
        reference=reference,
        early_stop_change=cfg.early_stop_change,
    )
    save_model(model, args.out)
    log_path = args.log or f"{args.out}.log.json"
    Path(log_path).write_text(
        json.dumps({"config": model.config, "run_log": model.run_log},
                   indent=2, sort_keys=True) + "\n"
    )
    print(args.out)
    return 0


def _cmd_infer(args) -> int:
    _set_threads(args.threads)
    model = load_model(args.model)
    target = load_dataset(args.target)
    assignment, alpha = infer(model, target, seed=args.seed)
    write_labels_file(assignment.labels, args.out)
    write_vector_file(alpha, args.alpha_out or f"{args.out}.alpha.txt")
    print(args.out)
    return 0


def _cmd_evaluate(args) -> int:
    predictions = {}
    truths = {}
    for name, pred_path, truth_path in args.domain:
        predictions[name] = read_labels_file(pred_path)
        truths[name] = _load_truth(truth_path)
    report = evaluate(predictions, truths)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_baseline_kmeans(args) -> int:
    ds = load_dataset(args.data)
    result = kmeans(ds.features, args.k, seed=args.seed, n_restarts=args.restarts)
    write_labels_file(result.assignment.labels, args.out)
    print(args.out)
    return 0


def _cmd_benchmark(args) -> int:
    _set_threads(args.threads)
    cfg = _run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.spec:
        spec = SyntheticSpec.load(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
        domains = synth_generate(spec)
        n_clusters = args.n_clusters or spec.n_clusters
    else:
        domains = [load_dataset(p) for p in args.data]
        for ds in domains:
            if ds.truth_labels is None:
                raise UdadilError(f"dataset {ds.name!r} has no ground-truth labels")
        if args.n_clusters:
            n_clusters = args.n_clusters
        elif args.config:
            n_clusters = cfg.n_clusters
        else:
            n_clusters = int(
                np.unique(np.concatenate([d.truth_labels for d in domains])).size
            )
    if len(domains) < 3:
        raise UdadilError("benchmark needs at least three domains (train on N-1, hold one out)")

    reference = None if cfg.reference_domain == "auto" else cfg.reference_domain
    from .metrics import adjusted_rand_index, clustering_accuracy

    lines = ["heldout,n_points,ari_udadil,ari_kmeans,acc_udadil,acc_kmeans"]
    scores = []
    for i, target in enumerate(domains):
        sources = [d for j, d in enumerate(domains) if j != i]
        model = train(
            sources,
            n_clusters,
            rounds=cfg.rounds,
            dict_config=cfg.dictionary_kwargs(),
            seed=cfg.seed,
            reference=reference,
            early_stop_change=cfg.early_stop_change,
        )
        assignment, _ = infer(model, target, seed=cfg.seed)
        km = kmeans(target.features, n_clusters, seed=cfg.seed)
        row = (
            adjusted_rand_index(assignment, target.truth_labels),
            adjusted_rand_index(km.assignment, target.truth_labels),
            clustering_accuracy(assignment, target.truth_labels),
            clustering_accuracy(km.assignment, target.truth_labels),
        )
        scores.append(row)
        lines.append(
            f"{target.name},{target.n_points},"
            + ",".join(f"{v:.6f}" for v in row)
        )
    means = np.mean(np.asarray(scores), axis=0)
    lines.append("mean,," + ",".join(f"{v:.6f}" for v in means))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "evaluate": _cmd_evaluate,
    "baseline-kmeans": _cmd_baseline_kmeans,
    "benchmark": _cmd_benchmark,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (UdadilError, ValueError, OSError) as exc:
        print(f"udadil: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
