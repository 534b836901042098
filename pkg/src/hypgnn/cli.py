"""Command-line entry point: ``hypgnn {gen,train,eval,benchmark,inspect-norms}``.

Exit status is 0 on success, 1 for usage errors (bad flags, invalid ranges,
incompatible checkpoint) and 2 for runtime failures such as a non-finite
loss or an unreadable dataset.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import datasets, training
from .autodiff import NonFiniteError, ShapeError
from .manifolds import KINDS

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("hypgnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_model_flags(p: argparse.ArgumentParser, single_run: bool = True) -> None:
    """Training flags; a benchmark takes its manifolds and dims from its own lists."""
    d = training.TrainConfig()
    if single_run:
        p.add_argument("--manifold", choices=KINDS, default=d.manifold)
        p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--layers", type=int, default=d.layers)
    p.add_argument("--centroids", type=int, default=None, help="number of centroids (default: dim)")
    p.add_argument("--lr-e", type=float, default=d.lr_euclidean, help="Euclidean learning rate")
    p.add_argument("--lr-m", type=float, default=d.lr_manifold, help="manifold learning rate")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch", type=int, default=d.batch_size)
    p.add_argument("--seed", type=int, default=d.seed,
                   help="run seed" if single_run else "first of the repeat seeds")
    p.add_argument("--no-unit-ball", action="store_true", help="disable Euclidean unit-ball clipping")
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--master-node", action="store_true")


def _train_config(args, dim: Optional[int] = None) -> training.TrainConfig:
    try:
        return training.TrainConfig(
            manifold=getattr(args, "manifold", training.TrainConfig.manifold), dim=args.dim if dim is None else dim, layers=args.layers,
            centroids=args.centroids, lr_euclidean=args.lr_e, lr_manifold=args.lr_m,
            epochs=args.epochs, batch_size=args.batch, seed=args.seed,
            unit_ball_normalize=not args.no_unit_ball, bidirectional=args.bidirectional,
            master_node=args.master_node)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypgnn", description="Graph networks on Euclidean and hyperbolic manifolds.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic graph-classification dataset")
    p.add_argument("--classes", default=",".join(datasets.ALGORITHMS), help="comma list of er,ba,ws")
    p.add_argument("--per-class", type=int, default=datasets.GenSpec.per_class)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-min", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--large-scale", action="store_true", help="100-500 nodes, m and k up to ~100")
    p.add_argument("-o", "--out", required=True, type=Path)

    p = sub.add_parser("train", parents=[common], help="train a model and write a checkpoint plus metrics CSV")
    p.add_argument("dataset", type=Path)
    _add_model_flags(p)
    p.add_argument("-o", "--out", type=Path, default=Path("model.ckpt"))
    p.add_argument("--metrics", type=Path, default=None, help="metrics CSV (default: <out>.metrics.csv)")

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset split")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--split", choices=("train", "valid", "test", "all"), default="test")
    p.add_argument("--manifold", choices=KINDS, default=None, help="expected manifold (checked)")
    p.add_argument("--dim", type=int, default=None, help="expected dimension (checked)")
    p.add_argument("-o", "--out", type=Path, default=None, help="optional metrics CSV")

    p = sub.add_parser("benchmark", parents=[common], help="manifold x dimension x seed grid")
    p.add_argument("--dataset", type=Path, default=None, help="dataset file (default: generate desk scale)")
    p.add_argument("--manifolds", default=",".join(training.BENCH_MANIFOLDS))
    p.add_argument("--dims", type=_int_list, default=list(training.BENCH_DIMS))
    p.add_argument("--seeds", type=int, default=5, help="number of repeat seeds")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=datasets.GenSpec.per_class)
    _add_model_flags(p, single_run=False)
    p.add_argument("-o", "--out", type=Path, default=Path("benchmark.csv"))

    p = sub.add_parser("inspect-norms", parents=[common], help="mean point norm of high-degree nodes against all nodes")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--layer", type=int, default=0, help="0 = input embeddings, k = output of layer k")
    p.add_argument("--label", default=None, help="comma list of class ids or names to include (e.g. ba)")
    p.add_argument("--split", choices=("train", "valid", "test", "all"), default="all")
    p.add_argument("-o", "--out", type=Path, default=None, help="optional CSV report")
    return parser


def _graphs(ds: datasets.Dataset, split: str):
    return list(ds.graphs) if split == "all" else ds.subset(split)


def _load_dataset(path: Path) -> datasets.Dataset:
    return datasets.load(path)


def cmd_gen(args) -> int:
    classes = tuple(c.strip().lower() for c in args.classes.split(",") if c.strip())
    base = datasets.GenSpec.large_scale() if args.large_scale else datasets.GenSpec()
    n_lo, n_hi = base.n_range
    spec = datasets.GenSpec(**{**asdict(base), "classes": classes, "per_class": args.per_class,
                               "seed": args.seed,
                               "n_range": (args.n_min or n_lo, args.n_max or n_hi)})
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = datasets.build_dataset(spec)
    datasets.save(ds, args.out)
    print(f"wrote {len(ds)} graphs to {args.out}")
    for algorithm in classes:
        members = [g for g in ds.graphs if g.label == datasets.CLASS_IDS[algorithm]]
        nodes = np.array([g.n for g in members])
        edges = np.array([g.src.size // 2 for g in members])
        print(f"  {algorithm}: {len(members)} graphs, nodes {nodes.mean():.1f} "
              f"[{nodes.min()}-{nodes.max()}], edges {edges.mean():.1f}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _train_config(args)
    ds = _load_dataset(args.dataset)

    def progress(entry):
        log.info("epoch %d train loss %.4f valid %s", entry["epoch"], entry["train"]["loss"],
                 {k: round(v, 4) for k, v in entry["valid"].items()})

    result = training.train(config, ds, callback=progress)
    training.save_checkpoint(result.model, args.out, config, result.report)
    metrics = args.metrics or args.out.with_name(args.out.name + ".metrics.csv")
    training.write_metrics_csv(result.report.csv_rows(), metrics)
    print(f"best epoch {result.report.best_epoch}; valid {_fmt(result.report.valid)}; "
          f"test {_fmt(result.report.test)}")
    print(f"wrote {args.out} and {metrics}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, header = training.load_checkpoint(args.checkpoint)
    if args.dim is not None and args.dim != model.config.dim:
        raise UsageError(f"checkpoint has dim {model.config.dim}, requested {args.dim}")
    if args.manifold is not None and args.manifold != model.config.manifold:
        raise UsageError(f"checkpoint is on {model.config.manifold}, requested {args.manifold}")
    ds = _load_dataset(args.dataset)
    graphs = _graphs(ds, args.split)
    if not graphs:
        raise UsageError(f"split {args.split!r} is empty")
    metrics = training.evaluate(model, graphs)
    print(json.dumps({"split": args.split, **metrics}, sort_keys=True))
    if args.out is not None:
        tc = header.get("train_config") or {}
        base = {"manifold": model.config.manifold, "dim": model.config.dim, "seed": tc.get("seed", ""),
                "split": args.split, "epoch": "", "wallclock_s": ""}
        training.write_metrics_csv([{**base, "metric": k, "value": v} for k, v in metrics.items()], args.out)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    manifolds = tuple(m.strip() for m in args.manifolds.split(",") if m.strip())
    bad = set(manifolds) - set(KINDS)
    if bad or not manifolds:
        raise UsageError(f"unknown manifolds {sorted(bad)}")
    if not args.dims or min(args.dims) < 1 or args.seeds < 1:
        raise UsageError("dims and seeds must be positive")
    base = _train_config(args, dim=args.dims[0])
    if args.dataset is not None:
        ds = _load_dataset(args.dataset)
    else:
        spec = datasets.GenSpec(per_class=args.per_class, seed=args.data_seed)
        try:
            spec.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        ds = datasets.build_dataset(spec)

    def progress(result):
        cfg, rep = result
        log.info("%s dim %d seed %d: test %s (%.1fs)", cfg["manifold"], cfg["dim"], cfg["seed"],
                 _fmt(rep.test), rep.wallclock_s)

    seeds = range(base.seed, base.seed + args.seeds)
    rows = training.run_benchmark(ds, base, manifolds, args.dims, seeds, progress=progress)
    training.write_metrics_csv(rows, args.out)
    table = training.format_table(training.summarize_benchmark(rows))
    table_path = args.out.with_suffix(".txt")
    table_path.write_text(table + "\n", encoding="utf-8")
    print("macro F1 (%), mean ± std over", args.seeds, "seeds")
    print(table)
    print(f"wrote {args.out} and {table_path}")
    return EXIT_OK


def _parse_labels(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in datasets.CLASS_IDS:
            out.append(datasets.CLASS_IDS[tok])
        else:
            try:
                out.append(int(tok))
            except ValueError:
                raise UsageError(f"unknown label {tok!r}")
    return out


def cmd_inspect_norms(args) -> int:
    model, header = training.load_checkpoint(args.checkpoint)
    if not 0 <= args.layer <= model.config.layers:
        raise UsageError(f"--layer must lie in [0, {model.config.layers}]")
    labels = _parse_labels(args.label)
    ds = _load_dataset(args.dataset)
    if training.is_untrained(model, header):
        print("warning: checkpoint looks untrained; norms reflect the initialization", file=sys.stderr)
    rows = training.inspect_norms(model, _graphs(ds, args.split), layer=args.layer, labels=labels)
    print(f"{'graph':>8} {'label':>6} {'n':>6} {'top_decile_norm':>16} {'all_norm':>10}")
    for r in rows:
        print(f"{r['graph']!s:>8} {r['label']!s:>6} {r['n']:>6} {r['top_decile_norm']:>16.5f} {r['all_norm']:>10.5f}")
    if args.out is not None:
        import csv
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["graph", "label", "n", "top_decile_norm", "all_norm"],
                               lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def _fmt(metrics) -> str:
    return ", ".join(f"{k} {v:.4f}" for k, v in metrics.items())


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "benchmark": cmd_benchmark, "inspect-norms": cmd_inspect_norms}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hypgnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"hypgnn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError, ShapeError) as exc:
        print(f"hypgnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
