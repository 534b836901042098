"""Training loop, metrics, checkpoints, benchmark grid and norm inspection."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import zipfile
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import readout
from .datasets import Dataset, GenSpec, build_dataset
from .graph import Graph
from .layers import HGNN, Batch, ModelConfig, make_batch
from .manifolds import Lorentz, lorentz_to_poincare
from .optim import AMSGrad, RiemannianAMSGrad

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hypgnn-checkpoint"
CHECKPOINT_VERSION = 1
CSV_COLUMNS = ("manifold", "dim", "seed", "split", "metric", "value", "epoch", "wallclock_s")
EVAL_BATCH = 64


# -- metrics ------------------------------------------------------------

def macro_f1(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over classes seen in either argument."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("macro_f1 of an empty set")
    scores = []
    for c in np.union1d(y_true, y_pred):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(scores))


def accuracy(y_true, y_pred) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def mean_absolute_error(y_true, y_pred) -> float:
    return float(np.mean(np.abs(np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float))))


# -- configuration ------------------------------------------------------

@dataclass
class TrainConfig:
    manifold: str = "lorentz"
    dim: int = 5
    layers: int = 2
    centroids: Optional[int] = None
    lr_euclidean: float = 0.01
    lr_manifold: float = 0.001
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    unit_ball_normalize: bool = True
    bidirectional: bool = False
    master_node: bool = False
    activation_slope: float = 0.5
    init_range: float = 0.01

    def __post_init__(self):
        for name in ("dim", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.layers < 0 or (self.centroids is not None and self.centroids < 1):
            raise ValueError("layers must be >= 0 and centroids positive")
        if not 0 < self.activation_slope <= 1:
            raise ValueError("activation slope must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def infer_task(graphs: Sequence[Graph]) -> str:
    labels = np.asarray([g.label for g in graphs])
    return "graph-classification" if labels.dtype.kind in "iub" else "graph-regression"


def model_config_for(config: TrainConfig, graphs: Sequence[Graph], task: Optional[str] = None,
                     num_classes: Optional[int] = None) -> ModelConfig:
    task = task or infer_task(graphs)
    if num_classes is None:
        num_classes = int(max(int(g.label) for g in graphs)) + 1 if task.endswith("classification") else 1
    num_relations = max(g.num_relations for g in graphs)
    feats = graphs[0].features
    return ModelConfig(
        manifold=config.manifold, dim=config.dim, layers=config.layers, centroids=config.centroids,
        num_classes=num_classes, task=task, num_relations=num_relations,
        bidirectional=config.bidirectional, master_node=config.master_node,
        unit_ball=config.unit_ball_normalize, slope=config.activation_slope,
        init_range=config.init_range, input_dim=None if feats is None else feats.shape[1])


# -- evaluation -----------------------------------------------------------

def predict(model: HGNN, graphs: Sequence[Graph], batch_size: int = EVAL_BATCH) -> np.ndarray:
    out = []
    for start in range(0, len(graphs), batch_size):
        batch = make_batch(graphs[start:start + batch_size], model.config)
        out.append(model.predict(batch).data)
    return np.concatenate(out, axis=0)


def evaluate(model: HGNN, graphs: Sequence[Graph]) -> Dict[str, float]:
    """Loss plus task metrics: macro F1 and accuracy, or MAE."""
    raw = predict(model, graphs)
    targets = np.asarray([g.label for g in graphs])
    loss = readout.loss(ad.Tensor(raw), targets, model.config.task).item()
    if model.config.task.endswith("classification"):
        pred = np.argmax(raw, axis=1)
        return {"loss": loss, "macro_f1": macro_f1(targets, pred), "accuracy": accuracy(targets, pred)}
    return {"loss": loss, "mae": mean_absolute_error(targets, raw)}


def selection_score(metrics: Dict[str, float]) -> float:
    return metrics["macro_f1"] if "macro_f1" in metrics else -metrics["mae"]


# -- training -------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    valid: Dict[str, float] = field(default_factory=dict)
    test: Dict[str, float] = field(default_factory=dict)
    wallclock_s: float = 0.0

    def csv_rows(self) -> List[dict]:
        base = {"manifold": self.config["manifold"], "dim": self.config["dim"], "seed": self.config["seed"]}
        rows = []
        for h in self.history:
            for split in ("train", "valid"):
                for metric, value in h.get(split, {}).items():
                    rows.append({**base, "split": split, "metric": metric, "value": value,
                                 "epoch": h["epoch"], "wallclock_s": h["wallclock_s"]})
        for metric, value in self.test.items():
            rows.append({**base, "split": "test", "metric": metric, "value": value,
                         "epoch": self.best_epoch, "wallclock_s": self.wallclock_s})
        return rows


@dataclass
class TrainResult:
    model: HGNN
    report: RunReport
    train_config: TrainConfig


def check_manifold_params(model: HGNN, tol: float = 1e-6) -> None:
    for p in model.manifold_params():
        res = model.manifold.residual(p.data)
        if not np.all(res < tol):
            raise ad.NonFiniteError(f"parameter {p.name} left the manifold (residual {res.max():.3g})")


def train(config: TrainConfig, dataset: Dataset, callback=None) -> TrainResult:
    """Train on ``dataset.splits['train']`` keeping the best-validation state.

    The batch loss is the mean of per-graph losses, so its gradient is the
    average of the per-graph gradients.
    """
    t0 = time.perf_counter()
    train_graphs = dataset.subset("train")
    valid_graphs = dataset.subset("valid") or train_graphs
    test_graphs = dataset.subset("test")
    mcfg = model_config_for(config, dataset.graphs)
    model = HGNN(mcfg, seed=config.seed)
    opt_e = AMSGrad(model.euclidean_params(), lr=config.lr_euclidean)
    opt_m = RiemannianAMSGrad(model.manifold_params(), model.manifold, lr=config.lr_manifold)
    shuffle = np.random.default_rng([config.seed, 1])
    report = RunReport(config=asdict(config))
    best_score, best_state = -math.inf, model.state_dict()
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(len(train_graphs))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = make_batch([train_graphs[i] for i in order[start:start + config.batch_size]], mcfg)
            model.zero_grad()
            loss = model.loss(batch)
            ad.backward(loss)
            opt_e.step()
            opt_m.step()
            losses.append((loss.item(), len(batch.sizes)))
        check_manifold_params(model)
        train_loss = float(sum(l * n for l, n in losses) / sum(n for _, n in losses))
        valid = evaluate(model, valid_graphs)
        entry = {"epoch": epoch, "train": {"loss": train_loss}, "valid": valid,
                 "wallclock_s": round(time.perf_counter() - t0, 3)}
        report.history.append(entry)
        score = selection_score(valid)
        if score > best_score:
            best_score, best_state = score, model.state_dict()
            report.best_epoch, report.valid = epoch, valid
        if callback is not None:
            callback(entry)
        logger.debug("epoch %d train %.4f valid %s", epoch, train_loss, valid)
    model.load_state_dict(best_state)
    if test_graphs:
        report.test = evaluate(model, test_graphs)
    report.wallclock_s = round(time.perf_counter() - t0, 3)
    return TrainResult(model, report, config)


def write_metrics_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in CSV_COLUMNS})


# -- checkpoints ----------------------------------------------------------
# A checkpoint is a zip archive readable by ``numpy.load``: ``header.npy``
# holds a JSON document (format, version, configs, report) and each
# parameter is stored as ``param.<name>.npy``.  Entries carry a fixed
# timestamp and the stored report omits wall-clock fields, so identical
# runs give identical files; timings live in the metrics CSV.

_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
    return buf.getvalue()


def _without_wallclock(obj):
    if isinstance(obj, dict):
        return {k: _without_wallclock(v) for k, v in obj.items() if k != "wallclock_s"}
    if isinstance(obj, list):
        return [_without_wallclock(v) for v in obj]
    return obj


def save_checkpoint(model: HGNN, path, train_config: Optional[TrainConfig] = None,
                    report: Optional[RunReport] = None) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "train_config": asdict(train_config) if train_config is not None else None,
        "report": _without_wallclock(asdict(report)) if report is not None else None,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        entries = [("header.npy", np.array(json.dumps(header, sort_keys=True)))]
        entries += [(f"param.{name}.npy", arr) for name, arr in model.state_dict().items()]
        for name, arr in entries:
            zf.writestr(zipfile.ZipInfo(name, date_time=_ZIP_TIME), _npy_bytes(arr))


def load_checkpoint(path):
    """Return ``(model, header)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        if header.get("version", 0) > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {header['version']} is newer than supported")
        state = {k[len("param."):]: data[k] for k in data.files if k.startswith("param.")}
    model = HGNN(ModelConfig(**header["model_config"]))
    model.load_state_dict(state)
    return model, header


# -- norm hierarchy ---------------------------------------------------------

def point_norms(model: HGNN, h: np.ndarray) -> np.ndarray:
    """Euclidean norm in the ball picture; Lorentz points are mapped to the ball first."""
    if isinstance(model.manifold, Lorentz):
        h = lorentz_to_poincare(h).data
    return np.linalg.norm(h, axis=-1)


def top_decile_mask(degree: np.ndarray) -> np.ndarray:
    """Nodes whose degree reaches the ceil(n/10)-th largest degree (ties included)."""
    k = max(1, int(math.ceil(degree.size / 10)))
    cutoff = np.sort(degree)[::-1][k - 1]
    return degree >= cutoff


def inspect_norms(model: HGNN, graphs: Sequence[Graph], layer: int = 0,
                  labels: Optional[Sequence[int]] = None) -> List[dict]:
    """Per-graph mean point norm of top-decile-degree nodes against all nodes.

    ``layer`` 0 inspects the input embeddings; ``k`` the output of layer k.
    The last row (``graph == "summary"``) averages the per-graph means.
    """
    if not 0 <= layer <= model.config.layers:
        raise ValueError(f"layer must lie in [0, {model.config.layers}]")
    selected = [(i, g) for i, g in enumerate(graphs) if labels is None or g.label in labels]
    rows = []
    for i, g in selected:
        batch = make_batch([g], model.config)
        h = model.forward(batch, return_all=True)[layer].data[:g.n]
        norms = point_norms(model, h)
        top = top_decile_mask(g.degree())
        rows.append({"graph": i, "label": g.label, "n": g.n,
                     "top_decile_norm": float(norms[top].mean()), "all_norm": float(norms.mean())})
    if rows:
        rows.append({"graph": "summary", "label": "", "n": int(sum(r["n"] for r in rows)),
                     "top_decile_norm": float(np.mean([r["top_decile_norm"] for r in rows])),
                     "all_norm": float(np.mean([r["all_norm"] for r in rows]))})
    return rows


def is_untrained(model: HGNN, header: Optional[dict] = None) -> bool:
    report = (header or {}).get("report")
    if report is not None and not report.get("history"):
        return True
    emb = model.params.get("embedding")
    if emb is None:
        return False
    return bool(np.all(point_norms(model, emb.data) == 0))


# -- benchmark --------------------------------------------------------------

BENCH_MANIFOLDS = ("euclidean", "poincare", "lorentz")
BENCH_DIMS = (3, 5, 10, 20)


def _bench_job(args):
    cfg_dict, dataset = args
    cfg = TrainConfig(**cfg_dict)
    result = train(cfg, dataset)
    return cfg_dict, result.report


def worker_count() -> int:
    env = os.environ.get("HGNN_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def run_benchmark(dataset: Dataset, base: TrainConfig, manifolds=BENCH_MANIFOLDS, dims=BENCH_DIMS,
                  seeds: Sequence[int] = (0, 1, 2, 3, 4), progress=None) -> List[dict]:
    """Train every (manifold, dim, seed) cell; one result row per cell."""
    jobs = []
    for manifold in manifolds:
        for dim in dims:
            for seed in seeds:
                cfg = asdict(base)
                cfg.update(manifold=manifold, dim=dim, seed=int(seed), centroids=base.centroids)
                jobs.append((cfg, dataset))
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.map(_bench_job, jobs)
    else:
        results = []
        for job in jobs:
            results.append(_bench_job(job))
            if progress is not None:
                progress(results[-1])
    rows = []
    for cfg, rep in results:
        rows.append({"manifold": cfg["manifold"], "dim": cfg["dim"], "seed": cfg["seed"], "split": "test",
                     "metric": "macro_f1", "value": rep.test.get("macro_f1", float("nan")),
                     "epoch": rep.best_epoch, "wallclock_s": rep.wallclock_s})
    return rows


def summarize_benchmark(rows: Sequence[dict]) -> Dict[tuple, tuple]:
    """(manifold, dim) -> (mean, std, count) of macro F1 in percent."""
    cells: Dict[tuple, list] = {}
    for r in rows:
        cells.setdefault((r["manifold"], int(r["dim"])), []).append(100.0 * float(r["value"]))
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in cells.items()}


def format_table(summary: Dict[tuple, tuple]) -> str:
    manifolds = [m for m in BENCH_MANIFOLDS if any(k[0] == m for k in summary)]
    dims = sorted({k[1] for k in summary})
    head = f"{'':<10}" + "".join(f"{d:>16}" for d in dims)
    lines = [head]
    for m in manifolds:
        cells = []
        for d in dims:
            if (m, d) in summary:
                mean, std, _ = summary[(m, d)]
                cells.append(f"{mean:>8.1f} ± {std:<5.2f}")
            else:
                cells.append(f"{'-':>16}")
        lines.append(f"{m:<10}" + "".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)
