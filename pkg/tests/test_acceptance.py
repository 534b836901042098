"""One test per acceptance criterion.  Each prints a PASS/FAIL line.

The identity and gradient criteria rerun the corresponding unit-test
selections in a fresh interpreter so their wall time is measured honestly.
The benchmark criterion trains the full default grid and is marked slow.
"""

import resource
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hypgnn import autodiff as ad
from hypgnn import cli, datasets
from hypgnn.datasets import CLASS_IDS, GenSpec, build_dataset
from hypgnn.layers import HGNN, ModelConfig, make_batch
from hypgnn.optim import AMSGrad, RiemannianAMSGrad
from hypgnn.training import (TrainConfig, evaluate, format_table, inspect_norms, load_checkpoint,
                             run_benchmark, save_checkpoint, summarize_benchmark, train)

from test_layers import gcn_reference, random_graph, _scale_weights
from test_optim import _toy_run

TESTS = Path(__file__).parent
SEEDS = (0, 1, 2, 3, 4)


def cpu_seconds():
    own = resource.getrusage(resource.RUSAGE_SELF)
    kids = resource.getrusage(resource.RUSAGE_CHILDREN)
    return own.ru_utime + own.ru_stime + kids.ru_utime + kids.ru_stime


def run_suite(*selection):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *selection],
                          cwd=TESTS.parent, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    if proc.returncode != 0:
        print(proc.stdout[-3000:])
    return proc.returncode == 0, elapsed, summary


def test_manifold_identity_suite(acceptance):
    ok, elapsed, summary = run_suite("tests/test_manifolds.py")
    acceptance("manifold identity suite", ok and elapsed < 10.0, f"{summary}; {elapsed:.1f}s < 10s")


def test_gradient_suite(acceptance):
    ok, elapsed, summary = run_suite(
        "tests/test_autodiff.py",
        "tests/test_manifolds.py::test_gradients_of_maps",
        "tests/test_manifolds.py::test_composite_ball_gradient",
        "tests/test_layers.py::test_weight_gradient_on_five_node_graph",
        "tests/test_readout.py::test_end_to_end_gradients_for_every_parameter")
    acceptance("gradient suite", ok and elapsed < 60.0, f"{summary}; {elapsed:.1f}s < 60s")


def test_gcn_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(20):
        g = random_graph(rng)
        cfg = ModelConfig(manifold="euclidean", dim=5, layers=2, unit_ball=False)
        model = HGNN(cfg, seed=trial)
        batch = make_batch([g], cfg)
        x = model.params["embedding"].data[batch.node_index]
        weights = [model.params[HGNN.weight_name(k, 0, "in")].data for k in range(cfg.layers)]
        worst = max(worst, float(np.abs(model.forward(batch).data - gcn_reference(g, x, weights)).max()))
    acceptance("GCN equivalence", worst < 1e-6, f"max |diff| {worst:.2e} over 20 graphs")


@pytest.mark.parametrize("kind", ("poincare", "lorentz"))
def test_collapse_demonstration(kind, acceptance):
    rng = np.random.default_rng(11)
    g = random_graph(rng, 6, 10)
    layers = 4
    cfg = ModelConfig(manifold=kind, dim=3, layers=layers, pre_exp_activation=True, init_range=0.3)
    model = HGNN(cfg, seed=5)
    _scale_weights(model, 2.0)
    batch = make_batch([g], cfg)
    m = model.manifold
    t = m.logmap0(model.inputs(batch).data).data
    weights = [model.params[HGNN.weight_name(k, 0, "in")].data for k in range(layers)]
    if kind == "lorentz":
        weights = [w[1:, 1:] for w in weights]
        t = t[:, 1:]
    flat = gcn_reference(g, t, weights)
    if kind == "lorentz":
        flat = np.concatenate([np.zeros((g.n, 1)), flat], axis=1)
    wrapped = m.expmap0(flat).data
    collapsed_gap = float(np.abs(model.forward(batch).data - wrapped).max())
    proper_cfg = ModelConfig(manifold=kind, dim=3, layers=layers, init_range=0.3)
    proper = HGNN(proper_cfg, seed=5)
    _scale_weights(proper, 2.0)
    proper_gap = float(np.abs(proper.forward(make_batch([g], proper_cfg)).data - wrapped).max())
    acceptance(f"collapse demonstration ({kind})", collapsed_gap < 1e-6 and proper_gap > 1e-3,
               f"pre-exp vs wrapped GCN {collapsed_gap:.1e}; post-exp vs wrapped GCN {proper_gap:.3f}")


@pytest.mark.slow
def test_benchmark_directional_reproduction(acceptance):
    dataset = build_dataset(GenSpec())
    start = cpu_seconds()
    rows = run_benchmark(dataset, TrainConfig(), dims=(3, 20), seeds=SEEDS)
    minutes = (cpu_seconds() - start) / 60
    summary = summarize_benchmark(rows)
    print("\nmeasured macro F1 (%), mean ± std over 5 seeds\n" + format_table(summary))
    eu3 = summary[("euclidean", 3)][0]
    margins = {m: summary[(m, 3)][0] - eu3 for m in ("poincare", "lorentz")}
    floor20 = min(summary[(m, 20)][0] for m in ("euclidean", "poincare", "lorentz"))
    ok = all(v >= 5.0 for v in margins.values()) and floor20 >= 80.0 and minutes < 45.0
    cells = ", ".join(f"{m[0]}{d} {summary[(m, d)][0]:.1f}" for m in ("euclidean", "poincare", "lorentz")
                      for d in (3, 20))
    acceptance("benchmark directional reproduction", ok,
               f"dim-3 margins P {margins['poincare']:+.1f} L {margins['lorentz']:+.1f} (need >= +5); "
               f"dim-20 min {floor20:.1f} (need >= 80); {minutes:.1f} CPU-min (< 45); {cells}")


def test_deep_stack_stability(acceptance):
    dataset = build_dataset(GenSpec(per_class=20, seed=3))
    cfg = ModelConfig(manifold="lorentz", dim=10, layers=8)
    model = HGNN(cfg, seed=0)
    opt_e = AMSGrad(model.euclidean_params(), lr=0.01)
    opt_m = RiemannianAMSGrad(model.manifold_params(), model.manifold, lr=0.001)
    rng = np.random.default_rng(0)
    worst, finite = 0.0, True
    for _ in range(50):
        batch = make_batch([dataset.graphs[i] for i in rng.choice(len(dataset), 16, replace=False)], cfg)
        model.zero_grad()
        try:
            states = model.forward(batch, return_all=True)
            loss = model.loss(batch)
            ad.backward(loss)
            opt_e.step()
            opt_m.step()
        except ad.NonFiniteError:
            finite = False
            break
        worst = max([worst] + [float(model.manifold.residual(h.data).max()) for h in states]
                    + [float(model.manifold.residual(p.data).max()) for p in model.manifold_params()])
        finite = finite and np.isfinite(loss.item())
    acceptance("deep-stack stability", finite and worst < 1e-6,
               f"8 Lorentz layers, dim 10, 50 steps; max residual {worst:.1e}")


@pytest.mark.slow
def test_hierarchy_norm_check(acceptance):
    dataset = build_dataset(GenSpec(classes=("er", "ba")))
    results = []
    for seed in SEEDS:
        model = train(TrainConfig(seed=seed), dataset).model
        s = inspect_norms(model, dataset.graphs, layer=0, labels=[CLASS_IDS["ba"]])[-1]
        results.append((s["top_decile_norm"], s["all_norm"]))
    wins = sum(top < avg for top, avg in results)
    detail = "; ".join(f"seed {s}: {t:.4f} vs {a:.4f}" for s, (t, a) in zip(SEEDS, results))
    acceptance("hierarchy norm check", wins >= 4, f"{wins}/5 seeds top-decile < all ({detail})")


def test_optimizer_convergence(acceptance):
    worst = {}
    for kind in ("euclidean", "poincare", "lorentz"):
        worst[kind] = max(_toy_run(kind, seed)[0] for seed in range(20))
    acceptance("optimizer convergence", all(v < 1e-3 for v in worst.values()),
               "worst final distance " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_determinism_and_round_trips(tmp_path, acceptance):
    checks = {}
    for name in ("a", "b"):
        assert cli.main(["gen", "--per-class", "15", "--seed", "9", "-o", str(tmp_path / f"{name}.jsonl")]) == 0
    checks["gen bytes"] = (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    dataset = datasets.load(tmp_path / "a.jsonl")
    checks["dataset load"] = dataset == build_dataset(GenSpec(per_class=15, seed=9))
    cfg = TrainConfig(manifold="poincare", dim=3, epochs=3, seed=2)
    blobs, results = [], []
    for name in ("a", "b"):
        result = train(cfg, dataset)
        save_checkpoint(result.model, tmp_path / f"{name}.ckpt", cfg, result.report)
        blobs.append((tmp_path / f"{name}.ckpt").read_bytes())
        results.append(result)
    strip = lambda rep: [{k: v for k, v in e.items() if k != "wallclock_s"} for e in rep.history]
    checks["training history"] = strip(results[0].report) == strip(results[1].report)
    checks["checkpoint bytes"] = blobs[0] == blobs[1]
    loaded, _ = load_checkpoint(tmp_path / "a.ckpt")
    test_graphs = dataset.subset("test")
    checks["eval after reload"] = evaluate(loaded, test_graphs) == evaluate(results[0].model, test_graphs)
    save_checkpoint(loaded, tmp_path / "c.ckpt", cfg, results[0].report)
    checks["re-save bytes"] = (tmp_path / "c.ckpt").read_bytes() == blobs[0]
    failed = [k for k, v in checks.items() if not v]
    acceptance("determinism and round trips", not failed,
               "all of: " + ", ".join(checks) if not failed else "failed: " + ", ".join(failed))
