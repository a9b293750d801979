"""Compare the numpy and numba kernels: per-kernel timings on random data and
a short end-to-end training run on UMLS.

    python3 benchmarks/bench_kernels.py [--dim 200] [--batch 512] [--neg 32] [--epochs 20]

Numba compile time is excluded by a warm-up call.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from ontokgc._accel import HAVE_NUMBA
from ontokgc.kg import load_graph
from ontokgc.kge.kernels import kernels
from ontokgc.kge.model import TrainConfig, init_table, train

DATA = Path(__file__).resolve().parents[1] / "data" / "umls"


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(scorer, dim, n, repeat, rng):
    table = init_table(135, 46, TrainConfig(dim=dim, scorer=scorer))
    rel = table.relation_operand()
    h, r, t = rng.integers(135, size=n), rng.integers(46, size=n), rng.integers(135, size=n)
    coef = rng.standard_normal(n)
    rows = {}
    for backend in ("numpy", "numba"):
        dist_fn, back_fn, _ = kernels(scorer, backend)
        g_ent = np.zeros_like(table.entity)
        g_rel = np.zeros((table.num_relations, rel.shape[1] if scorer == "transe" else dim))
        dist = dist_fn(table.entity, rel, h, r, t)
        back_fn(table.entity, rel, h, r, t, dist, coef, g_ent, g_rel)  # warm-up / compile
        rows[backend] = (
            _best_of(lambda: dist_fn(table.entity, rel, h, r, t), repeat),
            _best_of(lambda: back_fn(table.entity, rel, h, r, t, dist, coef, g_ent, g_rel), repeat),
        )
    return rows


def bench_training(epochs, dim):
    graph = load_graph(DATA / "train.txt")
    cfg = TrainConfig(dim=dim, epochs=epochs, seed=0)
    out = {}
    for backend in ("numpy", "numba"):
        train(graph, TrainConfig(dim=dim, epochs=1, seed=0), backend=backend)  # warm-up
        t0 = time.perf_counter()
        res = train(graph, cfg, backend=backend)
        out[backend] = (time.perf_counter() - t0, res.loss_trace[-1])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=200)
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--neg", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    n = args.batch * (args.neg + 1)
    print(f"kernels: {n} triples per call, d={args.dim}")
    print(f"{'scorer':<8} {'kernel':<9} {'numpy ms':>9} {'numba ms':>9} {'speed-up':>9}")
    for scorer in ("rotate", "transe"):
        rows = bench_kernels(scorer, args.dim, n, args.repeat, rng)
        for i, name in enumerate(("distance", "backward")):
            a, b = rows["numpy"][i], rows["numba"][i]
            print(f"{scorer:<8} {name:<9} {1e3 * a:9.2f} {1e3 * b:9.2f} {a / b:9.2f}")
    res = bench_training(args.epochs, args.dim)
    (tn, ln), (tb, lb) = res["numpy"], res["numba"]
    print(f"\nUMLS training, {args.epochs} epochs: numpy {tn:.2f}s (loss {ln:.5f}), "
          f"numba {tb:.2f}s (loss {lb:.5f}), speed-up {tn / tb:.2f}x")


if __name__ == "__main__":
    main()
