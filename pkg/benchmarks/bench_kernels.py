"""Time the numba kernels against the numpy fallback on a DBP-style graph.

    python benchmarks/bench_kernels.py --entities 5000 --dim 100 --repeat 5
"""

import argparse
import statistics
import time

import numpy as np

from reflalign.diffmath import unit_rows
from reflalign.kernels import get_backend
from reflalign.kg import build_union_index
from reflalign.synthetic import dbp_style_pair


def timed(fn, repeat):
    fn()  # warm-up (JIT compile / cache load)
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entities", type=int, default=3000)
    ap.add_argument("--relations", type=int, default=100)
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--neg-k", type=int, default=25)
    ap.add_argument("--pairs", type=int, default=900)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    pair = dbp_style_pair(n_entities=args.entities, n_relations=args.relations, seed=0)
    idx = build_union_index(pair)
    rng = np.random.default_rng(0)
    n, d = idx.unified_entity_count, args.dim
    h = rng.normal(size=(n, d))
    unit, _ = unit_rows(rng.normal(size=(idx.unified_relation_count, d)))
    v = rng.normal(size=3 * d)
    g_s = rng.normal(size=(n, d))
    n1 = idx.entity_offset
    p = min(args.pairs, n1)
    query = np.ascontiguousarray(h[:p])
    cand = np.ascontiguousarray(h[n1:])
    exclude = rng.integers(n - n1, size=p)
    wide = rng.normal(size=(n, 4 * d))
    pos_a, pos_b = np.arange(p), n1 + np.arange(p)
    term_pos = np.repeat(np.arange(p), 2 * args.neg_k)
    neg_a = np.concatenate([np.repeat(pos_a, args.neg_k), rng.integers(n1, size=p * args.neg_k)])
    neg_b = np.concatenate([rng.integers(n1, n, size=p * args.neg_k), np.repeat(pos_b, args.neg_k)])

    print(f"entities={n} edges={idx.edge_count} dim={d} pairs={p} neg_k={args.neg_k} repeat={args.repeat}")
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name in ("edge_forward", "edge_backward", "l1_topk", "triplet_hinge"):
        times = {}
        for backend in ("numba", "numpy"):
            k = get_backend(backend)
            alpha = k.edge_forward(h, unit, v, idx.offsets, idx.src, idx.nbr, idx.rel, True)[1]
            calls = {
                "edge_forward": lambda: k.edge_forward(h, unit, v, idx.offsets, idx.src, idx.nbr, idx.rel, True),
                "edge_backward": lambda: k.edge_backward(
                    g_s, h, unit, v, alpha, idx.offsets, idx.src, idx.nbr, idx.rel, True
                ),
                "l1_topk": lambda: k.l1_topk(query, cand, args.neg_k, exclude),
                "triplet_hinge": lambda: k.triplet_hinge(wide, pos_a, pos_b, term_pos, neg_a, neg_b, 3.0),
            }
            times[backend] = timed(calls[name], args.repeat)
        print(f"{name:<16}{times['numba']:>12.4f}{times['numpy']:>12.4f}{times['numpy'] / times['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
