"""Compare the compiled and numpy kernel backends.

Times each segment kernel at neighbour-aggregation sizes, then a full
aggregator forward+backward pass with each backend swapped in.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import timeit
from contextlib import contextmanager

import numpy as np

from recdap import numerics as nx
from recdap.aggregator import GlobalAggregator
from recdap.kg_data import EmbeddingStore, NeighborGraph
from recdap.numerics import kernels

KERNELS = ("scatter_add_rows", "segment_softmax", "segment_softmax_backward")


@contextmanager
def use_backend(module):
    saved = {k: getattr(kernels, k) for k in KERNELS}
    for k in KERNELS:
        setattr(kernels, k, getattr(module, k))
    try:
        yield
    finally:
        for k, fn in saved.items():
            setattr(kernels, k, fn)


def kernel_cases(rng, edges: int, segments: int, dim: int):
    seg = np.sort(rng.integers(0, segments, size=edges))
    values = rng.normal(size=(edges, dim))
    scores = rng.normal(size=edges)
    grad = rng.normal(size=edges)
    probs = kernels.segment_softmax(scores, seg, segments)
    return {
        "scatter_add_rows": lambda m: m.scatter_add_rows(values, seg, segments),
        "segment_softmax": lambda m: m.segment_softmax(scores, seg, segments),
        "segment_softmax_backward": lambda m: m.segment_softmax_backward(probs, grad, seg, segments),
    }


def aggregator_case(rng, entities: int, degree: int, dim: int, batch: int):
    deg = np.full(entities, degree)
    offsets = np.concatenate([[0], np.cumsum(deg)])
    graph = NeighborGraph(offsets, rng.integers(0, 10, size=offsets[-1]),
                          rng.integers(0, entities, size=offsets[-1]), degree)
    reg = nx.ParamRegistry(0)
    store = EmbeddingStore(nx.Tensor(rng.normal(size=(entities, dim))),
                           nx.Tensor(rng.normal(size=(10, dim)))).register(reg)
    agg = GlobalAggregator(reg, dim)
    ids = rng.choice(entities, size=batch, replace=False)

    def step(_module):
        enc = agg.encode_entities(ids, graph, store)
        nx.backward((enc.table * enc.table).sum(), reg)

    return step


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--edges", type=int, default=50_000)
    ap.add_argument("--segments", type=int, default=2_000)
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    found = kernels.backends()
    if "cython" not in found:
        print("compiled backend not built; only the numpy fallback is timed")
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng, args.edges, args.segments, args.dim)
    cases["aggregator fwd+bwd"] = aggregator_case(rng, 2_000, 50, args.dim, 64)

    # backends must agree before timings mean anything
    if "cython" in found:
        for name in KERNELS:
            a, b = cases[name](found["python"]), cases[name](found["cython"])
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    results = {}
    print(f"{'case':<28}" + "".join(f"{n:>12}" for n in found) + ("     speedup" if len(found) > 1 else ""))
    for name, fn in cases.items():
        row = {}
        for backend, module in found.items():
            with use_backend(module):
                row[backend] = best_of(lambda: fn(module), args.repeat)
        results[name] = row
        line = f"{name:<28}" + "".join(f"{row[b] * 1e3:>10.3f}ms" for b in found)
        if "cython" in row:
            line += f"{row['python'] / row['cython']:>11.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"config": vars(args), "seconds": results}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
