"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--loss-sizes ...] [--pair-sizes ...] [--repeat 3]

The Gehan loss kernel is O(N log N) after sorting; the concordance kernel is
an O(N^2) pair loop, so it gets smaller sizes.
"""

import argparse
import timeit

import numpy as np

from gehan_aft import kernels


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    e = np.round(rng.standard_normal(n), 3)
    events = (rng.random(n) < 0.7).astype(np.uint8)
    order = np.argsort(e, kind="mergesort").astype(np.int64)
    times = np.exp(rng.standard_normal(n))
    scores = e + rng.standard_normal(n)
    return e, events, order, times, scores


def _time(call, repeat):
    timer = timeit.Timer(call)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def bench(loss_sizes, pair_sizes, repeat):
    backends = kernels.available_backends()
    print(f"{'kernel':<18}{'n':>8}" + "".join(f"{name:>14}" for name in backends) + "   speedup")
    cases = [
        ("gehan_loss_grad", loss_sizes, lambda m, a: m.gehan_loss_grad(a[0], a[1], a[2])),
        ("concordance", pair_sizes, lambda m, a: m.concordance_counts(a[3], a[1], a[4])),
    ]
    for label, sizes, call in cases:
        for n in sizes:
            args = _inputs(n)
            best = {name: _time(lambda: call(mod, args), repeat) for name, mod in backends.items()}
            cols = "".join(f"{best[name] * 1e3:>12.3f}ms" for name in backends)
            ratio = best["numpy"] / best["cython"] if "cython" in best else float("nan")
            print(f"{label:<18}{n:>8}{cols}   {ratio:6.2f}x")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sizes = lambda s: [int(v) for v in s.split(",")]
    p.add_argument("--loss-sizes", default="256,4096,65536", type=sizes)
    p.add_argument("--pair-sizes", default="256,1024,4096", type=sizes)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    bench(args.loss_sizes, args.pair_sizes, args.repeat)


if __name__ == "__main__":
    main()
