"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1]

Prints one row per kernel with the best wall time of each backend and the
speed-up. Both backends are checked to agree before timing.
"""

import argparse
import timeit

import numpy as np

from donskerfbm import _pykernels as pure
from donskerfbm.noise import NoiseLaw, stream_key

try:
    from donskerfbm import _ckernels as compiled
except ImportError:
    compiled = None


def cases():
    code, atoms, cum = NoiseLaw.discrete([(-2.0, 0.2), (0.5, 0.8)]).kernel_args()
    rad = NoiseLaw.rademacher().kernel_args()
    base = stream_key(7, 1, 1)
    w = np.linspace(-1.0, 1.0, 400)
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2000, 2)), rng.normal(size=(2000, 2))
    v = np.ascontiguousarray(rng.normal(size=(1025, 2)).cumsum(axis=0))
    t = np.linspace(0.0, 1.0, 1025)
    return [
        ("keyed_uint64 1e3 x 1e3", lambda m: m.keyed_uint64(base, 0, 1000, 0, 1000)),
        ("eta_matrix rademacher 2e4 x 400", lambda m: m.eta_matrix(base, 0, 20000, 1, 400, *rad)),
        ("eta_weighted_sum 1e5 x 400", lambda m: m.eta_weighted_sum(base, 0, 100000, 1, w, code, atoms, cum)),
        ("normal_matrix 1e3 x 4096", lambda m: m.normal_matrix(base, 0, 1000, 4096)),
        ("pairwise_dist_rowsums 2000 x 2000", lambda m: m.pairwise_dist_rowsums(x, y)),
        ("holder_full_rowmax 1025 points", lambda m: m.holder_full_rowmax(v, t, 0.3)),
        ("count_compositions n=30", lambda m: m.count_compositions(30, 2)),
    ]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    pure.set_num_threads(args.threads)
    if compiled is not None:
        compiled.set_num_threads(args.threads)
    print(f"{'kernel':36s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speed-up':>9s}")
    for name, call in cases():
        tp = best(lambda: call(pure), args.repeat)
        if compiled is None:
            print(f"{name:36s} {tp:10.4f} {'n/a':>11s} {'':>9s}")
            continue
        a, b = np.asarray(call(pure)), np.asarray(call(compiled))
        if not np.allclose(a.astype(float), b.astype(float), rtol=1e-12, atol=0):
            raise SystemExit(f"{name}: backends disagree")
        tc = best(lambda: call(compiled), args.repeat)
        print(f"{name:36s} {tp:10.4f} {tc:11.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
