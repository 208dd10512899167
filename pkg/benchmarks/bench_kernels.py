"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from seqattack import _kernels_py as fallback

try:
    from seqattack import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    B, d, H, V = 16, 32, 64, 50
    x = rng.normal(size=(B, d))
    h = rng.normal(size=(B, H))
    c = rng.normal(size=(B, H))
    Wx = rng.normal(size=(4 * H, d))
    Wh = rng.normal(size=(4 * H, H))
    b = rng.normal(size=4 * H)
    fwd = (x, h, c, Wx, Wh, b)
    _, c_new, gates = fallback.lstm_forward(*fwd)
    bwd = (rng.normal(size=(B, H)), rng.normal(size=(B, H)), c, c_new, gates, Wx, Wh)
    single = (x[:1], h[:1], c[:1], Wx, Wh, b)
    W = rng.normal(size=(V, d))
    allowed = np.ones(V, dtype=bool)
    allowed[:4] = False
    near = (rng.normal(size=(5, d)), W, allowed)
    near_many = (rng.normal(size=(10_000, d)), W, allowed)
    return {
        "lstm_forward batch 16": ("lstm_forward", fwd),
        "lstm_forward single row": ("lstm_forward", single),
        "lstm_backward batch 16": ("lstm_backward", bwd),
        "nearest 5 queries": ("nearest", near),
        "nearest 10k queries": ("nearest", near_many),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy (us)':>12s} {'compiled (us)':>14s} {'speedup':>8s}")
    for name, (fn, argv) in cases(rng).items():
        row = []
        for mod in (fallback, compiled):
            if mod is None:
                row.append(float("nan"))
                continue
            f = getattr(mod, fn)
            timer = timeit.Timer(lambda: f(*argv))
            n, _ = timer.autorange()
            best = min(timer.repeat(args.repeat, n)) / n
            row.append(best * 1e6)
        print(f"{name:28s} {row[0]:12.1f} {row[1]:14.1f} {row[0] / row[1]:7.2f}x")


if __name__ == "__main__":
    main()
