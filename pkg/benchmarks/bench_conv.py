"""Time the conv kernels on each available backend.

    python3 benchmarks/bench_conv.py [--repeat N]

Shapes follow the generator trunk (64 features on a 22x22 LR crop) and the
discriminator's first stride-2 layer on an 88x88 HR crop.
"""
import argparse
import time

import numpy as np

from wavesr import kernels

CASES = (
    # name, (n, c, h, w), (o, c, k, k), stride
    ("trunk 64->64 s1 22x22 b4", (4, 64, 22, 22), (64, 64, 3, 3), 1),
    ("disc 32->32 s2 88x88 b4", (4, 32, 88, 88), (32, 32, 3, 3), 2),
    ("head 64->48 s1 22x22 b4", (4, 64, 22, 22), (48, 64, 3, 3), 1),
)


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench(repeat=5):
    rng = np.random.default_rng(0)
    rows = []
    for name, xs, ks, stride in CASES:
        x = rng.standard_normal(xs)
        k = rng.standard_normal(ks)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        oh = (xp.shape[2] - ks[2]) // stride + 1
        ow = (xp.shape[3] - ks[3]) // stride + 1
        g = rng.standard_normal((xs[0], ks[0], oh, ow))
        timings = {}
        for backend, mod in sorted(kernels.BACKENDS.items()):
            fwd = _best(lambda: mod.conv2d_forward(xp, k, stride, oh, ow), repeat)
            gin = _best(lambda: mod.conv2d_grad_input(g, k, xp.shape, stride), repeat)
            gker = _best(lambda: mod.conv2d_grad_kernel(xp, g, ks[2], ks[3], stride), repeat)
            timings[backend] = (fwd, gin, gker)
        rows.append((name, timings))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = bench(args.repeat)
    print("best-of-N wall time in milliseconds")
    print(f"{'case':<28} {'backend':<9} {'forward':>9} {'grad_in':>9} {'grad_k':>9} {'total':>9}  speedup")
    for name, timings in rows:
        base = sum(timings["python"])
        for backend, t in timings.items():
            total = sum(t)
            print(f"{name:<28} {backend:<9} " + " ".join(f"{v * 1e3:9.2f}" for v in t)
                  + f" {total * 1e3:9.2f}  {base / total:6.2f}x")
    if "compiled" not in kernels.BACKENDS:
        print("compiled backend not built; only the python fallback was timed")


if __name__ == "__main__":
    main()
