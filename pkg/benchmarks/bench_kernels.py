"""Time the compiled boundary kernels against the pure-Python twin.

    python benchmarks/bench_kernels.py [--size 64] [--masks 200] [--repeat 3]
"""

import argparse
import timeit

import numpy as np
from scipy import ndimage

from styleseg import _kernels_py

try:
    from styleseg import _kernels
except ImportError:
    _kernels = None


def make_masks(n: int, size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    masks = []
    for _ in range(n):
        noise = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 10)
        masks.append(np.ascontiguousarray(noise > 0.5 * noise.std(), dtype=np.uint8))
    return masks


def starts(mask):
    labels, count = ndimage.label(mask, structure=np.ones((3, 3)))
    firsts = []
    for k in range(1, count + 1):
        r, c = np.argwhere(labels == k)[0]
        firsts.append((int(r), int(c)))
    return firsts


def run(backend, masks, seeds):
    total = 0.0
    for mask, firsts in zip(masks, seeds):
        for r, c in firsts:
            contour = backend.trace_boundary(mask, r, c)
            poly = backend.simplify_closed(contour, 1.0)
            total += backend.polygon_length(poly)
            total += backend.convex_hull_area(np.asarray(contour, dtype=np.float64))
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--masks", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    masks = make_masks(args.masks, args.size)
    seeds = [starts(m) for m in masks]
    backends = [("python", _kernels_py)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels))
    else:
        print("compiled extension not built; timing python only")

    results = {}
    for name, mod in backends:
        value = run(mod, masks, seeds)
        best = min(timeit.repeat(lambda: run(mod, masks, seeds), number=1, repeat=args.repeat))
        results[name] = (best, value)
        print(f"{name:7s} {best * 1e3:9.1f} ms  ({args.masks} masks, {args.size}x{args.size})  checksum {value:.6f}")
    if len(results) == 2:
        (tc, vc), (tp, vp) = results["cython"], results["python"]
        print(f"speedup {tp / tc:.1f}x, checksums {'agree' if abs(vc - vp) < 1e-9 else 'DIFFER'}")


if __name__ == "__main__":
    main()
