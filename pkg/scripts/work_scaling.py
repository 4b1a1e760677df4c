"""Print nonneg_mvp work counters over a grid of n and eps.

    python scripts/work_scaling.py --n 250 500 1000 --eps 0.2 0.1
"""

import argparse
import math

import numpy as np

from kdelinalg import KernelSpec, linalg
from kdelinalg.data import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1])
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    spec = KernelSpec()
    work = {}
    print(f"{'eps':>6} {'n':>6} {'buckets':>8} {'kde_work':>14}")
    for eps in args.eps:
        for n in args.n:
            X = generate("gaussian_blobs", {"n": n, "d": args.d}, seed=args.seed)
            res = linalg.nonneg_mvp(spec, X, np.full(n, 1 / math.sqrt(n)), eps, "sampling", args.seed)
            work[n, eps] = res.total_work
            print(f"{eps:>6g} {n:>6d} {len(res.buckets):>8d} {res.total_work:>14.4e}")
    ns = sorted(args.n)
    for eps in args.eps:
        for a, b in zip(ns, ns[1:]):
            print(f"eps={eps:g}: n {a}->{b} work ratio {work[b, eps] / work[a, eps]:.2f}")
    es = sorted(args.eps, reverse=True)
    for n in ns:
        for a, b in zip(es, es[1:]):
            print(f"n={n}: eps {a:g}->{b:g} work ratio {work[n, b] / work[n, a]:.2f}")


if __name__ == "__main__":
    main()
