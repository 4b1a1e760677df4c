"""Relative error of kernel_sum (and its median wrapper) over many seeds."""

import argparse
import time

import numpy as np

from kdelinalg import KernelSpec, kernels, kernelsum
from kdelinalg.data import generate, parse_gen_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gen", default="gaussian_blobs:n=2000,d=5")
    ap.add_argument("--data-seed", type=int, default=13)
    ap.add_argument("--eps", type=float, default=0.25)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--median", action="store_true")
    args = ap.parse_args()

    spec = KernelSpec()
    kind, params = parse_gen_spec(args.gen)
    X = generate(kind, params, seed=args.data_seed)
    exact = kernels.exact_sum(spec, X)
    errs = []
    start = time.perf_counter()
    for s in range(args.seeds):
        if args.median:
            value, _ = kernelsum.kernel_sum_median(spec, X, args.eps, seed=s)
        else:
            value = kernelsum.kernel_sum(spec, X, args.eps, seed=s).value
        errs.append((value - exact) / exact)
    errs = np.array(errs)
    print(f"n={X.n} s(K)={exact:.6g} eps={args.eps} seeds={args.seeds} ({time.perf_counter() - start:.1f}s)")
    print(f"signed rel. error: mean {errs.mean():+.4f}, min {errs.min():+.4f}, max {errs.max():+.4f}")
    print(f"within eps: {(np.abs(errs) <= args.eps).sum()}/{args.seeds}")


if __name__ == "__main__":
    main()
