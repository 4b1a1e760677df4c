"""Compare the one-level submatrix estimator's variance with 0.001 eps^2 s(K)^2.

Uses the closed-form variance, so no Monte Carlo is needed; prints the ratio
for q = C / (eps^2 sqrt(n)) as n grows.
"""

import argparse

from kdelinalg import KernelSpec, kernels, kernelsum
from kdelinalg.data import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000, 2500, 4000])
    ap.add_argument("--eps", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    spec = KernelSpec()
    print(f"{'n':>6} {'q':>7} {'Var/bound':>10}")
    for n in args.n:
        K = kernels.kernel_matrix(spec, generate("gaussian_blobs", {"n": n, "d": 5}, seed=args.seed))
        q = kernelsum.first_level_rate(n, args.eps)
        var = kernelsum.submatrix_sum_variance(K, q)
        print(f"{n:>6d} {q:>7.3f} {var / (0.001 * args.eps**2 * K.sum() ** 2):>10.3f}")


if __name__ == "__main__":
    main()
