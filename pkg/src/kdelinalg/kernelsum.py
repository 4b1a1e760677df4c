"""Kernel-matrix sum estimation from a sampled principal submatrix.

``kernel_sum`` keeps each index with probability ``q1``, splits the sampled
rows into heavy and light ones with exclusion-KDE queries, estimates the heavy
part directly and the light part from a second Bernoulli(``q2``) subsample:

    value = n + q1**-2 * (S3 + q2**-2 * S4),   S3 = 2*S2 - S1.

Queries return means, so every sum multiplies by the size of the queried set
minus the excluded point.  A row is heavy when its de-normalized estimate
``(m - 1) * D`` reaches ``tau * m``.

``submatrix_sum_estimator`` is the one-level estimator ``n + s_o(K_A)/q**2``
computed exactly, and ``generate_dp_dataset`` draws from the two-mass
distribution used to probe sample complexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kde as kde_mod
from .kernels import KernelFamily, KernelSpec, PointSet, _check_cap, as_points, kernel_block

SUM_CONSTANT = 4  # C in q1, tau, mu, q2 and the KDE precision eps / C
LOG_CONSTANT = 16  # c_log = 16 ln n in the second-level additive error
MAX_MU = 0.5
DP_CROSS_VALUE = 1e-12  # cross-kernel values of the two-mass distribution stay below this


@dataclass
class SumEstimate:
    value: float
    s1_hat: float = 0.0
    s2_hat: float = 0.0
    s3_hat: float = 0.0
    s4_hat: float = 0.0
    m: int = 0
    heavy_count: int = 0
    mprime: int = 0
    q1: float = 1.0
    q2: float = 1.0
    tau: float = 0.0
    mu: float = 0.0
    mu_prime: float = 0.0
    kde_eps: float = 0.0
    total_work: int = 0
    A: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    B: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    Bprime: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)


def first_level_rate(n: int, eps: float, C: float = SUM_CONSTANT) -> float:
    return min(C / (eps * eps * math.sqrt(n)), 1.0)


def second_level_rate(m: int, tau: float, eps: float, C: float = SUM_CONSTANT) -> float:
    return min(C * eps**1.5 * math.sqrt(m * tau), 1.0)


def _bernoulli_subset(rng: np.random.Generator, idx: np.ndarray, q: float) -> np.ndarray:
    if q >= 1.0:
        return idx.copy()
    return idx[rng.random(idx.size) < q]


def _self_excluding_sum(backend, spec, X: PointSet, idx: np.ndarray, eps: float, mu: float,
                        seed: int, population: int) -> tuple[np.ndarray, int]:
    """Per-point ``D_{S \\ x}(x)`` over ``S = X[idx]``, and the total work."""
    if idx.size < 2:
        return np.zeros(idx.size), 0
    ex = kde_mod.build_exclusion(backend, spec, X.subset(idx), kde_mod.KdeParams(eps, mu), seed, population)
    values, work = ex.query_self_excluding()
    return values, int(sum(work))


def kernel_sum(spec: KernelSpec, X, eps: float, seed: int = 0, backend="sampling",
               C: float = SUM_CONSTANT, tau: float | None = None, q2: float | None = None) -> SumEstimate:
    """Estimate ``s(K)`` to within a ``1 + eps`` factor (probability about 0.99).

    ``tau`` and ``q2`` override the heaviness threshold and the second-level
    rate.  With the default constants most inputs have no heavy rows and
    ``q2 = 1``; the overrides let experiments reach the other branches.
    """
    X = as_points(X)
    n = X.n
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if n < 2:
        raise ValueError("kernel_sum needs at least two points")
    ss = np.random.SeedSequence([int(seed), 0x5355])
    level_seeds = [int(s) for s in ss.generate_state(4)]
    rng = np.random.default_rng(level_seeds[0])

    q1 = first_level_rate(n, eps, C)
    A = _bernoulli_subset(rng, np.arange(n), q1)
    m = A.size
    kde_eps = eps / C
    tau = m * eps**3 / C if tau is None else float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    mu = min(eps * min(tau, 1.0) / C, MAX_MU)
    est = SumEstimate(value=float(n), m=m, q1=q1, tau=tau, mu=mu, kde_eps=kde_eps, A=A)
    if m < 2:
        est.B, est.Bprime = A[:0], A[:0]
        return est

    # Heavy rows.  No mean estimate can exceed one_sided(1), so when the
    # threshold sits above it every row is light and the queries are skipped.
    threshold = tau * m / (m - 1)
    if threshold > kde_mod.one_sided(1.0, kde_eps, mu):
        d_A = None
        B = A[:0]
    else:
        d_A, work = _self_excluding_sum(backend, spec, X, A, kde_eps, mu, level_seeds[1], n)
        est.total_work += work
        B = A[d_A >= threshold]
    est.B = B
    est.heavy_count = B.size

    if B.size:
        d_B, work = _self_excluding_sum(backend, spec, X, B, kde_eps, mu, level_seeds[2], n)
        est.total_work += work
        est.s1_hat = float((B.size - 1) * d_B.sum())
        est.s2_hat = float((m - 1) * d_A[np.isin(A, B)].sum())
    est.s3_hat = 2 * est.s2_hat - est.s1_hat

    light = A[~np.isin(A, B)]
    q2 = second_level_rate(m, tau, eps, C) if q2 is None else float(q2)
    if not 0 < q2 <= 1:
        raise ValueError("q2 must lie in (0, 1]")
    Bp = _bernoulli_subset(rng, light, q2)
    est.q2, est.Bprime, est.mprime = q2, Bp, Bp.size
    mp = Bp.size
    if mp >= 2:
        # Additive error: the light-part formula, capped so the total
        # m'(m'-1) mu' / q2**2 stays within q1**2 * eps * n / C.
        budget = q1 * q1 * eps * n / C
        mu_prime = min(
            math.sqrt(tau) / (LOG_CONSTANT * math.log(n) * eps**1.5 * math.sqrt(m)),
            budget * q2 * q2 / (mp * (mp - 1)),
            MAX_MU,
        )
        est.mu_prime = mu_prime
        d_Bp, work = _self_excluding_sum(backend, spec, X, Bp, kde_eps, mu_prime, level_seeds[3], n)
        est.total_work += work
        est.s4_hat = float((mp - 1) * d_Bp.sum())

    est.value = n + (est.s3_hat + est.s4_hat / (q2 * q2)) / (q1 * q1)
    return est


def median_trials(n: int) -> int:
    """Odd repetition count of order log n."""
    return 2 * math.floor(math.log(n) / 2) + 1


def kernel_sum_median(spec: KernelSpec, X, eps: float, seed: int = 0, backend="sampling",
                      trials: int | None = None) -> tuple[float, list[SumEstimate]]:
    """Median of independent ``kernel_sum`` runs (``2 floor(ln n / 2) + 1`` by default)."""
    X = as_points(X)
    trials = median_trials(X.n) if trials is None else int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    runs = []
    for k in range(trials):
        sub_seed = int(np.random.SeedSequence([int(seed), k, 0x4D4544]).generate_state(1)[0])
        runs.append(kernel_sum(spec, X, eps, sub_seed, backend))
    return float(np.median([r.value for r in runs])), runs


# One-level estimator --------------------------------------------------------


def submatrix_sum_estimator(spec: KernelSpec, X, q: float, seed: int = 0, cap: int | None = None) -> float:
    """``Z = n + s_o(K_A) / q**2`` for a Bernoulli(q) index set ``A``; unbiased for ``s(K)``."""
    X = as_points(X)
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    rng = np.random.default_rng([int(seed), 0x5A])
    A = _bernoulli_subset(rng, np.arange(X.n), q)
    if A.size < 2:
        return float(X.n)
    _check_cap(A.size, cap)
    block = kernel_block(spec, X.coords[A], X.coords[A])
    return X.n + (float(block.sum()) - A.size) / (q * q)


def submatrix_sum_variance(K: np.ndarray, q: float) -> float:
    """Exact ``Var[Z]`` of the one-level estimator for a symmetric unit-diagonal ``K``.

    With ``S2 = sum_{i != j} K_ij**2`` and ``T3 = sum_i (r_i**2 - sum_{j != i} K_ij**2)``,
    ``r_i`` the off-diagonal row sums:
    ``Var = 2 (q**-2 - 1) S2 + 4 (q**-1 - 1) T3``.
    """
    K = np.asarray(K, dtype=float)
    off = K - np.diag(np.diag(K))
    sq = off * off
    S2 = float(sq.sum())
    r = off.sum(axis=1)
    T3 = float((r * r).sum() - sq.sum())
    return 2 * (q**-2 - 1) * S2 + 4 * (q**-1 - 1) * T3


# Two-mass distribution ------------------------------------------------------


def dp_scale(spec: KernelSpec | None = None) -> float:
    """Smallest practical scale putting every cross-kernel value below ``DP_CROSS_VALUE``.

    The closest distinct support points are the origin and a scaled basis
    vector, at distance ``scale`` in both the l1 and l2 metrics.
    """
    spec = KernelSpec() if spec is None else spec
    return spec.distance_for_value(DP_CROSS_VALUE) * (1 + 1e-9)


def sample_dp_labels(n: int, p: float, seed: int = 0) -> np.ndarray:
    """Support label per point: -1 for the origin, otherwise the basis index."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = np.random.default_rng([int(seed), 0x4450])
    at_origin = rng.random(n) < p
    basis = rng.integers(0, n, size=n)
    return np.where(at_origin, -1, basis)


def dp_points(labels: np.ndarray, scale: float) -> PointSet:
    n = labels.size
    coords = np.zeros((n, n))
    rows = np.flatnonzero(labels >= 0)
    coords[rows, labels[rows]] = scale
    return PointSet(coords)


def generate_dp_dataset(n: int, p: float, scale: float | None = None, seed: int = 0,
                        spec: KernelSpec | None = None) -> PointSet:
    """``n`` points in ``R^n``: the origin with probability ``p``, else ``scale`` times a random basis vector."""
    scale = dp_scale(spec) if scale is None else float(scale)
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError("scale must be positive and finite")
    return dp_points(sample_dp_labels(n, p, seed), scale)


def dp_exact_sum(labels: np.ndarray, scale: float, spec: KernelSpec | None = None) -> float:
    """``s(K)`` of a two-mass sample, in closed form from its labels."""
    spec = KernelSpec() if spec is None else spec
    labels = np.asarray(labels)
    n = labels.size
    _, counts = np.unique(labels, return_counts=True)
    same = float((counts.astype(float) ** 2).sum())
    n0 = int((labels == -1).sum())
    nb = n - n0
    k_origin = float(spec.from_distance(scale))
    basis_gap = 2 * scale if spec.family is KernelFamily.LAPLACIAN else math.sqrt(2) * scale
    k_basis = float(spec.from_distance(basis_gap))
    basis_same = same - n0 * n0
    return same + 2 * n0 * nb * k_origin + (nb * nb - basis_same) * k_basis


def dp_expected_sum(n: int, p: float) -> float:
    """Expected number of equal pairs (ordered, with the diagonal) under the two-mass law."""
    return n * n * (n - 1) * ((1 - p) / n) ** 2 + n * (1 - p) + n * (n - 1) * p * p + n * p
