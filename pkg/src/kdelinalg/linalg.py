"""Non-negative kernel matrix-vector products built from KDE queries.

``nonneg_mvp`` returns ``z = Ky + e`` with ``e >= 0`` entrywise and
``||e|| <= eps * ||Ky||`` (with high probability).  The input vector is split
into geometric value buckets; every bucket gets its own estimator whose
additive error is tuned to the bucket's level, and each coordinate of ``z``
sums one query per bucket.

Error budget, for a unit-norm input and internal precision ``eps_in = eps/3``:

* entries below ``eps_in / ((b + 1) n**1.5)`` are dropped and their total mass
  is added back to every coordinate (keeps ``e >= 0``, costs at most
  ``eps_in / ((b + 1) sqrt(n))`` per coordinate);
* rounding up to the bucket level inflates by at most ``1 / (1 - eps_in/2)``;
* KDE answers are one-sided, so they add a ``(1 + eps_in)`` factor plus an
  additive term of at most ``eps_in / sqrt(n)`` summed over all buckets.

Together the coordinatewise bound is
``(Ky)_j <= z_j <= (1 + eps)(Ky)_j + eps / (3 sqrt(n))`` and, since
``||Ky|| >= ||y|| = 1``, the norm bound follows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kde as kde_mod
from .kernels import KernelSpec, as_points, kernel_block

BUCKET_CONSTANT = 4  # C in b = C log2(n / eps) / eps and in the bucket mu
INTERNAL_SHRINK = 3  # buckets run at eps / 3 so the total error stays below eps
MAX_BUCKET_MU = 0.5
_CACHE_LIMIT = 4096  # largest n for which repeated products keep K in memory


@dataclass(frozen=True)
class Bucket:
    index: int  # 1-based, level (1 - eps_in/2) ** (index - 1)
    level: float
    size: int
    mu: float
    t: int


@dataclass
class MvpResult:
    z: np.ndarray
    buckets: list[Bucket] = field(default_factory=list)
    total_work: int = 0
    eps: float = 0.0
    eps_internal: float = 0.0
    b: int = 0
    drop_threshold: float = 0.0
    dropped_mass: float = 0.0
    all_dropped: bool = False
    scale: float = 1.0  # l2 norm divided out of y before bucketing


@dataclass(frozen=True)
class MvpPlan:
    n: int
    eps: float
    eps_internal: float
    b: int
    drop_threshold: float

    @property
    def ratio(self) -> float:
        return 1.0 - 0.5 * self.eps_internal

    def level(self, i):
        return self.ratio ** (np.asarray(i) - 1)


def plan(n: int, eps: float) -> MvpPlan:
    """Bucket count and drop threshold for ``n`` coordinates at precision ``eps``.

    ``b`` starts at ``C log2(n/eps_in)/eps_in`` and grows until the last
    bucket reaches below the drop threshold, so every kept entry has a bucket.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if n < 1:
        raise ValueError("n must be positive")
    e = eps / INTERNAL_SHRINK
    b = max(1, math.ceil(BUCKET_CONSTANT * math.log2(max(n, 2) / e) / e))
    log_ratio = math.log1p(-0.5 * e)
    while True:
        thr = e / ((b + 1) * n**1.5)
        if b * log_ratio <= math.log(thr):
            return MvpPlan(n, eps, e, b, thr)
        b = math.ceil(math.log(thr) / log_ratio)


def bucket_t(level: float, n: int) -> int:
    """Exponent ``t >= 0`` locating ``level`` on the dyadic grid around 1/sqrt(n)."""
    x = level * math.sqrt(n)
    if x < 1.0:
        x = 1.0 / x
    # frexp gives x = m 2**e with m in [0.5, 1), so floor(log2 x) = e - 1 exactly.
    return math.frexp(x)[1] - 1


def bucket_mu(t: int, n: int, p: MvpPlan) -> float:
    return (2.0**t) * (p.eps_internal / p.b) / (BUCKET_CONSTANT * n)


def assign_buckets(u: np.ndarray, p: MvpPlan) -> np.ndarray:
    """1-based bucket index with level(i+1) < u <= level(i); 0 for dropped entries."""
    idx = np.zeros(u.shape, dtype=np.int64)
    keep = u >= p.drop_threshold
    if not keep.any():
        return idx
    uk = u[keep]
    i = 1 + np.floor(np.log(uk) / math.log(p.ratio)).astype(np.int64)
    i = np.clip(i, 1, p.b)
    # Repair float boundary cases with direct level comparisons.
    for _ in range(3):
        up = (i > 1) & (p.level(i) < uk)
        down = (i < p.b) & (p.level(i + 1) >= uk)
        if not (up.any() or down.any()):
            break
        i = i - up + down
    idx[keep] = i
    return idx


def _validate_vector(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"vector has length {y.shape[0]}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("vector must be finite")
    if np.any(y < 0):
        raise ValueError("vector must be entrywise non-negative")
    return y


def nonneg_mvp(spec: KernelSpec, X, y, eps: float, backend="sampling", seed: int = 0,
               assume_unit: bool = False, kernel_cache: np.ndarray | None = None) -> MvpResult:
    """Approximate ``Ky`` for non-negative ``y`` with a one-sided error.

    By default ``y`` is scaled to unit norm first and ``z`` scaled back.  With
    ``assume_unit=True`` the vector is bucketed as given (its norm should be at
    most 1), which is what makes the all-dropped case reachable.

    ``kernel_cache`` may hold the full kernel matrix when many products share
    one point set (power iteration).  It only saves recomputing kernel values;
    the estimators, their randomness and the work counters are unchanged.
    """
    X = as_points(X)
    n = X.n
    y = _validate_vector(y, n)
    p = plan(n, eps)
    norm = float(np.linalg.norm(y))
    if norm == 0.0:
        raise ValueError("vector must be non-zero")
    scale = 1.0 if assume_unit else norm
    u = y / scale

    idx = assign_buckets(u, p)
    dropped_mass = float(u[idx == 0].sum())
    result = MvpResult(z=np.zeros(n), eps=eps, eps_internal=p.eps_internal, b=p.b,
                       drop_threshold=p.drop_threshold, dropped_mass=dropped_mass * scale, scale=scale)
    if not idx.any():
        result.all_dropped = True
        return result

    order = np.argsort(idx, kind="stable")
    kept = order[idx[order] > 0]
    labels, starts, counts = np.unique(idx[kept], return_index=True, return_counts=True)
    member_sets = np.split(kept, starts[1:])
    levels = p.level(labels)
    params, weights = [], levels * counts
    for i, level, size in zip(labels.tolist(), levels.tolist(), counts.tolist()):
        t = bucket_t(level, n)
        mu = min(bucket_mu(t, n, p), MAX_BUCKET_MU)
        result.buckets.append(Bucket(i, level, size, mu, t))
        params.append(kde_mod.KdeParams(p.eps_internal, mu))

    # One estimator per bucket, each queried at all n points.
    rng = np.random.default_rng([int(seed), 0x6D7670])
    populations = [n] * len(params)
    if kernel_cache is None:
        points = [X.coords[m] for m in member_sets]
        values, work = kde_mod.subset_queries(backend, spec, X.coords, params, populations, rng, points=points)
    else:
        values, work = kde_mod.subset_queries(backend, spec, X.coords, params, populations, rng,
                                              kernel_rows=kernel_cache, members=member_sets)
    z = values @ weights + dropped_mass
    result.z = z * scale
    result.total_work = n * int(sum(work))
    return result


def kernel_matmul(spec: KernelSpec, X, A, eps: float, backend="sampling", seed: int = 0):
    """``B ~ KA`` column by column; returns ``(B, total_work)``."""
    X = as_points(X)
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] != X.n:
        raise ValueError(f"matrix must have {X.n} rows, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix must be finite")
    if np.any(A < 0):
        raise ValueError("matrix must be entrywise non-negative")
    B = np.zeros_like(A)
    work = 0
    cache = kernel_block(spec, X.coords, X.coords) if A.shape[1] > 1 and X.n <= _CACHE_LIMIT else None
    for c in range(A.shape[1]):
        if not A[:, c].any():
            continue
        col_seed = int(np.random.SeedSequence([seed, c]).generate_state(1)[0])
        res = nonneg_mvp(spec, X, A[:, c], eps, backend, seed=col_seed, kernel_cache=cache)
        B[:, c] = res.z
        work += res.total_work
    return B, work


def quadform(spec: KernelSpec, X, v, eps: float, backend="sampling", seed: int = 0) -> tuple[float, int]:
    """``v^T K v`` from above, via one non-negative product; returns value and work."""
    X = as_points(X)
    v = _validate_vector(v, X.n)
    res = nonneg_mvp(spec, X, v, eps, backend, seed)
    return float(v @ res.z), res.total_work
