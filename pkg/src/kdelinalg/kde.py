"""Kernel density estimators answering mean-kernel queries.

A query with point ``q`` against a stored set ``S`` returns ``D(q)`` with

    mean_S k(q, .)  <=  D(q)  <=  (1 + eps) * mean_S k(q, .) + mu

with probability at least ``1 - n**-fail_poly``.  Two backends exist:

* ``ExactKde`` evaluates the mean directly (cost ``|S|`` per query).
* ``SamplingKde`` averages ``r`` kernel values at indices drawn uniformly with
  replacement, ``r = ceil(c0 * ln(n * fail_poly) / (eps**2 * mu))`` (the
  ``p = 1`` baseline), then shifts the raw average upward so the two-sided
  sampling error becomes the one-sided guarantee above.

When ``r`` exceeds ``|S|`` the draws are realized as multinomial visit counts
over the stored points, which has the same distribution as ``r`` individual
draws and costs ``O(|S|)``.  Work counters always report ``r``.

``ExclusionKde`` stacks estimators on a complete binary tree so a query can
leave out any one stored point.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, PointSet, as_points, kernel_block

SAMPLE_CONSTANT = 3  # c0 in the sample count
EXCLUSION_MU_DIVISOR = 100  # child additive error is mu / (100 log2 m)
_MAX_SAMPLES = 2**62  # the multinomial sampler takes 64-bit trial counts


class Backend(str, enum.Enum):
    EXACT = "exact"
    SAMPLING = "sampling"


@dataclass(frozen=True)
class KdeParams:
    eps: float
    mu: float
    fail_poly: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.mu < 1:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if not self.fail_poly >= 1:
            raise ValueError(f"fail_poly must be >= 1, got {self.fail_poly}")


def sample_count(params: KdeParams, population: int, c0: float = SAMPLE_CONSTANT) -> int:
    """Number of uniform draws per query for the sampling backend."""
    r = math.ceil(c0 * math.log(max(population, 1) * params.fail_poly) / (params.eps**2 * params.mu))
    r = max(r, 1)
    if r > _MAX_SAMPLES:
        raise OverflowError(f"sample count {r} exceeds the supported maximum; raise eps or mu")
    return r


def one_sided(raw, eps: float, mu: float):
    """Shift a two-sided estimate of a mean into the one-sided KDE sandwich.

    If ``|raw - m| <= (eps*m + mu) / (2 + eps)`` then
    ``m <= (1 + eps/2) * raw + mu/2 <= (1 + eps) * m + mu``.
    """
    return (1.0 + 0.5 * eps) * raw + 0.5 * mu


def sampled_means(kvals: np.ndarray, r, rng: np.random.Generator) -> np.ndarray:
    """Average of ``r`` uniform draws (with replacement) along the last axis.

    ``kvals`` has shape ``(..., s)``: kernel values of each query against the
    ``s`` stored points.  ``r`` is an int or an integer array broadcastable to
    ``kvals.shape[:-1]``.
    """
    kvals = np.asarray(kvals, dtype=float)
    s = kvals.shape[-1]
    batch = kvals.shape[:-1]
    if s == 1:
        return kvals[..., 0].copy()
    if np.ndim(r) == 0 and int(r) < s:
        r = int(r)
        idx = rng.integers(0, s, size=batch + (r,))
        return np.take_along_axis(kvals, idx, axis=-1).mean(axis=-1)
    r_arr = np.broadcast_to(np.asarray(r, dtype=np.int64), batch)
    counts = rng.multinomial(r_arr, np.full(s, 1.0 / s))
    return np.einsum("...s,...s->...", counts, kvals) / r_arr


class KdeEstimator:
    """Mean-kernel estimator over a fixed point subset.

    Queries draw randomness from the stream ``(seed, key)``; omitting ``key``
    uses an internal counter, so repeated calls see fresh randomness while a
    fixed key reproduces an answer exactly.
    """

    backend: Backend
    backend_p: float

    def __init__(self, spec: KernelSpec, S, params: KdeParams, seed: int = 0, population: int | None = None):
        S = as_points(S)
        self.spec = spec
        self.base_set = S
        self.params = params
        self.rng_seed = int(seed)
        self.population = S.n if population is None else int(population)
        self._counter = itertools.count()

    @property
    def size(self) -> int:
        return self.base_set.n

    @property
    def work_per_query(self) -> int:
        raise NotImplementedError

    def _rng(self, key) -> np.random.Generator:
        if key is None:
            key = next(self._counter)
        key = key if isinstance(key, (tuple, list)) else (key,)
        return np.random.default_rng([self.rng_seed, *key])

    def _queries(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != self.base_set.d:
            raise ValueError(f"query dimension {Q.shape[1]} does not match stored dimension {self.base_set.d}")
        return Q

    def estimate(self, kvals: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Estimator output from precomputed kernel values of shape ``(..., |S|)``."""
        raise NotImplementedError

    def query_many(self, Q, key=None) -> tuple[np.ndarray, int]:
        """Answer one query per row of ``Q``; returns values and work per query."""
        Q = self._queries(Q)
        kvals = kernel_block(self.spec, Q, self.base_set.coords)
        return self.estimate(kvals, self._rng(key)), self.work_per_query

    def query(self, q, key=None) -> tuple[float, int]:
        values, work = self.query_many(np.asarray(q, dtype=float).reshape(1, -1), key)
        return float(values[0]), work


class ExactKde(KdeEstimator):
    backend = Backend.EXACT
    backend_p = 0.0

    @property
    def work_per_query(self) -> int:
        return self.size

    def estimate(self, kvals, rng=None):
        return np.asarray(kvals, dtype=float).mean(axis=-1)


class SamplingKde(KdeEstimator):
    backend = Backend.SAMPLING
    backend_p = 1.0

    def __init__(self, spec, S, params, seed=0, population=None):
        super().__init__(spec, S, params, seed, population)
        self.samples = sample_count(params, self.population)

    @property
    def work_per_query(self) -> int:
        return self.samples

    def raw_estimate(self, kvals, rng):
        return sampled_means(kvals, self.samples, rng)

    def estimate(self, kvals, rng):
        return one_sided(self.raw_estimate(kvals, rng), self.params.eps, self.params.mu)

    def query_raw(self, Q, key=None) -> np.ndarray:
        """Unshifted sample averages (two-sided, unbiased for the mean)."""
        Q = self._queries(Q)
        kvals = kernel_block(self.spec, Q, self.base_set.coords)
        return self.raw_estimate(kvals, self._rng(key))


_BACKENDS = {Backend.EXACT: ExactKde, Backend.SAMPLING: SamplingKde}


def build(backend, spec: KernelSpec, S, params: KdeParams, seed: int = 0, population: int | None = None) -> KdeEstimator:
    S = as_points(S)
    return _BACKENDS[Backend(backend)](spec, S, params, seed, population)


def query_groups(estimators: list[KdeEstimator], Q, rng: np.random.Generator,
                 kernel_rows: np.ndarray | None = None,
                 members: list[np.ndarray] | None = None) -> tuple[np.ndarray, list[int]]:
    """Query several estimators of one backend with the same query points.

    Returns the values with shape ``(len(Q), len(estimators))`` and the
    per-query work of each estimator.  When the estimators are built on
    subsets of one point set, passing its kernel block against ``Q``
    (``kernel_rows``) and each estimator's index set (``members``) skips
    recomputing kernel values.
    """
    if (kernel_rows is None) != (members is None):
        raise ValueError("kernel_rows and members must be given together")
    if not estimators:
        return np.empty((len(np.atleast_2d(Q)), 0)), []
    first = estimators[0]
    if any(type(e) is not type(first) or e.spec != first.spec for e in estimators):
        raise ValueError("query_groups needs estimators sharing one backend and kernel")
    if kernel_rows is None:
        points = [e.base_set.coords for e in estimators]
    else:
        points = None
    return subset_queries(first.backend, first.spec, Q, [e.params for e in estimators],
                          [e.population for e in estimators], rng,
                          points=points, kernel_rows=kernel_rows, members=members)


def subset_queries(backend, spec: KernelSpec, Q, params: list[KdeParams], populations: list[int],
                   rng: np.random.Generator, points: list[np.ndarray] | None = None,
                   kernel_rows: np.ndarray | None = None,
                   members: list[np.ndarray] | None = None) -> tuple[np.ndarray, list[int]]:
    """Answers of one estimator per point subset, for every row of ``Q``.

    Subsets are given either as coordinate arrays (``points``) or as index
    sets into the columns of a precomputed ``kernel_rows`` block.  Estimators
    of equal size are evaluated together; each behaves exactly like a
    ``build(backend, ...)`` estimator with the matching params.
    """
    backend = Backend(backend)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    sizes = [len(p) for p in (points if points is not None else members)]
    k = len(sizes)
    out = np.empty((Q.shape[0], k))
    if backend is Backend.EXACT:
        work = list(sizes)
    else:
        work = [sample_count(pr, pop) for pr, pop in zip(params, populations)]
    by_size: dict[int, list[int]] = {}
    for j, size in enumerate(sizes):
        if size < 1:
            raise ValueError("every subset must be non-empty")
        by_size.setdefault(size, []).append(j)
    for size, cols in sorted(by_size.items()):
        if kernel_rows is None:
            kvals = kernel_block(spec, Q, np.concatenate([points[j] for j in cols]))
        else:
            kvals = kernel_rows[:, np.concatenate([members[j] for j in cols])]
        kvals = kvals.reshape(Q.shape[0], len(cols), size)
        if backend is Backend.EXACT:
            out[:, cols] = kvals.mean(axis=-1)
        else:
            r = np.array([work[j] for j in cols], dtype=np.int64)
            raw = sampled_means(kvals, r[None, :], rng)
            eps = np.array([params[j].eps for j in cols])
            mu = np.array([params[j].mu for j in cols])
            out[:, cols] = one_sided(raw, eps[None, :], mu[None, :])
    return out, work


class ExclusionKde:
    """Binary tree of estimators answering means over ``S`` minus one point.

    ``S`` is padded to ``M = 2**depth`` slots; slots past ``|S|`` are empty and
    never queried.  Node ``(level, j)`` covers slots
    ``[j * M >> level, (j + 1) * M >> level)``.  A query excluding ``skip``
    uses the sibling of every node on the root-to-leaf path of ``skip``: at most
    ``depth`` disjoint nodes whose union is ``S`` without ``skip``.  Their
    answers are combined by cardinality-weighted averaging, so the additive
    error of the combination equals the child additive error
    ``mu / (100 * log2 |S|)``.
    """

    def __init__(self, backend, spec: KernelSpec, S, params: KdeParams, seed: int = 0, population: int | None = None):
        S = as_points(S)
        self.backend = Backend(backend)
        self.spec = spec
        self.base_set = S
        self.params = params
        self.rng_seed = int(seed)
        self.population = S.n if population is None else int(population)
        m = S.n
        self.depth = (m - 1).bit_length()
        self.padded_size = 1 << self.depth
        child_mu = params.mu / (EXCLUSION_MU_DIVISOR * math.log2(m)) if m >= 2 else params.mu
        self.child_params = KdeParams(params.eps, child_mu, params.fail_poly)
        self._nodes: dict[tuple[int, int], KdeEstimator] = {}
        self._counter = itertools.count()
        if self.backend is Backend.SAMPLING:
            self._samples = sample_count(self.child_params, self.population)

    @property
    def size(self) -> int:
        return self.base_set.n

    def node_range(self, level: int, j: int) -> tuple[int, int]:
        width = self.padded_size >> level
        return min(j * width, self.size), min((j + 1) * width, self.size)

    def node(self, level: int, j: int) -> KdeEstimator | None:
        """Estimator of node ``(level, j)``, or None for an all-padding node."""
        start, stop = self.node_range(level, j)
        if start >= stop:
            return None
        est = self._nodes.get((level, j))
        if est is None:
            seed = int(np.random.SeedSequence([self.rng_seed, level, j]).generate_state(1)[0])
            est = build(self.backend, self.spec, self.base_set.subset(np.arange(start, stop)),
                        self.child_params, seed, self.population)
            self._nodes[(level, j)] = est
        return est

    def cover(self, skip: int) -> list[tuple[int, int]]:
        """Nodes whose disjoint union is every stored index except ``skip``."""
        skip = self._check_skip(skip)
        out = []
        for level in range(1, self.depth + 1):
            sibling = (skip >> (self.depth - level)) ^ 1
            start, stop = self.node_range(level, sibling)
            if start < stop:
                out.append((level, sibling))
        return out

    def _check_skip(self, skip) -> int:
        if not (isinstance(skip, (int, np.integer)) and 0 <= skip < self.size):
            raise ValueError(f"skip index must lie in [0, {self.size}), got {skip!r}")
        return int(skip)

    def query_excluding(self, q, skip: int, key=None) -> tuple[float, int]:
        """Mean of k(q, x) over stored x other than ``x_skip``, with work."""
        nodes = self.cover(skip)
        if not nodes:
            return 0.0, 0
        if key is None:
            key = next(self._counter)
        total = 0.0
        work = 0
        for level, j in nodes:
            est = self.node(level, j)
            value, w = est.query(q, key=(key, level, j))
            total += est.size * value
            work += w
        return total / (self.size - 1), work

    def query_self_excluding(self, key=None) -> tuple[np.ndarray, np.ndarray]:
        """``D_{S \\ x_i}(x_i)`` for every stored index ``i``, batched by tree level.

        Returns the values and per-query work as arrays of length ``|S|``.
        """
        m = self.size
        values = np.zeros(m)
        work = np.zeros(m, dtype=object)
        if m < 2:
            return values, work
        if key is None:
            key = next(self._counter)
        coords = self.base_set.coords
        for level in range(1, self.depth + 1):
            rng = np.random.default_rng([self.rng_seed, key, level])
            width = self.padded_size >> level
            full_blocks, partial = [], []
            for left in range(0, 1 << level, 2):
                ls, le = self.node_range(level, left)
                rs, re = self.node_range(level, left + 1)
                if rs >= re:
                    continue  # right sibling is padding; left needs nothing here
                block = kernel_block(self.spec, coords[ls:le], coords[rs:re])
                if le - ls == width and re - rs == width:
                    full_blocks.append((ls, rs, block))
                else:
                    partial.append((ls, le, rs, re, block))
            if full_blocks:
                stacked = np.stack([b for _, _, b in full_blocks])
                # Left points query the right node, right points query the left node.
                kv = np.concatenate([stacked, stacked.transpose(0, 2, 1)])
                est, per_query = self._estimate(kv, rng)
                half = len(full_blocks)
                for (ls, rs, _), from_left, from_right in zip(full_blocks, est[:half], est[half:]):
                    values[ls:ls + width] += width * from_left
                    values[rs:rs + width] += width * from_right
                    work[ls:ls + width] += per_query(width)
                    work[rs:rs + width] += per_query(width)
            for ls, le, rs, re, block in partial:
                est, per_query = self._estimate(block, rng)
                values[ls:le] += (re - rs) * est
                work[ls:le] += per_query(re - rs)
                est, per_query = self._estimate(block.T, rng)
                values[rs:re] += (le - ls) * est
                work[rs:re] += per_query(le - ls)
        return values / (m - 1), work

    def _estimate(self, kvals, rng):
        if self.backend is Backend.EXACT:
            return kvals.mean(axis=-1), lambda node_size: node_size
        raw = sampled_means(kvals, self._samples, rng)
        samples = self._samples
        return one_sided(raw, self.child_params.eps, self.child_params.mu), lambda node_size: samples


def build_exclusion(backend, spec: KernelSpec, S, params: KdeParams, seed: int = 0,
                    population: int | None = None) -> ExclusionKde:
    return ExclusionKde(backend, spec, S, params, seed, population)


def query_excluding(ex: ExclusionKde, q, skip: int, key=None) -> tuple[float, int]:
    return ex.query_excluding(q, skip, key)
