"""Kernel functions, point sets and brute-force oracles.

Every kernel here is shift-invariant, symmetric, has unit diagonal and takes
values in ``[0, 1]``.  The dense oracles (``exact_matvec``, ``exact_sum``,
``exact_top_eig``) are the ground truth every randomized routine is checked
against; they refuse inputs above a configurable size cap.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_ORACLE_CAP = 5000
ORACLE_CAP_ENV = "KDELINALG_ORACLE_CAP"

# Rows per block when materializing kernel matrices.
_BLOCK_ROWS = 1024


class CapacityError(RuntimeError):
    """Raised when an exact oracle is asked for more points than its cap."""


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    LAPLACIAN = "laplacian"
    RATIONAL_QUADRATIC = "rational_quadratic"


# Best known KDE exponent per family (metadata only, never certified here).
KDE_EXPONENT = {
    KernelFamily.GAUSSIAN: 0.173,
    KernelFamily.EXPONENTIAL: 0.1,
    KernelFamily.LAPLACIAN: 0.5,
    KernelFamily.RATIONAL_QUADRATIC: 0.0,
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its concentration parameter.

    ``bandwidth_scale`` multiplies the distance term: larger values make the
    kernel matrix closer to the identity, smaller values closer to all-ones.
    """

    family: KernelFamily = KernelFamily.GAUSSIAN
    bandwidth_scale: float = 1.0
    rq_beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        for name in ("bandwidth_scale", "rq_beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")

    @property
    def kde_exponent(self) -> float:
        return KDE_EXPONENT[self.family]

    @property
    def metric(self) -> str:
        return "cityblock" if self.family is KernelFamily.LAPLACIAN else "euclidean"

    def from_distance(self, dist):
        """Kernel value as a function of the family's distance (array-friendly)."""
        dist = np.asarray(dist, dtype=float)
        s = self.bandwidth_scale
        fam = self.family
        if fam is KernelFamily.GAUSSIAN:
            return np.exp(-s * dist * dist)
        if fam is KernelFamily.RATIONAL_QUADRATIC:
            return (1.0 + s * dist * dist) ** (-self.rq_beta)
        return np.exp(-s * dist)

    def distance_for_value(self, value: float) -> float:
        """Smallest distance at which the kernel drops to ``value`` (0 < value < 1)."""
        if not 0 < value < 1:
            raise ValueError("value must lie in (0, 1)")
        s = self.bandwidth_scale
        fam = self.family
        if fam is KernelFamily.GAUSSIAN:
            return math.sqrt(-math.log(value) / s)
        if fam is KernelFamily.RATIONAL_QUADRATIC:
            return math.sqrt((value ** (-1.0 / self.rq_beta) - 1.0) / s)
        return -math.log(value) / s


@dataclass(frozen=True)
class PointSet:
    """``n`` points in ``d`` dimensions, stored row-major."""

    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"point set must be a non-empty n x d array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point coordinates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "PointSet":
        return PointSet(self.coords[np.asarray(idx)])


def as_points(X) -> PointSet:
    return X if isinstance(X, PointSet) else PointSet(X)


def oracle_cap() -> int:
    raw = os.environ.get(ORACLE_CAP_ENV)
    if raw is None:
        return DEFAULT_ORACLE_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{ORACLE_CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError(f"{ORACLE_CAP_ENV} must be positive")
    return cap


def _check_cap(n: int, cap: int | None) -> None:
    cap = oracle_cap() if cap is None else cap
    if n > cap:
        raise CapacityError(f"exact oracle limited to {cap} points, got {n}")


def _as_point(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has a non-finite coordinate")
    return arr


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """k(x, y) for a single pair of points."""
    x = _as_point(x, "x")
    y = _as_point(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    if spec.family is KernelFamily.LAPLACIAN:
        dist = float(np.sum(np.abs(diff)))
    else:
        dist = math.sqrt(float(np.dot(diff, diff)))
    return float(spec.from_distance(dist))


def kernel_block(spec: KernelSpec, Q, P) -> np.ndarray:
    """Matrix of kernel values between the rows of ``Q`` and the rows of ``P``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if Q.shape[1] != P.shape[1]:
        raise ValueError(f"dimension mismatch: {Q.shape[1]} vs {P.shape[1]}")
    if spec.family is KernelFamily.GAUSSIAN:
        # sqeuclidean avoids a sqrt/square round trip.
        return np.exp(-spec.bandwidth_scale * cdist(Q, P, "sqeuclidean"))
    if spec.family is KernelFamily.RATIONAL_QUADRATIC:
        return (1.0 + spec.bandwidth_scale * cdist(Q, P, "sqeuclidean")) ** (-spec.rq_beta)
    return np.exp(-spec.bandwidth_scale * cdist(Q, P, spec.metric))


def kernel_matrix(spec: KernelSpec, X, cap: int | None = None) -> np.ndarray:
    X = as_points(X)
    _check_cap(X.n, cap)
    return kernel_block(spec, X.coords, X.coords)


def exact_matvec(spec: KernelSpec, X, y, cap: int | None = None) -> np.ndarray:
    """Ky by direct summation, one block of rows at a time."""
    X = as_points(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != X.n:
        raise ValueError(f"vector has length {y.shape[0]}, expected {X.n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("vector must be finite")
    _check_cap(X.n, cap)
    out = np.empty(X.n)
    for start in range(0, X.n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, X.n)
        out[start:stop] = kernel_block(spec, X.coords[start:stop], X.coords) @ y
    return out


def exact_sum(spec: KernelSpec, X, cap: int | None = None) -> float:
    """s(K): the sum of every entry of the kernel matrix."""
    X = as_points(X)
    _check_cap(X.n, cap)
    total = 0.0
    for start in range(0, X.n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, X.n)
        total += float(kernel_block(spec, X.coords[start:stop], X.coords).sum())
    return total


def offdiag_sum(spec: KernelSpec, X, cap: int | None = None) -> float:
    """s_o(K): the sum of the off-diagonal entries (the diagonal is all ones)."""
    X = as_points(X)
    if X.n < 2:
        return 0.0
    return exact_sum(spec, X, cap) - X.n


def exact_top_eig(spec: KernelSpec, X, cap: int | None = None) -> tuple[float, np.ndarray]:
    """Top eigenpair of K via a dense symmetric eigensolver.

    The eigenvector is sign-fixed to be entrywise non-negative (K has
    non-negative entries, so a non-negative top eigenvector always exists).
    """
    K = kernel_matrix(spec, X, cap)
    vals, vecs = np.linalg.eigh(K)
    lam = float(vals[-1])
    v = vecs[:, -1]
    if v.sum() < 0:
        v = -v
    # Round-off can leave tiny negative entries on numerically zero components.
    v = np.clip(v, 0.0, None)
    v /= np.linalg.norm(v)
    return lam, v
