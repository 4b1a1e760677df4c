"""Top eigenpair of a kernel matrix by noisy power iteration.

Each product ``Kz`` comes from a noisy oracle whose error is entrywise
non-negative.  Since the top eigenvector of a non-negative matrix can be taken
non-negative, the error never cancels the top component, and a running max of
``<z_t, Kz_t + e_t>`` over ``T = ceil(10 ln n / eps)`` steps certifies a
near-optimal Rayleigh quotient.

The adversary helpers build the small explicit matrices behind the matching
lower bounds: too little precision stalls the iteration at the start, too few
iterations cannot separate two nearby matrices, and signed noise can erase the
top component in one step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, as_points, kernel_block
from .linalg import _CACHE_LIMIT, nonneg_mvp

EPS_CAP = 0.5  # operational bound for a "sufficiently small" eps
DELTA_FRACTION = 1 / 8  # products run at precision eps / 8


class IllegalMoveError(ValueError):
    """The adversary's error vector exceeds its norm budget."""


class NoisyMvpOracle:
    """Approximate ``Kz`` with non-negative error of norm at most ``delta ||Kz||``."""

    delta: float = 0.0
    n: int

    def apply(self, z: np.ndarray, step: int) -> tuple[np.ndarray, int]:
        raise NotImplementedError


class KdeBackedOracle(NoisyMvpOracle):
    def __init__(self, spec: KernelSpec, X, delta: float, backend="sampling", seed: int = 0):
        self.spec = spec
        self.X = as_points(X)
        self.n = self.X.n
        self.delta = delta
        self.backend = backend
        self.seed = int(seed)
        self._cache = kernel_block(spec, self.X.coords, self.X.coords) if self.n <= _CACHE_LIMIT else None

    def apply(self, z, step):
        step_seed = int(np.random.SeedSequence([self.seed, step]).generate_state(1)[0])
        res = nonneg_mvp(self.spec, self.X, z, self.delta, self.backend, step_seed, kernel_cache=self._cache)
        return res.z, res.total_work


class ExactOracle(NoisyMvpOracle):
    """``delta = 0``: plain power iteration on the dense kernel matrix."""

    def __init__(self, spec: KernelSpec, X):
        self.X = as_points(X)
        self.n = self.X.n
        self.K = kernel_block(spec, self.X.coords, self.X.coords)

    def apply(self, z, step):
        return self.K @ z, self.n * self.n


@dataclass
class EigenPair:
    lam: float
    u: np.ndarray
    trace: list[tuple[float, float]] = field(default_factory=list)  # (<z_t, z~_{t+1}>, ||z~_{t+1}||)
    iterations: int = 0
    best_step: int = 0
    total_work: int = 0
    delta: float = 0.0


def iteration_count(n: int, eps: float) -> int:
    return math.ceil(10 * math.log(n) / eps)


def top_eigenpair(spec: KernelSpec, X, eps: float, oracle: NoisyMvpOracle | None = None,
                  backend="sampling", seed: int = 0, iterations: int | None = None) -> EigenPair:
    """Running-max noisy power iteration from the uniform unit vector.

    ``lam`` starts at minus infinity, so the first step always records a
    witness; with a non-negative error this can only raise the start value
    ``z_0^T K z_0``.  Ties keep the earliest step.
    """
    if not 0 < eps < EPS_CAP:
        raise ValueError(f"eps must lie in (0, {EPS_CAP}), got {eps}")
    X = as_points(X)
    n = X.n
    if oracle is None:
        oracle = KdeBackedOracle(spec, X, DELTA_FRACTION * eps, backend, seed)
    if oracle.n != n:
        raise ValueError("oracle size does not match the point set")
    T = iteration_count(n, eps) if iterations is None else int(iterations)

    z = np.full(n, 1.0 / math.sqrt(n))
    pair = EigenPair(lam=-math.inf, u=z.copy(), delta=oracle.delta)
    for t in range(T + 1):
        zt, work = oracle.apply(z, t)
        pair.total_work += work
        score = float(z @ zt)
        norm = float(np.linalg.norm(zt))
        pair.trace.append((score, norm))
        if score > pair.lam:
            pair.lam, pair.u, pair.best_step = score, z.copy(), t
        z = zt / norm
    pair.iterations = T + 1
    return pair


# Adversarial constructions --------------------------------------------------


def stagnation_matrix(n: int, eps: float, eps_dot: float | None = None) -> np.ndarray:
    """Diagonal of ``K = [1] + lam I_{n-1}`` with ``lam = 1 - n(eps + eps_dot)/(n - 1)``."""
    eps_dot = eps / n if eps_dot is None else eps_dot
    lam = 1.0 - n * (eps + eps_dot) / (n - 1)
    diag = np.full(n, lam)
    diag[0] = 1.0
    return diag


def stagnation_ratio(n: int, eps: float, eps_dot: float | None = None) -> float:
    """``||e|| / ||K z_0||`` for the move that maps ``z_0`` back to itself."""
    diag = stagnation_matrix(n, eps, eps_dot)
    z0 = np.full(n, 1.0 / math.sqrt(n))
    Kz0 = diag * z0
    e = z0 - Kz0
    return float(np.linalg.norm(e) / np.linalg.norm(Kz0))


def adversary_stagnation_check(n: int, eps: float, delta: float | None = None,
                               eps_dot: float | None = None) -> bool:
    """True when keeping ``z_1 = z_0`` is a legal move and ``z_0`` is a bad witness.

    ``delta`` defaults to ``1.01 * eps / (1 - eps)``.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    delta = 1.01 * eps / (1 - eps) if delta is None else delta
    if delta <= 0:
        raise ValueError("delta must be positive")
    diag = stagnation_matrix(n, eps, eps_dot)
    z0 = np.full(n, 1.0 / math.sqrt(n))
    Kz0 = diag * z0
    e = z0 - Kz0  # zero in the first coordinate, (1 - lam)/sqrt(n) elsewhere
    legal = np.linalg.norm(e) <= delta * np.linalg.norm(Kz0)
    lam1 = float(diag.max())
    bad_witness = float(z0 @ Kz0) < (1 - eps) * lam1
    return bool(legal and bad_witness)


def iteration_lb_closed_form(n: int, eps: float, delta: float) -> int:
    x = (delta / (2 * eps)) * math.sqrt(n)
    if x < 1:
        return 0
    return math.floor(math.log(x) / math.log1p(2 * eps))


def adversary_iteration_lb_check(n: int, eps: float, delta: float, budget: str = "proof") -> int:
    """Steps for which ``K = I`` and ``K' = I + 2 eps e1 e1^T`` give identical iterates.

    Both runs start at the all-ones vector.  The run on ``K'`` is exact; the
    run on ``K`` adds ``e = 2 eps (K' - K) z_t`` to stay in lockstep.  With
    ``budget="proof"`` the move at step ``t`` is legal while
    ``||e|| <= delta sqrt(n)`` (a lower bound on ``delta ||K z_t||``);
    ``budget="exact"`` uses ``delta ||K z_t||`` itself and can last longer.
    Returns the last step whose move was legal, or 0 if none was.
    """
    if n < 1 or not 0 < eps < 1 or delta <= 0:
        raise ValueError("need n >= 1, eps in (0, 1) and delta > 0")
    if budget not in ("proof", "exact"):
        raise ValueError("budget must be 'proof' or 'exact'")
    if budget == "exact" and 2 * eps <= delta:
        # ||e|| = 2 eps z_t[0] <= delta ||z_t|| at every step: no finite answer.
        raise ValueError("with the exact budget and delta >= 2 eps the adversary never runs out")
    # Only the first coordinate moves; the other n - 1 stay at 1.
    head = 1.0
    last_legal = -1
    t = 0
    while True:
        err = 2 * eps * head
        if budget == "proof":
            allowed = delta * math.sqrt(n)
        else:
            allowed = delta * math.sqrt(n - 1 + head * head)
        if err > allowed:
            break
        last_legal = t
        head *= 1 + 2 * eps
        t += 1
    return max(last_legal, 0)


def adversary_signed_noise_demo(n: int, delta: float) -> float:
    """``<v_1, z_1>`` after a signed error zeroes the top coordinate.

    ``K = diag(1, 1/2, ..., 1/2)`` with ``v_1 = e_1``.  The error
    ``-(1/sqrt(n)) e_1`` cancels the first coordinate of ``K z_0``; raises
    ``IllegalMoveError`` when that exceeds ``delta ||K z_0||``.
    """
    if n < 2 or delta <= 0:
        raise ValueError("need n >= 2 and delta > 0")
    diag = np.full(n, 0.5)
    diag[0] = 1.0
    z0 = np.full(n, 1.0 / math.sqrt(n))
    Kz0 = diag * z0
    e = np.zeros(n)
    e[0] = -Kz0[0]
    budget = delta * float(np.linalg.norm(Kz0))
    if float(np.linalg.norm(e)) > budget:
        raise IllegalMoveError(f"error norm {np.linalg.norm(e):.6g} exceeds budget {budget:.6g}")
    z1 = Kz0 + e
    z1 /= np.linalg.norm(z1)
    v1 = np.zeros(n)
    v1[0] = 1.0
    return float(v1 @ z1)
