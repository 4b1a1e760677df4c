import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdelinalg import kernels, spectral
from kdelinalg.spectral import ExactOracle, IllegalMoveError

from conftest import random_points


def test_eps_gate():
    X = random_points(0, 5, 2)
    for eps in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError):
            spectral.top_eigenpair(kernels.KernelSpec(), X, eps)


def test_identical_points():
    spec = kernels.KernelSpec()
    n, eps = 40, 0.2
    pair = spectral.top_eigenpair(spec, np.zeros((n, 3)), eps, seed=1)
    assert (1 - eps / 2) * n <= pair.trace[0][0] <= (1 + eps / 8) * n
    assert (1 - eps / 2) * n <= pair.lam <= (1 + eps / 8) * n


def test_far_separated_points():
    spec = kernels.KernelSpec()
    X = np.arange(30.0)[:, None] * 100
    eps = 0.2
    pair = spectral.top_eigenpair(spec, X, eps, seed=2)
    lam1 = kernels.exact_top_eig(spec, X)[0]
    assert (1 - eps) <= pair.lam <= (1 + eps / 8) * lam1


def test_trace_invariants(blobs):
    spec = kernels.KernelSpec()
    eps = 0.3
    pair = spectral.top_eigenpair(spec, blobs, eps, seed=5)
    K = kernels.kernel_matrix(spec, blobs)
    lam1 = kernels.exact_top_eig(spec, blobs)[0]
    scores = [s for s, _ in pair.trace]
    assert pair.lam == max(scores)
    assert pair.best_step == scores.index(pair.lam)
    assert pair.iterations == spectral.iteration_count(blobs.n, eps) + 1 == len(pair.trace)
    z0 = np.full(blobs.n, 1 / math.sqrt(blobs.n))
    assert pair.lam >= z0 @ K @ z0
    assert abs(np.linalg.norm(pair.u) - 1) <= 1e-12 and np.all(pair.u >= 0)
    rq = pair.u @ K @ pair.u
    assert rq <= lam1 * (1 + 1e-12)
    assert pair.lam <= rq + pair.delta * lam1 + 1e-9


def test_exact_oracle_is_classical_power_iteration():
    spec = kernels.KernelSpec()
    X = random_points(3, 50, 2)
    K = kernels.kernel_matrix(spec, X)
    pair = spectral.top_eigenpair(spec, X, 0.3, oracle=ExactOracle(spec, X), iterations=20)
    z = np.full(50, 1 / math.sqrt(50))
    for t in range(21):
        Kz = K @ z
        assert pair.trace[t][0] == pytest.approx(z @ Kz, rel=1e-12)
        assert pair.trace[t][1] == pytest.approx(np.linalg.norm(Kz), rel=1e-12)
        z = Kz / np.linalg.norm(Kz)


def test_random_instances_sampling_backend():
    spec = kernels.KernelSpec()
    X = random_points(9, 300, 4)
    lam1 = kernels.exact_top_eig(spec, X)[0]
    K = kernels.kernel_matrix(spec, X)
    ok = 0
    for seed in range(5):
        pair = spectral.top_eigenpair(spec, X, 0.2, seed=seed)
        ok += pair.u @ K @ pair.u >= 0.875 * lam1
    assert ok == 5


# Adversaries -----------------------------------------------------------------


def test_stagnation_examples():
    assert spectral.adversary_stagnation_check(10**4, 0.1, 1.01 * 0.1 / 0.9)
    assert not spectral.adversary_stagnation_check(10**4, 0.1, 0.05)
    assert spectral.adversary_stagnation_check(10**6, 1e-6)
    with pytest.raises(ValueError):
        spectral.adversary_stagnation_check(50, 0.1)


def test_stagnation_ratio_closed_form():
    for n, eps in [(10**4, 0.1), (10**6, 1e-6), (500, 0.3)]:
        eps_dot = eps / n
        lam = 1 - n * (eps + eps_dot) / (n - 1)
        closed = (1 - lam) * math.sqrt((n - 1) / n) / math.sqrt(1 / n + (n - 1) * lam**2 / n)
        assert spectral.stagnation_ratio(n, eps) == pytest.approx(closed, rel=1e-9)
    assert spectral.stagnation_ratio(10**6, 1e-6) == pytest.approx(1e-6, rel=1e-5)


def test_iteration_lb_examples():
    assert spectral.adversary_iteration_lb_check(10**6, 0.05, 0.05) == 65
    assert math.floor(math.log(500) / math.log(1.1)) == 65
    n, eps = 10**4, 0.1
    assert spectral.adversary_iteration_lb_check(n, eps, 2 * eps / math.sqrt(n) * 0.999) == 0
    # Quadrupling n doubles sqrt(n): the count moves by floor or ceil of log 2 / log(1 + 2 eps).
    shift = math.log(2) / math.log(1.2)
    a = spectral.adversary_iteration_lb_check(n, eps, 0.07)
    b = spectral.adversary_iteration_lb_check(4 * n, eps, 0.07)
    assert b - a in (math.floor(shift), math.ceil(shift))


def test_iteration_lb_exact_budget_lasts_at_least_as_long():
    for n, eps, delta in [(10**4, 0.1, 0.15), (10**6, 0.05, 0.05), (400, 0.3, 0.5)]:
        assert (spectral.adversary_iteration_lb_check(n, eps, delta, budget="exact")
                >= spectral.adversary_iteration_lb_check(n, eps, delta))
    with pytest.raises(ValueError):
        spectral.adversary_iteration_lb_check(400, 0.3, 0.9, budget="exact")


@given(st.integers(2, 10**8), st.floats(0.001, 0.49), st.floats(1e-4, 1.0))
def test_iteration_lb_matches_closed_form(n, eps, delta):
    assert spectral.adversary_iteration_lb_check(n, eps, delta) == spectral.iteration_lb_closed_form(n, eps, delta)


def test_signed_noise():
    assert spectral.adversary_signed_noise_demo(400, 0.1) == 0.0
    assert spectral.adversary_signed_noise_demo(4, 0.9) == 0.0
    # Needed: 1/sqrt(n) <= delta ||K z0||, i.e. delta >= 0.0999 at n = 400.
    with pytest.raises(IllegalMoveError):
        spectral.adversary_signed_noise_demo(400, 0.09)
