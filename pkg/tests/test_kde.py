import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdelinalg import kde, kernels
from kdelinalg.kde import ExactKde, KdeParams, SamplingKde

from conftest import random_points


def true_means(spec, Q, S):
    return kernels.kernel_block(spec, Q, S).mean(axis=1)


def test_params_validation():
    for bad in [dict(eps=0, mu=0.1), dict(eps=1, mu=0.1), dict(eps=0.1, mu=0), dict(eps=0.1, mu=1.0),
                dict(eps=0.1, mu=0.1, fail_poly=0.5)]:
        with pytest.raises(ValueError):
            KdeParams(**bad)


def test_build_errors(gauss):
    with pytest.raises(ValueError):
        kde.build("exact", gauss, np.empty((0, 2)), KdeParams(0.1, 0.1))
    with pytest.raises(ValueError):
        kde.build("hashing", gauss, np.zeros((2, 2)), KdeParams(0.1, 0.1))
    est = kde.build("sampling", gauss, np.zeros((2, 2)), KdeParams(0.1, 0.1))
    with pytest.raises(ValueError):
        est.query([0.0, 0.0, 0.0])


def test_exact_backend_is_the_mean(gauss):
    S = random_points(1, 37, 3)
    est = kde.build("exact", gauss, S, KdeParams(0.3, 0.2))
    Q = random_points(2, 5, 3)
    vals, work = est.query_many(Q)
    np.testing.assert_allclose(vals, true_means(gauss, Q, S), rtol=1e-15)
    assert work == 37
    assert est.backend_p == 0.0


def test_exact_two_point_closed_form(gauss):
    S = np.array([[0.0], [1.0]])
    value, _ = kde.build("exact", gauss, S, KdeParams(0.1, 0.1)).query([0.0])
    assert value == pytest.approx((1 + math.exp(-1)) / 2, rel=1e-15)


def test_sampling_on_copies_of_one_point(gauss):
    z = np.array([0.5, -1.5])
    eps, mu = 0.2, 0.05
    est = kde.build("sampling", gauss, np.tile(z, (100, 1)), KdeParams(eps, mu), seed=4)
    for key in range(20):
        value, _ = est.query(z, key=key)
        assert 1.0 <= value <= 1 + eps + mu


def test_sampling_raw_mean_is_unbiased(gauss):
    S = np.array([[0.0], [1.0]])
    params = KdeParams(0.9, 0.9)
    est = kde.build("sampling", gauss, S, params, seed=3)
    raws = np.array([est.query_raw([[0.0]], key=k)[0] for k in range(10_000)])
    target = (1 + math.exp(-1)) / 2
    se = raws.std(ddof=1) / math.sqrt(raws.size)
    assert abs(raws.mean() - target) <= 3 * se


def test_sampling_violation_rate(gauss):
    S = random_points(11, 400, 4)
    eps, mu = 0.2, 0.01
    est = kde.build("sampling", gauss, S, KdeParams(eps, mu), seed=11)
    Q = random_points(12, 1000, 4, scale=0.7)
    vals, work = est.query_many(Q, key=0)
    truth = true_means(gauss, Q, S)
    bad = (vals < truth) | (vals > (1 + eps) * truth + mu)
    assert bad.mean() <= 0.01
    assert work == kde.sample_count(KdeParams(eps, mu), 400)


def test_small_sample_count_uses_index_draws(gauss):
    # r < |S|: individual draws, still unbiased.
    S = random_points(5, 500, 2)
    params = KdeParams(0.9, 0.9)
    est = kde.build("sampling", gauss, S, params, seed=0)
    assert est.samples < 500
    raws = np.concatenate([est.query_raw(S[:1], key=k) for k in range(4000)])
    target = true_means(gauss, S[:1], S)[0]
    assert abs(raws.mean() - target) <= 4 * raws.std(ddof=1) / math.sqrt(raws.size)


def test_work_accounting_formula():
    p = KdeParams(0.1, 0.01, fail_poly=2)
    assert kde.sample_count(p, 1000) == math.ceil(3 * math.log(2000) / (0.01 * 0.01))
    assert kde.sample_count(KdeParams(0.99, 0.99), 1) == 1
    for mu in [0.1, 0.013, 0.0007]:
        r = kde.sample_count(KdeParams(0.2, mu), 500)
        r2 = kde.sample_count(KdeParams(0.2, mu / 2), 500)
        assert 2 * r - 1 <= r2 <= 2 * r


def test_determinism(gauss):
    S = random_points(1, 50, 2)
    Q = random_points(2, 10, 2)
    a = kde.build("sampling", gauss, S, KdeParams(0.1, 0.05), seed=9)
    b = kde.build("sampling", gauss, S, KdeParams(0.1, 0.05), seed=9)
    np.testing.assert_array_equal(a.query_many(Q)[0], b.query_many(Q)[0])
    np.testing.assert_array_equal(a.query_many(Q, key=5)[0], b.query_many(Q, key=5)[0])
    assert not np.array_equal(a.query_many(Q)[0], a.query_many(Q)[0])


@given(st.floats(0, 1), st.floats(0.01, 0.99), st.floats(0.001, 0.99), st.floats(-1, 1))
def test_one_sided_shift_lands_in_sandwich(m, eps, mu, frac):
    # Any raw estimate inside the two-sided band maps into [m, (1+eps) m + mu].
    half_width = (eps * m + mu) / (2 + eps)
    raw = m + frac * half_width
    value = kde.one_sided(raw, eps, mu)
    assert m - 1e-12 <= value <= (1 + eps) * m + mu + 1e-12


def test_subset_queries_match_individual_estimators(gauss):
    X = random_points(3, 60, 2)
    groups = [np.arange(0, 10), np.arange(10, 20), np.arange(20, 45), np.array([59])]
    params = [KdeParams(0.2, 0.05)] * len(groups)
    K = kernels.kernel_block(gauss, X, X)
    rng = np.random.default_rng(0)
    vals, work = kde.subset_queries("exact", gauss, X, params, [60] * 4, rng, kernel_rows=K, members=groups)
    for j, g in enumerate(groups):
        np.testing.assert_allclose(vals[:, j], K[:, g].mean(axis=1), rtol=1e-14)
    assert work == [10, 10, 25, 1]
    ests = [kde.build("exact", gauss, X[g], params[0]) for g in groups]
    vals2, _ = kde.query_groups(ests, X, rng)
    np.testing.assert_allclose(vals2, vals, rtol=1e-14)


# Exclusion structure ---------------------------------------------------------


def test_exclusion_two_points(gauss):
    S = np.array([[0.0, 0.0], [0.5, 0.0]])
    q = np.array([0.2, 0.1])
    eps, mu = 0.25, 0.02
    for backend in ("exact", "sampling"):
        ex = kde.build_exclusion(backend, gauss, S, KdeParams(eps, mu), seed=1)
        value, _ = ex.query_excluding(q, 0)
        k1 = kernels.kernel_eval(gauss, q, S[1])
        assert k1 <= value <= (1 + eps) * k1 + mu


@pytest.mark.parametrize("m", [1, 2, 3, 7, 8, 13, 64])
def test_exclusion_exact_matches_direct_mean(gauss, m):
    S = random_points(m, m, 2)
    ex = kde.build_exclusion("exact", gauss, S, KdeParams(0.1, 0.1))
    K = kernels.kernel_matrix(gauss, S)
    direct = (K.sum(axis=1) - 1) / max(m - 1, 1)
    vals, work = ex.query_self_excluding()
    # Summation order differs from the direct mean, so equality is up to rounding.
    np.testing.assert_allclose(vals, direct, rtol=1e-13, atol=1e-16)
    assert all(w == m - 1 for w in work)
    q = np.array([0.3, -0.2])
    kq = kernels.kernel_block(gauss, q, S)[0]
    for skip in range(m):
        v, _ = ex.query_excluding(q, skip)
        ref = (kq.sum() - kq[skip]) / (m - 1) if m > 1 else 0.0
        assert v == pytest.approx(ref, rel=1e-13, abs=1e-16)


def test_exclusion_cover_is_a_partition(gauss):
    for m in [2, 5, 8, 13, 100]:
        ex = kde.build_exclusion("exact", gauss, random_points(0, m, 1), KdeParams(0.1, 0.1))
        for skip in range(m):
            covered = []
            nodes = ex.cover(skip)
            assert len(nodes) <= 2 * math.log2(m) + 1e-9
            for level, j in nodes:
                a, b = ex.node_range(level, j)
                covered.extend(range(a, b))
            assert sorted(covered) == [i for i in range(m) if i != skip]


def test_exclusion_child_error_and_errors(gauss):
    ex = kde.build_exclusion("sampling", gauss, random_points(0, 256, 2), KdeParams(0.25, 0.02))
    assert ex.child_params.mu == pytest.approx(0.02 / (100 * 8))
    assert ex.padded_size == 256
    for bad in (-1, 256, 3.0):
        with pytest.raises(ValueError):
            ex.query_excluding([0.0, 0.0], bad)


def test_exclusion_sampling_violation_rate(gauss):
    eps, mu = 0.25, 0.02
    S = random_points(21, 256, 2)
    K = kernels.kernel_matrix(gauss, S)
    direct = (K.sum(axis=1) - 1) / 255
    bad = 0
    for seed in range(50):
        ex = kde.build_exclusion("sampling", gauss, S, KdeParams(eps, mu), seed=seed)
        vals, _ = ex.query_self_excluding()
        bad += int(((vals < direct) | (vals > (1 + eps) * direct + mu)).sum())
    assert bad / (50 * 256) <= 0.01
