from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from cyclic_urn.fixpoint import (
    bst_split_check,
    bst_split_law,
    debiased_abs_second_moment,
    g_k,
    iterate_once,
    sample_xi,
    second_moment_contraction,
    split_sample,
    split_samples,
    square_contraction,
    third_moment_contraction,
    xi_moment_estimate,
)
from cyclic_urn.moments import exact_distribution
from cyclic_urn.spectral import InvalidParameter, build_basis

B7 = build_basis(7)
W = B7.omega(1)


def test_g_limits_and_two_paths():
    g1w = special.gamma(1 + W)
    assert g_k(0.0, 1, B7) == pytest.approx((W - 1) / g1w, abs=1e-14)
    assert g_k(1.0, 1, B7) == pytest.approx(0.0, abs=1e-14)
    direct = (0.5**W + W * 0.5**W - 1) / g1w
    assert abs(g_k(0.5, 1, B7) - direct) < 1e-12
    with pytest.raises(InvalidParameter):
        g_k(0.5, 3, B7)


def test_g_has_mean_zero():
    re = integrate.quad(lambda u: g_k(u, 1, B7).real, 0, 1, epsabs=1e-12)[0]
    im = integrate.quad(lambda u: g_k(u, 1, B7).imag, 0, 1, epsabs=1e-12)[0]
    assert abs(re) < 1e-10 and abs(im) < 1e-10


def test_contraction_constants_by_quadrature():
    e2 = integrate.quad(lambda u: abs(u**W) ** 2 + abs((1 - u) ** W) ** 2, 0, 1)[0]
    assert second_moment_contraction(B7, 1) == pytest.approx(e2, rel=1e-10)
    e3 = integrate.quad(lambda u: abs(u**W) ** 3 + abs((1 - u) ** W) ** 3, 0, 1)[0]
    assert third_moment_contraction(B7, 1) == pytest.approx(e3, rel=1e-10)
    assert third_moment_contraction(B7, 1) < 0.8
    sq = integrate.quad(lambda u: (u ** (2 * W) + W**2 * (1 - u) ** (2 * W)).real, 0, 1)[0]
    assert square_contraction(B7, 1).real == pytest.approx(sq, rel=1e-10)


def test_split_sample():
    rng = np.random.default_rng(0)
    s = split_sample(1, rng)
    assert s.I_n == 0 and s.J_n == 0
    with pytest.raises(InvalidParameter):
        split_sample(0, rng)


def test_split_marginal_is_uniform():
    _, i_n = split_samples(10, 10**5, np.random.default_rng(1))
    counts = np.bincount(i_n, minlength=10)
    assert stats.chisquare(counts).pvalue > 1e-3
    assert abs(i_n.mean() - 4.5) < 3 * i_n.std() / np.sqrt(i_n.size)


def test_bst_split_small_cases():
    left, right = bst_split_check(1, 4, np.random.default_rng(0))
    assert (left + right).tolist() == [1, 1, 0, 0]
    assert bst_split_law(3, 2) == {(1, 2, 0): Fraction(1, 2), (1, 1, 1): Fraction(1, 2)}


@given(st.integers(2, 5), st.integers(1, 6))
def test_bst_split_law_equals_urn_law(m, n):
    assert bst_split_law(m, n) == exact_distribution(m, n).law


def test_sample_xi_depth_one_is_g():
    rng = np.random.default_rng(2)
    pool = sample_xi(1, 1, 10**5, rng, B7, center=False)
    se = pool.std() / np.sqrt(pool.size)
    assert abs(pool.mean()) < 3 * se
    eg2 = integrate.quad(lambda u: abs(g_k(u, 1, B7)) ** 2, 0, 1)[0]
    a = np.abs(pool) ** 2
    assert abs(a.mean() - eg2) < 3 * a.std() / np.sqrt(a.size)


def test_uncentred_pool_mean_near_zero():
    pool = sample_xi(1, 30, 10**5, np.random.default_rng(3), B7, center=False)
    # the mean is not contracted, so its spread grows like sqrt(depth) times the one-step error
    assert abs(pool.mean()) < 3 * np.sqrt(30) * pool.std() / np.sqrt(pool.size)


def test_fixed_point_is_stable_under_one_more_iteration():
    rng = np.random.default_rng(4)
    pool = sample_xi(1, 30, 2 * 10**5, rng, B7)
    nxt = iterate_once(pool, 1, rng, B7)
    a, b = np.abs(pool) ** 2, np.abs(nxt) ** 2
    assert abs(a.mean() - b.mean()) < 3 * np.hypot(a.std(), b.std()) / np.sqrt(a.size)


def test_rotation_gives_type_one_law():
    # rotating Xi by omega multiplies E[Xi^2] by omega^2 and keeps E|Xi|^2
    pool = sample_xi(1, 25, 10**5, np.random.default_rng(5), B7)
    rot = W * pool
    assert np.mean(np.abs(rot) ** 2) == pytest.approx(np.mean(np.abs(pool) ** 2), rel=1e-12)
    assert np.mean(rot**2) == pytest.approx(W**2 * np.mean(pool**2), rel=1e-12)


def test_debias_factor():
    pool = np.full(10, 1.0 + 0j)
    rho = second_moment_contraction(B7, 1)
    assert debiased_abs_second_moment(pool, 5, B7, 1)[0] == pytest.approx(1 / (1 - rho**5))


def test_batch_estimate_is_consistent():
    est = xi_moment_estimate(1, 30, 2 * 10**5, np.random.default_rng(6), B7, batches=20)
    assert est.pool_size == 2 * 10**5 and len(est.batch_values) == 20
    assert abs(est.abs_sq - 2.440837) < 4 * est.se
    with pytest.raises(InvalidParameter):
        xi_moment_estimate(1, 30, 100, np.random.default_rng(0), B7, batches=1)


def test_sample_xi_guards():
    with pytest.raises(InvalidParameter):
        sample_xi(2, 5, 100, np.random.default_rng(0), B7)
    with pytest.raises(InvalidParameter):
        sample_xi(1, 0, 100, np.random.default_rng(0), B7)
