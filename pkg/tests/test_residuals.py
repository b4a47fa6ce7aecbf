import math
from fractions import Fraction

import numpy as np
import pytest

from cyclic_urn.fixpoint import g_k
from cyclic_urn.moments import exact_distribution
from cyclic_urn.residuals import (
    assemble_Z,
    assemble_Z_batch,
    error_term_bn,
    exact_Z_covariance,
    f2_component,
    horizon_for,
    martingale_path,
    martingale_values,
    normalizer,
    proxy_bias_allowance,
    xi_proxy,
)
from cyclic_urn.spectral import InvalidParameter, build_basis, limit_covariance
from cyclic_urn.urn import UrnConfig, simulate


def _joint_law(m, n, big):
    """Exact law of (R_n, R_big) by forward enumeration from every state at time n."""
    out = {}
    for state, p in exact_distribution(m, n).law.items():
        layer = {state: Fraction(1)}
        for t in range(n, big):
            nxt = {}
            for s, q in layer.items():
                for j, c in enumerate(s):
                    if c:
                        s2 = list(s)
                        s2[(j + 1) % m] += 1
                        key = tuple(s2)
                        nxt[key] = nxt.get(key, 0) + q * Fraction(c, t + 1)
            layer = nxt
        for s, q in layer.items():
            out[(state, s)] = p * q
    return out


def _enumerated_cov(m, n, big):
    basis = build_basis(m)
    law = _joint_law(m, n, big)
    keys = list(law)
    probs = np.array([float(law[k]) for k in keys])
    small = np.array([k[0] for k in keys], dtype=float)
    large = np.array([k[1] for k in keys], dtype=float)
    proxies = {k: martingale_values(basis, k, big, basis.project(large)[:, k]) for k in basis.large_indices}
    z = assemble_Z_batch(basis, small, n, proxies)
    mu = probs @ z
    return (z - mu).T @ ((z - mu) * probs[:, None]), mu


@pytest.mark.parametrize("m,n,big", [(7, 4, 8), (5, 6, 6), (8, 3, 7)])
def test_exact_covariance_matches_enumeration(m, n, big):
    cov, mu = _enumerated_cov(m, n, big)
    assert np.abs(mu).max() < 1e-12
    assert np.abs(exact_Z_covariance(m, n, big) - cov).max() < 1e-10


def test_exact_covariance_needs_horizon():
    with pytest.raises(InvalidParameter):
        exact_Z_covariance(7, 10, None)


def test_martingale_has_mean_zero_and_matches_path():
    m, k = 7, 1
    basis = build_basis(m)
    law = exact_distribution(m, 9).law
    mean = sum(float(p) * martingale_values(basis, k, 9, basis.project(np.array(c, float))[k]) for c, p in law.items())
    assert abs(mean) < 1e-12
    traj = simulate(UrnConfig(m, 0, 5000, 4, (100, 5000)))
    path = martingale_path(traj, k)
    assert list(path.times) == [100, 5000]
    assert path.values[1] == pytest.approx(martingale_values(basis, k, 5000, traj.at(5000).projections[k]))


def test_xi_proxy_and_assemble():
    traj = simulate(UrnConfig(7, 0, 50 * 200, 8, (200, 50 * 200)))
    assert horizon_for(200, 50) == 10000
    prox = {1: xi_proxy(traj, 1, 50, 200)}
    assert prox[1].horizon == 10000
    z = assemble_Z(traj, prox, build_basis(7), 200)
    assert z.coords.shape == (6,)
    with pytest.raises(ValueError):
        assemble_Z(traj, {}, build_basis(7), 200)


def test_proxy_bias_is_the_diagonal_deficit():
    # with the proxy at horizon N, large-coordinate variances shrink by the allowance
    n, big = 300, 3000
    exact = exact_Z_covariance(7, n, big)
    limit_like = exact_Z_covariance(7, n, 4 * 10**5)
    allow = proxy_bias_allowance(7, n, big) - proxy_bias_allowance(7, n, 4 * 10**5)
    assert np.trace((limit_like - exact)[:2, :2]) == pytest.approx(np.trace(allow[:2, :2]), rel=1e-4)


def test_normalizer():
    mm = limit_covariance(build_basis(7))
    cov = np.diag([2.0, 1.5, 0.4, 0.3, 0.2, 0.1])
    st = normalizer(cov, mm)
    assert not st.before_n0
    assert np.allclose(st.Sigma_n @ cov @ st.Sigma_n.T, mm)
    singular = normalizer(np.zeros((6, 6)), mm)
    assert singular.before_n0
    with pytest.raises(ValueError):
        normalizer(np.ones((2, 3)), mm)


def test_f2_vanishes_on_exact_split():
    basis = build_basis(7)
    n = 1000
    i_n = np.array([100, 350, 900])
    u = i_n / n
    assert np.abs(f2_component(i_n, u, 1.7 - 0.2j, 0.0, n, 1, basis)).max() == 0
    assert abs(f2_component(np.array([100]), np.array([0.3]), 1.0, 0.0, n, 1, basis)[0]) > 0


def test_error_term_shape_and_decay():
    basis = build_basis(7)
    rng = np.random.default_rng(0)
    out = []
    for n in (100, 10000):
        u = rng.random(4000)
        i_n = rng.binomial(n - 1, u)
        xi = {1: rng.normal(size=4000) + 1j * rng.normal(size=4000)}
        f = error_term_bn(i_n, u, xi, xi, n, basis)
        assert f.shape == (4000, 6)
        out.append(np.mean(np.linalg.norm(f, axis=1) ** 3))
    assert out[1] < out[0] / 4


def test_error_term_first_part_tracks_g():
    # F1 = G_n - n^w g(U) is o(n^lambda) relative to G_n
    basis = build_basis(7)
    n, u = 10**5, np.array([0.3])
    w = basis.omega(1)
    zero = {1: np.zeros(1)}
    i_n = np.array([int(n * 0.3)])
    f = error_term_bn(i_n, u, zero, zero, n, basis)
    g_scaled = abs(np.exp(w * math.log(n)) * g_k(0.3, 1, basis)) / math.sqrt(n)
    assert np.hypot(f[0, 0], f[0, 1]) < 0.05 * g_scaled
