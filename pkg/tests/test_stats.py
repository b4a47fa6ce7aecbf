import numpy as np
import pytest
from scipy import stats as sps

from cyclic_urn import stats
from cyclic_urn.spectral import InvalidParameter, build_basis, limit_covariance


def _summary(x, m=2, n=0, **kw):
    return stats.summarize(x, m, n, seed=0, **kw)


def test_summary_shapes_and_symmetry():
    x = np.random.default_rng(0).normal(size=(2000, 3))
    s = _summary(x, m=4)
    assert np.allclose(s.emp_cov, s.emp_cov.T)
    assert np.all(s.se_cov > 0)
    with pytest.raises(InvalidParameter):
        _summary(x[:50])


def test_covariance_verdict_exact_target_passes():
    x = np.random.default_rng(1).normal(size=(1000, 2))
    s = _summary(x, m=3)
    assert stats.covariance_verdict(s, s.emp_cov).passed
    with pytest.raises(ValueError):
        stats.covariance_verdict(s, np.eye(3))


def test_covariance_verdict_detects_wrong_target():
    x = np.random.default_rng(2).normal(size=(5000, 1))
    s = _summary(x)
    assert not stats.covariance_verdict(s, [[1.5]]).passed
    assert stats.covariance_verdict(s, [[1.5]], [[0.6]]).passed


def test_jackknife_matches_normal_theory_and_scales():
    rng = np.random.default_rng(3)
    ses = []
    sizes = [1000, 4000, 16000, 64000]
    for reps in sizes:
        x = rng.normal(size=(reps, 1))
        ses.append(stats.jackknife_cov_se(x)[0, 0])
    slope = sps.linregress(np.log(sizes), np.log(ses)).slope
    assert abs(slope + 0.5) < 0.05
    assert ses[-1] == pytest.approx(np.sqrt(2 / sizes[-1]), rel=0.3)


def test_normality_verdict():
    rng = np.random.default_rng(4)
    assert stats.normality_verdict(_summary(rng.normal(size=(10**4, 2)))).passed
    v = stats.normality_verdict(_summary(rng.exponential(size=10**4)))
    assert not v.passed
    assert v.checks[0].value == pytest.approx(2, abs=0.3)
    with pytest.raises(InvalidParameter):
        stats.normality_verdict(_summary(rng.normal(size=500)))


def test_lattice_ks():
    rng = np.random.default_rng(5)
    h = 2 / np.sqrt(2000)
    x = np.round(rng.normal(0, 0.58, 10**4) / h) * h
    assert stats.ks_normal_pvalue(x, h) > 0.01
    assert stats.ks_normal_pvalue(rng.exponential(size=10**4), 0.0) < 1e-6


def test_calibration_on_gaussian_ensembles():
    # m=2: one variance entry plus skewness, kurtosis and KS on one coordinate
    target = limit_covariance(build_basis(2))
    passes = 0
    for seed in range(100):
        x = np.random.default_rng(seed).multivariate_normal(np.zeros(1), target, size=2000)
        s = stats.summarize(x, 2, 0, seed)
        passes += stats.covariance_verdict(s, target).passed and stats.normality_verdict(s).passed
    assert passes >= 99


def test_verdicts_are_deterministic():
    x = np.random.default_rng(6).normal(size=(3000, 2))
    s = _summary(x, m=3)
    assert stats.normality_verdict(s).as_dict() == stats.normality_verdict(s).as_dict()


def test_rate_fit():
    grid = [250, 500, 1000, 2000, 4000]
    fit = stats.rate_fit(1, grid, [3.0 * n**-0.5 for n in grid], -0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-6) and fit.passed
    assert not stats.rate_fit(1, grid, [3.0 * n**-0.5 for n in grid], -0.7).passed
    with pytest.raises(InvalidParameter):
        stats.rate_fit(1, grid[:3], [1, 2, 3], -0.5)
    with pytest.raises(InvalidParameter):
        stats.rate_fit(1, grid, [1, 2, 3, 0, 1], -0.5)


@pytest.mark.parametrize("m,target", [(7, -0.24698), (13, -0.77091)])
def test_rate_targets(m, target):
    assert 1 - 2 * build_basis(m).lambdas[1] == pytest.approx(target, abs=1e-5)


def test_trend_verdict():
    assert stats.trend_verdict([1, 0.5, 0.2]).passed
    assert not stats.trend_verdict([1, 1.1, 0.9]).passed
    assert not stats.trend_verdict([1, 0.9, 0.8]).passed
    with pytest.raises(InvalidParameter):
        stats.trend_verdict([1, 0.5])


def test_off_block_verdict():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4000, 6))
    assert stats.off_block_verdict(_summary(x, m=7)).passed
    x[:, 2] += x[:, 4]
    assert not stats.off_block_verdict(_summary(x, m=7)).passed
    assert stats.block_ids(8) == [1, 1, 2, 2, 3, 3, 4]


def test_chi2_two_sample():
    rng = np.random.default_rng(8)
    a = dict(zip(*np.unique(rng.integers(0, 5, 10**4), return_counts=True)))
    b = dict(zip(*np.unique(rng.integers(0, 5, 10**4), return_counts=True)))
    assert stats.chi2_two_sample(a, b)[2]
    c = dict(zip(*np.unique(rng.integers(0, 4, 10**4), return_counts=True)))
    assert not stats.chi2_two_sample(a, c)[2]
