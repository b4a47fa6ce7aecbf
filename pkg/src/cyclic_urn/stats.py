"""Ensemble summaries and pass/fail verdicts.

Every verdict is a pure function of its inputs and returns a report whose
``passed`` flag is the conjunction of the listed comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .spectral import InvalidParameter

MIN_REPS = 100
MIN_REPS_VERDICT = 1000


@dataclass(frozen=True)
class EnsembleSummary:
    m: int
    n: int
    reps: int
    seed: int
    emp_mean: np.ndarray
    emp_cov: np.ndarray
    se_cov: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    samples: np.ndarray = field(repr=False)
    lattice: np.ndarray | None = None  # per-coordinate lattice spacing, 0 for continuous


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    band: float
    passed: bool
    target: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "target": self.target, "band": self.band, "passed": self.passed}


@dataclass(frozen=True)
class Verdict:
    label: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {"label": self.label, "passed": self.passed, "checks": [c.as_dict() for c in self.checks]}


def jackknife_cov_se(x: np.ndarray, blocks: int = 50) -> np.ndarray:
    """Entrywise standard errors of the sample covariance by delete-one-block jackknife."""
    reps = x.shape[0]
    blocks = min(blocks, reps)
    edges = np.linspace(0, reps, blocks + 1).astype(int)
    total_n = reps
    s1 = x.sum(axis=0)
    s2 = x.T @ x
    est = []
    for b in range(blocks):
        blk = x[edges[b] : edges[b + 1]]
        n_b = total_n - blk.shape[0]
        m1 = (s1 - blk.sum(axis=0)) / n_b
        m2 = (s2 - blk.T @ blk) / n_b
        est.append((m2 - np.outer(m1, m1)) * n_b / (n_b - 1))
    est = np.array(est)
    return np.sqrt((blocks - 1) / blocks * ((est - est.mean(axis=0)) ** 2).sum(axis=0))


def summarize(samples, m: int, n: int, seed: int, blocks: int = 50, lattice=None) -> EnsembleSummary:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < MIN_REPS:
        raise InvalidParameter(f"need at least {MIN_REPS} replicates, got {x.shape[0]}")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return EnsembleSummary(
        m=m,
        n=n,
        reps=x.shape[0],
        seed=seed,
        emp_mean=x.mean(axis=0),
        emp_cov=0.5 * (cov + cov.T),
        se_cov=jackknife_cov_se(x, blocks),
        skewness=sps.skew(x, axis=0),
        excess_kurtosis=sps.kurtosis(x, axis=0),
        samples=x,
        lattice=np.zeros(x.shape[1]) if lattice is None else np.asarray(lattice, dtype=float),
    )


def covariance_verdict(summary: EnsembleSummary, target, bias_allowance=None, label: str = "covariance") -> Verdict:
    """|emp_cov - target| <= 3 se + allowance for every entry."""
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if target.shape != summary.emp_cov.shape:
        raise ValueError(f"target shape {target.shape} != covariance shape {summary.emp_cov.shape}")
    allow = np.zeros_like(target) if bias_allowance is None else np.atleast_2d(np.asarray(bias_allowance, dtype=float))
    if allow.shape != target.shape:
        raise ValueError("bias allowance shape mismatch")
    checks = []
    d = target.shape[0]
    for i in range(d):
        for j in range(i, d):
            band = 3.0 * summary.se_cov[i, j] + allow[i, j]
            v = summary.emp_cov[i, j]
            checks.append(Check(f"cov[{i},{j}]", float(v), float(band), bool(abs(v - target[i, j]) <= band), float(target[i, j])))
    return Verdict(label, checks)


def block_ids(m: int) -> list[int]:
    """Eigen-index of each real coordinate of the residual vector."""
    ids = []
    for k in range(1, (m + 1) // 2):
        ids += [k, k]
    if m % 2 == 0:
        ids.append(m // 2)
    return ids


def off_block_verdict(summary: EnsembleSummary, label: str = "off-diagonal blocks") -> Verdict:
    """Entries coupling different eigen-indices within 3 se of zero."""
    ids = block_ids(summary.m)
    checks = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if ids[i] != ids[j]:
                v = summary.emp_cov[i, j]
                band = 3.0 * summary.se_cov[i, j]
                checks.append(Check(f"cov[{i},{j}]", float(v), float(band), bool(abs(v) <= band)))
    return Verdict(label, checks)


def normality_verdict(summary: EnsembleSummary, margin: float = 2.0, ks_level: float = 1e-3) -> Verdict:
    """Skewness, excess kurtosis and a KS distance to the fitted normal, per coordinate."""
    reps = summary.reps
    if reps < MIN_REPS_VERDICT:
        raise InvalidParameter(f"normality verdict needs >= {MIN_REPS_VERDICT} replicates")
    skew_band = 3.0 * math.sqrt(6.0 / reps) * margin
    kurt_band = 3.0 * math.sqrt(24.0 / reps) * margin
    checks = []
    for i in range(summary.samples.shape[1]):
        col = summary.samples[:, i]
        s, kx = float(summary.skewness[i]), float(summary.excess_kurtosis[i])
        checks.append(Check(f"skew[{i}]", s, skew_band, abs(s) <= skew_band))
        checks.append(Check(f"kurt[{i}]", kx, kurt_band, abs(kx) <= kurt_band))
        h = 0.0 if summary.lattice is None else float(summary.lattice[i])
        p = ks_normal_pvalue(col, h)
        checks.append(Check(f"ks_p[{i}]", p, ks_level, p > ks_level))
    return Verdict("normality", checks)


def ks_normal_pvalue(x: np.ndarray, lattice: float = 0.0) -> float:
    """KS p-value against the normal with the sample mean and sd.

    For lattice-valued data (spacing ``lattice``) the empirical CDF is compared
    with the normal CDF at the cell edges, i.e. with the binned normal.
    """
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    if not sd > 0:
        return 0.0
    if lattice <= 0:
        return float(sps.kstest(x, "norm", args=(x.mean(), sd)).pvalue)
    vals, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / x.size
    lower = upper - counts / x.size
    cdf = sps.norm(x.mean(), sd).cdf
    d = max(np.abs(upper - cdf(vals + lattice / 2)).max(), np.abs(lower - cdf(vals - lattice / 2)).max())
    return float(sps.kstwo.sf(d, x.size))


@dataclass(frozen=True)
class RateFit:
    k: int
    grid: np.ndarray
    values: np.ndarray
    slope: float
    slope_se: float
    target: float
    passed: bool


def rate_fit(k: int, grid, coupled_values, target: float, min_tol: float = 0.05) -> RateFit:
    """Least-squares slope of log(values) on log(grid) compared with ``target``."""
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(coupled_values, dtype=float)
    if grid.size < 4 or grid.size != vals.size:
        raise InvalidParameter("rate fit needs at least 4 matching grid points")
    if np.any(vals <= 0) or np.any(grid <= 0):
        raise InvalidParameter("rate fit needs positive values")
    fit = sps.linregress(np.log(grid), np.log(vals))
    ok = abs(fit.slope - target) <= max(2.0 * fit.stderr, min_tol)
    return RateFit(k, grid, vals, float(fit.slope), float(fit.stderr), float(target), bool(ok))


def trend_verdict(values) -> Verdict:
    """Strictly decreasing and the last value below half the first."""
    v = [float(x) for x in values]
    if len(v) < 3:
        raise InvalidParameter("trend verdict needs at least 3 points")
    checks = [Check(f"step[{i}]", v[i + 1], v[i], v[i + 1] < v[i]) for i in range(len(v) - 1)]
    checks.append(Check("halved", v[-1], v[0] / 2.0, v[-1] < v[0] / 2.0))
    return Verdict("trend", checks)


def chi2_two_sample(counts_a: dict, counts_b: dict, level: float = 0.999) -> tuple[float, float, bool]:
    """Two-sample chi-square homogeneity test on categorical counts; (stat, p, passed)."""
    keys = sorted(set(counts_a) | set(counts_b))
    table = np.array([[counts_a.get(key, 0) for key in keys], [counts_b.get(key, 0) for key in keys]], dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    res = sps.chi2_contingency(table, correction=False)
    return float(res.statistic), float(res.pvalue), bool(res.pvalue > 1.0 - level)


def mean_within(value: float, target: float, se: float, k: float = 3.0) -> Check:
    return Check("mean", float(value), float(k * se), abs(value - target) <= k * se, float(target))
