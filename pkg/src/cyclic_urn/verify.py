"""Acceptance-suite drivers.

Each ``check_*`` function runs one verification at its stated size and
returns a JSON-serialisable dict with a top-level ``passed`` flag.  Reports
contain no timings so identical seeds give byte-identical output.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from . import stats
from .fixpoint import (
    bst_split_law,
    sample_split_compositions,
    sample_xi,
    split_samples,
    xi_moment_estimate,
)
from .moments import (
    abs_second_moment_path,
    closed_form_index,
    closed_forms,
    exact_distribution,
    exact_mean_R,
    exact_u_moments,
    mean_expansion,
    mean_u,
    residual_second_moment,
    second_moment_u,
    xi_second_moment,
)
from .residuals import ensemble_Z, error_term_bn, exact_Z_covariance, martingale_values
from .spectral import build_basis, limit_covariance, sigma_matrix
from .urn import simulate_ensemble

COV_MS = (7, 8, 12)
SUITES = {
    "moments": ("oracle", "closed_forms", "ranks", "mean_expansion"),
    "clt": ("two_colour", "covariance"),
    "rates": ("rate_law", "fixed_point"),
    "bn": ("bn_trend",),
    "bst": ("bst_split",),
}


def _seed(master: int, tag: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(1000 + tag,))


def _rng(master: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(_seed(master, tag))


def _sub_seed(master: int, tag: int) -> int:
    return int(_seed(master, tag).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def check_oracle(max_m: int = 6, max_n: int = 10, tol: float = 1e-10) -> dict:
    """Recursive first and second moments of u_k against the rational enumeration."""
    worst = 0.0
    rows = []
    for m in range(2, max_m + 1):
        for n in range(0, max_n + 1):
            mean_o, second_o = exact_u_moments(exact_distribution(m, n))
            err = 0.0
            for k in range(m):
                err = max(err, abs(mean_u(m, n, k) - mean_o[k]))
                for l in range(m):
                    err = max(err, abs(second_moment_u(m, n, k, l) - second_o[k, l]))
            worst = max(worst, err)
            rows.append({"m": m, "n": n, "max_abs_err": err})
    return {"passed": worst < tol, "max_abs_err": worst, "tol": tol, "cases": rows}


def _closed_form_array(case: str, n_max: int) -> np.ndarray:
    n = np.arange(2, n_max + 1, dtype=float)
    if case == "u0":
        return (n + 1.0) ** 2
    if case == "half":
        return (n + 1.0) / 3.0
    if case == "third":
        return (n + 1.0) / 2.0
    harmonic = np.cumsum(1.0 / np.arange(1, n_max + 2, dtype=float))
    return (n + 1.0) * harmonic[2:]


def check_closed_forms(ms=(2, 3, 6, 12), n_max: int = 10**4, tol: float = 1e-9) -> dict:
    """Closed forms of E|u_k|^2 for k in {0, m/2, m/3, m/6} against the recursion."""
    rows = []
    ok = True
    for m in ms:
        for case, div in (("u0", 1), ("half", 2), ("third", 3), ("sixth", 6)):
            if m % div:
                continue
            k = closed_form_index(m, case)
            path = abs_second_moment_path(m, k, n_max)[2:]
            formula = _closed_form_array(case, n_max)
            rel = float(np.max(np.abs(path - formula) / formula))
            spot = max(abs(closed_forms(m, n, case) - formula[n - 2]) / formula[n - 2] for n in (2, 17, n_max))
            rel = max(rel, spot)
            passed = rel < tol
            ok &= passed
            rows.append({"m": m, "case": case, "k": k, "max_rel_err": rel, "passed": passed})
    n1 = {}
    for m in ms:
        if m % 2 == 0:
            val = float(abs_second_moment_path(m, m // 2, 1)[1])
            n1[str(m)] = {"value": val, "formula": closed_forms(m, 1, "half"), "is_zero": val == 0.0}
            ok &= val == 0.0
    return {"passed": bool(ok), "tol": tol, "cases": rows, "half_case_at_n1": n1}


def check_ranks(full=(2, 3, 4, 5, 7, 8, 9, 10, 11, 13), critical=(6, 12), tol: float = 1e-12) -> dict:
    rows = []
    ok = True
    for m in tuple(full) + tuple(critical):
        basis = build_basis(m)
        tgt = sigma_matrix(basis)
        expect = 2 if m in critical else m - 1
        rot_err = float(np.abs(tgt.D @ tgt.M_m @ tgt.D.T - tgt.M_m).max())
        passed = tgt.rank_sigma == expect and rot_err < tol
        ok &= passed
        rows.append({"m": m, "rank": tgt.rank_sigma, "expected": expect, "rotation_err": rot_err, "passed": passed})
    return {"passed": bool(ok), "cases": rows}


def _expansion_ratios(m: int, grid) -> list[float]:
    return [float(np.linalg.norm(exact_mean_R(m, n) - mean_expansion(m, n).value) / math.sqrt(n)) for n in grid]


def check_mean_expansion(grid=(100, 1000, 10000), bound_factor: float = 2.0) -> dict:
    """o(sqrt n) remainder for m=7 (decreasing ratio) and O(sqrt n) for m=12 (bounded ratio)."""
    r7 = _expansion_ratios(7, grid)
    r12 = _expansion_ratios(12, grid)
    dec = all(b < a for a, b in zip(r7, r7[1:]))
    bounded = all(math.isfinite(x) and x <= bound_factor * r12[0] for x in r12)
    return {
        "passed": bool(dec and bounded),
        "grid": list(grid),
        "m7_ratio": r7,
        "m7_decreasing": dec,
        "m12_ratio": r12,
        "m12_bounded": bounded,
        "bound": bound_factor * r12[0],
    }


def check_two_colour(seed: int, n: int = 10**4, reps: int = 10**4) -> dict:
    """Var(u_1(R_n)/sqrt n) for m=2 against 1/3."""
    counts = simulate_ensemble(2, [n], reps, _sub_seed(seed, 5))[:, 0, :]
    x = (counts[:, 0] - counts[:, 1]) / math.sqrt(n)
    summ = stats.summarize(x, 2, n, seed)
    v = stats.covariance_verdict(summ, [[1.0 / 3.0]], label="variance")
    return {
        "passed": v.passed,
        "variance": float(summ.emp_cov[0, 0]),
        "se": float(summ.se_cov[0, 0]),
        "target": 1.0 / 3.0,
        "exact_finite_n": (n + 1) / (3.0 * n),
        "reps": reps,
    }


def rate_ensemble(seed: int, grid=(250, 500, 1000, 2000, 4000), horizon: int = 50 * 4000, reps: int = 5000) -> np.ndarray:
    return simulate_ensemble(7, list(grid) + [horizon], reps, _sub_seed(seed, 6))


def check_rate_law(seed: int, grid=(250, 500, 1000, 2000, 4000), horizon: int = 50 * 4000, reps: int = 5000, counts=None) -> dict:
    """Decay exponent of E|M_{1,n} - Xi_1|^2 for m=7.

    The estimator is the empirical E|M_n - M_N|^2 plus the exact E|M_N - Xi|^2
    from the residual series; the two add by orthogonality of increments.
    """
    m, k = 7, 1
    basis = build_basis(m)
    if counts is None:
        counts = rate_ensemble(seed, grid, horizon, reps)
    u = basis.project(counts.astype(float))[..., k]
    mN = martingale_values(basis, k, horizon, u[:, -1])
    tail = residual_second_moment(m, horizon, k).abs_sq
    vals, raw = [], []
    for i, n in enumerate(grid):
        d = np.abs(martingale_values(basis, k, n, u[:, i]) - mN) ** 2
        raw.append(float(d.mean()))
        vals.append(float(d.mean()) + tail)
    target = 1.0 - 2.0 * basis.lambdas[k]
    fit = stats.rate_fit(k, grid, vals, target)
    res = residual_second_moment(m, 10**4, k)
    ratio = res.abs_sq / res.asym_abs_sq
    ratio_ok = 0.95 <= ratio <= 1.05
    return {
        "passed": bool(fit.passed and ratio_ok),
        "slope": fit.slope,
        "slope_se": fit.slope_se,
        "target": fit.target,
        "band": max(2.0 * fit.slope_se, 0.05),
        "grid": list(grid),
        "values": vals,
        "uncorrected_values": raw,
        "horizon_tail": tail,
        "series_over_asymptote_at_1e4": ratio,
        "ratio_ok": ratio_ok,
        "reps": int(counts.shape[0]),
    }


def check_fixed_point(seed: int, depth: int = 30, pool: int = 10**5, counts=None, horizon: int = 50 * 4000) -> dict:
    """E|Xi_1|^2 for m=7 from the pooled fixed point, from trajectories, and semi-analytically."""
    m, k = 7, 1
    basis = build_basis(m)
    est = xi_moment_estimate(k, depth, pool, _rng(seed, 9), basis)
    if counts is None:
        counts = rate_ensemble(seed, horizon=horizon)
    u = basis.project(counts[:, -1, :].astype(float))[:, k]
    a = np.abs(martingale_values(basis, k, horizon, u)) ** 2
    tail = residual_second_moment(m, horizon, k).abs_sq
    traj, traj_se = float(a.mean() + tail), float(a.std(ddof=1) / math.sqrt(a.size))
    semi = xi_second_moment(m, k)["limit"]
    est_map = {"fixed_point": (est.abs_sq, est.se), "trajectory": (traj, traj_se), "semi_analytic": (semi, 0.0)}
    pairs = []
    ok = True
    names = list(est_map)
    for i in range(3):
        for j in range(i + 1, 3):
            (x, sx), (y, sy) = est_map[names[i]], est_map[names[j]]
            band = 3.0 * math.hypot(sx, sy)
            passed = abs(x - y) <= band
            ok &= passed
            pairs.append({"a": names[i], "b": names[j], "diff": x - y, "band": band, "passed": passed})
    return {
        "passed": bool(ok),
        "estimates": {key: {"value": v, "se": s} for key, (v, s) in est_map.items()},
        "pairs": pairs,
        "depth": depth,
        "pool": est.pool_size,
        "batches": len(est.batch_values),
    }


def covariance_ensemble(m: int, seed: int, n: int = 2000, horizon_mult: int = 50, reps: int = 10**4) -> np.ndarray:
    counts = simulate_ensemble(m, [n, horizon_mult * n], reps, _sub_seed(seed, 70 + m))
    return ensemble_Z(build_basis(m), counts, n, horizon_mult * n)


def check_covariance(m: int, seed: int, n: int = 2000, horizon_mult: int = 50, reps: int = 10**4, z=None) -> dict:
    """Empirical Cov(Z_n) against the limit matrix, with the exact finite-n bias as allowance."""
    basis = build_basis(m)
    if z is None:
        z = covariance_ensemble(m, seed, n, horizon_mult, reps)
    lattice = np.zeros(basis.dim)
    if m % 2 == 0:
        lattice[-1] = 2.0 / math.sqrt(n)  # u_{m/2} has the parity of n+1
    summ = stats.summarize(z, m, n, seed, lattice=lattice)
    target = limit_covariance(basis)
    exact = exact_Z_covariance(m, n, horizon_mult * n)
    allowance = np.abs(exact - target)
    v_limit = stats.covariance_verdict(summ, target, allowance, label="limit+allowance")
    v_off = stats.off_block_verdict(summ)
    v_exact = stats.covariance_verdict(summ, exact, label="exact finite-n")
    return {
        "passed": bool(v_limit.passed and v_off.passed),
        "m": m,
        "n": n,
        "reps": int(summ.reps),
        "limit_with_allowance": v_limit.passed,
        "off_blocks_zero": v_off.passed,
        "exact_finite_n_match": v_exact.passed,
        "emp_cov": summ.emp_cov.tolist(),
        "se_cov": summ.se_cov.tolist(),
        "target": target.tolist(),
        "exact_finite_n": exact.tolist(),
        "off_block_failures": [c.as_dict() for c in v_off.failures],
        "limit_failures": [c.as_dict() for c in v_limit.failures],
        "exact_failures": [c.as_dict() for c in v_exact.failures],
    }, summ


def check_normality(summ: stats.EnsembleSummary) -> dict:
    v = stats.normality_verdict(summ)
    return {"passed": v.passed, "m": summ.m, "failures": [c.as_dict() for c in v.failures], "checks": len(v.checks)}


def check_negative_control(seed: int, reps: int = 10**4) -> dict:
    x = _rng(seed, 8).exponential(1.0, size=reps)
    v = stats.normality_verdict(stats.summarize(x, 2, 0, seed))
    return {"passed": not v.passed, "control_rejected": not v.passed, "skewness": v.checks[0].value}


def bn_values(
    seed: int, grid=(100, 1000, 10000), samples: int = 2 * 10**5, depth: int = 30, pool: int = 10**5, m: int = 7
) -> list[tuple[float, float]]:
    """Monte Carlo E||sigma_n (F1 + F2)||^3 with fixed-point proxies, with standard errors."""
    basis = build_basis(m)
    rng = _rng(seed, 10)
    pools = {k: sample_xi(k, depth, pool, rng, basis) for k in basis.large_indices}
    out = []
    for n in grid:
        U, I = split_samples(n, samples, rng)
        p0 = {k: p[rng.integers(p.size, size=samples)] for k, p in pools.items()}
        p1 = {k: p[rng.integers(p.size, size=samples)] for k, p in pools.items()}
        v = np.linalg.norm(error_term_bn(I, U, p0, p1, n, basis), axis=1) ** 3
        out.append((float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))))
    return out


def check_bn_trend(seed: int, grid=(100, 1000, 10000), samples: int = 2 * 10**5) -> dict:
    vals = bn_values(seed, grid, samples)
    v = stats.trend_verdict([x for x, _ in vals])
    return {"passed": v.passed, "grid": list(grid), "values": [x for x, _ in vals], "se": [s for _, s in vals]}


def check_bst_split(seed: int, max_m: int = 5, max_n: int = 6, reps: int = 10**5) -> dict:
    exact_ok = True
    for m in range(2, max_m + 1):
        for n in range(1, max_n + 1):
            exact_ok &= bst_split_law(m, n) == exact_distribution(m, n).law
    split = sample_split_compositions(5, 6, reps, _rng(seed, 11))
    direct = simulate_ensemble(5, [6], reps, _sub_seed(seed, 11))[:, 0, :]
    direct_counts = Counter(tuple(int(c) for c in row) for row in direct)
    stat, p, chi_ok = stats.chi2_two_sample(dict(split), dict(direct_counts))
    return {"passed": bool(exact_ok and chi_ok), "exact_equal": bool(exact_ok), "chi2": stat, "p_value": p, "chi2_passed": chi_ok}


def run_suite(suite: str, seed: int, ms=COV_MS) -> dict:
    """Run a named suite and return {check_name: report}."""
    names = [n for s in SUITES.values() for n in s] if suite == "all" else list(SUITES[suite])
    out: dict = {}
    shared = None
    for name in names:
        if name == "oracle":
            out[name] = check_oracle()
        elif name == "closed_forms":
            out[name] = check_closed_forms()
        elif name == "ranks":
            out[name] = check_ranks()
        elif name == "mean_expansion":
            out[name] = check_mean_expansion()
        elif name == "two_colour":
            out[name] = check_two_colour(seed)
        elif name == "covariance":
            for m in ms:
                rep, summ = check_covariance(m, seed)
                out[f"covariance_m{m}"] = rep
                out[f"normality_m{m}"] = check_normality(summ)
            out["normality_negative_control"] = check_negative_control(seed)
        elif name in ("rate_law", "fixed_point"):
            if shared is None:
                shared = rate_ensemble(seed)
            out[name] = check_rate_law(seed, counts=shared) if name == "rate_law" else check_fixed_point(seed, counts=shared)
        elif name == "bn_trend":
            out[name] = check_bn_trend(seed)
        elif name == "bst_split":
            out[name] = check_bst_split(seed)
    return out
