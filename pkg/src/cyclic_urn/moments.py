"""Exact and semi-exact first and second moments of the spectral coordinates.

The rational oracle enumerates the full law of R_n; the remaining functions
evaluate product formulas for E[u_k(R_n)] and E[u_k(R_n) u_l(R_n)] and the
martingale residual series in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

from .gammafn import cgamma, rising_path, rising_product
from .spectral import InvalidParameter, SpectralBasis, build_basis

N_MAX_EXACT = 14
M_MAX_EXACT = 8


class StateSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExactDistribution:
    m: int
    n: int
    law: dict[tuple[int, ...], Fraction]

    def expect(self, f) -> Fraction:
        return sum((p * f(c) for c, p in self.law.items()), Fraction(0))

    def mean_counts(self) -> list[Fraction]:
        return [self.expect(lambda c, t=t: c[t]) for t in range(self.m)]

    def count_moments(self) -> list[list[Fraction]]:
        """Exact E[R_{n,s} R_{n,t}]."""
        out = [[Fraction(0)] * self.m for _ in range(self.m)]
        for c, p in self.law.items():
            for s in range(self.m):
                if c[s]:
                    for t in range(self.m):
                        out[s][t] += p * c[s] * c[t]
        return out


def exact_distribution(m: int, n: int, n_max: int = N_MAX_EXACT, m_max: int = M_MAX_EXACT, initial_type: int = 0) -> ExactDistribution:
    """Full law of R_n by forward enumeration; masses are kept as integers over n!."""
    if m < 2 or n < 0:
        raise InvalidParameter("need m >= 2 and n >= 0")
    if n > n_max or m > m_max:
        raise StateSpaceTooLarge(f"exact enumeration limited to m <= {m_max}, n <= {n_max} (got m={m}, n={n})")
    start = [0] * m
    start[initial_type] = 1
    layer = {tuple(start): 1}
    for t in range(n):
        nxt: dict[tuple[int, ...], int] = {}
        for state, mass in layer.items():
            for j, c in enumerate(state):
                if c:
                    s = list(state)
                    s[(j + 1) % m] += 1
                    key = tuple(s)
                    nxt[key] = nxt.get(key, 0) + mass * c
        layer = nxt
    denom = math.factorial(n)
    return ExactDistribution(m, n, {s: Fraction(w, denom) for s, w in layer.items()})


def exact_u_moments(dist: ExactDistribution) -> tuple[np.ndarray, np.ndarray]:
    """E[u_k] and E[u_k u_l] from the rational law, converted to floats at the end."""
    basis = build_basis(dist.m)
    mean = np.array([float(x) for x in dist.mean_counts()])
    second = np.array([[float(x) for x in row] for row in dist.count_moments()])
    w = basis.dual
    return w @ mean, w @ second @ w.T


def mean_u(m: int, n: int, k: int) -> complex:
    """E[u_k(R_n)] = prod_{s=1}^n (s + omega^k)/s; identically 0 for k = m/2 once n >= 1."""
    basis = build_basis(m)
    if not 0 <= k < m or n < 0:
        raise InvalidParameter("need 0 <= k < m and n >= 0")
    return rising_product(basis.omega(k), n)


@numba.njit(cache=True)
def _second_moment_kernel(omega, n):
    m = omega.shape[0]
    s2 = np.ones((m, m), dtype=np.complex128)
    mean = np.ones(m, dtype=np.complex128)
    for t in range(1, n + 1):
        inv = 1.0 / t
        for k in range(m):
            for l in range(m):
                kl = (k + l) % m
                s2[k, l] = (1.0 + (omega[k] + omega[l]) * inv) * s2[k, l] + omega[kl] * inv * mean[kl]
        for k in range(m):
            mean[k] = mean[k] * (1.0 + omega[k] * inv)
    return mean, s2


def second_moment_matrix(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(E[u_k(R_n)], E[u_k(R_n) u_l(R_n)]) for all k, l by the one-step recursion."""
    if n < 0:
        raise InvalidParameter("n must be >= 0")
    basis = build_basis(m)
    return _second_moment_kernel(np.asarray(basis.omega_powers), int(n))


def second_moment_u(m: int, n: int, k: int, l: int) -> complex:
    if not (0 <= k < m and 0 <= l < m) or n < 0:
        raise InvalidParameter("need 0 <= k, l < m and n >= 0")
    basis = build_basis(m)
    wk, wl, wkl = basis.omega(k), basis.omega(l), basis.omega(k + l)
    mean_kl = rising_path(wkl, n)
    s = 1.0 + 0j
    for t in range(1, n + 1):
        s = (1.0 + (wk + wl) / t) * s + wkl / t * mean_kl[t - 1]
    return s


def abs_second_moment_path(m: int, k: int, n: int) -> np.ndarray:
    """E|u_k(R_t)|^2 for t = 0..n by the one-step recursion (E u_0(R_t) = t+1 seeds it)."""
    if not 0 <= k < m or n < 0:
        raise InvalidParameter("need 0 <= k < m and n >= 0")
    basis = build_basis(m)
    a = 2.0 * basis.lambdas[k]
    out = np.empty(n + 1)
    s = 1.0
    out[0] = s
    for t in range(1, n + 1):
        s = (1.0 + a / t) * s + 1.0  # omega^0 E u_0(R_{t-1}) / t = 1
        out[t] = s
    return out


def second_moment_product_form(m: int, n: int, k: int, l: int) -> complex:
    """The doubly indexed product form of the second moment, O(n^2); used as a cross-check."""
    basis = build_basis(m)
    a = basis.omega(k) + basis.omega(l)
    b = basis.omega(k + l)
    head = np.array([1.0 + a / t for t in range(1, n + 1)], dtype=complex)
    tail_b = rising_path(b, n)
    total = complex(np.prod(head))
    for s in range(1, n + 1):
        total += b / s * tail_b[s - 1] * complex(np.prod(head[s:]))
    return total


_CLOSED_FORM_DIVISOR = {"u0": 1, "half": 2, "third": 3, "sixth": 6}


def closed_forms(m: int, n: int, case: str) -> float:
    """Closed forms of E|u_k(R_n)|^2 for k in {0, m/2, m/3, m/6}."""
    if case not in _CLOSED_FORM_DIVISOR:
        raise InvalidParameter(f"unknown case {case!r}")
    if m % _CLOSED_FORM_DIVISOR[case]:
        raise InvalidParameter(f"case {case!r} needs {_CLOSED_FORM_DIVISOR[case]} | m, got m={m}")
    if case == "u0":
        return float((n + 1) ** 2)
    if case == "half":
        return (n + 1) / 3.0
    if case == "third":
        return (n + 1) / 2.0
    return (n + 1) * math.fsum(1.0 / t for t in range(1, n + 2))


def closed_form_index(m: int, case: str) -> int:
    return 0 if case == "u0" else m // _CLOSED_FORM_DIVISOR[case]


def mixed_real_moments(m: int, n: int, k: int, l: int) -> tuple[float, float, float]:
    """E[Re u_k Re u_l], E[Im u_k Im u_l], E[Re u_k Im u_l]."""
    kk, ll = k % m, l % m
    e_kl = second_moment_u(m, n, kk, ll)
    e_k_ml = second_moment_u(m, n, kk, (m - ll) % m)
    e_mk_l = second_moment_u(m, n, (m - kk) % m, ll)
    return (
        0.5 * (e_kl + e_k_ml).real,
        0.5 * (e_k_ml - e_kl).real,
        0.5 * (e_kl + e_mk_l).imag,
    )


@dataclass(frozen=True)
class MomentTable:
    m: int
    n: int
    mean_u: np.ndarray
    second_u: np.ndarray
    mean_R: np.ndarray


def moment_table(m: int, n: int) -> MomentTable:
    basis = build_basis(m)
    mean, s2 = second_moment_matrix(m, n)
    return MomentTable(m, n, mean, s2, basis.reassemble(mean).real)


def exact_mean_R(m: int, n: int) -> np.ndarray:
    basis = build_basis(m)
    mu = np.array([rising_product(basis.omega(k), n) for k in range(m)])
    return basis.reassemble(mu).real


@dataclass(frozen=True)
class MeanExpansion:
    xi_vectors: np.ndarray  # row k-1 holds xi_k
    drift: np.ndarray
    value: np.ndarray
    remainder_order: str


def mean_expansion(m: int, n: float) -> MeanExpansion:
    basis = build_basis(m)
    xis = np.array([2.0 * basis.eigvecs[k] / cgamma(1.0 + basis.omega(k)) for k in basis.large_indices]).reshape(-1, m)
    drift = np.full(m, (n + 1) / m)
    value = drift.copy()
    for row, k in zip(xis, basis.large_indices):
        value += (np.exp(1j * basis.mus[k] * math.log(n)) * row).real * n ** basis.lambdas[k]
    return MeanExpansion(xis, drift, value, "O(sqrt n)" if basis.critical_flag else "o(sqrt n)")


# -- martingale residuals ----------------------------------------------------


@dataclass(frozen=True)
class ResidualMoment:
    abs_sq: float  # E|M_{k,n} - Xi_k|^2
    sq: complex  # E(M_{k,n} - Xi_k)^2
    asym_abs_sq: float
    asym_sq: complex
    horizon: int  # last summed index before the analytic tail


def _log_rising_chunk(z: complex, start: int, stop: int, offset: complex) -> np.ndarray:
    """log prod_{s=1}^t (1+z/s) for t = start..stop-1, given its value at start-1."""
    s = np.arange(start, stop, dtype=float)
    return offset + np.cumsum(np.log1p(z / s))


def residual_second_moment(m: int, n: int, k: int, tol: float = 1e-7, chunk: int = 1 << 14, max_terms: int = 10**8) -> ResidualMoment:
    """Series for E|M_{k,n} - Xi_k|^2 and E(M_{k,n} - Xi_k)^2 by orthogonal martingale increments."""
    basis = build_basis(m)
    lam = basis.lambdas[k]
    if basis.classify(k) != "large":
        raise InvalidParameter(f"k={k} is not a large index for m={m} (lambda={lam:.4f})")
    w = basis.omega(k)
    w2 = basis.omega(2 * k)
    a2 = 2.0 * lam  # omega^k + omega^{-k}
    a = 2.0 * w  # omega^k + omega^k
    g1w = cgamma(1.0 + w)

    def log_rising_at(z: complex, t: int) -> complex:
        return complex(np.sum(np.log1p(z / np.arange(1, t + 1, dtype=float)))) if t else 0j

    # running logs of P_t(.) at t = z and of P_{z+1}(omega)
    z0 = n
    lp_w = log_rising_at(w, z0 + 1)
    lp_a2 = log_rising_at(a2, z0)
    lp_a = log_rising_at(a, z0)
    lp_w2 = log_rising_at(w2, z0)
    total_abs = 0.0
    total_sq = 0j
    start = z0
    last_abs = last_sq = 0.0
    while True:
        stop = start + chunk
        zz = np.arange(start, stop, dtype=float)
        # c_{z+1} = Gamma(z+2)/Gamma(z+2+omega) = 1 / (Gamma(1+omega) P_{z+1}(omega))
        lw = np.concatenate(([lp_w], _log_rising_chunk(w, start + 2, stop + 1, lp_w)))
        c = 1.0 / (g1w * np.exp(lw))
        la2 = np.concatenate(([lp_a2], _log_rising_chunk(a2, start + 1, stop, lp_a2)))
        la = np.concatenate(([lp_a], _log_rising_chunk(a, start + 1, stop, lp_a)))
        lw2 = np.concatenate(([lp_w2], _log_rising_chunk(w2, start + 1, stop, lp_w2)))
        e_abs_u = (a2 * np.exp(la2.real) - (zz + 1.0)) / (a2 - 1.0)  # E|u_k(R_z)|^2
        e_u_sq = (w2 * np.exp(lw2) - a * np.exp(la)) / (w2 - a)  # E[u_k(R_z)^2]
        e_u2k = np.exp(lw2)  # E[u_{2k}(R_z)]
        s_abs = np.abs(c) ** 2 * (1.0 - e_abs_u / (zz + 1.0) ** 2)
        s_sq = c**2 * w2 * (e_u2k / (zz + 1.0) - e_u_sq / (zz + 1.0) ** 2)
        total_abs += math.fsum(s_abs)
        total_sq += complex(np.sum(s_sq))
        last_abs, last_sq = s_abs[-1], s_sq[-1]
        lp_w, lp_a2, lp_a, lp_w2 = lw[-1] + np.log1p(w / (stop + 1)), la2[-1] + np.log1p(a2 / stop), la[-1] + np.log1p(a / stop), lw2[-1] + np.log1p(w2 / stop)
        start = stop
        if not last_abs >= tol * total_abs or stop - z0 >= max_terms:
            break
        chunk = min(2 * chunk, 1 << 20)
    zl = start - 1
    # summands decay like z^{-2 lambda} and z^{-2}; add the integral tails
    total_abs += last_abs * zl ** a2 * (zl + 0.5) ** (1.0 - a2) / (a2 - 1.0)
    total_sq += last_sq * zl**2 / (zl + 0.5)
    return ResidualMoment(
        abs_sq=total_abs,
        sq=total_sq,
        asym_abs_sq=n ** (1.0 - a2) / (a2 - 1.0),
        asym_sq=1.0 / (n * (1.0 - 2.0 * np.conj(w)) * cgamma(2.0 * w)),
        horizon=zl,
    )


def martingale_second_moments(m: int, n: int, k: int) -> tuple[float, complex]:
    """E|M_{k,n}|^2 and E[M_{k,n}^2] from exact second moments of u_k(R_n)."""
    basis = build_basis(m)
    mean, s2 = second_moment_matrix(m, n)
    ck = gamma_ratio_c(basis, n, k)
    mu = mean[k]
    var_abs = (s2[k, (m - k) % m] - abs(mu) ** 2).real
    var_sq = s2[k, k] - mu**2
    return abs(ck) ** 2 * var_abs, ck**2 * var_sq


def gamma_ratio_c(basis: SpectralBasis, n: int, k: int) -> complex:
    """Gamma(n+1)/Gamma(n+1+omega^k)."""
    from .gammafn import gamma_ratio

    return gamma_ratio(n, basis.omega(k))


def xi_second_moment(m: int, k: int, n: int = 10**6) -> dict[str, float]:
    """E|Xi_k|^2 as E|M_{k,n}|^2 plus the residual series at n (orthogonal increments)."""
    abs_m = martingale_abs_second_moment(m, n, k)
    res = residual_second_moment(m, n, k)
    return {"at_n": abs_m, "residual": res.abs_sq, "limit": abs_m + res.abs_sq, "n": n}


def martingale_abs_second_moment(m: int, n: int, k: int) -> float:
    """E|M_{k,n}|^2 for a large index via closed forms; cheap for large n."""
    basis = build_basis(m)
    lam = basis.lambdas[k]
    w = basis.omega(k)
    a2 = 2.0 * lam
    p_a2 = rising_product(a2, n)
    e_abs_u = (a2 * p_a2 - (n + 1.0)) / (a2 - 1.0)
    mu = rising_product(w, n)
    ck = gamma_ratio_c(basis, n, k)
    return float((abs(ck) ** 2 * (e_abs_u - abs(mu) ** 2)).real)
