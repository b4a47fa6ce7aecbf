"""From compositions to the residual vector Z_n.

The chain is R_n -> u_k(R_n) -> M_{k,n} -> proxy for Xi_k -> Z_n.  The
almost sure limits Xi_k are replaced by M_{k,N} on the same trajectory at a
later horizon N; :func:`exact_Z_covariance` gives the exact covariance of the
resulting finite-n vector, which is what an ensemble estimate should match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixpoint import g_k
from .gammafn import complex_power, gamma_ratio, rising_path, rising_product
from .moments import second_moment_matrix
from .spectral import InvalidParameter, SpectralBasis, build_basis, scaling_vector
from .urn import TrajectoryRecord


@dataclass(frozen=True)
class MartingalePath:
    k: int
    times: np.ndarray
    values: np.ndarray
    gamma_ratio: np.ndarray  # Gamma(n+1)/Gamma(n+1+omega^k) at each time


@dataclass(frozen=True)
class XiProxy:
    k: int
    value: complex
    horizon: int


@dataclass(frozen=True)
class ResidualVector:
    n: int
    coords: np.ndarray
    scaling: np.ndarray


@dataclass(frozen=True)
class NormalizerState:
    cov_Zn: np.ndarray
    Sigma_n: np.ndarray
    before_n0: bool
    condition: float


def martingale_values(basis: SpectralBasis, k: int, n: int, u) -> np.ndarray:
    """M_{k,n} for projections u_k(R_n) (scalar or array); zero at n = 0."""
    u = np.asarray(u, dtype=complex)
    if n == 0:
        return np.zeros_like(u)
    w = basis.omega(k)
    return gamma_ratio(n, w) * (u - rising_product(w, n))


def martingale_path(traj: TrajectoryRecord, k: int) -> MartingalePath:
    basis = build_basis(traj.config.m)
    times, vals, ratios = [], [], []
    for snap in traj.snapshots:
        n = snap.time
        times.append(n)
        if n == 0:
            vals.append(0j)
            ratios.append(complex(np.nan) if basis.omega(k) == -1 else gamma_ratio(0, basis.omega(k)))
            continue
        ratio = gamma_ratio(n, basis.omega(k))
        ratios.append(ratio)
        # the trajectory's rising product is E[u_k(R_n)] for a type-0 start
        mean = snap.rising[k] * basis.omega(k * traj.config.initial_type)
        vals.append(ratio * (snap.projections[k] - mean))
    return MartingalePath(k, np.array(times), np.array(vals, dtype=complex), np.array(ratios, dtype=complex))


def horizon_for(n: int, horizon_multiplier: float) -> int:
    return int(math.ceil(horizon_multiplier * n))


def xi_proxy(traj: TrajectoryRecord, k: int, horizon_multiplier: float, n: int) -> XiProxy:
    basis = build_basis(traj.config.m)
    if basis.classify(k) != "large":
        raise InvalidParameter(f"k={k} is not a large index (lambda_k <= 1/2)")
    big_n = horizon_for(n, horizon_multiplier)
    path = martingale_path(traj, k)
    idx = np.flatnonzero(path.times == big_n)
    if idx.size == 0:
        raise InvalidParameter(f"trajectory has no snapshot at horizon {big_n}")
    return XiProxy(k, complex(path.values[idx[0]]), big_n)


def _coordinate_slots(basis: SpectralBasis):
    """(k, kind) for each complex coordinate, in Z_n order."""
    slots = [(k, basis.classify(k)) for k in range(1, basis.n_pairs + 1)]
    if basis.m % 2 == 0:
        slots.append((basis.m // 2, "half"))
    return slots


def _to_real(basis: SpectralBasis, w: np.ndarray) -> np.ndarray:
    """Stack complex coordinates (..., slots) into the real (..., m-1) layout."""
    parts = []
    for i, (_, kind) in enumerate(_coordinate_slots(basis)):
        if kind == "half":
            parts.append(w[..., i].real[..., None])
        else:
            parts.append(np.stack([w[..., i].real, w[..., i].imag], axis=-1))
    return np.concatenate(parts, axis=-1)


def assemble_Z_batch(basis: SpectralBasis, counts_n, n: int, proxies: dict[int, np.ndarray]) -> np.ndarray:
    """Z_n for a batch of compositions at time n; ``proxies[k]`` holds M_{k,N} per row."""
    counts_n = np.asarray(counts_n, dtype=float)
    large = set(basis.large_indices)
    missing = large - set(proxies)
    if missing:
        raise ValueError(f"missing Xi proxies for large indices {sorted(missing)}")
    u = basis.project(counts_n)
    scale = 1.0 / math.sqrt(n)
    cols = []
    for k, kind in _coordinate_slots(basis):
        w = basis.omega(k)
        x = u[..., k] - rising_product(w, n)
        if kind == "large":
            x = x - np.exp(w * math.log(n)) * np.asarray(proxies[k])
            cols.append(x * scale)
        elif kind == "critical":
            cols.append(x / math.sqrt(n * math.log(n)))
        elif kind == "half":
            cols.append(u[..., k] * scale)
        else:
            cols.append(x * scale)
    return _to_real(basis, np.stack(cols, axis=-1))


def assemble_Z(traj: TrajectoryRecord, proxies: dict[int, XiProxy], basis: SpectralBasis, n: int) -> ResidualVector:
    snap = traj.at(n)
    z = assemble_Z_batch(basis, snap.composition.counts, n, {k: p.value for k, p in proxies.items()})
    return ResidualVector(n, z, scaling_vector(basis, n))


def ensemble_Z(basis: SpectralBasis, counts: np.ndarray, n: int, horizon: int) -> np.ndarray:
    """Z_n for an ensemble array of counts at checkpoints (n, horizon)."""
    proxies = {}
    for k in basis.large_indices:
        u_big = basis.project(counts[:, 1, :].astype(float))[:, k]
        proxies[k] = martingale_values(basis, k, horizon, u_big)
    return assemble_Z_batch(basis, counts[:, 0, :], n, proxies)


def exact_Z_covariance(m: int, n: int, horizon: int | None) -> np.ndarray:
    """Exact covariance of Z_n at finite n with Xi_k replaced by M_{k,horizon}.

    Uses the martingale property E[M_{k,N} | F_n] = M_{k,n} to reduce all
    cross terms to second moments of u at times n and N.  ``horizon=None``
    means the proxy is the true limit; that case is not exactly computable
    and raises.
    """
    basis = build_basis(m)
    if basis.r and horizon is None:
        raise InvalidParameter("a finite horizon is needed when large indices exist")
    mean_n, s2_n = second_moment_matrix(m, n)
    cn = mean_n[:, None] * mean_n[None, :]
    c_n = s2_n - cn
    if basis.r:
        mean_h, s2_h = second_moment_matrix(m, horizon)
        c_h = s2_h - mean_h[:, None] * mean_h[None, :]
    slots = _coordinate_slots(basis)
    ks = [k for k, _ in slots]
    alpha = np.empty(len(slots))
    beta = np.zeros(len(slots), dtype=complex)
    gn = np.zeros(len(slots), dtype=complex)
    gh = np.zeros(len(slots), dtype=complex)
    for i, (k, kind) in enumerate(slots):
        alpha[i] = 1.0 / math.sqrt(n * math.log(n)) if kind == "critical" else 1.0 / math.sqrt(n)
        if kind == "large":
            w = basis.omega(k)
            beta[i] = -np.exp(w * math.log(n)) / math.sqrt(n)
            gn[i] = gamma_ratio(n, w)
            gh[i] = gamma_ratio(horizon, w)
    neg = [(m - k) % m for k in ks]
    P = np.empty((len(ks), len(ks)), dtype=complex)
    Q = np.empty_like(P)
    for a, ka in enumerate(ks):
        for b, kb in enumerate(ks):
            cab, cab_ = c_n[ka, kb], c_n[ka, neg[b]]
            P[a, b] = alpha[a] * alpha[b] * cab + alpha[a] * beta[b] * gn[b] * cab + beta[a] * gn[a] * alpha[b] * cab
            Q[a, b] = alpha[a] * alpha[b] * cab_ + alpha[a] * np.conj(beta[b] * gn[b]) * cab_ + beta[a] * gn[a] * alpha[b] * cab_
            if beta[a] != 0 and beta[b] != 0:
                P[a, b] += beta[a] * beta[b] * gh[a] * gh[b] * c_h[ka, kb]
                Q[a, b] += beta[a] * np.conj(beta[b]) * gh[a] * np.conj(gh[b]) * c_h[ka, neg[b]]
    # real layout: (Re, Im) per slot, Re only for the m/2 slot
    rows = []
    for a, (_, kind) in enumerate(slots):
        rows.append((a, "re"))
        if kind != "half":
            rows.append((a, "im"))
    d = len(rows)
    cov = np.empty((d, d))
    for i, (a, pa) in enumerate(rows):
        for j, (b, pb) in enumerate(rows):
            x, y = P[a, b], Q[a, b]
            if pa == "re" and pb == "re":
                v = 0.5 * (x + y).real
            elif pa == "im" and pb == "im":
                v = 0.5 * (y - x).real
            elif pa == "re" and pb == "im":
                v = 0.5 * (x.imag - y.imag)
            else:
                v = 0.5 * (x.imag + y.imag)
            cov[i, j] = v
    return 0.5 * (cov + cov.T)


def proxy_bias_allowance(m: int, n: int, horizon: int) -> np.ndarray:
    """Diagonal covariance deficit caused by using M_{k,N} instead of Xi_k.

    Each large coordinate loses n^{2 lambda_k - 1} E|M_{k,N} - Xi_k|^2 / 2 of
    variance (orthogonality of martingale increments).
    """
    from .moments import residual_second_moment

    basis = build_basis(m)
    out = np.zeros((basis.dim, basis.dim))
    for k in basis.large_indices:
        res = residual_second_moment(m, horizon, k)
        v = n ** (2.0 * basis.lambdas[k] - 1.0) * res.abs_sq / 2.0
        i = 2 * (k - 1)
        out[i, i] = out[i + 1, i + 1] = v
        out[i, i + 1] = out[i + 1, i] = abs(n ** (2.0 * basis.lambdas[k] - 1.0) * res.sq) / 2.0
    return out


def _sym_power(a: np.ndarray, p: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(a)
    vals = np.clip(vals, 0.0, None)
    with np.errstate(divide="ignore"):
        powered = np.where(vals > 0, vals**p, 0.0)
    return (vecs * powered) @ vecs.T


def normalizer(cov_Zn: np.ndarray, M_m: np.ndarray, max_condition: float = 1e8) -> NormalizerState:
    cov_Zn = np.asarray(cov_Zn, dtype=float)
    if cov_Zn.shape != M_m.shape:
        raise ValueError("covariance and target differ in shape")
    if not np.allclose(cov_Zn, cov_Zn.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov_Zn).max())):
        raise ValueError("cov_Zn must be symmetric")
    vals = np.linalg.eigvalsh(cov_Zn)
    cond = math.inf if vals.min() <= 0 else vals.max() / vals.min()
    if not cond < max_condition:
        return NormalizerState(cov_Zn, np.eye(len(M_m)), True, cond)
    sigma = _sym_power(M_m, 0.5) @ _sym_power(cov_Zn, -0.5)
    return NormalizerState(cov_Zn, sigma, False, cond)


def error_term_bn(I_n, U, proxies0: dict[int, np.ndarray], proxies1: dict[int, np.ndarray], n: int, basis: SpectralBasis) -> np.ndarray:
    """sigma_n (F_n^(1) + F_n^(2)) for arrays of split samples; shape (samples, m-1)."""
    I_n = np.asarray(I_n, dtype=np.int64)
    U = np.asarray(U, dtype=float)
    J_n = n - 1 - I_n
    cols = []
    for k, kind in _coordinate_slots(basis):
        if kind == "half":
            cols.append(np.zeros(I_n.shape, dtype=complex))
            continue
        w = basis.omega(k)
        path = rising_path(w, n)
        G = path[I_n] + w * path[J_n] - path[n]
        if kind == "large":
            nw = np.exp(w * math.log(n))
            f1 = G - nw * g_k(U, k, basis)
            f2 = (complex_power(I_n, w) - complex_power(n * U, w)) * proxies0[k]
            f2 = f2 + (complex_power(J_n, w) - complex_power(n * (1.0 - U), w)) * w * proxies1[k]
            cols.append(f1 + f2)
        else:
            cols.append(G)
    f = _to_real(basis, np.stack(cols, axis=-1))
    return f * scaling_vector(basis, n)


def f2_component(I_n, U, xi0, xi1, n: int, k: int, basis: SpectralBasis) -> np.ndarray:
    """The complex F_n^(2) entry for one large index."""
    w = basis.omega(k)
    I_n = np.asarray(I_n, dtype=float)
    J_n = n - 1 - I_n
    return (complex_power(I_n, w) - complex_power(n * np.asarray(U), w)) * xi0 + (
        complex_power(J_n, w) - complex_power(n * (1.0 - np.asarray(U)), w)
    ) * w * xi1
