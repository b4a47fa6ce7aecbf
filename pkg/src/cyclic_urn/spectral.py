"""Eigen-structure of the cyclic replacement matrix.

Everything here is deterministic in ``m``.  Coordinates of the residual
vector are ordered as (Re, Im) pairs for k = 1..ceil(m/2)-1 followed by one
real scalar for k = m/2 when m is even; that ordering is shared by the
limit covariance, the rotation matrix and the sigma_n scalings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT3_2 = math.sqrt(3.0) / 2.0


class InvalidParameter(ValueError):
    """A numeric argument violates a documented precondition."""


def root_of_unity(k: int, m: int) -> complex:
    """exp(2*pi*i*k/m), exact at multiples of a quarter and a sixth turn."""
    k %= m
    if (4 * k) % m == 0:
        return (1.0 + 0j, 1j, -1.0 + 0j, -1j)[4 * k // m]
    if (6 * k) % m == 0:
        re = (1.0, 0.5, -0.5, -1.0, -0.5, 0.5)[6 * k // m]
        im = (0.0, SQRT3_2, SQRT3_2, 0.0, -SQRT3_2, -SQRT3_2)[6 * k // m]
        return complex(re, im)
    angle = 2.0 * math.pi * k / m
    return complex(math.cos(angle), math.sin(angle))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralBasis:
    m: int
    omega_powers: np.ndarray  # omega^k, k = 0..m-1
    lambdas: np.ndarray
    mus: np.ndarray
    eigvecs: np.ndarray  # row k is v_k
    r: int
    critical_flag: bool
    dual: np.ndarray  # row k holds the coefficients of u_k: omega^{kt}

    @property
    def n_pairs(self) -> int:
        """Number of complex coordinates k = 1..ceil(m/2)-1 in the residual vector."""
        return (self.m + 1) // 2 - 1

    @property
    def dim(self) -> int:
        return self.m - 1

    @property
    def large_indices(self) -> list[int]:
        return list(range(1, self.r + 1))

    @property
    def critical_index(self) -> int | None:
        return self.m // 6 if self.critical_flag else None

    def omega(self, k: int) -> complex:
        return complex(self.omega_powers[k % self.m])

    def classify(self, k: int) -> str:
        """'drift' for k=0, else 'large', 'critical' or 'small' by the sign of lambda_k - 1/2."""
        k %= self.m
        if k == 0:
            return "drift"
        if self.critical_flag and 6 * k in (self.m, 5 * self.m):
            return "critical"
        return "large" if self.lambdas[k] > 0.5 else "small"

    def project(self, w) -> np.ndarray:
        """u_k(w) = sum_t omega^{kt} w_t for all k; w may be batched along leading axes."""
        return np.asarray(w) @ self.dual.T

    def reassemble(self, u) -> np.ndarray:
        """Inverse of :meth:`project`: sum_k u_k v_k."""
        return np.asarray(u) @ self.eigvecs


@lru_cache(maxsize=64)
def build_basis(m: int) -> SpectralBasis:
    if not isinstance(m, (int, np.integer)) or m < 2:
        raise InvalidParameter(f"m must be an integer >= 2, got {m!r}")
    m = int(m)
    omega = np.array([root_of_unity(k, m) for k in range(m)])
    kt = np.outer(np.arange(m), np.arange(m)) % m
    dual = omega[kt]
    eigvecs = np.conj(dual) / m  # entry t of v_k is omega^{-kt}/m
    return SpectralBasis(
        m=m,
        omega_powers=_frozen(omega),
        lambdas=_frozen(omega.real.copy()),
        mus=_frozen(omega.imag.copy()),
        eigvecs=_frozen(eigvecs),
        r=(m - 1) // 6,
        critical_flag=m % 6 == 0,
        dual=_frozen(dual),
    )


def replacement_matrix(m: int) -> np.ndarray:
    if m < 2:
        raise InvalidParameter(f"m must be >= 2, got {m}")
    a = np.zeros((m, m), dtype=np.int64)
    a[np.arange(m), (np.arange(m) + 1) % m] = 1
    return a


@dataclass(frozen=True)
class CovarianceTarget:
    sigma_m: np.ndarray
    M_m: np.ndarray
    rank_sigma: int
    D: np.ndarray


def numerical_rank(a: np.ndarray, rel_tol: float = 1e-8) -> int:
    sv = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(sv > rel_tol * sv.max())) if sv.size and sv.max() > 0 else 0


def _real_part_checked(a: np.ndarray, what: str) -> np.ndarray:
    resid = np.abs(a.imag).max()
    if resid >= 1e-12:
        raise ArithmeticError(f"{what} has imaginary residue {resid:.3g}")
    return a.real.copy()


def sigma_matrix(basis: SpectralBasis) -> CovarianceTarget:
    """Limit covariance of the normalised composition residual, plus M_m and D."""
    m = basis.m
    v = basis.eigvecs
    if basis.critical_flag:
        ks = [m // 6, 5 * m // 6]
        weights = [1.0, 1.0]
    else:
        ks = list(range(1, m))
        weights = [1.0 / abs(2.0 * basis.lambdas[k] - 1.0) for k in ks]
    acc = np.zeros((m, m), dtype=complex)
    for k, w in zip(ks, weights):
        acc += w * np.outer(v[k], np.conj(v[k]))
    sigma = _real_part_checked(acc, "Sigma^(m)")
    return CovarianceTarget(
        sigma_m=sigma,
        M_m=limit_covariance(basis),
        rank_sigma=numerical_rank(sigma),
        D=rotation_matrix_D(basis),
    )


def limit_covariance(basis: SpectralBasis) -> np.ndarray:
    """Diagonal limit covariance of the residual vector Z_n."""
    diag = []
    for k in range(1, basis.n_pairs + 1):
        if basis.classify(k) == "critical":
            v = 0.5
        else:
            v = 0.5 / abs(2.0 * basis.lambdas[k] - 1.0)
        diag += [v, v]
    if basis.m % 2 == 0:
        diag.append(1.0 / 3.0)
    return np.diag(diag)


def rotation_matrix_D(basis: SpectralBasis) -> np.ndarray:
    d = np.zeros((basis.dim, basis.dim))
    for k in range(1, basis.n_pairs + 1):
        c, s = basis.lambdas[k], basis.mus[k]
        i = 2 * (k - 1)
        d[i : i + 2, i : i + 2] = [[c, -s], [s, c]]
    if basis.m % 2 == 0:
        d[-1, -1] = -1.0
    return d


def scaling_vector(basis: SpectralBasis, n: float) -> np.ndarray:
    """Diagonal of sigma_n as a vector."""
    if n < 0:
        raise InvalidParameter(f"n must be >= 0, got {n}")
    out = np.ones(basis.dim)
    if n < 2:
        return out
    out /= math.sqrt(n)
    kc = basis.critical_index
    if kc is not None:
        i = 2 * (kc - 1)
        out[i : i + 2] /= math.sqrt(math.log(n))
    return out


def sigma_n_scaling(basis: SpectralBasis, n: float) -> np.ndarray:
    return np.diag(scaling_vector(basis, n))
