"""Binary search tree splitting and the distributional fixed point of Xi_k."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gammafn import cgamma, complex_power
from .spectral import InvalidParameter, SpectralBasis, build_basis


@dataclass(frozen=True)
class SplitSample:
    n: int
    U: float
    I_n: int

    @property
    def J_n(self) -> int:
        return self.n - 1 - self.I_n


def g_k(u, k: int, basis: SpectralBasis):
    """(u^w + w (1-u)^w - 1) / Gamma(1+w) with w = omega^k; vectorised over u."""
    w = basis.omega(k)
    if not w.real > 0:
        raise InvalidParameter(f"g_k needs lambda_k > 0 (k={k}, m={basis.m})")
    u = np.asarray(u, dtype=float)
    out = (complex_power(u, w) + w * complex_power(1.0 - u, w) - 1.0) / cgamma(1.0 + w)
    return out if np.ndim(out) else complex(out)


def split_sample(n: int, rng: np.random.Generator) -> SplitSample:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    u = rng.random()
    return SplitSample(n, float(u), int(rng.binomial(n - 1, u)))


def split_samples(n: int, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (U, I_n) draws."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    u = rng.random(size)
    return u, rng.binomial(n - 1, u)


def _small_urn(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.zeros(m, dtype=np.int64)
    counts[0] = 1
    for t in range(n):
        r = rng.integers(t + 1)
        j = int(np.searchsorted(np.cumsum(counts), r, side="right"))
        counts[(j + 1) % m] += 1
    return counts


def bst_split_check(n: int, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Left subtree urn of type 0 and right subtree urn of type 1 (a shifted type-0 urn)."""
    s = split_sample(n, rng)
    left = _small_urn(m, s.I_n, rng)
    right = np.roll(_small_urn(m, s.J_n, rng), 1)
    return left, right


def bst_split_law(m: int, n: int) -> dict[tuple[int, ...], Fraction]:
    """Exact law of R_I + A^t R'_J with I uniform on {0..n-1} and independent urns."""
    from .moments import exact_distribution

    if n < 1:
        raise InvalidParameter("n must be >= 1")
    laws = [exact_distribution(m, t, n_max=max(n, 14)).law for t in range(n)]
    out: dict[tuple[int, ...], Fraction] = {}
    for i in range(n):
        j = n - 1 - i
        for left, p in laws[i].items():
            for right, q in laws[j].items():
                shifted = right[-1:] + right[:-1]
                key = tuple(a + b for a, b in zip(left, shifted))
                out[key] = out.get(key, Fraction(0)) + p * q / n
    return out


def sample_split_compositions(m: int, n: int, reps: int, rng: np.random.Generator) -> Counter:
    out: Counter = Counter()
    for _ in range(reps):
        left, right = bst_split_check(n, m, rng)
        out[tuple((left + right).tolist())] += 1
    return out


def second_moment_contraction(basis: SpectralBasis, k: int) -> float:
    """E|U^w|^2 + E|(1-U)^w|^2 = 2/(2 lambda_k + 1)."""
    return 2.0 / (2.0 * basis.lambdas[k] + 1.0)


def square_contraction(basis: SpectralBasis, k: int) -> complex:
    """E[U^{2w}] + w^2 E[(1-U)^{2w}] = (1 + w^2)/(1 + 2w), the factor for E[Xi^2]."""
    w = basis.omega(k)
    return (1.0 + w * w) / (1.0 + 2.0 * w)


def third_moment_contraction(basis: SpectralBasis, k: int) -> float:
    return 2.0 / (3.0 * basis.lambdas[k] + 1.0)


def sample_xi(
    k: int,
    depth: int,
    pool_size: int,
    rng: np.random.Generator,
    basis: SpectralBasis,
    center: bool = True,
) -> np.ndarray:
    """Generation ``depth`` of the pooled fixed-point iteration started from the constant 0.

    The map preserves the mean exactly, so without ``center`` the pool mean
    performs an uncontracted random walk.  With ``center`` each generation is
    shifted to mean zero and rescaled by sqrt(P/(P-1)) so that its second
    absolute moment stays unbiased.
    """
    if basis.classify(k) != "large":
        raise InvalidParameter(f"k={k} is not a large index for m={basis.m}")
    if depth < 1 or pool_size < 2:
        raise InvalidParameter("depth must be >= 1 and pool_size >= 2")
    pool = np.zeros(pool_size, dtype=complex)
    fix = np.sqrt(pool_size / (pool_size - 1.0))
    for _ in range(depth):
        pool = iterate_once(pool, k, rng, basis)
        if center:
            pool = (pool - pool.mean()) * fix
    return pool


def iterate_once(pool: np.ndarray, k: int, rng: np.random.Generator, basis: SpectralBasis) -> np.ndarray:
    """One application of the fixed-point map to a pool (same size out)."""
    w = basis.omega(k)
    size = pool.size
    u = rng.random(size)
    left = pool[rng.integers(size, size=size)]
    right = pool[rng.integers(size, size=size)]
    return complex_power(u, w) * left + w * complex_power(1.0 - u, w) * right + g_k(u, k, basis)


def debiased_abs_second_moment(pool: np.ndarray, depth: int, basis: SpectralBasis, k: int) -> tuple[float, float]:
    """E|Xi_k|^2 from a depth-d pool started at 0, with its naive standard error.

    From a zero start the second absolute moment after d generations equals
    (1 - rho^d) times its fixed point, rho = 2/(2 lambda_k + 1); the factor is
    divided out.  The error ignores dependence between pool members.
    """
    rho = second_moment_contraction(basis, k)
    scale = 1.0 / (1.0 - rho**depth)
    a = np.abs(pool) ** 2
    return float(a.mean() * scale), float(a.std(ddof=1) / np.sqrt(a.size) * scale)


@dataclass(frozen=True)
class XiMomentEstimate:
    abs_sq: float
    se: float
    batch_values: tuple[float, ...]
    depth: int
    pool_size: int


def xi_moment_estimate(
    k: int,
    depth: int,
    pool_size: int,
    rng: np.random.Generator,
    basis: SpectralBasis,
    batches: int = 10,
) -> XiMomentEstimate:
    """E|Xi_k|^2 from ``batches`` independent centred pools totalling ``pool_size`` members.

    Members of one pool are correlated through resampling, so the standard
    error comes from the spread between independent pools.
    """
    if batches < 2:
        raise InvalidParameter("need at least 2 independent batches")
    size = pool_size // batches
    vals = np.array(
        [debiased_abs_second_moment(sample_xi(k, depth, size, rng, basis), depth, basis, k)[0] for _ in range(batches)]
    )
    return XiMomentEstimate(
        abs_sq=float(vals.mean()),
        se=float(vals.std(ddof=1) / np.sqrt(batches)),
        batch_values=tuple(float(v) for v in vals),
        depth=depth,
        pool_size=size * batches,
    )


def build(m: int) -> SpectralBasis:
    return build_basis(m)
