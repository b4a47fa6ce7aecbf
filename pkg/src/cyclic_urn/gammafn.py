"""Complex Gamma function and the rising products built from it.

The urn moments are all of the form Gamma(n+1+z) / (Gamma(n+1) Gamma(1+z))
for z on the unit circle; those are evaluated as finite products
``prod_{s=1}^n (1 + z/s)`` rather than through Gamma itself, which keeps
them exact at the zeros (z = -1) and accurate for huge n.
"""

from __future__ import annotations

import numpy as np
from scipy import special


def cgamma(z: complex) -> complex:
    """Gamma function for complex argument."""
    return complex(special.gamma(complex(z)))


def rising_product(z: complex, n: int) -> complex:
    """prod_{s=1}^n (s + z)/s, i.e. Gamma(n+1+z) / (Gamma(n+1) Gamma(1+z))."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 1.0 + 0.0j
    if z == -1:
        return 0.0j
    s = np.arange(1, n + 1, dtype=float)
    return complex(np.exp(np.sum(np.log1p(complex(z) / s))))


def rising_path(z: complex, n: int) -> np.ndarray:
    """Array ``P[t] = prod_{s=1}^t (1 + z/s)`` for t = 0..n."""
    out = np.empty(n + 1, dtype=complex)
    out[0] = 1.0
    if n == 0:
        return out
    if z == -1:
        out[1:] = 0.0
        return out
    s = np.arange(1, n + 1, dtype=float)
    out[1:] = np.exp(np.cumsum(np.log1p(complex(z) / s)))
    return out


def gamma_ratio(n: int, z: complex) -> complex:
    """Gamma(n+1) / Gamma(n+1+z) for n >= 0 and |z| <= 1, z != -1 unless n >= 1."""
    if z == -1:
        if n < 1:
            raise ZeroDivisionError("Gamma(n+1+z) has a pole at n=0, z=-1")
        return complex(n)
    return 1.0 / (cgamma(1.0 + z) * rising_product(z, n))


def complex_power(base, exponent: complex):
    """base**exponent for real base >= 0 via exp(exponent*log(base)); 0**z = 0 when Re z > 0."""
    base = np.asarray(base, dtype=float)
    positive = base > 0
    logb = np.log(np.where(positive, base, 1.0))
    out = np.where(positive, np.exp(complex(exponent) * logb), 0.0 if exponent.real > 0 else np.nan)
    return out if out.ndim else complex(out)
