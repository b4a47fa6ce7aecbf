import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st


from cyclic_urn.gammafn import cgamma, complex_power, gamma_ratio, rising_path, rising_product


@given(st.floats(-4.5, 6.0), st.floats(-3.0, 3.0))
@settings(max_examples=200, deadline=None)
def test_cgamma_matches_mpmath(re, im):
    z = complex(re, im)
    if abs(z - round(re)) < 1e-3 and round(re) <= 0:
        return
    ref = complex(mpmath.gamma(mpmath.mpc(re, im)))
    assert abs(cgamma(z) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_rising_product_is_gamma_ratio():
    z = np.exp(2j * np.pi / 7)
    for n in (0, 1, 5, 40):
        ref = complex(mpmath.rf(1 + z, n) / mpmath.factorial(n))
        assert rising_product(z, n) == pytest.approx(ref, rel=1e-12)


def test_rising_product_at_minus_one_vanishes():
    assert rising_product(-1.0, 0) == 1.0
    assert rising_product(-1.0, 3) == 0.0


def test_rising_path_entries():
    z = 0.3 + 0.4j
    path = rising_path(z, 6)
    assert path[0] == 1.0
    for n in range(7):
        assert path[n] == pytest.approx(rising_product(z, n), rel=1e-13)


def test_gamma_ratio_inverts_scaled_rising_product():
    z = np.exp(2j * np.pi / 9)
    assert gamma_ratio(50, z) * rising_product(z, 50) * cgamma(1 + z) == pytest.approx(1.0, rel=1e-12)
    assert gamma_ratio(7, -1.0) == 7


def test_complex_power_zero_base():
    w = np.exp(2j * np.pi / 7)
    out = complex_power(np.array([0.0, 0.25]), w)
    assert out[0] == 0
    assert out[1] == pytest.approx(np.exp(w * np.log(0.25)), rel=1e-14)
