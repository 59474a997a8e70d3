"""Independent reference implementations used by the tests."""

from fractions import Fraction
from math import comb, factorial

import mpmath as mp
import numpy as np


def plm_exact(l, m, x, dps=60):
    """Normalized P_lm(x) from the explicit sum for d^m P_l / dx^m.

    The polynomial part is exact rational arithmetic in x; only the final
    square roots are taken in mpmath. No recurrence is involved.
    """
    x = Fraction(x)
    s = Fraction(0)
    for k in range((l - m) // 2 + 1):
        p = l - 2 * k - m
        s += (-1) ** k * comb(l, k) * comb(2 * l - 2 * k, l) * Fraction(factorial(l - 2 * k), factorial(p)) * x**p
    s /= 2**l
    with mp.workdps(dps):
        one_minus = 1 - x * x
        val = mp.mpf(s.numerator) / s.denominator
        val *= mp.sqrt(mp.mpf(one_minus.numerator) / one_minus.denominator) ** m
        val *= mp.sqrt((2 * l + 1) / (4 * mp.pi) * mp.mpf(factorial(l - m)) / factorial(l + m))
        return val


def mu_exact(m, dps=40):
    """(2m-1)!! * sqrt((2m+1) / (4 pi (2m)!))."""
    with mp.workdps(dps):
        dfact = mp.mpf(factorial(2 * m)) / (2**m * factorial(m))
        return dfact * mp.sqrt((2 * m + 1) / (4 * mp.pi * factorial(2 * m)))


def plm_matrix(lmax, m, xs):
    """Dense table P_lm(x_r), shape (len(xs), lmax - m + 1), from the exact oracle."""
    return np.array([[float(plm_exact(l, m, x)) for l in range(m, lmax + 1)] for x in xs])
