"""Normalized associated Legendre functions by upward recurrence in l.

Values follow the orthonormal convention (no Condon-Shortley phase), so
that Y_lm(theta, phi) = P_lm(cos theta) * exp(i m phi). Rows at fixed m are
built from

    P_mm     = mu_m * (1 - x^2)^(m/2)
    P_m+1,m  = beta_{m+1,m} * x * P_mm
    P_l,m    = beta_lm * x * P_l-1,m - (beta_lm / beta_l-1,m) * P_l-2,m

Intermediate magnitudes are kept inside double range by a ladder of
power-of-two scale factors; see :class:`ScaleLadder`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScaleLadder",
    "ScaledValue",
    "RecurrenceCoeffs",
    "DEFAULT_LADDER",
    "KERNEL_MIN_EXPONENT",
    "recurrence_start",
    "mu_table",
    "beta",
    "beta_row",
    "recurrence_coeffs",
    "scaled_sin_power",
    "plm_row",
    "plm_row_scaled",
]

_FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class ScaleLadder:
    """Power-of-two rescaling ladder.

    A value is stored as ``mantissa * step_magnitude**k``. Starting values
    are normalized into ``[lo_threshold, hi_threshold]`` and the recurrence
    divides by ``step_magnitude`` whenever the running value exceeds
    ``hi_threshold``. ``log_steps`` holds F**k for k = -max_steps..0; entries
    past the subnormal range are exactly 0, which is how sub-double values
    are flushed on output.
    """

    log2_step: int = 512
    max_steps: int = 16
    step_magnitude: float = field(init=False)
    lo_threshold: float = field(init=False)
    hi_threshold: float = field(init=False)
    log_steps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        step = math.ldexp(1.0, self.log2_step)
        object.__setattr__(self, "step_magnitude", step)
        object.__setattr__(self, "lo_threshold", 1.0 / step)
        object.__setattr__(self, "hi_threshold", step)
        table = np.array([math.ldexp(1.0, -k * self.log2_step) for k in range(self.max_steps, -1, -1)])
        table.setflags(write=False)
        object.__setattr__(self, "log_steps", table)

    def factor(self, k: int) -> float:
        """F**k for k <= 0 (0.0 below the table or the subnormal range)."""
        if k > 0:
            raise ValueError("the recurrence never produces a positive scale exponent")
        if k < -self.max_steps:
            return 0.0
        return float(self.log_steps[k + self.max_steps])


DEFAULT_LADDER = ScaleLadder()

# The transform kernels keep only ladder exponents 0 and -1 on output. A value
# at k = -2 is below 2**-512 in magnitude, and F**-2 = 2**-1024 is itself
# subnormal, which would send every multiply through the slow hardware path.
KERNEL_MIN_EXPONENT = -1


@dataclass(frozen=True)
class ScaledValue:
    mantissa: float
    scale_exponent: int = 0

    def value(self, ladder: ScaleLadder = DEFAULT_LADDER) -> float:
        if self.mantissa == 0.0:
            return 0.0
        return math.ldexp(self.mantissa, self.scale_exponent * ladder.log2_step)


@dataclass(frozen=True)
class RecurrenceCoeffs:
    m: int
    beta: np.ndarray  # beta_{l,m} for l = m+1 .. lmax


def mu_table(mmax: int) -> np.ndarray:
    """Starting amplitudes mu_m for m = 0..mmax.

    Built from a running sum of logarithms of the ratios
    mu_m^2 / mu_{m-1}^2 = (2m + 1) / (2m), never from factorials.
    """
    if mmax < 0:
        raise ValueError("mmax must be >= 0")
    m = np.arange(1, mmax + 1, dtype=np.float64)
    log_mu = np.empty(mmax + 1)
    log_mu[0] = -0.5 * math.log(_FOUR_PI)
    log_mu[1:] = log_mu[0] + np.cumsum(0.5 * np.log1p(1.0 / (2.0 * m)))
    return np.exp(log_mu)


def recurrence_start(m: int) -> ScaledValue:
    """mu_m as a scaled value. mu_m grows like m**(1/4), so the exponent is 0."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return ScaledValue(float(mu_table(m)[m]), 0)


def beta(l: int, m: int) -> float:
    if l < m or m < 0:
        raise ValueError(f"beta requires l >= m >= 0, got l={l}, m={m}")
    if l == m:
        raise ZeroDivisionError(f"beta_{{l,m}} undefined for l == m == {m}")
    return math.sqrt((4.0 * l * l - 1.0) / ((l - m) * (l + m)))


def beta_row(m: int, lmax: int) -> np.ndarray:
    """beta_{l,m} for l = m+1..lmax, float64, same arithmetic as the kernels."""
    l = np.arange(m + 1, lmax + 1, dtype=np.float64)
    return np.sqrt((4.0 * l * l - 1.0) / ((l - m) * (l + m)))


def recurrence_coeffs(m: int, lmax: int) -> RecurrenceCoeffs:
    return RecurrenceCoeffs(m=m, beta=beta_row(m, lmax))


def scaled_sin_power(s: float, m: int) -> tuple[float, int]:
    """s**m as (mantissa, binary exponent) by square-and-multiply with frexp renormalization."""
    if m == 0:
        return 1.0, 0
    if s == 0.0:
        return 0.0, 0
    res_m, res_e = 1.0, 0
    base_m, base_e = math.frexp(s)
    e = m
    while True:
        if e & 1:
            res_m, k = math.frexp(res_m * base_m)
            res_e += base_e + k
        e >>= 1
        if not e:
            break
        base_m, k = math.frexp(base_m * base_m)
        base_e = 2 * base_e + k
    return res_m, res_e


def _start_scaled(mu: float, s: float, m: int, ladder: ScaleLadder | None) -> tuple[float, int]:
    """P_mm as (mantissa, ladder exponent)."""
    pm, pe = scaled_sin_power(s, m)
    if pm == 0.0:
        return 0.0, 0
    v = mu * pm
    if ladder is None:
        return math.ldexp(v, pe), 0
    k = (pe + ladder.log2_step // 2) // ladder.log2_step
    return math.ldexp(v, pe - k * ladder.log2_step), k


def plm_row_scaled(m: int, x: float, lmax: int, ladder: ScaleLadder = DEFAULT_LADDER):
    """Row P_{l,m}(x), l = m..lmax, as (mantissas, ladder exponents).

    The true value is ``mantissa * ladder.step_magnitude**exponent``; this
    form stays meaningful where the unscaled value is below double range.
    """
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [-1, 1], got {x}")
    if m < 0 or m > lmax:
        raise ValueError(f"need 0 <= m <= lmax, got m={m}, lmax={lmax}")
    n = lmax - m + 1
    mant = np.zeros(n)
    expo = np.zeros(n, dtype=np.int64)
    s = math.sqrt((1.0 - x) * (1.0 + x))
    p0, k = _start_scaled(recurrence_start(m).mantissa, s, m, ladder)
    if p0 == 0.0:
        return mant, expo
    hi = ladder.hi_threshold if ladder is not None else math.inf
    inv_step = 1.0 / ladder.step_magnitude if ladder is not None else 1.0
    mant[0], expo[0] = p0, k
    if n == 1:
        return mant, expo
    betas = beta_row(m, lmax)
    p1 = betas[0] * x * p0
    mant[1], expo[1] = p1, k
    for i in range(2, n):
        b = betas[i - 1]
        p2 = b * x * p1 - (b / betas[i - 2]) * p0
        p0, p1 = p1, p2
        if k < 0 and abs(p2) > hi:
            p0 *= inv_step
            p1 *= inv_step
            k += 1
        mant[i], expo[i] = p1, k
    return mant, expo


def plm_row(m: int, x: float, lmax: int, ladder: ScaleLadder | None = DEFAULT_LADDER) -> np.ndarray:
    """P_{l,m}(x) for l = m..lmax, unscaled.

    Values below double range come back as 0. Passing ``ladder=None``
    disables rescaling, so such values underflow inside the recurrence
    instead of being carried by the scale exponent.
    """
    mant, expo = plm_row_scaled(m, x, lmax, ladder)
    if ladder is None:
        return mant
    factors = np.array([ladder.factor(int(k)) for k in range(int(expo.min(initial=0)), 1)])
    return mant * factors[expo - int(expo.min(initial=0))]
