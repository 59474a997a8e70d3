"""Numpy fallback for the compiled Legendre kernels.

Same signatures and the same floating-point operation sequence as
``_kernels.pyx``; the inner l loop is Python, vectorized across the jobs
handled together (all rings for the m-major order, one ring at a time for
the ring-major order).
"""

from __future__ import annotations

import numpy as np

from .legendre import DEFAULT_LADDER, KERNEL_MIN_EXPONENT, beta_row, scaled_sin_power

_LOG2_STEP = DEFAULT_LADDER.log2_step
_HI = DEFAULT_LADDER.hi_threshold
_INV_STEP = 1.0 / DEFAULT_LADDER.step_magnitude
_FACTORS = np.array([np.ldexp(1.0, -_LOG2_STEP), 1.0])


def _factor(k: np.ndarray) -> np.ndarray:
    return np.where(k < KERNEL_MIN_EXPONENT, 0.0, _FACTORS[np.clip(k, -1, 0) + 1])


def _start(mu: float, s: np.ndarray, m: int):
    p0 = np.empty(s.shape[0])
    k = np.zeros(s.shape[0], dtype=np.int64)
    for j, sj in enumerate(s):
        if m == 0:
            p0[j] = mu
            continue
        pm, pe = scaled_sin_power(float(sj), m)
        if pm == 0.0:
            p0[j] = 0.0
            continue
        kj = (pe + _LOG2_STEP // 2) // _LOG2_STEP
        p0[j] = np.ldexp(mu * pm, pe - kj * _LOG2_STEP)
        k[j] = kj
    return p0, k


def _coeffs(m: int, lmax: int):
    n = lmax - m + 1
    b = np.zeros(n)
    c = np.zeros(n)
    if n > 1:
        b[1:] = beta_row(m, lmax)
        c[2:] = b[2:] / b[1:-1]
    return b, c


def _legendre_rows(m, lmax, x, p0, k, b, c):
    """Yield (i, q) with q = P_{m+i,m}(x) unscaled, vectorized over x."""
    n = lmax - m + 1
    fk = _factor(k)
    yield 0, p0 * fk
    if n == 1:
        return
    p1 = b[1] * x * p0
    yield 1, p1 * fk
    scaled = bool((k < 0).any())
    for i in range(2, n):
        p2 = b[i] * x * p1 - c[i] * p0
        p0 = p1
        p1 = p2
        if scaled:
            hit = (k < 0) & (np.abs(p2) > _HI)
            if hit.any():
                p0 = np.where(hit, p0 * _INV_STEP, p0)
                p1 = np.where(hit, p1 * _INV_STEP, p1)
                k = k + hit
                fk = _factor(k)
            scaled = bool((k < 0).any())
            yield i, p1 * fk
        else:
            yield i, p1


def _synth_block(alm, off, m, lmax, x, s, mu):
    p0, k = _start(mu, s, m)
    b, c = _coeffs(m, lmax)
    sr = np.zeros(x.shape[0])
    si = np.zeros(x.shape[0])
    tr = np.zeros(x.shape[0])
    ti = np.zeros(x.shape[0])
    for i, q in _legendre_rows(m, lmax, x, p0, k, b, c):
        av = alm[off + i]
        if i & 1:
            tr = tr + av.real * q
            ti = ti + av.imag * q
        else:
            sr = sr + av.real * q
            si = si + av.imag * q
    live = p0 != 0.0
    return np.where(live, sr, 0.0), np.where(live, si, 0.0), np.where(live, tr, 0.0), np.where(live, ti, 0.0), int(live.sum())


def _accum_block(alm_out, off, m, lmax, x, s, mu, ev, od):
    p0, k = _start(mu, s, m)
    b, c = _coeffs(m, lmax)
    live = p0 != 0.0
    if not live.any():
        return 0
    x, p0, k, ev, od = x[live], p0[live], k[live], ev[live], od[live]
    for i, q in _legendre_rows(m, lmax, x, p0, k, b, c):
        w = od if i & 1 else ev
        # add.accumulate is strictly sequential: same ring order as the compiled loop
        terms = np.empty(q.shape[0] + 1, dtype=np.complex128)
        terms[0] = alm_out[off + i]
        terms[1:] = q * w
        alm_out[off + i] = np.add.accumulate(terms)[-1]
    return int(live.sum())


def _store(out_n, out_s, im, cols, paired, sr, si, tr, ti):
    out_n[im, cols] = (sr + tr) + 1j * (si + ti)
    south = (sr - tr) + 1j * (si - ti)
    out_s[im, cols] = np.where(paired, south, out_s[im, cols])


def delta_a_m_major(alm, offsets, m_values, lmax, x, s, paired, mu, out_n, out_s):
    x = np.asarray(x)
    s = np.asarray(s)
    paired = np.asarray(paired, dtype=bool)
    cols = np.arange(x.shape[0])
    steps = 0
    for im, m in enumerate(m_values):
        m = int(m)
        sr, si, tr, ti, live = _synth_block(alm, int(offsets[im]), m, lmax, x, s, float(mu[im]))
        _store(out_n, out_s, im, cols, paired, sr, si, tr, ti)
        steps += live * (lmax - m + 1)
    return steps


def delta_a_ring_major(alm, offsets, m_values, lmax, x, s, paired, mu, out_n, out_s):
    x = np.asarray(x)
    s = np.asarray(s)
    paired = np.asarray(paired, dtype=bool)
    steps = 0
    for j in range(x.shape[0]):
        sl = slice(j, j + 1)
        for im, m in enumerate(m_values):
            m = int(m)
            sr, si, tr, ti, live = _synth_block(alm, int(offsets[im]), m, lmax, x[sl], s[sl], float(mu[im]))
            _store(out_n, out_s, im, sl, paired[sl], sr, si, tr, ti)
            steps += live * (lmax - m + 1)
    return steps


def _parity_sums(d_n, d_s, paired, im, cols):
    dn = d_n[im, cols]
    ds = d_s[im, cols]
    ev = np.where(paired[cols], dn + ds, dn)
    od = np.where(paired[cols], dn - ds, dn)
    return ev, od


def accumulate_m_major(alm_out, offsets, m_values, lmax, x, s, paired, mu, d_n, d_s):
    x = np.asarray(x)
    s = np.asarray(s)
    paired = np.asarray(paired, dtype=bool)
    cols = np.arange(x.shape[0])
    steps = 0
    for im, m in enumerate(m_values):
        m = int(m)
        ev, od = _parity_sums(d_n, d_s, paired, im, cols)
        live = _accum_block(alm_out, int(offsets[im]), m, lmax, x, s, float(mu[im]), ev, od)
        steps += live * (lmax - m + 1)
    return steps


def accumulate_ring_major(alm_out, offsets, m_values, lmax, x, s, paired, mu, d_n, d_s):
    x = np.asarray(x)
    s = np.asarray(s)
    paired = np.asarray(paired, dtype=bool)
    steps = 0
    for j in range(x.shape[0]):
        sl = slice(j, j + 1)
        for im, m in enumerate(m_values):
            m = int(m)
            ev, od = _parity_sums(d_n, d_s, paired, im, sl)
            live = _accum_block(alm_out, int(offsets[im]), m, lmax, x[sl], s[sl], float(mu[im]), ev, od)
            steps += live * (lmax - m + 1)
    return steps
