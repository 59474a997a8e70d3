# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Legendre-stage kernels.

Every kernel works on a list of "jobs". A job is one ring latitude x (with
s = sqrt(1 - x^2)); when ``paired[j]`` is set the job also stands for the
mirror ring at -x, whose values follow from parity
P_lm(-x) = (-1)^(l+m) P_lm(x). Coefficient rows for order ``m_values[i]``
start at ``alm[offsets[i]]`` and hold l = m..lmax.

The arithmetic sequence matches ``_kernels_py`` operation for operation.
"""

from libc.math cimport sqrt, frexp, ldexp, fabs
from libc.stdlib cimport malloc, free

DEF LOG2_STEP = 512
DEF TILE = 256

cdef double HI_THRESHOLD = ldexp(1.0, LOG2_STEP)
cdef double INV_STEP = ldexp(1.0, -LOG2_STEP)


cdef inline double _factor(int k) noexcept nogil:
    # F**k kept for k = 0, -1 only (legendre.KERNEL_MIN_EXPONENT); anything
    # lower is below 2**-512 and would only feed subnormal arithmetic
    if k == 0:
        return 1.0
    if k == -1:
        return ldexp(1.0, -LOG2_STEP)
    return 0.0


cdef inline double _start(double mu, double s, int m, int* k_out) noexcept nogil:
    """P_mm mantissa with ladder exponent written to k_out."""
    cdef double res_m = 1.0, base_m, v
    cdef int res_e = 0, base_e, e2, e = m, k
    k_out[0] = 0
    if m == 0:
        return mu
    if s == 0.0:
        return 0.0
    base_m = frexp(s, &base_e)
    while True:
        if e & 1:
            res_m = frexp(res_m * base_m, &e2)
            res_e += base_e + e2
        e >>= 1
        if e == 0:
            break
        base_m = frexp(base_m * base_m, &e2)
        base_e = 2 * base_e + e2
    v = mu * res_m
    # k = floor((res_e + LOG2_STEP/2) / LOG2_STEP), same as the numpy path
    e2 = res_e + LOG2_STEP // 2
    if e2 >= 0:
        k = e2 // LOG2_STEP
    else:
        k = -((-e2 + LOG2_STEP - 1) // LOG2_STEP)
    k_out[0] = k
    return ldexp(v, res_e - k * LOG2_STEP)


cdef inline double _beta(double l, double m) noexcept nogil:
    return sqrt((4.0 * l * l - 1.0) / ((l - m) * (l + m)))


cdef void _fill_coeffs(int m, int n, double* b, double* c) noexcept nogil:
    # b[i] = beta_{m+i, m}, c[i] = b[i] / b[i-1]  for i >= 1 (index 0 unused)
    cdef int i
    cdef double dm = m
    b[0] = 0.0
    c[0] = 0.0
    for i in range(1, n):
        b[i] = _beta(dm + i, dm)
    if n > 1:
        c[1] = 0.0
    for i in range(2, n):
        c[i] = b[i] / b[i - 1]


DEF LANES = 4


cdef void _synth_lanes(const double complex* a, int n, const double* b, const double* c,
                       const double* x, const double* p_start, const int* k_start,
                       double* sums) noexcept nogil:
    """sum_l a_l P_l split by parity of l - m, for LANES rings in lockstep.

    Each lane performs the scalar operation sequence of ``_kernels_py``:
    while its ladder exponent is negative values are scaled by F**k and
    checked for rescaling; afterwards F**0 = 1 makes the factor exact.
    ``sums`` receives (even re, even im, odd re, odd im) per lane.
    """
    cdef double p0[LANES]
    cdef double p1[LANES]
    cdef double fk[LANES]
    cdef double sr[LANES]
    cdef double si[LANES]
    cdef double tr[LANES]
    cdef double ti[LANES]
    cdef int k[LANES]
    cdef double p2, q, bi, ci, ar, ai
    cdef int i, u, scaled = 0
    for u in range(LANES):
        k[u] = k_start[u]
        fk[u] = _factor(k[u])
        q = p_start[u] * fk[u]
        sr[u] = 0.0 + a[0].real * q
        si[u] = 0.0 + a[0].imag * q
        tr[u] = 0.0
        ti[u] = 0.0
        p0[u] = p_start[u]
        p1[u] = 0.0
        if k[u] < 0:
            scaled = 1
    if n > 1:
        for u in range(LANES):
            p1[u] = b[1] * x[u] * p0[u]
            q = p1[u] * fk[u]
            tr[u] = tr[u] + a[1].real * q
            ti[u] = ti[u] + a[1].imag * q
    i = 2
    while i < n and scaled:
        bi = b[i]
        ci = c[i]
        ar = a[i].real
        ai = a[i].imag
        scaled = 0
        for u in range(LANES):
            p2 = bi * x[u] * p1[u] - ci * p0[u]
            p0[u] = p1[u]
            p1[u] = p2
            if k[u] < 0:
                if fabs(p2) > HI_THRESHOLD:
                    p0[u] = p0[u] * INV_STEP
                    p1[u] = p1[u] * INV_STEP
                    k[u] += 1
                    fk[u] = _factor(k[u])
                if k[u] < 0:
                    scaled = 1
            q = p1[u] * fk[u]
            if i & 1:
                tr[u] = tr[u] + ar * q
                ti[u] = ti[u] + ai * q
            else:
                sr[u] = sr[u] + ar * q
                si[u] = si[u] + ai * q
        i += 1
    while i < n:
        bi = b[i]
        ci = c[i]
        ar = a[i].real
        ai = a[i].imag
        for u in range(LANES):
            p2 = bi * x[u] * p1[u] - ci * p0[u]
            p0[u] = p1[u]
            p1[u] = p2
        if i & 1:
            for u in range(LANES):
                tr[u] = tr[u] + ar * p1[u]
                ti[u] = ti[u] + ai * p1[u]
        else:
            for u in range(LANES):
                sr[u] = sr[u] + ar * p1[u]
                si[u] = si[u] + ai * p1[u]
        i += 1
    for u in range(LANES):
        sums[4 * u] = sr[u]
        sums[4 * u + 1] = si[u]
        sums[4 * u + 2] = tr[u]
        sums[4 * u + 3] = ti[u]


cdef void _accum_lanes(double complex* a, int n, const double* b, const double* c,
                       const double* x, const double* p_start, const int* k_start,
                       const double complex* ev, const double complex* od, int live) noexcept nogil:
    """a_l += P_l * (ev if l - m even else od) for LANES rings in lockstep.

    Only the first ``live`` lanes write; within each l they write in lane
    order, which is ascending ring order.
    """
    cdef double p0[LANES]
    cdef double p1[LANES]
    cdef double fk[LANES]
    cdef double q[LANES]
    cdef int k[LANES]
    cdef double p2, bi, ci
    cdef double complex acc
    cdef int i, u, scaled = 0
    acc = a[0]
    for u in range(LANES):
        k[u] = k_start[u]
        fk[u] = _factor(k[u])
        p0[u] = p_start[u]
        p1[u] = 0.0
        if k[u] < 0:
            scaled = 1
    for u in range(live):
        acc = acc + (p0[u] * fk[u]) * ev[u]
    a[0] = acc
    if n > 1:
        acc = a[1]
        for u in range(LANES):
            p1[u] = b[1] * x[u] * p0[u]
            q[u] = p1[u] * fk[u]
        for u in range(live):
            acc = acc + q[u] * od[u]
        a[1] = acc
    i = 2
    while i < n and scaled:
        bi = b[i]
        ci = c[i]
        scaled = 0
        for u in range(LANES):
            p2 = bi * x[u] * p1[u] - ci * p0[u]
            p0[u] = p1[u]
            p1[u] = p2
            if k[u] < 0:
                if fabs(p2) > HI_THRESHOLD:
                    p0[u] = p0[u] * INV_STEP
                    p1[u] = p1[u] * INV_STEP
                    k[u] += 1
                    fk[u] = _factor(k[u])
                if k[u] < 0:
                    scaled = 1
            q[u] = p1[u] * fk[u]
        acc = a[i]
        if i & 1:
            for u in range(live):
                acc = acc + q[u] * od[u]
        else:
            for u in range(live):
                acc = acc + q[u] * ev[u]
        a[i] = acc
        i += 1
    if live == LANES:
        while i < n:
            bi = b[i]
            ci = c[i]
            for u in range(LANES):
                p2 = bi * x[u] * p1[u] - ci * p0[u]
                p0[u] = p1[u]
                p1[u] = p2
            acc = a[i]
            if i & 1:
                for u in range(LANES):
                    acc = acc + p1[u] * od[u]
            else:
                for u in range(LANES):
                    acc = acc + p1[u] * ev[u]
            a[i] = acc
            i += 1
    else:
        while i < n:
            bi = b[i]
            ci = c[i]
            for u in range(LANES):
                p2 = bi * x[u] * p1[u] - ci * p0[u]
                p0[u] = p1[u]
                p1[u] = p2
            acc = a[i]
            if i & 1:
                for u in range(live):
                    acc = acc + p1[u] * od[u]
            else:
                for u in range(live):
                    acc = acc + p1[u] * ev[u]
            a[i] = acc
            i += 1


cdef inline void _store(double complex[:, ::1] out_n, double complex[:, ::1] out_s,
                        Py_ssize_t im, Py_ssize_t j, bint pair,
                        double er, double ei, double odr, double odi) noexcept nogil:
    out_n[im, j] = (er + odr) + 1j * (ei + odi)
    if pair:
        out_s[im, j] = (er - odr) + 1j * (ei - odi)


def delta_a_m_major(const double complex[::1] alm, const long[::1] offsets, const long[::1] m_values,
                    int lmax, const double[::1] x, const double[::1] s, const unsigned char[::1] paired,
                    const double[::1] mu, double complex[:, ::1] out_n, double complex[:, ::1] out_s):
    """Delta^A_m(x_j): m outermost, coefficients precomputed once per m.

    Live rings are grouped LANES at a time and run in lockstep; unused
    lanes of the last group carry zeros and are discarded.
    """
    cdef Py_ssize_t n_m = m_values.shape[0], n_j = x.shape[0], im, j
    cdef int m, n, k, u, nlive
    cdef double p0
    cdef double xq[LANES]
    cdef double pq[LANES]
    cdef int kq[LANES]
    cdef Py_ssize_t jq[LANES]
    cdef double sums[4 * LANES]
    cdef const double complex* a
    cdef double* b = <double*> malloc((lmax + 2) * sizeof(double))
    cdef double* c = <double*> malloc((lmax + 2) * sizeof(double))
    cdef long long steps = 0
    if b == NULL or c == NULL:
        free(b); free(c)
        raise MemoryError()
    with nogil:
        for im in range(n_m):
            m = <int> m_values[im]
            n = lmax - m + 1
            a = &alm[offsets[im]]
            _fill_coeffs(m, n, b, c)
            nlive = 0
            for j in range(n_j + 1):
                if j < n_j:
                    p0 = _start(mu[im], s[j], m, &k)
                    if p0 == 0.0:
                        _store(out_n, out_s, im, j, paired[j], 0.0, 0.0, 0.0, 0.0)
                        continue
                    xq[nlive] = x[j]
                    pq[nlive] = p0
                    kq[nlive] = k
                    jq[nlive] = j
                    nlive += 1
                    steps += n
                    if nlive < LANES:
                        continue
                if nlive == 0:
                    continue
                for u in range(nlive, LANES):
                    xq[u] = 0.0
                    pq[u] = 0.0
                    kq[u] = 0
                _synth_lanes(a, n, b, c, xq, pq, kq, sums)
                for u in range(nlive):
                    _store(out_n, out_s, im, jq[u], paired[jq[u]],
                           sums[4 * u], sums[4 * u + 1], sums[4 * u + 2], sums[4 * u + 3])
                nlive = 0
    free(b)
    free(c)
    return steps


def delta_a_ring_major(const double complex[::1] alm, const long[::1] offsets, const long[::1] m_values,
                       int lmax, const double[::1] x, const double[::1] s, const unsigned char[::1] paired,
                       const double[::1] mu, double complex[:, ::1] out_n, double complex[:, ::1] out_s):
    """Delta^A_m(x_j): rings outermost, beta rebuilt per (ring, m) in fixed-size tiles."""
    cdef Py_ssize_t n_m = m_values.shape[0], n_j = x.shape[0], im, j
    cdef int m, n, k, t, i, width
    cdef double p0, p1, p2, fk, q, xj, bprev
    cdef double sr, si, tr, ti
    cdef double complex av
    cdef double bt[TILE]
    cdef double ct[TILE]
    cdef const double complex* a
    cdef long long steps = 0
    with nogil:
        for j in range(n_j):
            xj = x[j]
            for im in range(n_m):
                m = <int> m_values[im]
                n = lmax - m + 1
                p0 = _start(mu[im], s[j], m, &k)
                if p0 == 0.0:
                    _store(out_n, out_s, im, j, paired[j], 0.0, 0.0, 0.0, 0.0)
                    continue
                a = &alm[offsets[im]]
                steps += n
                fk = _factor(k)
                q = p0 * fk
                av = a[0]
                sr = av.real * q
                si = av.imag * q
                tr = 0.0
                ti = 0.0
                p1 = 0.0
                bprev = 0.0
                t = 1
                while t < n:
                    width = n - t
                    if width > TILE:
                        width = TILE
                    for i in range(width):
                        bt[i] = _beta(<double> (m + t + i), <double> m)
                    ct[0] = bt[0] / bprev if t > 1 else 0.0
                    for i in range(1, width):
                        ct[i] = bt[i] / bt[i - 1]
                    bprev = bt[width - 1]
                    for i in range(width):
                        if t + i == 1:
                            p1 = bt[0] * xj * p0
                        else:
                            p2 = bt[i] * xj * p1 - ct[i] * p0
                            p0 = p1
                            p1 = p2
                            if k < 0 and fabs(p2) > HI_THRESHOLD:
                                p0 = p0 * INV_STEP
                                p1 = p1 * INV_STEP
                                k += 1
                                fk = _factor(k)
                        q = p1 * fk
                        av = a[t + i]
                        if (t + i) & 1:
                            tr = tr + av.real * q
                            ti = ti + av.imag * q
                        else:
                            sr = sr + av.real * q
                            si = si + av.imag * q
                    t += width
                _store(out_n, out_s, im, j, paired[j], sr, si, tr, ti)
    return steps


def accumulate_m_major(double complex[::1] alm_out, const long[::1] offsets, const long[::1] m_values,
                       int lmax, const double[::1] x, const double[::1] s, const unsigned char[::1] paired,
                       const double[::1] mu, const double complex[:, ::1] d_n, const double complex[:, ::1] d_s):
    """a_lm += sum_j Delta^S_m(x_j) P_lm(x_j): m outermost, rings in order, l innermost.

    Rings are grouped LANES at a time as in ``delta_a_m_major``; every a_l
    still receives its ring contributions in ascending ring order.
    """
    cdef Py_ssize_t n_m = m_values.shape[0], n_j = x.shape[0], im, j
    cdef int m, n, k, u, nlive
    cdef double p0
    cdef double xq[LANES]
    cdef double pq[LANES]
    cdef int kq[LANES]
    cdef double complex evq[LANES]
    cdef double complex odq[LANES]
    cdef double complex* a
    cdef double* b = <double*> malloc((lmax + 2) * sizeof(double))
    cdef double* c = <double*> malloc((lmax + 2) * sizeof(double))
    cdef long long steps = 0
    if b == NULL or c == NULL:
        free(b); free(c)
        raise MemoryError()
    with nogil:
        for im in range(n_m):
            m = <int> m_values[im]
            n = lmax - m + 1
            a = &alm_out[offsets[im]]
            _fill_coeffs(m, n, b, c)
            nlive = 0
            for j in range(n_j + 1):
                if j < n_j:
                    p0 = _start(mu[im], s[j], m, &k)
                    if p0 == 0.0:
                        continue
                    xq[nlive] = x[j]
                    pq[nlive] = p0
                    kq[nlive] = k
                    if paired[j]:
                        evq[nlive] = d_n[im, j] + d_s[im, j]
                        odq[nlive] = d_n[im, j] - d_s[im, j]
                    else:
                        evq[nlive] = d_n[im, j]
                        odq[nlive] = evq[nlive]
                    nlive += 1
                    steps += n
                    if nlive < LANES:
                        continue
                if nlive == 0:
                    continue
                for u in range(nlive, LANES):
                    xq[u] = 0.0
                    pq[u] = 0.0
                    kq[u] = 0
                    evq[u] = 0.0
                    odq[u] = 0.0
                _accum_lanes(a, n, b, c, xq, pq, kq, evq, odq, nlive)
                nlive = 0
    free(b)
    free(c)
    return steps


def accumulate_ring_major(double complex[::1] alm_out, const long[::1] offsets, const long[::1] m_values,
                          int lmax, const double[::1] x, const double[::1] s, const unsigned char[::1] paired,
                          const double[::1] mu, const double complex[:, ::1] d_n, const double complex[:, ::1] d_s):
    """Ring-outermost accumulation into a caller-owned (partial) coefficient buffer."""
    cdef Py_ssize_t n_m = m_values.shape[0], n_j = x.shape[0], im, j
    cdef int m, n, k, t, i, width
    cdef double p0, p1, p2, fk, q, xj, bprev
    cdef double complex ev, od
    cdef double bt[TILE]
    cdef double ct[TILE]
    cdef double complex* a
    cdef long long steps = 0
    with nogil:
        for j in range(n_j):
            xj = x[j]
            for im in range(n_m):
                m = <int> m_values[im]
                n = lmax - m + 1
                p0 = _start(mu[im], s[j], m, &k)
                if p0 == 0.0:
                    continue
                if paired[j]:
                    ev = d_n[im, j] + d_s[im, j]
                    od = d_n[im, j] - d_s[im, j]
                else:
                    ev = d_n[im, j]
                    od = ev
                a = &alm_out[offsets[im]]
                steps += n
                fk = _factor(k)
                a[0] = a[0] + (p0 * fk) * ev
                p1 = 0.0
                bprev = 0.0
                t = 1
                while t < n:
                    width = n - t
                    if width > TILE:
                        width = TILE
                    for i in range(width):
                        bt[i] = _beta(<double> (m + t + i), <double> m)
                    ct[0] = bt[0] / bprev if t > 1 else 0.0
                    for i in range(1, width):
                        ct[i] = bt[i] / bt[i - 1]
                    bprev = bt[width - 1]
                    for i in range(width):
                        if t + i == 1:
                            p1 = bt[0] * xj * p0
                        else:
                            p2 = bt[i] * xj * p1 - ct[i] * p0
                            p0 = p1
                            p1 = p2
                            if k < 0 and fabs(p2) > HI_THRESHOLD:
                                p0 = p0 * INV_STEP
                                p1 = p1 * INV_STEP
                                k += 1
                                fk = _factor(k)
                        q = p1 * fk
                        if (t + i) & 1:
                            a[t + i] = a[t + i] + q * od
                        else:
                            a[t + i] = a[t + i] + q * ev
                    t += width
    return steps
