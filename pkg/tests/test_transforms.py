import math

import numpy as np
import pytest

from ringsht._timing import StageTimer
from ringsht.cli import random_alm, roundtrip_error
from ringsht.grid import build_gauss_legendre_grid, build_healpix_grid
from ringsht.legendre import plm_row
from ringsht.transforms import (
    AlmSet,
    DeltaPanel,
    SkyMap,
    accumulate_alm,
    accumulate_alm_partial,
    alm_offsets,
    analysis,
    compute_delta_A,
    compute_delta_A_ring_major,
    reduce_partials,
    synthesis,
)

from conftest import max_rel
from oracles import plm_exact, plm_matrix

Y00 = 0.2820947918
SQRT_4PI = math.sqrt(4 * math.pi)


def dense_delta(alm, xs):
    """Delta^A_m(r) = sum_l a_lm P_lm(x_r) from the exact oracle."""
    out = np.zeros((len(xs), alm.mmax + 1), dtype=complex)
    for m in range(alm.mmax + 1):
        out[:, m] = plm_matrix(alm.lmax, m, xs) @ alm.row(m)
    return out


def test_almset_layout():
    a = AlmSet.zeros(5, 3)
    assert a.values.size == AlmSet.count(5, 3) == 6 + 5 + 4 + 3
    assert a.offset(2) == 11 and alm_offsets(5, [0, 1, 2, 3]).tolist() == [0, 6, 11, 15]
    a[4, 2] = 1 + 2j
    assert a.row(2)[2] == 1 + 2j and a.values[13] == 1 + 2j
    assert a.degrees()[13] == 4 and a.orders()[13] == 2
    with pytest.raises(IndexError):
        a.index(2, 3)
    with pytest.raises(ValueError):
        AlmSet(3, 4, np.zeros(1))
    with pytest.raises(ValueError):
        AlmSet(3, 3, np.zeros(3))


def test_panel_shape_checked():
    with pytest.raises(ValueError):
        DeltaPanel("A", np.zeros((2, 3), complex), [0, 1], [0, 1])
    with pytest.raises(ValueError):
        DeltaPanel("Q", np.zeros((1, 1), complex), [0], [0])


def test_monopole_panel():
    a = AlmSet.zeros(6)
    a[0, 0] = 1.0
    xs = np.linspace(-0.9, 0.9, 7)
    for fn in (compute_delta_A, compute_delta_A_ring_major):
        panel = fn(a, xs)
        np.testing.assert_allclose(panel.entries[:, 0], Y00, atol=1e-10)
        np.testing.assert_allclose(panel.entries[:, 1:], 0, atol=0)
        assert panel.kind == "A" and panel.m_set.tolist() == list(range(7))


def test_dipole_panel():
    a = AlmSet.zeros(3)
    a[1, 0] = 1.0
    panel = compute_delta_A(a, [0.5])
    assert panel.entries[0, 0].real == pytest.approx(0.2443012560, abs=1e-10)


@pytest.mark.parametrize("kernel", ["m-major", "ring-major"])
@pytest.mark.parametrize("pair", [False, True])
def test_delta_matches_dense_product(rng, kernel, pair):
    a = random_alm(16, 16, seed=3)
    xs = np.concatenate([rng.uniform(-1, 1, 5), [0.3, -0.3, 0.0, 0.999]])
    panel = compute_delta_A(a, xs, kernel=kernel, pair_mirrors=pair)
    ref = dense_delta(a, xs)
    assert np.max(np.abs(panel.entries - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref)))


def test_delta_subset_of_orders():
    a = random_alm(12, 10, seed=1)
    xs = [0.2, -0.7]
    full = compute_delta_A(a, xs)
    part = compute_delta_A(a, xs, [7, 2, 9])
    np.testing.assert_array_equal(part.entries, full.entries[:, [7, 2, 9]])
    with pytest.raises(ValueError):
        compute_delta_A(a, xs, [11])


def test_cos_theta_out_of_range():
    a = random_alm(4, 4, seed=0)
    with pytest.raises(ValueError):
        compute_delta_A(a, [0.1, 1.2])


def test_kernels_agree(rng):
    a = random_alm(64, 64, seed=5)
    xs = np.sort(rng.uniform(-1, 1, 33))[::-1]
    mm = compute_delta_A(a, xs)
    rm = compute_delta_A_ring_major(a, xs)
    assert np.max(np.abs(mm.entries - rm.entries)) <= 1e-12
    for threads in (2, 3, 4):
        again = compute_delta_A_ring_major(a, xs, n_threads=threads)
        assert np.max(np.abs(again.entries - rm.entries)) <= 1e-12
        again = compute_delta_A(a, xs, n_threads=threads)
        np.testing.assert_array_equal(again.entries, mm.entries)


def test_accumulate_constant_on_gl():
    g = build_gauss_legendre_grid(12, 25)
    c = 1.7
    entries = np.zeros((g.n_rings, 12), complex)
    entries[:, 0] = g.weight * g.n_phi * c
    panel = DeltaPanel("S", entries, np.arange(g.n_rings), np.arange(12))
    a = accumulate_alm(panel, g.cos_theta, lmax=11)
    assert a[0, 0].real == pytest.approx(c * SQRT_4PI, rel=1e-13)
    rest = a.values.copy()
    rest[0] = 0
    assert np.max(np.abs(rest)) <= 1e-12


def test_accumulate_single_ring():
    x, lmax = 0.37, 9
    panel = DeltaPanel("S", np.ones((1, lmax + 1), complex), [0], np.arange(lmax + 1))
    a = accumulate_alm(panel, [x], lmax=lmax)
    for m in range(lmax + 1):
        np.testing.assert_allclose(a.row(m).real, plm_row(m, x, lmax), rtol=1e-14, atol=1e-300)


@pytest.mark.parametrize("kernel", ["m-major", "ring-major"])
def test_accumulate_matches_dense_transpose(rng, kernel):
    lmax = 16
    xs = np.concatenate([rng.uniform(-1, 1, 6), [0.45, -0.45, 0.0]])
    entries = rng.normal(size=(xs.size, lmax + 1)) + 1j * rng.normal(size=(xs.size, lmax + 1))
    panel = DeltaPanel("S", entries, np.arange(xs.size), np.arange(lmax + 1))
    a = accumulate_alm(panel, xs, lmax=lmax, kernel=kernel, pair_mirrors=True, n_threads=2)
    for m in range(lmax + 1):
        ref = plm_matrix(lmax, m, xs).T @ entries[:, m]
        assert np.max(np.abs(a.row(m) - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref)))


def test_accumulate_requires_all_rings():
    panel = DeltaPanel("S", np.ones((2, 3), complex), [0, 1], np.arange(3))
    with pytest.raises(ValueError):
        accumulate_alm(panel, [0.1, 0.2, 0.3], lmax=2)
    with pytest.raises(ValueError):
        accumulate_alm(DeltaPanel("A", np.ones((1, 1), complex), [0], [0]), [0.1], lmax=0)


def _random_s_panel(rng, n_rings, mmax):
    e = rng.normal(size=(n_rings, mmax + 1)) + 1j * rng.normal(size=(n_rings, mmax + 1))
    return e


def test_partials(rng):
    lmax, g = 24, build_gauss_legendre_grid(20, 49)
    e = _random_s_panel(rng, g.n_rings, lmax)
    full_panel = DeltaPanel("S", e, np.arange(g.n_rings), np.arange(lmax + 1))
    full = accumulate_alm(full_panel, g.cos_theta, lmax=lmax, kernel="ring-major")

    one = accumulate_alm_partial(full_panel, g.cos_theta, lmax=lmax)
    np.testing.assert_array_equal(reduce_partials([one]).values, full.values)

    def split(k):
        parts = []
        for rows in np.array_split(np.arange(g.n_rings), k):
            p = DeltaPanel("S", e[rows], rows, np.arange(lmax + 1))
            parts.append(accumulate_alm_partial(p, g.cos_theta, lmax=lmax))
        return reduce_partials(parts)

    two, eight = split(2), split(8)
    assert max_rel(two.values, full.values) <= 1e-13
    assert max_rel(eight.values, two.values) <= 1e-12


def test_overlapping_partials_rejected(rng):
    g = build_gauss_legendre_grid(4, 9)
    e = _random_s_panel(rng, 4, 3)
    p1 = accumulate_alm_partial(DeltaPanel("S", e[:3], [0, 1, 2], np.arange(4)), g.cos_theta, lmax=3)
    p2 = accumulate_alm_partial(DeltaPanel("S", e[2:], [2, 3], np.arange(4)), g.cos_theta, lmax=3)
    with pytest.raises(ValueError):
        reduce_partials([p1, p2])
    with pytest.raises(ValueError):
        reduce_partials([])


def test_monopole_map():
    a = AlmSet.zeros(8)
    a[0, 0] = 1.0
    m = synthesis(a, build_healpix_grid(4))
    assert m.pixels.shape == (192,)
    np.testing.assert_allclose(m.pixels, Y00, atol=1e-10)


def test_dipole_map():
    g = build_healpix_grid(4)
    a = AlmSet.zeros(4)
    a[1, 0] = 1.0
    m = synthesis(a, g)
    expect = np.repeat(math.sqrt(3 / (4 * math.pi)) * g.cos_theta, g.n_phi)
    np.testing.assert_allclose(m.pixels, expect, atol=1e-14)


def test_synthesis_matches_brute_force(rng):
    lmax = 31
    g = build_gauss_legendre_grid(32, 64)
    a = random_alm(lmax, lmax, seed=11)
    m = synthesis(a, g)
    for pix in rng.choice(g.n_pix, 20, replace=False):
        r = int(np.searchsorted(g.pixel_offset, pix, side="right") - 1)
        phi = g.phi_0[r] + 2 * np.pi * (pix - g.pixel_offset[r]) / g.n_phi[r]
        x = float(g.cos_theta[r])
        total = 0.0
        for mm in range(lmax + 1):
            p = np.array([float(plm_exact(l, mm, x)) for l in range(mm, lmax + 1)])
            term = np.sum(a.row(mm) * p) * np.exp(1j * mm * phi)
            total += term.real if mm == 0 else 2 * term.real
        assert m.pixels[pix] == pytest.approx(total, abs=1e-11)


def test_constant_map_analysis():
    g = build_gauss_legendre_grid(64, 130)
    a = analysis(SkyMap(g, np.ones(g.n_pix)), 63)
    assert a[0, 0].real == pytest.approx(3.5449077018, abs=1e-10)
    rest = a.values.copy()
    rest[0] = 0
    assert np.max(np.abs(rest)) <= 1e-11


@pytest.mark.parametrize("kernel", ["m-major", "ring-major"])
def test_gl_round_trip(kernel):
    g = build_gauss_legendre_grid(48, 97)
    a = random_alm(47, 40, seed=2)
    b = analysis(synthesis(a, g, kernel=kernel), 47, 40, kernel=kernel, n_threads=2)
    assert roundtrip_error(a, b) <= 1e-10


def test_healpix_round_trip_is_approximate():
    a = random_alm(64, 64, seed=4)
    he = roundtrip_error(a, analysis(synthesis(a, build_healpix_grid(64)), 64))
    g = build_gauss_legendre_grid(65, 129)
    gl = roundtrip_error(a, analysis(synthesis(a, g), 64))
    assert gl < he < 1e-2


def test_mirror_pairing_is_transparent():
    g = build_healpix_grid(8)
    a = random_alm(20, 20, seed=8)
    paired = synthesis(a, g, paired=True)
    single = synthesis(a, g, paired=False)
    assert np.max(np.abs(paired.pixels - single.pixels)) <= 1e-13
    b1 = analysis(paired, 20, paired=True)
    b2 = analysis(paired, 20, paired=False)
    assert np.max(np.abs(b1.values - b2.values)) <= 1e-13


def test_analysis_band_checks():
    g = build_gauss_legendre_grid(4, 9)
    with pytest.raises(ValueError):
        analysis(SkyMap(g, np.zeros(g.n_pix)), 2, 3)
    with pytest.raises(ValueError):
        SkyMap(g, np.zeros(5))


def test_step_counts():
    lmax = mmax = 8
    g = build_healpix_grid(2)
    timer = StageTimer()
    synthesis(random_alm(lmax, mmax, 0), g, timer=timer)
    R = g.n_rings
    enumerated = sum(lmax - m + 1 for m in range(mmax + 1) for _ in range(R))
    assert timer.recurrence_steps == enumerated
    assert enumerated == sum((lmax - m - 1) * R for m in range(mmax + 1)) + 2 * R * (mmax + 1)
    # pairing runs each mirror pair once: 3 pairs + the equator
    assert timer.executed_steps == sum(lmax - m + 1 for m in range(mmax + 1)) * 4
    assert set(timer.seconds) >= {"precompute", "recurrence", "fft"}
