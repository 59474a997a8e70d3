import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsht._timing import StageTimer
from ringsht.cli import random_alm, roundtrip_error
from ringsht.distribution import (
    WorkerLayout,
    assign_m,
    assign_rings,
    distributed_analysis,
    distributed_synthesis,
    exchange,
    inverse_exchange,
    layout_report,
    make_layout,
    pair_cost,
    thread_partition,
)
from ringsht.grid import build_gauss_legendre_grid, build_healpix_grid
from ringsht.transforms import DeltaPanel, analysis, synthesis

from conftest import max_rel


def test_assign_m_examples():
    assert assign_m(7, 1) == [list(range(8))]
    assert assign_m(7, 4) == [[0, 7], [1, 6], [2, 5], [3, 4]]
    assert assign_m(7, 2) == [[0, 2, 5, 7], [1, 3, 4, 6]]


def test_assign_m_middle_value():
    sets = assign_m(10, 3)
    owner = [i for i, s in enumerate(sets) if 5 in s]
    assert owner == [5 % 3]
    for n in (1, 2, 4, 5):
        sets = assign_m(20, n)
        assert [i for i, s in enumerate(sets) if 10 in s] == [10 % n]


def test_assign_m_rejects_too_many_workers():
    with pytest.raises(ValueError):
        assign_m(7, 5)
    with pytest.raises(ValueError):
        assign_m(8, 5)
    with pytest.raises(ValueError):
        assign_m(7, 0)


@settings(max_examples=80, deadline=None)
@given(mmax=st.integers(2, 400), data=st.data())
def test_assign_m_properties(mmax, data):
    n = data.draw(st.integers(1, (mmax + 1) // 2))
    sets = assign_m(mmax, n)
    flat = [m for s in sets for m in s]
    assert sorted(flat) == list(range(mmax + 1))
    for s in sets:
        lo, hi = sorted(s), sorted(s, reverse=True)
        k = len(s) // 2
        assert all(a + b == mmax for a, b in zip(lo[:k], hi[:k]))
    # pair counts differ by at most one
    counts = [len(s) // 2 for s in sets]
    assert max(counts) - min(counts) <= 1


def test_assign_rings_examples():
    assert assign_rings(build_healpix_grid(2), 2) == [[0, 1, 5, 6], [2, 3, 4]]
    g = build_healpix_grid(2)
    assert assign_rings(g, 1) == [list(range(7))]
    gl = build_gauss_legendre_grid(8, 17)
    assert assign_rings(gl, 4) == [[0, 7], [1, 6], [2, 5], [3, 4]]
    with pytest.raises(ValueError):
        assign_rings(gl, 5)


@settings(max_examples=40, deadline=None)
@given(nside=st.integers(1, 16), data=st.data())
def test_assign_rings_properties(nside, data):
    g = build_healpix_grid(nside)
    n = data.draw(st.integers(1, g.n_rings // 2))
    sets = assign_rings(g, n)
    assert sorted(r for s in sets for r in s) == list(range(g.n_rings))
    for s in sets:
        for r in s:
            assert g.n_rings - 1 - r in s


def test_thread_partition_examples():
    assert thread_partition([0, 2, 5, 7], 2).subsets == ((0, 7), (2, 5))
    assert thread_partition([0, 2, 5, 7], 1).subsets == ((0, 2, 5, 7),)
    tp = thread_partition([3, 4], 2)
    assert tp.subsets == ((3, 4), ()) and tp.degenerate
    with pytest.raises(ValueError):
        thread_partition([1, 2], 0)


def test_thread_partition_leftover_goes_to_lightest():
    tp = thread_partition([0, 1, 2, 3, 4, 5, 6, 7, 8], 2, lmax=8)
    # pairs (0,8),(2,6) -> T0 and (1,7),(3,5) -> T1 carry equal load; 4 lands on T0
    assert tp.subsets == ((0, 2, 4, 6, 8), (1, 3, 5, 7))


def test_pair_cost_constancy():
    lmax, mmax = 50, 40
    for m in range(mmax // 2 + 1):
        assert (lmax - m + 1) + (lmax - (mmax - m) + 1) == pair_cost(lmax, mmax)


def test_layout_validation():
    g = build_healpix_grid(2)
    lay = make_layout(g, 7, 2)
    assert lay.owner_of_m().tolist() == [0, 1, 0, 1, 1, 0, 1, 0]
    with pytest.raises(ValueError):
        WorkerLayout(2, ((0, 1),), ((0,), (1,)), 1, 2)
    with pytest.raises(ValueError):
        WorkerLayout(1, ((0, 1, 1),), ((0, 1),), 1, 2)


def _order_panels(rng, layout):
    full = rng.normal(size=(layout.n_rings, layout.mmax + 1)) + 1j * rng.normal(size=(layout.n_rings, layout.mmax + 1))
    panels = [
        DeltaPanel("A", full[:, list(ms)], np.arange(layout.n_rings), list(ms)) for ms in layout.m_sets
    ]
    return full, panels


def test_exchange_identity_for_one_worker(rng):
    g = build_gauss_legendre_grid(4, 9)
    lay = make_layout(g, 3, 1)
    full, panels = _order_panels(rng, lay)
    out, report = exchange(panels, lay)
    np.testing.assert_array_equal(out[0].entries, full)
    assert report.remote_bytes == 0


def test_exchange_counts():
    g = build_gauss_legendre_grid(4, 9)
    lay = make_layout(g, 3, 2)
    full, panels = _order_panels(np.random.default_rng(0), lay)
    out, report = exchange(panels, lay)
    assert report.total_elements == 16
    for i in range(2):
        for j in range(2):
            assert report.elements[i, j] == len(lay.ring_sets[j]) * len(lay.m_sets[i])
    for j, p in enumerate(out):
        np.testing.assert_array_equal(p.entries, full[list(lay.ring_sets[j])])


def test_exchange_round_trip_and_conservation(rng):
    g = build_healpix_grid(4)
    lay = make_layout(g, 12, 4)
    full, panels = _order_panels(rng, lay)
    ring_sliced, rep = exchange(panels, lay)
    before = {(r, m, full[r, m]) for r in range(lay.n_rings) for m in range(lay.mmax + 1)}
    after = {
        (int(r), m, p.entries[i, m]) for p in ring_sliced for i, r in enumerate(p.ring_set) for m in range(lay.mmax + 1)
    }
    assert before == after
    back, _ = inverse_exchange(ring_sliced, lay)
    for p, q in zip(back, panels):
        assert p.m_set.tolist() == q.m_set.tolist()
        np.testing.assert_array_equal(p.entries, q.entries)


def test_exchange_rejects_mismatched_layout(rng):
    g = build_healpix_grid(4)
    lay = make_layout(g, 12, 4)
    _, panels = _order_panels(rng, lay)
    with pytest.raises(ValueError):
        exchange(panels[:3], lay)
    with pytest.raises(ValueError):
        exchange(panels[::-1], lay)


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
@pytest.mark.parametrize("threads", [1, 4])
def test_distributed_matches_single(workers, threads):
    g = build_gauss_legendre_grid(128, 256)
    a = random_alm(127, 127, seed=9)
    ref_map = synthesis(a, g)
    ref_alm = analysis(ref_map, 127)
    m = distributed_synthesis(a, g, n_workers=workers, n_threads=threads)
    assert max_rel(m.pixels, ref_map.pixels) <= 1e-13
    b = distributed_analysis(ref_map, lmax=127, n_workers=workers, n_threads=threads)
    assert max_rel(b.values, ref_alm.values) <= 1e-13


def test_distributed_round_trip():
    g = build_gauss_legendre_grid(64, 129)
    a = random_alm(63, 63, seed=1)
    m = distributed_synthesis(a, g, n_workers=4)
    b = distributed_analysis(m, lmax=63, n_workers=4)
    assert roundtrip_error(a, b) <= 1e-10


def test_distributed_ring_major_and_report():
    g = build_healpix_grid(8)
    a = random_alm(16, 16, seed=2)
    rep = {}
    timer = StageTimer()
    m = distributed_synthesis(a, g, n_workers=2, n_threads=2, kernel="ring-major", report=rep, timer=timer)
    assert max_rel(m.pixels, synthesis(a, g).pixels) <= 1e-12
    assert rep["exchange"].total_elements == g.n_rings * 17
    assert timer.exchange_bytes == rep["exchange"].remote_bytes > 0
    assert timer.seconds["exchange"] >= 0.0


def test_distributed_errors_propagate():
    g = build_healpix_grid(2)
    a = random_alm(7, 7, seed=0)
    lay = make_layout(build_healpix_grid(4), 7, 2)
    with pytest.raises(ValueError):
        distributed_synthesis(a, g, lay)
    with pytest.raises(ValueError):
        distributed_analysis(synthesis(a, g), lmax=3, mmax=5)


def test_worker_failure_releases_barrier(monkeypatch):
    import ringsht.transforms as tr

    g = build_healpix_grid(4)
    a = random_alm(8, 8, seed=0)
    real = tr.compute_delta_A

    def flaky(alm, cos, m_set=None, **kw):
        if kw.get("worker") == 1:
            raise RuntimeError("boom")
        return real(alm, cos, m_set, **kw)

    monkeypatch.setattr(tr, "compute_delta_A", flaky)
    with pytest.raises(RuntimeError, match="boom"):
        distributed_synthesis(a, g, n_workers=3)


def test_layout_report_text():
    g = build_healpix_grid(2)
    text = layout_report(make_layout(g, 7, 2), 7, 2)
    assert "worker 0: |M|=4 M={0,2,5,7}" in text
    assert "R={0,1,5,6}" in text and "thread 1: |M|=2 M={2,5}" in text
    assert "predicted_steps=126" in text
