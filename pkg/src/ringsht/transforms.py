"""Legendre-stage kernels and whole-sphere transforms.

Synthesis (alm -> map) computes the panel Delta^A_m(r) = sum_l a_lm P_lm(cos r)
and then one Fourier synthesis per ring; analysis (map -> alm) runs the
per-ring Fourier analysis into Delta^S_m(r) and then accumulates
a_lm = sum_r Delta^S_m(r) P_lm(cos r).

Two loop orders are provided for the Legendre stage: ``"m-major"`` (orders
outermost, recurrence coefficients built once per m, threads split the
orders) and ``"ring-major"`` (rings outermost, coefficients rebuilt per
ring in fixed-size tiles, threads split the rings and the analysis side
reduces per-thread partial coefficient sets). The l loop is innermost in
both.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._timing import NULL_TIMER
from .fourier import provider_for, ring_analysis, ring_synthesis
from .grid import PixelGrid
from .legendre import mu_table

__all__ = [
    "AlmSet",
    "DeltaPanel",
    "SkyMap",
    "KERNELS",
    "compute_delta_A",
    "compute_delta_A_ring_major",
    "accumulate_alm",
    "accumulate_alm_partial",
    "reduce_partials",
    "delta_to_map",
    "map_to_delta",
    "synthesis",
    "analysis",
    "alm_offsets",
    "logical_steps",
]

KERNELS = ("m-major", "ring-major")


def alm_offsets(lmax: int, m_values) -> np.ndarray:
    """Offset of a_{m,m} in the m-major triangle, for each m."""
    m = np.asarray(m_values, dtype=np.int64)
    return m * (lmax + 1) - (m * (m - 1)) // 2


@dataclass
class AlmSet:
    """Complex a_lm for 0 <= m <= mmax, m <= l <= lmax, stored m-major."""

    lmax: int
    mmax: int
    values: np.ndarray
    ring_set: tuple[int, ...] | None = None  # set on partial results only

    def __post_init__(self):
        if self.lmax < 0 or self.mmax < 0 or self.mmax > self.lmax:
            raise ValueError(f"need 0 <= mmax <= lmax, got lmax={self.lmax}, mmax={self.mmax}")
        self.values = np.ascontiguousarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.count(self.lmax, self.mmax),):
            raise ValueError("coefficient array does not match (lmax, mmax)")

    @staticmethod
    def count(lmax: int, mmax: int) -> int:
        return (mmax + 1) * (lmax + 1) - mmax * (mmax + 1) // 2

    @classmethod
    def zeros(cls, lmax: int, mmax: int | None = None) -> "AlmSet":
        mmax = lmax if mmax is None else mmax
        return cls(lmax, mmax, np.zeros(cls.count(lmax, mmax), dtype=np.complex128))

    def offset(self, m: int) -> int:
        return int(alm_offsets(self.lmax, m))

    def index(self, l: int, m: int) -> int:
        if not (0 <= m <= self.mmax and m <= l <= self.lmax):
            raise IndexError(f"(l={l}, m={m}) outside the stored triangle")
        return self.offset(m) + (l - m)

    def row(self, m: int) -> np.ndarray:
        o = self.offset(m)
        return self.values[o : o + self.lmax - m + 1]

    def __getitem__(self, lm: tuple[int, int]) -> complex:
        return self.values[self.index(*lm)]

    def __setitem__(self, lm: tuple[int, int], v: complex):
        self.values[self.index(*lm)] = v

    def copy(self) -> "AlmSet":
        return AlmSet(self.lmax, self.mmax, self.values.copy(), self.ring_set)

    def degrees(self) -> np.ndarray:
        """l for every stored coefficient, same order as ``values``."""
        return np.concatenate([np.arange(m, self.lmax + 1) for m in range(self.mmax + 1)])

    def orders(self) -> np.ndarray:
        return np.concatenate([np.full(self.lmax - m + 1, m) for m in range(self.mmax + 1)])


@dataclass
class DeltaPanel:
    kind: str  # "A" synthesis side, "S" analysis side
    entries: np.ndarray  # complex, shape (len(ring_set), len(m_set))
    ring_set: np.ndarray
    m_set: np.ndarray

    def __post_init__(self):
        if self.kind not in ("A", "S"):
            raise ValueError("panel kind must be 'A' or 'S'")
        self.ring_set = np.asarray(self.ring_set, dtype=np.int64)
        self.m_set = np.asarray(self.m_set, dtype=np.int64)
        if self.entries.shape != (self.ring_set.shape[0], self.m_set.shape[0]):
            raise ValueError(
                f"panel entries {self.entries.shape} do not match "
                f"{self.ring_set.shape[0]} rings x {self.m_set.shape[0]} orders"
            )


@dataclass
class SkyMap:
    grid: PixelGrid
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (self.grid.n_pix,):
            raise ValueError(f"map has {self.pixels.shape[0]} pixels, grid needs {self.grid.n_pix}")


# -- ring jobs ---------------------------------------------------------------


@dataclass
class _Jobs:
    x: np.ndarray
    s: np.ndarray
    paired: np.ndarray  # uint8
    north: np.ndarray  # panel row of the job's own ring
    south: np.ndarray  # panel row of the mirror ring, -1 if unpaired

    @property
    def n_rings(self) -> int:
        return int(self.x.shape[0] + self.paired.sum())


def _make_jobs(cos_thetas, sin_thetas=None, pair_mirrors=True) -> _Jobs:
    cos = np.asarray(cos_thetas, dtype=np.float64)
    if cos.ndim != 1:
        raise ValueError("cos_thetas must be one-dimensional")
    if np.any(np.abs(cos) > 1.0) or np.any(~np.isfinite(cos)):
        raise ValueError("cos_theta values must lie in [-1, 1]")
    if sin_thetas is None:
        sin = np.sqrt((1.0 - cos) * (1.0 + cos))
    else:
        sin = np.asarray(sin_thetas, dtype=np.float64)
    partner = np.full(cos.shape[0], -1, dtype=np.int64)
    if pair_mirrors:
        seen: dict[float, list[int]] = {}
        for pos, c in enumerate(cos):
            if c == 0.0:
                continue
            waiting = seen.get(-c)
            if waiting:
                q = waiting.pop(0)
                partner[q] = pos
                partner[pos] = q
            else:
                seen.setdefault(float(c), []).append(pos)
    north, south = [], []
    for pos in range(cos.shape[0]):
        if partner[pos] == -1:
            north.append(pos)
            south.append(-1)
        elif partner[pos] > pos:
            north.append(pos)
            south.append(int(partner[pos]))
    north = np.array(north, dtype=np.int64)
    south = np.array(south, dtype=np.int64)
    return _Jobs(
        x=np.ascontiguousarray(cos[north]),
        s=np.ascontiguousarray(sin[north]),
        paired=(south >= 0).astype(np.uint8),
        north=north,
        south=south,
    )


def logical_steps(m_values, lmax: int, n_rings: int) -> int:
    """Recurrence steps counted per ring: sum_m (lmax - m + 1) * n_rings."""
    m = np.asarray(m_values, dtype=np.int64)
    return int(np.sum(lmax - m + 1) * n_rings)


def _split_blocks(n: int, parts: int) -> list[np.ndarray]:
    parts = max(1, min(parts, n)) if n else 1
    return [b for b in np.array_split(np.arange(n), parts)]


def _run(tasks, n_threads):
    if n_threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _check_kernel(kernel):
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kernel!r}")


def _delta_a_jobs(alm_values, offsets, m_set, lmax, jobs, mu, kernel, n_threads, backend, timer, worker=0):
    """Run the Delta^A kernel; returns (north, south) arrays of shape (n_m, n_jobs)."""
    from .distribution import thread_partition

    kern = _backend.get_kernels(backend)
    n_m, n_j = m_set.shape[0], jobs.x.shape[0]
    out_n = np.zeros((n_m, n_j), dtype=np.complex128)
    out_s = np.zeros((n_m, n_j), dtype=np.complex128)
    tasks = []
    if kernel == "m-major":
        position = {int(m): i for i, m in enumerate(m_set)}
        parts = thread_partition(m_set, n_threads, lmax=lmax).subsets if n_m else []
        for t, subset in enumerate(parts):
            idx = np.array([position[m] for m in subset], dtype=np.int64)
            if idx.size == 0:
                continue

            def task(idx=idx, t=t):
                on = np.zeros((idx.size, n_j), dtype=np.complex128)
                os_ = np.zeros((idx.size, n_j), dtype=np.complex128)
                steps = kern.delta_a_m_major(
                    alm_values, offsets[idx], m_set[idx], lmax, jobs.x, jobs.s, jobs.paired, mu[idx], on, os_
                )
                out_n[idx] = on
                out_s[idx] = os_
                timer.add_steps(int(steps), logical_steps(m_set[idx], lmax, jobs.n_rings), worker, t)

            tasks.append(task)
    else:
        for t, block in enumerate(_split_blocks(n_j, n_threads)):
            if block.size == 0:
                continue
            sl = slice(int(block[0]), int(block[-1]) + 1)

            def task(sl=sl, t=t):
                width = sl.stop - sl.start
                on = np.zeros((n_m, width), dtype=np.complex128)
                os_ = np.zeros((n_m, width), dtype=np.complex128)
                paired = jobs.paired[sl]
                steps = kern.delta_a_ring_major(
                    alm_values, offsets, m_set, lmax, jobs.x[sl], jobs.s[sl], paired, mu, on, os_
                )
                out_n[:, sl] = on
                out_s[:, sl] = os_
                n_rings = int(width + paired.sum())
                timer.add_steps(int(steps), logical_steps(m_set, lmax, n_rings), worker, t)

            tasks.append(task)
    _run(tasks, n_threads)
    return out_n, out_s


def _scatter_panel(out_n, out_s, jobs, n_rings):
    panel = np.zeros((n_rings, out_n.shape[0]), dtype=np.complex128)
    panel[jobs.north] = out_n.T
    mirrored = jobs.south >= 0
    panel[jobs.south[mirrored]] = out_s.T[mirrored]
    return panel


def _gather_panel(entries, jobs):
    d_n = np.ascontiguousarray(entries[jobs.north].T)
    d_s = np.zeros_like(d_n)
    mirrored = jobs.south >= 0
    d_s[:, mirrored] = entries[jobs.south[mirrored]].T
    return d_n, np.ascontiguousarray(d_s)


def _mu_for(m_set, timer):
    with timer.stage("precompute"):
        if m_set.size == 0:
            return np.zeros(0)
        return np.ascontiguousarray(mu_table(int(m_set.max()))[m_set])


def _local_alm(alm: AlmSet, m_set: np.ndarray):
    """Coefficient storage and offsets for the orders in ``m_set``."""
    if m_set.size and (m_set.min() < 0 or m_set.max() > alm.mmax):
        raise ValueError(f"orders must lie in [0, {alm.mmax}]")
    return alm.values, np.ascontiguousarray(alm_offsets(alm.lmax, m_set))


def compute_delta_A(
    alm: AlmSet,
    cos_thetas,
    m_set=None,
    *,
    sin_thetas=None,
    kernel: str = "m-major",
    n_threads: int = 1,
    pair_mirrors: bool = False,
    backend: str | None = None,
    timer=NULL_TIMER,
    worker: int = 0,
) -> DeltaPanel:
    """Delta^A_m(r) for every ring latitude and every m in ``m_set``."""
    _check_kernel(kernel)
    m_set = np.arange(alm.mmax + 1) if m_set is None else np.asarray(m_set, dtype=np.int64)
    values, offsets = _local_alm(alm, m_set)
    jobs = _make_jobs(cos_thetas, sin_thetas, pair_mirrors)
    mu = _mu_for(m_set, timer)
    with timer.stage("recurrence"):
        out_n, out_s = _delta_a_jobs(
            values, offsets, m_set, alm.lmax, jobs, mu, kernel, n_threads, backend, timer, worker
        )
    n_rings = len(np.asarray(cos_thetas))
    entries = _scatter_panel(out_n, out_s, jobs, n_rings)
    return DeltaPanel("A", entries, np.arange(n_rings), m_set)


def compute_delta_A_ring_major(alm, cos_thetas, m_set=None, **kwargs) -> DeltaPanel:
    """Ring-outermost variant of :func:`compute_delta_A`; identical contract."""
    kwargs["kernel"] = "ring-major"
    return compute_delta_A(alm, cos_thetas, m_set, **kwargs)


def _accumulate(panel, cos_thetas, lmax, mmax, *, sin_thetas, kernel, n_threads, pair_mirrors, backend, timer, worker=0):
    from .distribution import thread_partition

    _check_kernel(kernel)
    if panel.kind != "S":
        raise ValueError("accumulation needs an analysis-side (S) panel")
    cos_all = np.asarray(cos_thetas, dtype=np.float64)
    rings = panel.ring_set
    if rings.size and (rings.min() < 0 or rings.max() >= cos_all.shape[0]):
        raise ValueError("panel ring index outside the latitude list")
    sin_sub = None if sin_thetas is None else np.asarray(sin_thetas, dtype=np.float64)[rings]
    jobs = _make_jobs(cos_all[rings], sin_sub, pair_mirrors)
    m_set = panel.m_set
    if m_set.size and m_set.max() > mmax:
        raise ValueError("panel order exceeds mmax")
    out = AlmSet.zeros(lmax, mmax)
    offsets = np.ascontiguousarray(alm_offsets(lmax, m_set))
    mu = _mu_for(m_set, timer)
    d_n, d_s = _gather_panel(panel.entries, jobs)
    kern = _backend.get_kernels(backend)
    n_j = jobs.x.shape[0]

    with timer.stage("recurrence"):
        if kernel == "m-major":
            position = {int(m): i for i, m in enumerate(m_set)}
            tasks = []
            for t, subset in enumerate(thread_partition(m_set, n_threads, lmax=lmax).subsets if m_set.size else []):
                idx = np.array([position[m] for m in subset], dtype=np.int64)
                if idx.size == 0:
                    continue

                def task(idx=idx, t=t):
                    # orders are disjoint across threads, so they share the output buffer
                    steps = kern.accumulate_m_major(
                        out.values, offsets[idx], m_set[idx], lmax, jobs.x, jobs.s, jobs.paired, mu[idx],
                        np.ascontiguousarray(d_n[idx]), np.ascontiguousarray(d_s[idx]),
                    )
                    timer.add_steps(int(steps), logical_steps(m_set[idx], lmax, jobs.n_rings), worker, t)

                tasks.append(task)
            _run(tasks, n_threads)
            return out

        partials = []
        tasks = []
        for t, block in enumerate(_split_blocks(n_j, n_threads)):
            if block.size == 0:
                continue
            sl = slice(int(block[0]), int(block[-1]) + 1)
            part = AlmSet.zeros(lmax, mmax)
            ring_ids = [int(rings[p]) for p in jobs.north[sl]] + [int(rings[p]) for p in jobs.south[sl] if p >= 0]
            part.ring_set = tuple(sorted(ring_ids))
            partials.append(part)

            def task(sl=sl, t=t, part=part):
                paired = jobs.paired[sl]
                steps = kern.accumulate_ring_major(
                    part.values, offsets, m_set, lmax, jobs.x[sl], jobs.s[sl], paired, mu,
                    np.ascontiguousarray(d_n[:, sl]), np.ascontiguousarray(d_s[:, sl]),
                )
                timer.add_steps(int(steps), logical_steps(m_set, lmax, int(paired.size + paired.sum())), worker, t)

            tasks.append(task)
        _run(tasks, n_threads)
    if not partials:
        return out
    return reduce_partials(partials)


def accumulate_alm(
    panel: DeltaPanel,
    cos_thetas,
    m_set=None,
    *,
    lmax: int,
    mmax: int | None = None,
    sin_thetas=None,
    kernel: str = "m-major",
    n_threads: int = 1,
    pair_mirrors: bool = False,
    backend: str | None = None,
    timer=NULL_TIMER,
    worker: int = 0,
) -> AlmSet:
    """a_lm = sum over all rings of Delta^S_m(r) P_lm(cos r), for the panel's orders.

    ``cos_thetas`` lists the latitude of every ring; the panel must cover all of them.
    """
    n_rings = len(np.asarray(cos_thetas))
    if set(panel.ring_set.tolist()) != set(range(n_rings)) or panel.ring_set.size != n_rings:
        raise ValueError("panel does not cover every ring exactly once")
    panel = _restrict_orders(panel, m_set)
    mmax = int(panel.m_set.max()) if mmax is None else mmax
    out = _accumulate(
        panel, cos_thetas, lmax, mmax, sin_thetas=sin_thetas, kernel=kernel, n_threads=n_threads,
        pair_mirrors=pair_mirrors, backend=backend, timer=timer, worker=worker,
    )
    out.ring_set = None
    return out


def accumulate_alm_partial(
    panel: DeltaPanel,
    cos_thetas,
    m_set=None,
    *,
    lmax: int,
    mmax: int | None = None,
    sin_thetas=None,
    pair_mirrors: bool = False,
    backend: str | None = None,
    timer=NULL_TIMER,
    worker: int = 0,
) -> AlmSet:
    """Contribution of the panel's rings only; tagged with its ring subset for reduction."""
    if len(set(panel.ring_set.tolist())) != panel.ring_set.size:
        raise ValueError("panel lists a ring twice")
    panel = _restrict_orders(panel, m_set)
    mmax = int(panel.m_set.max()) if mmax is None else mmax
    out = _accumulate(
        panel, cos_thetas, lmax, mmax, sin_thetas=sin_thetas, kernel="ring-major", n_threads=1,
        pair_mirrors=pair_mirrors, backend=backend, timer=timer, worker=worker,
    )
    out.ring_set = tuple(sorted(int(r) for r in panel.ring_set))
    return out


def reduce_partials(partials: list[AlmSet]) -> AlmSet:
    """Sum partial coefficient sets in list order (ascending worker id by convention)."""
    if not partials:
        raise ValueError("nothing to reduce")
    seen: set[int] = set()
    for p in partials:
        rings = set(p.ring_set or ())
        if seen & rings:
            raise ValueError(f"partials overlap on rings {sorted(seen & rings)[:5]}")
        seen |= rings
        if (p.lmax, p.mmax) != (partials[0].lmax, partials[0].mmax):
            raise ValueError("partials have different band limits")
    total = partials[0].values.copy()
    for p in partials[1:]:
        total += p.values
    return AlmSet(partials[0].lmax, partials[0].mmax, total)


def _restrict_orders(panel: DeltaPanel, m_set) -> DeltaPanel:
    if m_set is None:
        return panel
    m_set = np.asarray(m_set, dtype=np.int64)
    position = {int(m): i for i, m in enumerate(panel.m_set)}
    try:
        cols = [position[int(m)] for m in m_set]
    except KeyError as exc:
        raise ValueError(f"order {exc.args[0]} missing from panel") from None
    return DeltaPanel(panel.kind, panel.entries[:, cols], panel.ring_set, m_set)


# -- Fourier stage -------------------------------------------------------------


def delta_to_map(entries: np.ndarray, grid: PixelGrid, rings, pixels: np.ndarray, timer=NULL_TIMER):
    """Write synthesized samples of ``rings`` (panel rows, all orders) into ``pixels``."""
    with timer.stage("fft"):
        for row, r in enumerate(rings):
            ring = grid.rings[int(r)]
            pixels[ring.pixel_offset : ring.pixel_offset + ring.n_phi] = ring_synthesis(entries[row], ring)


def map_to_delta(pixels: np.ndarray, grid: PixelGrid, rings, mmax: int, timer=NULL_TIMER) -> np.ndarray:
    """Delta^S rows (one per ring in ``rings``) for orders 0..mmax."""
    out = np.empty((len(rings), mmax + 1), dtype=np.complex128)
    with timer.stage("fft"):
        for row, r in enumerate(rings):
            ring = grid.rings[int(r)]
            out[row] = ring_analysis(pixels[ring.pixel_offset : ring.pixel_offset + ring.n_phi], ring, mmax).m_values
    return out


def synthesis(
    alm: AlmSet,
    grid: PixelGrid,
    *,
    kernel: str = "m-major",
    n_threads: int = 1,
    paired: bool = True,
    backend: str | None = None,
    timer=NULL_TIMER,
) -> SkyMap:
    panel = compute_delta_A(
        alm, grid.cos_theta, sin_thetas=grid.sin_theta, kernel=kernel, n_threads=n_threads,
        pair_mirrors=paired, backend=backend, timer=timer,
    )
    pixels = np.empty(grid.n_pix)
    delta_to_map(panel.entries, grid, range(grid.n_rings), pixels, timer)
    return SkyMap(grid, pixels)


def analysis(
    skymap: SkyMap,
    lmax: int,
    mmax: int | None = None,
    *,
    kernel: str = "m-major",
    n_threads: int = 1,
    paired: bool = True,
    backend: str | None = None,
    timer=NULL_TIMER,
) -> AlmSet:
    mmax = lmax if mmax is None else mmax
    if lmax < mmax:
        raise ValueError(f"lmax ({lmax}) must be >= mmax ({mmax})")
    if mmax < 0:
        raise ValueError("mmax must be >= 0")
    grid = skymap.grid
    rings = np.arange(grid.n_rings)
    entries = map_to_delta(skymap.pixels, grid, rings, mmax, timer)
    panel = DeltaPanel("S", entries, rings, np.arange(mmax + 1))
    return accumulate_alm(
        panel, grid.cos_theta, lmax=lmax, mmax=mmax, sin_thetas=grid.sin_theta, kernel=kernel,
        n_threads=n_threads, pair_mirrors=paired, backend=backend, timer=timer,
    )
