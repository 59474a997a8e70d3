"""Two-level work distribution for the transforms.

Workers own a set of orders M_i for the Legendre stage and a set of rings
R_i for the Fourier stage; the Delta panel is transposed between the two
stages by an all-to-all exchange. Within a worker, orders are dealt to
threads in (min, max) pairs so every thread gets the same recurrence work.

Workers are simulated in-process: each runs on its own OS thread, writes
its outgoing slices to one mailbox per destination and waits on a barrier
before reading its inbox.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._timing import NULL_TIMER
from .grid import PixelGrid, symmetric_ring_pairs

__all__ = [
    "WorkerLayout",
    "ThreadPartition",
    "ExchangeReport",
    "assign_m",
    "assign_rings",
    "make_layout",
    "thread_partition",
    "pair_cost",
    "exchange",
    "inverse_exchange",
    "distributed_synthesis",
    "distributed_analysis",
    "layout_report",
]


def pair_cost(lmax: int, mmax: int) -> int:
    """Recurrence steps per ring for a pair (m, mmax - m)."""
    return 2 * lmax - mmax + 2


def assign_m(mmax: int, n_workers: int) -> list[list[int]]:
    """Stride orders over workers from both ends so each worker holds pairs summing to mmax.

    With even mmax the middle order mmax/2 is left over; it lands on worker
    (mmax/2) mod n_workers, which is where the striding reaches it.
    """
    if mmax < 0:
        raise ValueError("mmax must be >= 0")
    # ceil(mmax/2) is the number of min-max pairs, so every worker gets at least one
    if n_workers < 1 or (n_workers > 1 and n_workers > (mmax + 1) // 2):
        raise ValueError(f"need 1 <= n_workers <= ceil(mmax/2), got n_workers={n_workers}, mmax={mmax}")
    sets = []
    for i in range(n_workers):
        low, high = [], []
        lo, hi = i, mmax - i
        while lo < hi:
            low.append(lo)
            high.append(hi)
            lo += n_workers
            hi -= n_workers
        if lo == hi:
            low.append(lo)
        sets.append(sorted(low + high))
    return sets


def assign_rings(grid: PixelGrid, n_workers: int) -> list[list[int]]:
    """Consecutive blocks of northern rings (equator included), each with its mirrors."""
    pairs = symmetric_ring_pairs(grid)
    if n_workers < 1 or (n_workers > 1 and n_workers > grid.n_rings / 2):
        raise ValueError(f"need 1 <= n_workers <= n_rings/2, got {n_workers} for {grid.n_rings} rings")
    sets = []
    for block in np.array_split(np.arange(len(pairs)), n_workers):
        rings = []
        for b in block:
            k, mirror = pairs[int(b)]
            rings.append(k)
            if mirror is not None:
                rings.append(mirror)
        sets.append(sorted(rings))
    return sets


@dataclass(frozen=True)
class WorkerLayout:
    n_workers: int
    m_sets: tuple[tuple[int, ...], ...]
    ring_sets: tuple[tuple[int, ...], ...]
    mmax: int
    n_rings: int

    def __post_init__(self):
        if len(self.m_sets) != self.n_workers or len(self.ring_sets) != self.n_workers:
            raise ValueError("layout needs one order set and one ring set per worker")
        ms = [m for s in self.m_sets for m in s]
        if sorted(ms) != list(range(self.mmax + 1)):
            raise ValueError("order sets must partition 0..mmax")
        rs = [r for s in self.ring_sets for r in s]
        if sorted(rs) != list(range(self.n_rings)):
            raise ValueError("ring sets must partition all rings")

    def owner_of_m(self) -> np.ndarray:
        own = np.empty(self.mmax + 1, dtype=np.int64)
        for i, s in enumerate(self.m_sets):
            own[list(s)] = i
        return own


def make_layout(grid: PixelGrid, mmax: int, n_workers: int) -> WorkerLayout:
    ms = assign_m(mmax, n_workers)
    rs = assign_rings(grid, n_workers)
    return WorkerLayout(n_workers, tuple(map(tuple, ms)), tuple(map(tuple, rs)), mmax, grid.n_rings)


@dataclass(frozen=True)
class ThreadPartition:
    subsets: tuple[tuple[int, ...], ...]

    @property
    def degenerate(self) -> bool:
        """True when some thread received nothing."""
        return any(len(s) == 0 for s in self.subsets)


def thread_partition(m_values, n_threads: int, lmax: int | None = None) -> ThreadPartition:
    """Deal (min, max) pairs of ``m_values`` round-robin over threads.

    A leftover single order goes to the thread with the least recurrence
    work so far (lowest index on ties). ``lmax`` sets the per-order cost
    lmax - m + 1; it defaults to the largest order present.
    """
    if n_threads <= 0:
        raise ValueError("n_threads must be >= 1")
    rest = sorted(int(m) for m in m_values)
    if len(set(rest)) != len(rest):
        raise ValueError("orders must be distinct")
    lmax = (rest[-1] if rest else 0) if lmax is None else lmax
    buckets: list[list[int]] = [[] for _ in range(n_threads)]
    k = 0
    while len(rest) >= 2:
        lo, hi = rest.pop(0), rest.pop()
        buckets[k % n_threads] += [lo, hi]
        k += 1
    if rest:
        loads = [sum(lmax - m + 1 for m in b) for b in buckets]
        buckets[int(np.argmin(loads))].append(rest[0])
    return ThreadPartition(tuple(tuple(sorted(b)) for b in buckets))


# -- exchange ----------------------------------------------------------------


@dataclass
class ExchangeReport:
    elements: np.ndarray  # [src, dst] complex elements shipped
    bytes_per_element: int = 16

    @property
    def pair_bytes(self) -> np.ndarray:
        return self.elements * self.bytes_per_element

    @property
    def total_elements(self) -> int:
        return int(self.elements.sum())

    @property
    def remote_bytes(self) -> int:
        off = self.elements.copy()
        np.fill_diagonal(off, 0)
        return int(off.sum()) * self.bytes_per_element


class _Mailboxes:
    """One slot per (src, dst) worker pair; filled before the barrier, read after."""

    def __init__(self, n: int):
        self.n = n
        self.slots: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.barrier = threading.Barrier(n)
        self.elements = np.zeros((n, n), dtype=np.int64)

    def post(self, src, dst, rows, cols, block):
        self.slots[(src, dst)] = (rows, cols, block)
        self.elements[src, dst] = block.size


def _post_forward(box, layout, i, panel):
    """Worker i slices its (all rings x M_i) panel by destination ring set."""
    from .transforms import DeltaPanel

    if not isinstance(panel, DeltaPanel) or list(panel.m_set) != list(layout.m_sets[i]):
        raise ValueError(f"worker {i} panel does not hold its order set")
    if list(panel.ring_set) != list(range(layout.n_rings)):
        raise ValueError(f"worker {i} panel must cover every ring")
    for j, rings in enumerate(layout.ring_sets):
        rows = np.asarray(rings, dtype=np.int64)
        box.post(i, j, rows, panel.m_set, panel.entries[rows])


def _collect_forward(box, layout, j, kind):
    from .transforms import DeltaPanel

    rings = np.asarray(layout.ring_sets[j], dtype=np.int64)
    out = np.empty((rings.size, layout.mmax + 1), dtype=np.complex128)
    for i in range(layout.n_workers):
        _, cols, block = box.slots[(i, j)]
        out[:, cols] = block
    return DeltaPanel(kind, out, rings, np.arange(layout.mmax + 1))


def _post_inverse(box, layout, j, panel):
    """Worker j slices its (R_j x all orders) panel by destination order set."""
    if list(panel.ring_set) != list(layout.ring_sets[j]) or list(panel.m_set) != list(range(layout.mmax + 1)):
        raise ValueError(f"worker {j} panel does not match its ring set and 0..mmax")
    for i, ms in enumerate(layout.m_sets):
        cols = np.asarray(ms, dtype=np.int64)
        box.post(j, i, panel.ring_set, cols, panel.entries[:, cols])


def _collect_inverse(box, layout, i, kind):
    from .transforms import DeltaPanel

    cols = np.asarray(layout.m_sets[i], dtype=np.int64)
    out = np.empty((layout.n_rings, cols.size), dtype=np.complex128)
    for j in range(layout.n_workers):
        rows, _, block = box.slots[(j, i)]
        out[rows] = block
    return DeltaPanel(kind, out, np.arange(layout.n_rings), cols)


def _check_count(panels, layout):
    if len(panels) != layout.n_workers:
        raise ValueError(f"expected {layout.n_workers} panels, got {len(panels)}")


def exchange(panels, layout: WorkerLayout):
    """Order-sliced panels (all rings x M_i) -> ring-sliced panels (R_i x all orders)."""
    _check_count(panels, layout)
    box = _Mailboxes(layout.n_workers)
    for i, p in enumerate(panels):
        _post_forward(box, layout, i, p)
    kind = panels[0].kind if panels else "A"
    out = [_collect_forward(box, layout, j, kind) for j in range(layout.n_workers)]
    return out, ExchangeReport(box.elements)


def inverse_exchange(panels, layout: WorkerLayout):
    """Ring-sliced panels (R_i x all orders) -> order-sliced panels (all rings x M_i)."""
    _check_count(panels, layout)
    box = _Mailboxes(layout.n_workers)
    for j, p in enumerate(panels):
        _post_inverse(box, layout, j, p)
    kind = panels[0].kind if panels else "S"
    out = [_collect_inverse(box, layout, i, kind) for i in range(layout.n_workers)]
    return out, ExchangeReport(box.elements)


# -- distributed drivers -----------------------------------------------------


def _run_workers(box, body):
    """Run ``body(i)`` for each worker on its own thread; re-raise the first failure."""

    def guarded(i):
        try:
            return body(i)
        except BaseException:
            box.barrier.abort()  # release workers already waiting at the exchange
            raise

    if box.n == 1:
        return [guarded(0)]
    with ThreadPoolExecutor(max_workers=box.n) as pool:
        futures = [pool.submit(guarded, i) for i in range(box.n)]
        results, first = [], None
        for f in futures:
            try:
                results.append(f.result())
            except threading.BrokenBarrierError as exc:
                first = first or exc
            except BaseException as exc:
                first = exc if first is None or isinstance(first, threading.BrokenBarrierError) else first
        if first is not None:
            raise first
        return results


def _check_layout(layout, grid, mmax):
    if layout.n_rings != grid.n_rings:
        raise ValueError("layout ring count does not match the grid")
    if layout.mmax != mmax:
        raise ValueError("layout mmax does not match the coefficients")


def distributed_synthesis(
    alm,
    grid: PixelGrid,
    layout: WorkerLayout | None = None,
    n_threads: int = 1,
    *,
    n_workers: int | None = None,
    kernel: str = "m-major",
    backend: str | None = None,
    timer=NULL_TIMER,
    report: dict | None = None,
):
    """alm -> map: Legendre stage over M_i, exchange, Fourier stage over R_i."""
    from .transforms import SkyMap, compute_delta_A, delta_to_map

    if layout is None:
        layout = make_layout(grid, alm.mmax, n_workers or 1)
    _check_layout(layout, grid, alm.mmax)
    box = _Mailboxes(layout.n_workers)
    pixels = np.empty(grid.n_pix)

    def worker(i):
        panel = compute_delta_A(
            alm, grid.cos_theta, layout.m_sets[i], sin_thetas=grid.sin_theta, kernel=kernel,
            n_threads=n_threads, pair_mirrors=True, backend=backend, timer=timer, worker=i,
        )
        with timer.stage("exchange"):
            _post_forward(box, layout, i, panel)
            box.barrier.wait()
            mine = _collect_forward(box, layout, i, "A")
        # ring sets are disjoint, so workers write disjoint pixel ranges
        delta_to_map(mine.entries, grid, mine.ring_set, pixels, timer)

    _run_workers(box, worker)
    timer.add_bytes(ExchangeReport(box.elements).remote_bytes)
    if report is not None:
        report["exchange"] = ExchangeReport(box.elements)
    return SkyMap(grid, pixels)


def distributed_analysis(
    skymap,
    grid: PixelGrid | None = None,
    layout: WorkerLayout | None = None,
    n_threads: int = 1,
    *,
    lmax: int,
    mmax: int | None = None,
    n_workers: int | None = None,
    kernel: str = "m-major",
    backend: str | None = None,
    timer=NULL_TIMER,
    report: dict | None = None,
):
    """map -> alm: Fourier stage over R_i, inverse exchange, Legendre accumulation over M_i."""
    from .transforms import AlmSet, DeltaPanel, accumulate_alm, map_to_delta

    grid = skymap.grid if grid is None else grid
    mmax = lmax if mmax is None else mmax
    if lmax < mmax:
        raise ValueError(f"lmax ({lmax}) must be >= mmax ({mmax})")
    if layout is None:
        layout = make_layout(grid, mmax, n_workers or 1)
    _check_layout(layout, grid, mmax)
    box = _Mailboxes(layout.n_workers)

    def worker(j):
        rings = np.asarray(layout.ring_sets[j], dtype=np.int64)
        rows = map_to_delta(skymap.pixels, grid, rings, mmax, timer)
        with timer.stage("exchange"):
            _post_inverse(box, layout, j, DeltaPanel("S", rows, rings, np.arange(mmax + 1)))
            box.barrier.wait()
            mine = _collect_inverse(box, layout, j, "S")
        return accumulate_alm(
            mine, grid.cos_theta, lmax=lmax, mmax=mmax, sin_thetas=grid.sin_theta, kernel=kernel,
            n_threads=n_threads, pair_mirrors=True, backend=backend, timer=timer, worker=j,
        )

    parts = _run_workers(box, worker)
    # each worker filled only its own orders; combine in ascending worker order
    out = AlmSet.zeros(lmax, mmax)
    for i, part in enumerate(parts):
        for m in layout.m_sets[i]:
            out.row(m)[:] = part.row(m)
    timer.add_bytes(ExchangeReport(box.elements).remote_bytes)
    if report is not None:
        report["exchange"] = ExchangeReport(box.elements)
    return out


def _fmt_set(values, limit=12) -> str:
    values = list(values)
    if len(values) <= limit:
        return "{" + ",".join(map(str, values)) + "}"
    head = ",".join(map(str, values[: limit // 2]))
    tail = ",".join(map(str, values[-limit // 2 :]))
    return "{" + head + ",...," + tail + "}"


def layout_report(layout: WorkerLayout, lmax: int, n_threads: int = 1) -> str:
    """Text dump: per worker its orders, rings and predicted recurrence steps."""
    lines = [f"workers={layout.n_workers} mmax={layout.mmax} lmax={lmax} rings={layout.n_rings} threads={n_threads}"]
    for i in range(layout.n_workers):
        ms, rs = layout.m_sets[i], layout.ring_sets[i]
        steps = sum(lmax - m + 1 for m in ms) * layout.n_rings
        lines.append(
            f"worker {i}: |M|={len(ms)} M={_fmt_set(ms)} |R|={len(rs)} R={_fmt_set(rs)} predicted_steps={steps}"
        )
        if n_threads > 1:
            for t, sub in enumerate(thread_partition(ms, n_threads, lmax).subsets):
                tsteps = sum(lmax - m + 1 for m in sub) * layout.n_rings
                lines.append(f"  thread {t}: |M|={len(sub)} M={_fmt_set(sub)} predicted_steps={tsteps}")
    return "\n".join(lines) + "\n"
