"""Analytic cost model and measured stage breakdowns.

The model counts floating-point work per stage and prices the single
all-to-all exchange with a latency/bandwidth formula that switches from a
recursive-halving form to a pairwise form for long messages.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from ._timing import StageTimer

__all__ = [
    "CostParams",
    "StageCost",
    "CostReport",
    "FLOP_CONSTANTS",
    "flops_estimate",
    "message_size",
    "comm_time",
    "runtime_curves",
    "write_curves_csv",
    "predict",
    "profile",
    "CSV_FIELDS",
]

# c1: flops per order for the mu/beta setup, c2: per recurrence step
# (two multiplies, one subtract, one threshold compare), c3: per n log2 n of a complex FFT.
FLOP_CONSTANTS = {"c1": 2.0, "c2": 4.0, "c3": 5.0}

CSV_FIELDS = ("stage", "predicted_s", "measured_s", "flops", "bytes")
CURVE_FIELDS = ("nside", "n_rings", "lmax", "mmax", "n_workers", "message_bytes", "compute_s", "comm_s", "ratio")


@dataclass(frozen=True)
class CostParams:
    alpha: float = 1e-5  # latency, s
    beta_inv_bw: float = 1e-9  # s per byte
    gamma: float = 1e-10  # s per flop
    n_C: int = 16  # bytes per complex element
    switch_bytes: int = 262144  # long-message threshold

    def __post_init__(self):
        for name in ("alpha", "beta_inv_bw", "gamma", "n_C", "switch_bytes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _positive(**kw):
    for k, v in kw.items():
        if v is None or v <= 0:
            raise ValueError(f"{k} must be positive, got {v}")


def flops_estimate(R_N: int, lmax: int, mmax: int, n_workers: int = 1, constants=None) -> dict[str, float]:
    """Per-stage flop counts for one worker."""
    if n_workers <= 0:
        raise ValueError("n_workers must be >= 1")
    if R_N < 0 or lmax < 0 or mmax < 0:
        raise ValueError("sizes must be non-negative")
    c = FLOP_CONSTANTS if constants is None else constants
    log_m = math.log2(mmax) if mmax > 1 else 0.0
    return {
        "precompute": c["c1"] * mmax,
        "recurrence": c["c2"] * R_N * lmax * mmax / n_workers,
        "fft": c["c3"] * (R_N / n_workers) * mmax * log_m,
    }


def message_size(R_N: int, mmax: int, n_workers: int, n_C: int = 16) -> float:
    """Bytes per exchange message: R_N * (mmax / n_workers) * n_C."""
    _positive(R_N=R_N, n_workers=n_workers, n_C=n_C)
    if mmax < 0:
        raise ValueError("mmax must be >= 0")
    return R_N * (mmax / n_workers) * n_C


def comm_time(S_msg: float, n_workers: int, params: CostParams = CostParams()) -> float:
    """Seconds for the all-to-all exchange of messages of S_msg bytes."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    if S_msg < 0:
        raise ValueError("message size must be >= 0")
    n = n_workers
    if S_msg <= params.switch_bytes:
        lg = math.log2(n)
        return params.alpha * lg + params.beta_inv_bw * S_msg * (n / 2) * lg
    return params.alpha * (n - 1) + params.beta_inv_bw * S_msg * (n - 1)


def runtime_curves(nsides, worker_counts, params: CostParams = CostParams()) -> list[dict]:
    """Predicted compute and exchange time per (nside, n_workers).

    Problem sizes follow the usual convention lmax = mmax = 2 * nside on a
    HEALPix grid with 4 * nside - 1 rings. Compute covers the recurrence and
    FFT stages (both divide evenly over workers); the per-order setup is
    replicated on every worker and left out.
    """
    rows = []
    for nside in nsides:
        R_N, L = 4 * nside - 1, 2 * nside
        for n in worker_counts:
            f = flops_estimate(R_N, L, L, n)
            compute = params.gamma * (f["recurrence"] + f["fft"])
            S = message_size(R_N, L, n, params.n_C)
            comm = comm_time(S, n, params)
            rows.append(
                {
                    "nside": nside,
                    "n_rings": R_N,
                    "lmax": L,
                    "mmax": L,
                    "n_workers": n,
                    "message_bytes": S,
                    "compute_s": compute,
                    "comm_s": comm,
                    "ratio": compute / comm if comm > 0 else math.inf,
                }
            )
    return rows


def write_curves_csv(rows, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


@dataclass
class StageCost:
    predicted_s: float
    flops: float = 0.0
    bytes: float = 0.0
    measured_s: float | None = None


@dataclass
class CostReport:
    stages: dict[str, StageCost] = field(default_factory=dict)
    recurrence_steps: int | None = None
    executed_steps: int | None = None
    exchange_bytes: int | None = None

    def rows(self) -> list[dict]:
        out = []
        for name, st in self.stages.items():
            out.append(
                {
                    "stage": name,
                    "predicted_s": st.predicted_s,
                    "measured_s": st.measured_s,
                    "flops": st.flops,
                    "bytes": st.bytes,
                }
            )
        return out

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows():
            measured = "" if r["measured_s"] is None else repr(r["measured_s"])
            w.writerow([r["stage"], repr(r["predicted_s"]), measured, repr(float(r["flops"])), repr(float(r["bytes"]))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def predict(R_N: int, lmax: int, mmax: int, n_workers: int = 1, params: CostParams = CostParams()) -> CostReport:
    f = flops_estimate(R_N, lmax, mmax, n_workers)
    report = CostReport()
    for name in ("precompute", "recurrence"):
        report.stages[name] = StageCost(params.gamma * f[name], f[name])
    S = message_size(R_N, mmax, n_workers, params.n_C)
    report.stages["exchange"] = StageCost(comm_time(S, n_workers, params), 0.0, S)
    report.stages["fft"] = StageCost(params.gamma * f["fft"], f["fft"])
    return report


def profile(
    alm,
    grid,
    *,
    direction: str = "synthesis",
    n_workers: int = 1,
    n_threads: int = 1,
    kernel: str = "m-major",
    backend: str | None = None,
    params: CostParams = CostParams(),
    skymap=None,
) -> CostReport:
    """Run one distributed transform under stage timers; measured and predicted side by side.

    For ``direction="analysis"`` pass the input map as ``skymap``; ``alm``
    then only supplies the band limits. Measured stage times are summed
    over workers. The recurrence row's flops are c2 times the counted
    (per ring) recurrence steps; the exchange row's bytes are those that
    actually crossed between distinct workers.
    """
    from .distribution import distributed_analysis, distributed_synthesis

    timer = StageTimer()
    if direction == "synthesis":
        distributed_synthesis(alm, grid, n_workers=n_workers, n_threads=n_threads, kernel=kernel,
                              backend=backend, timer=timer)
    elif direction == "analysis":
        if skymap is None:
            raise ValueError("analysis profiling needs the input map")
        distributed_analysis(skymap, grid, lmax=alm.lmax, mmax=alm.mmax, n_workers=n_workers,
                             n_threads=n_threads, kernel=kernel, backend=backend, timer=timer)
    else:
        raise ValueError("direction must be 'synthesis' or 'analysis'")
    report = predict(grid.n_rings, alm.lmax, alm.mmax, n_workers, params)
    for name in StageTimer.STAGES:
        report.stages[name].measured_s = timer.seconds.get(name, 0.0)
    report.stages["recurrence"].flops = FLOP_CONSTANTS["c2"] * timer.recurrence_steps
    report.stages["exchange"].bytes = timer.exchange_bytes
    report.recurrence_steps = timer.recurrence_steps
    report.executed_steps = timer.executed_steps
    report.exchange_bytes = timer.exchange_bytes
    return report
