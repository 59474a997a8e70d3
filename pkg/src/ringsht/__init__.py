"""Ring-based spherical harmonic transforms with a two-level work distribution."""

from ._backend import BACKEND
from .distribution import (
    ThreadPartition,
    WorkerLayout,
    assign_m,
    assign_rings,
    distributed_analysis,
    distributed_synthesis,
    exchange,
    inverse_exchange,
    make_layout,
    thread_partition,
)
from .grid import (
    ConvergenceError,
    PixelGrid,
    RingDescriptor,
    build_gauss_legendre_grid,
    build_healpix_grid,
)
from .legendre import ScaleLadder, plm_row, plm_row_scaled
from .transforms import (
    AlmSet,
    DeltaPanel,
    SkyMap,
    accumulate_alm,
    accumulate_alm_partial,
    analysis,
    compute_delta_A,
    compute_delta_A_ring_major,
    reduce_partials,
    synthesis,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AlmSet",
    "ConvergenceError",
    "DeltaPanel",
    "PixelGrid",
    "RingDescriptor",
    "ScaleLadder",
    "SkyMap",
    "ThreadPartition",
    "WorkerLayout",
    "accumulate_alm",
    "accumulate_alm_partial",
    "analysis",
    "assign_m",
    "assign_rings",
    "build_gauss_legendre_grid",
    "build_healpix_grid",
    "compute_delta_A",
    "compute_delta_A_ring_major",
    "distributed_analysis",
    "distributed_synthesis",
    "exchange",
    "inverse_exchange",
    "make_layout",
    "plm_row",
    "plm_row_scaled",
    "reduce_partials",
    "synthesis",
    "thread_partition",
]
