"""Command-line harness and file formats.

Map files::

    SHTMAP1
    scheme=healpix-ring        (or gauss-legendre)
    nside=4                    (or n_rings=..., n_phi=...)
    n_pix=192
    END
    <n_pix little-endian float64 pixels, ring order north to south>

Coefficient files::

    SHTALM1
    lmax=8
    mmax=8
    END
    <little-endian float64 Re, Im pairs, m-major: m = 0..mmax, l = m..lmax>
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .distribution import distributed_analysis, distributed_synthesis, layout_report, make_layout
from .grid import PixelGrid, build_gauss_legendre_grid, build_healpix_grid
from .perfmodel import CostParams, comm_time, message_size, profile, runtime_curves, write_curves_csv
from .transforms import KERNELS, AlmSet, SkyMap

__all__ = [
    "ExperimentConfig",
    "random_alm",
    "roundtrip_error",
    "project_map",
    "write_pgm",
    "write_map",
    "read_map",
    "write_alm",
    "read_alm",
    "main",
]

MAP_MAGIC = b"SHTMAP1\n"
ALM_MAGIC = b"SHTALM1\n"
_END = b"END\n"


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    nside: int | None = None
    n_rings: int | None = None
    n_phi: int | None = None
    lmax: int = 0
    mmax: int = 0
    seed: int = 0
    n_workers: int = 1
    n_threads: int = 1
    kernel: str = "m-major"

    def __post_init__(self):
        if not (self.lmax >= self.mmax >= 0):
            raise ValueError(f"need lmax >= mmax >= 0, got lmax={self.lmax}, mmax={self.mmax}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.n_workers < 1 or self.n_threads < 1:
            raise ValueError("workers and threads must be >= 1")

    def build_grid(self) -> PixelGrid:
        if self.scheme == gridmod.HEALPIX:
            if self.nside is None:
                raise ValueError("healpix grid needs --nside")
            return build_healpix_grid(self.nside)
        if self.n_rings is None or self.n_phi is None:
            raise ValueError("gauss-legendre grid needs --nrings and --nphi")
        return build_gauss_legendre_grid(self.n_rings, self.n_phi)


# -- random coefficients and error norm ----------------------------------------


def random_alm(lmax: int, mmax: int | None = None, seed: int = 0) -> AlmSet:
    """Coefficients with Re and Im i.i.d. uniform on the open interval (-1, 1).

    The stream is numpy's Philox4x64 counter-based generator keyed by
    ``seed``; doubles u = k * 2**-53 from ``Generator.random`` are mapped to
    2u - 1 + 2**-53, which never reaches +-1. Draws are consumed in storage
    order, Re then Im per coefficient. Im(a_l0) is then set to 0.
    """
    mmax = lmax if mmax is None else mmax
    out = AlmSet.zeros(lmax, mmax)
    gen = np.random.Generator(np.random.Philox(seed))
    u = gen.random(2 * out.values.size)
    v = 2.0 * u - 1.0 + 2.0**-53
    out.values[:] = v[0::2] + 1j * v[1::2]
    out.row(0)[:] = out.row(0).real
    return out


def roundtrip_error(a_init: AlmSet, a_out: AlmSet) -> float:
    """sqrt(sum |a_init - a_out|^2 / sum |a_init|^2) over the stored triangle."""
    if (a_init.lmax, a_init.mmax) != (a_out.lmax, a_out.mmax):
        raise ValueError("coefficient sets have different band limits")
    den = float(np.sum(np.abs(a_init.values) ** 2))
    if den == 0.0:
        raise ZeroDivisionError("reference coefficients are all zero; error is undefined")
    return float(np.sqrt(np.sum(np.abs(a_init.values - a_out.values) ** 2) / den))


# -- file formats ------------------------------------------------------------


def _read_header(fh, magic: bytes) -> dict[str, str]:
    if fh.read(len(magic)) != magic:
        raise ValueError("bad magic; not a " + magic.decode().strip() + " file")
    header = {}
    while True:
        line = fh.readline()
        if not line:
            raise ValueError("truncated header")
        if line == _END:
            return header
        key, sep, value = line.decode("ascii").rstrip("\n").partition("=")
        if not sep:
            raise ValueError(f"malformed header line {line!r}")
        header[key] = value


def _int(header, key):
    try:
        return int(header[key])
    except KeyError:
        raise ValueError(f"header lacks {key}") from None


def write_map(path, skymap: SkyMap) -> None:
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC)
        for k, v in skymap.grid.header().items():
            fh.write(f"{k}={v}\n".encode("ascii"))
        fh.write(_END)
        fh.write(np.asarray(skymap.pixels, dtype="<f8").tobytes())


def grid_from_header(header: dict[str, str]) -> PixelGrid:
    scheme = header.get("scheme")
    if scheme == gridmod.HEALPIX:
        grid = build_healpix_grid(_int(header, "nside"))
    elif scheme == gridmod.GAUSS_LEGENDRE:
        grid = build_gauss_legendre_grid(_int(header, "n_rings"), _int(header, "n_phi"))
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    if "n_pix" in header and _int(header, "n_pix") != grid.n_pix:
        raise ValueError("header n_pix does not match the grid")
    return grid


def read_map(path) -> SkyMap:
    with open(path, "rb") as fh:
        header = _read_header(fh, MAP_MAGIC)
        grid = grid_from_header(header)
        data = fh.read()
    if len(data) != 8 * grid.n_pix:
        raise ValueError(f"expected {grid.n_pix} pixels, file holds {len(data) / 8:g}")
    return SkyMap(grid, np.frombuffer(data, dtype="<f8").astype(np.float64))


def write_alm(path, alm: AlmSet) -> None:
    with open(path, "wb") as fh:
        fh.write(ALM_MAGIC)
        fh.write(f"lmax={alm.lmax}\nmmax={alm.mmax}\n".encode("ascii"))
        fh.write(_END)
        pairs = np.empty(2 * alm.values.size, dtype="<f8")
        pairs[0::2] = alm.values.real
        pairs[1::2] = alm.values.imag
        fh.write(pairs.tobytes())


def read_alm(path) -> AlmSet:
    with open(path, "rb") as fh:
        header = _read_header(fh, ALM_MAGIC)
        lmax, mmax = _int(header, "lmax"), _int(header, "mmax")
        data = fh.read()
    n = AlmSet.count(lmax, mmax) if lmax >= mmax >= 0 else -1
    if n < 0:
        raise ValueError(f"invalid band limits lmax={lmax}, mmax={mmax}")
    if len(data) != 16 * n:
        raise ValueError(f"expected {n} coefficients, file holds {len(data) / 16:g}")
    pairs = np.frombuffer(data, dtype="<f8")
    return AlmSet(lmax, mmax, pairs[0::2] + 1j * pairs[1::2])


# -- image output --------------------------------------------------------------


def project_map(skymap: SkyMap, width: int, height: int) -> np.ndarray:
    """Equirectangular nearest-ring, nearest-sample view as uint8 gray levels (row 0 = north)."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    grid = skymap.grid
    if grid.n_pix == 0 or skymap.pixels.size == 0:
        raise ValueError("map is empty")
    ring_theta = np.arccos(np.clip(grid.cos_theta, -1.0, 1.0))
    theta = np.pi * (np.arange(height) + 0.5) / height
    pos = np.clip(np.searchsorted(ring_theta, theta), 1, grid.n_rings - 1) if grid.n_rings > 1 else np.zeros(height, int)
    if grid.n_rings > 1:
        left = pos - 1
        pos = np.where(np.abs(theta - ring_theta[left]) <= np.abs(ring_theta[pos] - theta), left, pos)
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width
    n_phi = grid.n_phi[pos][:, None]
    j = np.rint((phi[None, :] - grid.phi_0[pos][:, None]) * n_phi / (2.0 * np.pi)).astype(np.int64) % n_phi
    values = skymap.pixels[grid.pixel_offset[pos][:, None] + j]
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros((height, width), dtype=np.uint8)
    return np.rint(255.0 * (values - lo) / (hi - lo)).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


# -- command line --------------------------------------------------------------

_SCHEMES = {
    "healpix": gridmod.HEALPIX,
    gridmod.HEALPIX: gridmod.HEALPIX,
    "gl": gridmod.GAUSS_LEGENDRE,
    gridmod.GAUSS_LEGENDRE: gridmod.GAUSS_LEGENDRE,
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _default_threads() -> int:
    raw = os.environ.get("SHT_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"error: SHT_THREADS must be an integer, got {raw!r}")
    return n


def _add_grid(p, required=True):
    p.add_argument("--grid", choices=sorted(_SCHEMES), required=required, help="pixelization")
    p.add_argument("--nside", type=int, help="HEALPix resolution")
    p.add_argument("--nrings", type=int, help="Gauss-Legendre ring count")
    p.add_argument("--nphi", type=int, help="Gauss-Legendre samples per ring")


def _add_band(p, required=False):
    p.add_argument("--lmax", type=int, required=required)
    p.add_argument("--mmax", type=int, help="defaults to lmax")


def _add_run(p):
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--threads", type=int, default=None, help="default: $SHT_THREADS or 1")
    p.add_argument("--kernel", choices=KERNELS, default="m-major")


def _config(args) -> ExperimentConfig:
    lmax = getattr(args, "lmax", None)
    mmax = getattr(args, "mmax", None)
    lmax = 0 if lmax is None else lmax
    mmax = lmax if mmax is None else mmax
    threads = args.threads if getattr(args, "threads", None) is not None else _default_threads()
    return ExperimentConfig(
        scheme=_SCHEMES[args.grid] if getattr(args, "grid", None) else gridmod.GAUSS_LEGENDRE,
        nside=getattr(args, "nside", None),
        n_rings=getattr(args, "nrings", None),
        n_phi=getattr(args, "nphi", None),
        lmax=lmax,
        mmax=mmax,
        seed=getattr(args, "seed", 0) or 0,
        n_workers=getattr(args, "workers", 1),
        n_threads=threads,
        kernel=getattr(args, "kernel", "m-major"),
    )


def _emit_csv(report, path):
    if path is None:
        return
    if path == "-":
        report.write_csv(sys.stdout)
    else:
        with open(path, "w", newline="") as fh:
            report.write_csv(fh)


def cmd_grid_info(args):
    cfg = _config(args)
    g = cfg.build_grid()
    for k, v in g.header().items():
        print(f"{k}={v}")
    print(f"n_rings={g.n_rings}")
    print(f"weight_sum={float(np.sum(g.weight * g.n_phi)):.15g}")
    if args.rings:
        print("ring,cos_theta,n_phi,phi_0,weight,pixel_offset")
        for r in g.rings:
            print(f"{r.index},{r.cos_theta!r},{r.n_phi},{r.phi_0!r},{r.weight!r},{r.pixel_offset}")
    return 0


def cmd_synth(args):
    cfg = _config(args)
    g = cfg.build_grid()
    if args.alm:
        alm = read_alm(args.alm)
    else:
        if args.lmax is None:
            raise ValueError("synth needs --alm or --lmax")
        alm = random_alm(cfg.lmax, cfg.mmax, cfg.seed)
    from ._timing import StageTimer

    timer = StageTimer()
    skymap = distributed_synthesis(alm, g, n_workers=cfg.n_workers, n_threads=cfg.n_threads,
                                   kernel=cfg.kernel, timer=timer)
    write_map(args.out, skymap)
    if args.csv:
        _emit_csv(_measured_report(timer, g, alm, cfg), args.csv)
    return 0


def cmd_analyze(args):
    skymap = read_map(args.map)
    lmax = args.lmax
    mmax = lmax if args.mmax is None else args.mmax
    cfg = _config(args)
    from ._timing import StageTimer

    timer = StageTimer()
    alm = distributed_analysis(skymap, lmax=lmax, mmax=mmax, n_workers=cfg.n_workers,
                               n_threads=cfg.n_threads, kernel=cfg.kernel, timer=timer)
    write_alm(args.out, alm)
    if args.csv:
        _emit_csv(_measured_report(timer, skymap.grid, alm, cfg), args.csv)
    return 0


def _measured_report(timer, g, alm, cfg):
    from .perfmodel import FLOP_CONSTANTS, predict

    report = predict(g.n_rings, alm.lmax, alm.mmax, cfg.n_workers)
    for name in timer.STAGES:
        report.stages[name].measured_s = timer.seconds.get(name, 0.0)
    report.stages["recurrence"].flops = FLOP_CONSTANTS["c2"] * timer.recurrence_steps
    report.stages["exchange"].bytes = timer.exchange_bytes
    return report


def cmd_roundtrip(args):
    cfg = _config(args)
    g = cfg.build_grid()
    a = random_alm(cfg.lmax, cfg.mmax, cfg.seed)
    skymap = distributed_synthesis(a, g, n_workers=cfg.n_workers, n_threads=cfg.n_threads, kernel=cfg.kernel)
    b = distributed_analysis(skymap, lmax=cfg.lmax, mmax=cfg.mmax, n_workers=cfg.n_workers,
                             n_threads=cfg.n_threads, kernel=cfg.kernel)
    err = roundtrip_error(a, b)
    print(f"D_err={err:.6e}")
    if args.out:
        write_alm(args.out, b)
    return 0


def cmd_bench(args):
    cfg = _config(args)
    g = cfg.build_grid()
    a = random_alm(cfg.lmax, cfg.mmax, cfg.seed)
    t0 = time.perf_counter()
    report = profile(a, g, n_workers=cfg.n_workers, n_threads=cfg.n_threads, kernel=cfg.kernel,
                     backend=args.backend)
    wall = time.perf_counter() - t0
    print(f"wall_s={wall:.6f} recurrence_steps={report.recurrence_steps} executed_steps={report.executed_steps}",
          file=sys.stderr)
    _emit_csv(report, args.csv or "-")
    return 0


def cmd_model(args):
    params = CostParams()
    if args.message is not None:
        n = args.workers_list[0]
        print(f"comm_s={comm_time(args.message, n, params)!r}")
        return 0
    if args.nrings_model is not None:
        n = args.workers_list[0]
        S = message_size(args.nrings_model, args.mmax, n, params.n_C)
        print(f"message_bytes={S!r}")
        print(f"comm_s={comm_time(S, n, params)!r}")
        return 0
    rows = runtime_curves(args.nsides, args.workers_list, params)
    if args.csv and args.csv != "-":
        with open(args.csv, "w", newline="") as fh:
            write_curves_csv(rows, fh)
    else:
        write_curves_csv(rows, sys.stdout)
    return 0


def cmd_partition(args):
    cfg = _config(args)
    g = cfg.build_grid()
    layout = make_layout(g, cfg.mmax, cfg.n_workers)
    text = layout_report(layout, cfg.lmax, cfg.n_threads)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_render(args):
    skymap = read_map(args.map)
    write_pgm(args.out, project_map(skymap, args.width, args.height))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ringsht", description="Ring-based spherical harmonic transforms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="grid inspection")
    gsub = p.add_subparsers(dest="grid_command", required=True)
    pi = gsub.add_parser("info", help="print grid header and totals")
    _add_grid(pi)
    pi.add_argument("--rings", action="store_true", help="also list every ring")
    pi.set_defaults(func=cmd_grid_info)

    p = sub.add_parser("synth", help="coefficients -> map file")
    _add_grid(p)
    _add_band(p)
    p.add_argument("--alm", help="input coefficient file (default: random coefficients)")
    p.add_argument("--seed", type=int, default=0)
    _add_run(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="stage timing CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="map file -> coefficient file")
    p.add_argument("--map", required=True)
    _add_band(p, required=True)
    _add_run(p)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("roundtrip", help="random coefficients -> map -> coefficients; prints D_err")
    _add_grid(p)
    _add_band(p, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_run(p)
    p.add_argument("--out", help="write recovered coefficients")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("bench", help="profiled synthesis; stage CSV")
    _add_grid(p)
    _add_band(p, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_run(p)
    p.add_argument("--backend", choices=("compiled", "python"), default=None)
    p.add_argument("--csv", help="output path (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("model", help="cost model sweeps")
    p.add_argument("--nside", dest="nsides", type=_int_list, default=[256, 512, 1024, 2048, 4096],
                   help="comma-separated nside values for the sweep")
    p.add_argument("--workers", dest="workers_list", type=_int_list, default=[1, 2, 4, 8, 16, 32, 64, 128, 256],
                   help="comma-separated worker counts")
    p.add_argument("--nrings", dest="nrings_model", type=int, help="single evaluation: ring count")
    p.add_argument("--mmax", type=int, default=0)
    p.add_argument("--message", type=float, help="single evaluation: message bytes")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("partition", help="print the worker/thread layout")
    _add_grid(p)
    _add_band(p, required=True)
    _add_run(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("render", help="map file -> PGM image")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=256)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError, ZeroDivisionError, gridmod.ConvergenceError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
