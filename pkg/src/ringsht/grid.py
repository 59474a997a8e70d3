"""Iso-latitude ring pixelizations.

Two grid families are provided: the HEALPix ring scheme and a
Gauss-Legendre grid whose ring quadrature is exact for band-limited
products, which makes it the reference grid for round-trip tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RingDescriptor",
    "PixelGrid",
    "build_healpix_grid",
    "build_gauss_legendre_grid",
    "gauss_legendre_nodes",
    "symmetric_ring_pairs",
    "ConvergenceError",
]

HEALPIX = "healpix-ring"
GAUSS_LEGENDRE = "gauss-legendre"


class ConvergenceError(RuntimeError):
    """Raised when the Gauss-Legendre node solver does not converge."""


@dataclass(frozen=True)
class RingDescriptor:
    index: int
    cos_theta: float
    sin_theta: float
    n_phi: int
    phi_0: float
    weight: float
    pixel_offset: int


@dataclass(frozen=True)
class PixelGrid:
    scheme: str
    n_pix: int
    rings: tuple[RingDescriptor, ...]
    nside: int | None = None
    # numpy views of the ring table, built once
    cos_theta: np.ndarray = field(init=False, repr=False, compare=False)
    sin_theta: np.ndarray = field(init=False, repr=False, compare=False)
    n_phi: np.ndarray = field(init=False, repr=False, compare=False)
    phi_0: np.ndarray = field(init=False, repr=False, compare=False)
    weight: np.ndarray = field(init=False, repr=False, compare=False)
    pixel_offset: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("cos_theta", "sin_theta", "phi_0", "weight"):
            arr = np.array([getattr(r, name) for r in self.rings], dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("n_phi", "pixel_offset"):
            arr = np.array([getattr(r, name) for r in self.rings], dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    def ring_pixels(self, index: int) -> slice:
        ring = self.rings[index]
        return slice(ring.pixel_offset, ring.pixel_offset + ring.n_phi)

    def header(self) -> dict[str, str]:
        """Key/value description used by the map file header."""
        out = {"scheme": self.scheme}
        if self.scheme == HEALPIX:
            out["nside"] = str(self.nside)
        else:
            out["n_rings"] = str(self.n_rings)
            out["n_phi"] = str(int(self.n_phi[0]))
        out["n_pix"] = str(self.n_pix)
        return out


def _assemble(scheme, cos_theta, sin_theta, n_phi, phi_0, weight, nside=None):
    rings = []
    offset = 0
    for k in range(len(cos_theta)):
        rings.append(
            RingDescriptor(
                index=k,
                cos_theta=float(cos_theta[k]),
                sin_theta=float(sin_theta[k]),
                n_phi=int(n_phi[k]),
                phi_0=float(phi_0[k]),
                weight=float(weight[k]),
                pixel_offset=offset,
            )
        )
        offset += int(n_phi[k])
    return PixelGrid(scheme=scheme, n_pix=offset, rings=tuple(rings), nside=nside)


def build_healpix_grid(nside: int) -> PixelGrid:
    """HEALPix grid in ring ordering, rings stored north to south."""
    if int(nside) != nside or nside < 1:
        raise ValueError(f"nside must be a positive integer, got {nside!r}")
    nside = int(nside)
    n_pix = 12 * nside * nside
    n_rings = 4 * nside - 1
    cos_theta = np.empty(n_rings)
    sin_theta = np.empty(n_rings)
    n_phi = np.empty(n_rings, dtype=np.int64)
    phi_0 = np.empty(n_rings)
    three_n2 = 3.0 * nside * nside

    for i in range(1, 2 * nside + 1):
        k = i - 1
        if i < nside:
            # 1 - z is formed exactly so sin_theta keeps full precision near the pole
            one_minus_z = i * i / three_n2
            z = 1.0 - one_minus_z
            n_phi[k] = 4 * i
            phi_0[k] = math.pi / (4 * i)
        else:
            z = 4.0 / 3.0 - 2.0 * i / (3.0 * nside)
            one_minus_z = 1.0 - z
            n_phi[k] = 4 * nside
            phi_0[k] = math.pi / (4 * nside) if (i - nside) % 2 == 0 else 0.0
        cos_theta[k] = z
        sin_theta[k] = math.sqrt(one_minus_z * (1.0 + z))

    # south hemisphere mirrors the north; the equator (i = 2*nside) is its own mirror
    for k in range(2 * nside, n_rings):
        mirror = n_rings - 1 - k
        cos_theta[k] = -cos_theta[mirror]
        sin_theta[k] = sin_theta[mirror]
        n_phi[k] = n_phi[mirror]
        phi_0[k] = phi_0[mirror]
    cos_theta[2 * nside - 1] = 0.0

    weight = np.full(n_rings, 4.0 * math.pi / n_pix)
    return _assemble(HEALPIX, cos_theta, sin_theta, n_phi, phi_0, weight, nside=nside)


def gauss_legendre_nodes(n: int, max_iter: int = 100, tol: float = 1e-15):
    """Nodes (descending) and weights of the n-point Gauss-Legendre rule.

    Newton iteration on P_n from the Tricomi initial guesses. Raises
    ConvergenceError if any root fails to settle within ``max_iter`` steps.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    n_half = (n + 1) // 2
    k = np.arange(1, n_half + 1)
    theta = math.pi * (4 * k - 1) / (4 * n + 2)
    x = np.cos(theta) * (1 - (n - 1) / (8.0 * n**3))

    converged = False
    for _ in range(max_iter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        # P_n'(x) from P_n and P_{n-1}
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.all(np.abs(dx) <= tol * np.maximum(1.0, np.abs(x))):
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Gauss-Legendre nodes for n={n} did not converge in {max_iter} iterations")

    # final derivative at the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    nodes = np.empty(n)
    weights = np.empty(n)
    nodes[:n_half] = x
    weights[:n_half] = w
    nodes[n - n_half :] = -x[::-1]
    weights[n - n_half :] = w[::-1]
    if n % 2 == 1:
        nodes[n // 2] = 0.0
    return nodes, weights


def build_gauss_legendre_grid(n_rings: int, n_phi: int) -> PixelGrid:
    if n_rings < 1 or n_phi < 1:
        raise ValueError("n_rings and n_phi must be >= 1")
    nodes, gl_weights = gauss_legendre_nodes(n_rings)
    sin_theta = np.sqrt((1.0 - nodes) * (1.0 + nodes))
    counts = np.full(n_rings, n_phi, dtype=np.int64)
    phi_0 = np.zeros(n_rings)
    weight = gl_weights * (2.0 * math.pi / n_phi)
    return _assemble(GAUSS_LEGENDRE, nodes, sin_theta, counts, phi_0, weight)


def symmetric_ring_pairs(grid: PixelGrid) -> list[tuple[int, int | None]]:
    """Pair each northern ring with its southern mirror.

    An odd central ring is paired with itself, reported as ``(k, None)``.
    """
    n = grid.n_rings
    pairs: list[tuple[int, int | None]] = []
    for k in range((n + 1) // 2):
        mirror = n - 1 - k
        a, b = grid.rings[k], grid.rings[mirror]
        if abs(a.cos_theta + b.cos_theta) > 1e-14 or a.n_phi != b.n_phi:
            raise ValueError(f"grid is not equator-symmetric at rings {k} and {mirror}")
        pairs.append((k, None if mirror == k else mirror))
    return pairs
