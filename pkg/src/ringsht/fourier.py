"""Per-ring Fourier synthesis and analysis.

A ring with ``n_phi`` equidistant samples starting at ``phi_0`` is linked
to its order coefficients by

    s_j = sum_{m=-mmax}^{mmax} Delta_m exp(i m (phi_0 + 2 pi j / n_phi))
    Delta_m = w * sum_j s_j exp(-i m (phi_0 + 2 pi j / n_phi))

with Delta_{-m} = conj(Delta_m) for real maps. Orders beyond the ring's
Nyquist limit fold onto bin ``m mod n_phi``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .grid import RingDescriptor

__all__ = [
    "RingSpectrum",
    "MixedRadixProvider",
    "BluesteinProvider",
    "provider_for",
    "is_smooth",
    "ring_synthesis",
    "ring_analysis",
    "direct_synthesis",
    "direct_analysis",
]

SMOOTH_PRIMES = (2, 3, 5, 7)


def is_smooth(n: int) -> bool:
    for p in SMOOTH_PRIMES:
        while n % p == 0:
            n //= p
    return n == 1


class MixedRadixProvider:
    """Complex DFT for lengths whose factors are all in SMOOTH_PRIMES."""

    name = "mixed-radix"

    def __init__(self, n: int):
        self.n = n

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.fft.fft(x, self.n)

    def backward(self, x: np.ndarray) -> np.ndarray:
        # unnormalized: sum_k X_k exp(+2 pi i k j / n)
        return np.fft.ifft(x, self.n, norm="forward")


class BluesteinProvider:
    """Chirp-z DFT of arbitrary length via a power-of-two circular convolution.

    Uses nk = (n^2 + k^2 - (k-n)^2) / 2, so the DFT becomes a convolution of
    the chirp-modulated input with a conjugate chirp.
    """

    name = "bluestein"

    def __init__(self, n: int):
        self.n = n
        self.size = 1 << (2 * n - 2).bit_length() if n > 1 else 1
        k = np.arange(n)
        # k^2 mod 2n keeps the chirp phase exact for large n
        self.chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
        filt = np.zeros(self.size, dtype=np.complex128)
        filt[:n] = np.conj(self.chirp)
        if n > 1:
            filt[-(n - 1):] = np.conj(self.chirp[1:][::-1])
        self.filter_hat = np.fft.fft(filt)

    def forward(self, x: np.ndarray) -> np.ndarray:
        buf = np.zeros(self.size, dtype=np.complex128)
        buf[: self.n] = np.asarray(x) * self.chirp
        conv = np.fft.ifft(np.fft.fft(buf) * self.filter_hat)
        return conv[: self.n] * self.chirp

    def backward(self, x: np.ndarray) -> np.ndarray:
        return np.conj(self.forward(np.conj(np.asarray(x, dtype=np.complex128))))


@functools.lru_cache(maxsize=256)
def provider_for(n: int):
    if n < 1:
        raise ValueError("transform length must be >= 1")
    return MixedRadixProvider(n) if is_smooth(n) else BluesteinProvider(n)


@dataclass
class RingSpectrum:
    m_values: np.ndarray  # complex Delta_m for m = 0..mmax
    ring: RingDescriptor | None = None

    @property
    def mmax(self) -> int:
        return self.m_values.shape[0] - 1


def _phased(delta: np.ndarray, phi_0: float, sign: int) -> np.ndarray:
    m = np.arange(delta.shape[0])
    if phi_0 == 0.0:
        return delta
    return delta * np.exp(sign * 1j * m * phi_0)


def ring_synthesis(spectrum, ring: RingDescriptor) -> np.ndarray:
    """Real samples of one ring from Delta_m, m = 0..mmax."""
    n = ring.n_phi
    if n <= 0:
        raise ValueError("ring has no samples")
    delta = spectrum.m_values if isinstance(spectrum, RingSpectrum) else np.asarray(spectrum)
    z = _phased(np.asarray(delta, dtype=np.complex128), ring.phi_0, +1)
    mmax = z.shape[0] - 1
    bins = np.zeros(n, dtype=np.complex128)
    bins[0] += z[0].real
    if mmax >= 1:
        m = np.arange(1, mmax + 1)
        # fold positive and negative orders, exploiting the real-field conjugate relation
        np.add.at(bins, m % n, z[1:])
        np.add.at(bins, (-m) % n, np.conj(z[1:]))
    return provider_for(n).backward(bins).real


def ring_analysis(samples: np.ndarray, ring: RingDescriptor, mmax: int) -> RingSpectrum:
    """Weighted Delta_m for m = 0..mmax of one ring; aliased orders read bin m mod n_phi."""
    if mmax < 0:
        raise ValueError("mmax must be >= 0")
    samples = np.asarray(samples, dtype=np.float64)
    n = ring.n_phi
    if samples.shape[0] != n:
        raise ValueError(f"expected {n} samples, got {samples.shape[0]}")
    spec = provider_for(n).forward(samples.astype(np.complex128))
    m = np.arange(mmax + 1)
    delta = ring.weight * _phased(spec[m % n], ring.phi_0, -1)
    return RingSpectrum(delta, ring)


def direct_synthesis(delta: np.ndarray, ring: RingDescriptor) -> np.ndarray:
    """O(n * mmax) summation of the ring sum; reference for tests."""
    phi = ring.phi_0 + 2.0 * np.pi * np.arange(ring.n_phi) / ring.n_phi
    delta = np.asarray(delta, dtype=np.complex128)
    out = np.full(ring.n_phi, delta[0].real)
    for m in range(1, delta.shape[0]):
        out += 2.0 * (delta[m] * np.exp(1j * m * phi)).real
    return out


def direct_analysis(samples: np.ndarray, ring: RingDescriptor, mmax: int) -> np.ndarray:
    phi = ring.phi_0 + 2.0 * np.pi * np.arange(ring.n_phi) / ring.n_phi
    m = np.arange(mmax + 1)[:, None]
    return ring.weight * (np.exp(-1j * m * phi[None, :]) @ np.asarray(samples, dtype=np.float64))
