"""2-D DFT, centering shifts, Hermitian symmetry and spectrum statistics.

All symmetry routines work on *uncentered* spectra (DC at index ``(0, 0)``),
where the conjugate mirror of bin ``(k, l)`` is ``((M - k) % M, (N - l) % N)``.
Centering is only a view used for key geometry.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-9
# lengths up to this are transformed by a direct matrix product
_DIRECT_MAX = 16


class DimensionError(ValueError):
    """Raised for empty planes or spectra whose shape does not fit the operation."""


def _smallest_factor(n: int) -> int:
    p = 2
    while p * p <= n:
        if n % p == 0:
            return p
        p += 1
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * jk / n)


@lru_cache(maxsize=None)
def _twiddles(p: int, m: int) -> np.ndarray:
    n = p * m
    jk = np.outer(np.arange(p), np.arange(m)) % n
    return np.exp(-2j * np.pi * jk / n)


def _fft_first_axis(x: np.ndarray) -> np.ndarray:
    """Mixed-radix decimation-in-time DFT along axis 0 (any trailing shape).

    ``n = p * m`` with ``p`` the smallest prime factor; prime and short lengths
    use a direct matrix product.
    """
    n = x.shape[0]
    p = _smallest_factor(n)
    if p == n or n <= _DIRECT_MAX:
        return np.tensordot(_dft_matrix(n), x, axes=(1, 0))
    m = n // p
    rest = x.shape[1:]
    # sub-sequence j holds x[j], x[j + p], x[j + 2p], ...
    subs = x.reshape((m, p) + rest).swapaxes(0, 1)
    y = np.stack([_fft_first_axis(subs[j]) for j in range(p)])
    tw = _twiddles(p, m).reshape((p, m) + (1,) * len(rest))
    z = y * tw
    # X[k1 + m*k2] = sum_j W_p^{j*k2} Z[j, k1]
    out = np.tensordot(_dft_matrix(p), z, axes=(1, 0))
    return out.reshape((p * m,) + rest)


def dft2(plane) -> np.ndarray:
    """Unnormalized forward 2-D DFT, uncentered output."""
    a = np.asarray(plane)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"expected a non-empty 2-D plane, got shape {a.shape}")
    a = a.astype(np.complex128, copy=False)
    rows = _fft_first_axis(a)
    return _fft_first_axis(rows.T).T


def idft2(spec) -> np.ndarray:
    """Inverse of :func:`dft2`; the ``1/(M*N)`` scaling is applied here."""
    s = np.asarray(spec)
    if s.ndim != 2 or s.size == 0:
        raise DimensionError(f"expected a non-empty 2-D spectrum, got shape {s.shape}")
    return np.conj(dft2(np.conj(s))) / s.size


def shift(spec, to_centered: bool = True) -> np.ndarray:
    """Move DC between ``(0, 0)`` and ``(H // 2, W // 2)``.

    Odd sizes use the floor convention, so ``shift(shift(s), False)`` is the
    identity for every shape.
    """
    s = np.asarray(spec)
    h, w = s.shape[-2:]
    if to_centered:
        return np.roll(s, (h // 2, w // 2), axis=(-2, -1))
    return np.roll(s, (-(h // 2), -(w // 2)), axis=(-2, -1))


def mirror(spec) -> np.ndarray:
    """Return ``G`` with ``G[k, l] = spec[(M - k) % M, (N - l) % N]``."""
    s = np.asarray(spec)
    return np.roll(np.flip(s, axis=(-2, -1)), 1, axis=(-2, -1))


def self_conjugate_points(m: int, n: int) -> list[tuple[int, int]]:
    """Bins equal to their own mirror: DC plus the Nyquist bins of even axes."""
    if m < 1 or n < 1:
        raise DimensionError("dimensions must be positive")
    rows = [0] + ([m // 2] if m % 2 == 0 else [])
    cols = [0] + ([n // 2] if n % 2 == 0 else [])
    return sorted((k, l) for k in rows for l in cols)


def hermitian_project(spec) -> np.ndarray:
    """Nearest Hermitian-symmetric spectrum: ``(F + conj(mirror(F))) / 2``.

    Idempotent and linear; self-conjugate bins come out exactly real.
    """
    s = np.asarray(spec, dtype=np.complex128)
    out = 0.5 * (s + np.conj(mirror(s)))
    for k, l in self_conjugate_points(*s.shape):
        out[k, l] = out[k, l].real
    return out


def hermitian_deviation(spec) -> float:
    s = np.asarray(spec, dtype=np.complex128)
    if s.size == 0:
        return 0.0
    return float(np.max(np.abs(mirror(s) - np.conj(s))))


def is_hermitian(spec, tol: float = HERMITIAN_TOL) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return hermitian_deviation(spec) <= tol


def empirical_spectrum_variance(seed: int, m: int, n: int, sigma: float, trials: int) -> float:
    """Mean per-bin variance of ``dft2`` of i.i.d. ``N(0, sigma^2)`` planes.

    The spectrum is zero-mean, so the per-bin variance is estimated as the mean
    of ``|F|^2`` over trials; the result is averaged over bins. Expected value
    is ``m * n * sigma**2``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    power = np.zeros((m, n))
    for _ in range(trials):
        f = dft2(rng.normal(0.0, 1.0, size=(m, n)) * sigma)
        power += np.abs(f) ** 2
    return float(power.mean() / trials)
