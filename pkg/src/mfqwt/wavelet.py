"""Full-depth periodic fast wavelet transform (Haar, Daubechies-4).

Coefficient layout for an input of length ``N = 2**n``::

    [approx | a=1 (1) | a=1/2 (2) | a=1/4 (4) | ... | a=2**-(n-1) (2**(n-1))]

Level ``j`` holds ``2**j`` detail coefficients at offset ``2**j`` and is
labelled by the scale ``a = 2**-j``.  Slot 0 is the residual approximation
coefficient; it is not part of any detail band.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .numerics import log2_length


@dataclass(frozen=True, eq=False)
class WaveletFilter:
    name: str
    lowpass: np.ndarray
    highpass: np.ndarray

    @classmethod
    def from_lowpass(cls, name: str, lowpass) -> "WaveletFilter":
        h = np.asarray(lowpass, dtype=float)
        L = h.size
        g = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
        return cls(name, h, g)

    def __len__(self) -> int:
        return self.lowpass.size


_SQ3 = np.sqrt(3.0)
HAAR = WaveletFilter.from_lowpass("haar", np.array([1.0, 1.0]) / np.sqrt(2.0))
DAUB4 = WaveletFilter.from_lowpass(
    "daub4", np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * np.sqrt(2.0))
)
FILTERS = {"haar": HAAR, "daub4": DAUB4}

FilterLike = Union[str, WaveletFilter]


def get_filter(filt: FilterLike) -> WaveletFilter:
    if isinstance(filt, WaveletFilter):
        return filt
    try:
        return FILTERS[filt.lower()]
    except KeyError:
        raise ValueError(f"unknown wavelet filter {filt!r}; choose from {sorted(FILTERS)}") from None


@lru_cache(maxsize=None)
def _gather_index(M: int, taps: int) -> np.ndarray:
    return (2 * np.arange(M // 2)[:, None] + np.arange(taps)[None, :]) % M


def fwt_array(x: np.ndarray, filt: FilterLike = "daub4") -> np.ndarray:
    """Forward FWT along the last axis of ``x``; returns the packed layout."""
    f = get_filter(filt)
    x = np.asarray(x)
    N = x.shape[-1]
    n = log2_length(N)
    if n < 1:
        raise ValueError("input length must be at least 2")
    dtype = np.result_type(x.dtype, np.float64)
    work = np.array(x, dtype=dtype, copy=True)
    out = np.empty_like(work)
    M = N
    while M > 1:
        seg = work[..., _gather_index(M, len(f))]
        out[..., M // 2 : M] = seg @ f.highpass
        work[..., : M // 2] = seg @ f.lowpass
        M //= 2
    out[..., 0] = work[..., 0]
    return out


def ifwt_array(c: np.ndarray, filt: FilterLike = "daub4") -> np.ndarray:
    """Inverse of :func:`fwt_array` along the last axis."""
    f = get_filter(filt)
    c = np.asarray(c)
    N = c.shape[-1]
    log2_length(N)
    dtype = np.result_type(c.dtype, np.float64)
    approx = np.array(c[..., :1], dtype=dtype)
    M = 1
    while M < N:
        detail = c[..., M : 2 * M]
        up = np.zeros(c.shape[:-1] + (2 * M,), dtype=dtype)
        idx = _gather_index(2 * M, len(f))
        # transpose of the analysis gather; indices are distinct per tap
        for k in range(len(f)):
            up[..., idx[:, k]] += approx * f.lowpass[k] + detail * f.highpass[k]
        approx = up
        M *= 2
    return approx


@dataclass(frozen=True, eq=False)
class WaveletCoeffs:
    """Packed full-depth coefficients of a length-``2**n`` vector."""

    coeffs: np.ndarray
    filter_name: str = "daub4"

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        log2_length(c.size)
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return log2_length(self.coeffs.size)

    @property
    def approximation(self) -> complex:
        return complex(self.coeffs[0])

    @property
    def scales(self) -> list[float]:
        """Registered detail scales, coarsest first."""
        return [2.0**-j for j in range(self.n)]

    @property
    def bands(self) -> dict[float, tuple[int, int]]:
        """Scale ``a`` -> ``(offset, length)`` of its detail band."""
        return {2.0**-j: (2**j, 2**j) for j in range(self.n)}

    def level(self, j: int) -> np.ndarray:
        if not 0 <= j < self.n:
            raise ValueError(f"level {j} outside 0..{self.n - 1}")
        return self.coeffs[2**j : 2 ** (j + 1)]

    def __len__(self) -> int:
        return self.coeffs.size


def scale_to_level(a: float, n: int) -> int:
    """Dyadic level ``j`` with ``a == 2**-j``; rejects unregistered scales."""
    a = float(a)
    if a > 0:
        j = int(round(-np.log2(a)))
        if 0 <= j < n and 2.0**-j == a:
            return j
    raise ValueError(f"scale {a!r} is not one of 1, 1/2, ..., 2**-{n - 1}")


def fwt_forward(vector, filt: FilterLike = "daub4") -> WaveletCoeffs:
    """Full-depth forward FWT of a length ``2**n`` vector (``n >= 2``)."""
    x = np.asarray(vector)
    if x.ndim != 1:
        raise ValueError("fwt_forward expects a one-dimensional vector")
    n = log2_length(x.size)
    if n < 2:
        raise ValueError("fwt_forward requires length >= 4")
    f = get_filter(filt)
    return WaveletCoeffs(fwt_array(x.astype(np.complex128), f), f.name)


def fwt_inverse(coeffs: WaveletCoeffs, filt: FilterLike | None = None) -> np.ndarray:
    f = get_filter(filt if filt is not None else coeffs.filter_name)
    return ifwt_array(coeffs.coeffs, f)


def band_values(coeffs: WaveletCoeffs, a: float) -> np.ndarray:
    """Detail coefficients ``T(a, b)`` for ``b = 1 .. 1/a``."""
    return coeffs.level(scale_to_level(a, coeffs.n))


def wavelet_matrix(N: int, filt: FilterLike = "daub4") -> np.ndarray:
    """Dense orthogonal matrix ``W`` with ``fwt_array(x) == W @ x``.

    Assembled level by level from explicit periodic analysis blocks, not by
    transforming basis vectors, so it can serve as an independent check.
    """
    f = get_filter(filt)
    log2_length(N)
    W = np.eye(N)
    M = N
    while M > 1:
        step = np.eye(N)
        block = np.zeros((M, M))
        for i in range(M // 2):
            for k in range(len(f)):
                block[i, (2 * i + k) % M] += f.lowpass[k]
                block[M // 2 + i, (2 * i + k) % M] += f.highpass[k]
        step[:M, :M] = block
        W = step @ W
        M //= 2
    return W
