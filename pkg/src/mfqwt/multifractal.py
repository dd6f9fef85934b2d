"""Multifractal exponent estimators.

Three wavelet partition functions are computed per detail band ``a``:

``density``       Z(a,q) = sum_b (|T(a,b)| / sum_b |T(a,b)|)**q on the FWT of |psi|**2
``amplitude``     Z(a,q) = sum_b (|T(a,b)|**2 / sum_b |T(a,b)|**2)**q on the FWT of psi
``unnormalized``  sum_b |T(a,b)|**(2q) on the FWT of psi

and the exponent is the OLS slope of ``log2 Z`` against ``log2 a``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .numerics import QuantumState
from .wavelet import FilterLike, fwt_array, get_filter

NORMALIZATIONS = ("density", "amplitude", "unnormalized")
DEFAULT_WINDOW = (2, -3)
# used instead of DEFAULT_WINDOW when that leaves fewer than 3 levels (n < 7)
SMALL_N_WINDOW = (1, -2)
# coefficients below this fraction of the transform norm count as zero
ZERO_RTOL = 1e-13

Window = tuple[int, int]
QLike = Union[float, Sequence[float], np.ndarray]


class InsufficientPointsError(ValueError):
    """Fewer than three usable points in the fit window."""


def resolve_window(window: Optional[Window], n: int) -> Window:
    """Absolute ``(j_min, j_max)``; a negative ``j_max`` counts back from ``n``.

    ``None`` selects ``DEFAULT_WINDOW``, widened to ``SMALL_N_WINDOW`` for
    sizes where the default would hold fewer than three levels.
    """
    if window is None:
        window = DEFAULT_WINDOW if n >= 7 else SMALL_N_WINDOW
    j_min, j_max = window
    if j_max < 0:
        j_max = n + j_max
    if j_min < 0:
        j_min = n + j_min
    return int(j_min), int(j_max)


@dataclass(frozen=True, eq=False)
class PartitionTable:
    """``values[iq, j]`` is Z at moment ``qs[iq]`` and scale ``2**-levels[j]``.

    Missing points (an all-zero band) are NaN.  ``excluded`` counts zero
    coefficients dropped for ``q <= 0``; ``count`` is the number of states
    that went into the table (greater than one after ensemble averaging).
    """

    qs: np.ndarray
    levels: np.ndarray
    values: np.ndarray
    normalization: str
    excluded: np.ndarray = None
    count: int = 1
    filter_name: str = "daub4"

    def __post_init__(self) -> None:
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.excluded is None:
            object.__setattr__(self, "excluded", np.zeros(self.values.shape, dtype=int))

    @property
    def scales(self) -> np.ndarray:
        return 2.0 ** (-self.levels.astype(float))

    @property
    def n(self) -> int:
        return int(self.levels.max()) + 1

    def log2_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(self.values)

    def row(self, q: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.qs, q, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"q={q} not in table (have {self.qs.tolist()})")
        return self.values[idx[0]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "log2_a", "log2_Z"])
            logs = self.log2_values()
            for iq, q in enumerate(self.qs):
                for j, lv in zip(self.levels, logs[iq]):
                    w.writerow([repr(float(q)), -int(j), repr(float(lv))])


@dataclass(frozen=True, eq=False)
class ScalingSeries:
    """Fitted log-log scaling.  ``x``/``y`` hold every point; the fit uses ``fit_window``."""

    q: float
    x: np.ndarray
    y: np.ndarray
    fit_window: Window
    tau: float
    stderr: float
    intercept: float = 0.0
    npoints: int = 0

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))


def write_series_csv(path, series: Iterable[ScalingSeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "tau", "stderr", "j_min", "j_max"])
        for s in series:
            w.writerow([repr(float(s.q)), repr(float(s.tau)), repr(float(s.stderr)), *s.fit_window])


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if x.size < 3:
        raise InsufficientPointsError(f"need at least 3 points, have {x.size}")
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return float(res.slope), stderr, float(res.intercept)


# -- direct moments --------------------------------------------------------


def moment_sum(amplitudes: np.ndarray, q: float) -> np.ndarray:
    """``sum_i |psi_i|**(2q)`` along the last axis (zero entries skipped for q <= 0)."""
    p = np.abs(np.asarray(amplitudes)) ** 2
    if q > 0:
        return np.sum(p**q, axis=-1)
    with np.errstate(divide="ignore"):
        return np.sum(np.where(p > 0, p, 1.0) ** q * (p > 0), axis=-1)


def moments_tau(states: Sequence[QuantumState], q: float) -> ScalingSeries:
    """``tau_q`` from the size scaling ``sum_i |psi_i|**(2q) ~ N**-tau_q``."""
    sizes = sorted({s.n for s in states})
    if len(sizes) < 3:
        raise InsufficientPointsError(f"need at least 3 distinct sizes, have {len(sizes)}")
    x = np.array([s.n for s in states], dtype=float)
    y = np.log2([moment_sum(s.amplitudes, q) for s in states])
    slope, stderr, icpt = _ols(x, y)
    return ScalingSeries(q, x, y, (sizes[0], sizes[-1]), -slope, stderr, icpt, x.size)


def dq_from_tau(tau: float, q: float) -> float:
    """Generalized dimension ``D_q = tau_q / (q - 1)``."""
    if q == 1:
        raise ValueError("D_1 needs a limit q -> 1 and is not supported")
    return tau / (q - 1.0)


# -- wavelet partition functions ------------------------------------------


def _as_qs(q: QLike) -> np.ndarray:
    return np.atleast_1d(np.asarray(q, dtype=float))


def band_magnitudes(coeffs: np.ndarray, normalization: str, include_approx: bool = False):
    """Per-level magnitudes ``m`` whose q-th powers enter Z.

    Yields ``(j, m)`` with ``m`` of shape ``(..., 2**j)``; ``m = |T|`` for
    ``density`` and ``|T|**2`` otherwise.
    """
    N = coeffs.shape[-1]
    n = N.bit_length() - 1
    power = 1 if normalization == "density" else 2
    mags = np.abs(coeffs) ** power
    for j in range(n):
        band = mags[..., 2**j : 2 ** (j + 1)]
        if j == 0 and include_approx:
            band = mags[..., 0:2]
        yield j, band


def partition_from_coeffs(
    coeffs: np.ndarray,
    q: QLike,
    normalization: str,
    include_approx: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Z over leading batch axes.

    Returns ``(values, excluded)`` of shape ``(..., len(q), n)``.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    qs = _as_qs(q)
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[-1].bit_length() - 1
    batch = coeffs.shape[:-1]
    values = np.empty(batch + (qs.size, n))
    excluded = np.zeros(batch + (qs.size, n), dtype=int)
    scale = np.linalg.norm(coeffs, axis=-1, keepdims=True)
    power = 1 if normalization == "density" else 2
    floor = (ZERO_RTOL * scale) ** power
    for j, m in band_magnitudes(coeffs, normalization, include_approx):
        nonzero = m > floor
        m = np.where(nonzero, m, 0.0)
        total = m.sum(axis=-1, keepdims=True)
        missing = (total[..., 0] == 0) if normalization != "unnormalized" else np.zeros(batch, bool)
        if normalization == "unnormalized":
            r = m
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                r = m / np.where(total > 0, total, 1.0)
        nz_count = nonzero.sum(axis=-1)
        for iq, qv in enumerate(qs):
            if qv > 0:
                z = np.sum(r**qv, axis=-1)
                excl = np.zeros(batch, dtype=int)
            else:
                safe = np.where(nonzero, r, 1.0)
                z = np.sum(np.where(nonzero, safe**qv, 0.0), axis=-1)
                excl = m.shape[-1] - nz_count
                if normalization == "unnormalized":
                    z = np.where(nz_count > 0, z, np.nan)
            values[..., iq, j] = np.where(missing, np.nan, z)
            excluded[..., iq, j] = excl
    return values, excluded


def partition_tables(
    vectors: np.ndarray,
    filt: FilterLike,
    q: QLike,
    normalization: str,
    include_approx: bool = False,
) -> list[PartitionTable]:
    """One PartitionTable per row of ``vectors`` (batched transform)."""
    f = get_filter(filt)
    vectors = np.atleast_2d(np.asarray(vectors))
    source = np.abs(vectors) ** 2 if normalization == "density" else vectors
    coeffs = fwt_array(source, f)
    values, excluded = partition_from_coeffs(coeffs, q, normalization, include_approx)
    qs = _as_qs(q)
    levels = np.arange(values.shape[-1])
    return [
        PartitionTable(qs, levels, values[k], normalization, excluded[k], 1, f.name)
        for k in range(values.shape[0])
    ]


def _single(psi, filt, q, normalization, include_approx) -> PartitionTable:
    amps = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
    if amps.ndim != 1:
        raise ValueError("expected a single state")
    return partition_tables(amps[None, :], filt, q, normalization, include_approx)[0]


def partition_density(psi, filt: FilterLike = "daub4", q: QLike = 2.0, include_approx: bool = False) -> PartitionTable:
    """Partition function of the wavelet transform of ``|psi|**2``."""
    return _single(psi, filt, q, "density", include_approx)


def partition_amplitude(psi, filt: FilterLike = "daub4", q: QLike = 2.0, include_approx: bool = False) -> PartitionTable:
    """Partition function built from ``|T_psi|**2`` (transform of psi itself)."""
    return _single(psi, filt, q, "amplitude", include_approx)


def partition_unnormalized(psi, filt: FilterLike = "daub4", q: QLike = 1.0, include_approx: bool = False) -> PartitionTable:
    """Raw per-band sums ``sum_b |T_psi(a,b)|**(2q)``; their slope is tau'_q."""
    return _single(psi, filt, q, "unnormalized", include_approx)


def fit_tau(table: PartitionTable, q: float, window: Optional[Window] = None) -> ScalingSeries:
    """OLS slope of ``log2 Z`` against ``log2 a`` inside the dyadic window.

    ``Z ~ a**tau`` so the slope is ``tau`` directly.  Missing (NaN) points
    are skipped.
    """
    j_min, j_max = resolve_window(window, table.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        y_all = np.log2(table.row(q))
    x_all = -table.levels.astype(float)
    sel = (table.levels >= j_min) & (table.levels <= j_max) & np.isfinite(y_all)
    slope, stderr, icpt = _ols(x_all[sel], y_all[sel])
    return ScalingSeries(float(q), x_all, y_all, (j_min, j_max), slope, stderr, icpt, int(sel.sum()))


def ensemble_log_average(tables: Sequence[PartitionTable], average: str = "log") -> PartitionTable:
    """Average ``log2 Z`` over an ensemble, scale by scale.

    ``average="linear"`` averages Z itself instead (sensitivity check).
    NaN entries are skipped per point; the summation runs in list order.
    """
    if not tables:
        raise ValueError("empty ensemble")
    first = tables[0]
    for t in tables[1:]:
        if (
            t.normalization != first.normalization
            or t.values.shape != first.values.shape
            or not np.array_equal(t.qs, first.qs)
            or not np.array_equal(t.levels, first.levels)
        ):
            raise ValueError("tables do not share q grid, scales and normalization")
    stack = np.stack([t.values for t in tables])
    with np.errstate(divide="ignore", invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if average == "log":
            mean = 2.0 ** np.nanmean(np.log2(stack), axis=0) if len(tables) > 1 else stack[0]
        elif average == "linear":
            mean = np.nanmean(stack, axis=0) if len(tables) > 1 else stack[0]
        else:
            raise ValueError(f"average must be 'log' or 'linear', got {average!r}")
    excluded = np.sum([t.excluded for t in tables], axis=0)
    count = sum(t.count for t in tables)
    return PartitionTable(first.qs, first.levels, mean, first.normalization, excluded, count, first.filter_name)
