"""Complex vector and matrix primitives.

QFT sign convention (fixed package-wide): the forward transform maps
amplitude ``j`` to ``N**-0.5 * sum_k exp(+2j*pi*j*k/N) psi_k``; the inverse
uses the opposite sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-8
DEGENERACY_GAP = 1e-9

TWO_PI = 2.0 * np.pi


class InvalidStateError(ValueError):
    """Amplitude vector violates the QuantumState invariants."""


class EigensolverError(RuntimeError):
    """Eigendecomposition did not meet the residual bound."""


def log2_length(length: int) -> int:
    """Return ``n`` with ``2**n == length`` or raise ``ValueError``."""
    if length < 1 or length & (length - 1):
        raise ValueError(f"length {length} is not a power of two")
    return int(length).bit_length() - 1


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Unit-norm amplitude vector over ``N = 2**n`` basis states."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1:
            raise InvalidStateError("amplitudes must be one-dimensional")
        try:
            log2_length(amps.size)
        except ValueError as exc:
            raise InvalidStateError(str(exc)) from None
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidStateError(f"squared norm {norm2!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, vector: np.ndarray) -> "QuantumState":
        vec = np.asarray(vector, dtype=np.complex128)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise InvalidStateError("cannot normalize the zero vector")
        return cls(vec / norm)

    @classmethod
    def basis(cls, n: int, index: int = 0) -> "QuantumState":
        amps = np.zeros(2**n, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def uniform(cls, n: int) -> "QuantumState":
        return cls(np.full(2**n, 2.0 ** (-n / 2), dtype=np.complex128))

    @property
    def n(self) -> int:
        return log2_length(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def conj(self) -> "QuantumState":
        return QuantumState(self.amplitudes.conj())

    def __len__(self) -> int:
        return self.amplitudes.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


StateLike = Union[QuantumState, np.ndarray]


def _amps(state: StateLike) -> np.ndarray:
    if isinstance(state, QuantumState):
        return state.amplitudes
    return np.asarray(state, dtype=np.complex128)


def qft_array(x: np.ndarray, direction: str = "forward", axis: int = -1) -> np.ndarray:
    """Unitary DFT along ``axis`` for raw arrays (batched use)."""
    if direction == "forward":
        return np.fft.ifft(x, axis=axis, norm="ortho")
    if direction == "inverse":
        return np.fft.fft(x, axis=axis, norm="ortho")
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def qft(state: QuantumState, direction: str = "forward") -> QuantumState:
    """Quantum Fourier transform of ``state`` (O(N log N))."""
    return QuantumState(qft_array(_amps(state), direction))


def dft_matrix(N: int, direction: str = "forward") -> np.ndarray:
    """Dense O(N**2) DFT matrix with the package sign convention."""
    sign = {"forward": 1.0, "inverse": -1.0}[direction]
    jk = np.outer(np.arange(N), np.arange(N)) % N
    return np.exp(sign * 2j * np.pi * jk / N) / np.sqrt(N)


def apply_diagonal_phase(
    state: QuantumState,
    phase: Union[Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]],
) -> QuantumState:
    """Multiply amplitude ``i`` by ``exp(1j * phase(i))``.

    ``phase`` is either an array of length N or a callable evaluated on the
    index array ``arange(N)``.
    """
    amps = _amps(state)
    idx = np.arange(amps.size)
    phi = np.asarray(phase(idx) if callable(phase) else phase, dtype=float)
    if phi.shape != amps.shape:
        raise ValueError(f"phase has shape {phi.shape}, expected {amps.shape}")
    return QuantumState(amps * np.exp(1j * phi))


def is_unitary(U: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return bool(np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0]))) <= tol)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenphases in [0, 2pi) sorted ascending, eigenvectors as columns."""

    eigenphases: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.eigenphases.size

    @property
    def eigenvectors(self) -> list[QuantumState]:
        return [QuantumState(self.vectors[:, k]) for k in range(self.vectors.shape[1])]

    def residuals(self, U: np.ndarray) -> np.ndarray:
        """``||U v - exp(i theta) v||`` for every pair."""
        lhs = U @ self.vectors
        rhs = self.vectors * np.exp(1j * self.eigenphases)[None, :]
        return np.linalg.norm(lhs - rhs, axis=0)

    def reconstruct(self) -> np.ndarray:
        V = self.vectors
        return (V * np.exp(1j * self.eigenphases)[None, :]) @ V.conj().T


def _orthonormalize_clusters(phases: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    # phases sorted; clusters may wrap around 0 / 2pi
    N = phases.size
    if N < 2:
        return vectors
    gaps = np.diff(np.concatenate([phases, [phases[0] + TWO_PI]]))
    breaks = np.flatnonzero(gaps >= DEGENERACY_GAP)
    if breaks.size == 0:
        q, _ = np.linalg.qr(vectors)
        return q
    out = vectors.copy()
    start = (breaks[-1] + 1) % N
    order = np.roll(np.arange(N), -start)
    cluster = [order[0]]
    for k in order[1:]:
        prev = cluster[-1]
        if gaps[prev] < DEGENERACY_GAP:
            cluster.append(k)
            continue
        if len(cluster) > 1:
            out[:, cluster], _ = np.linalg.qr(vectors[:, cluster])
        cluster = [k]
    if len(cluster) > 1:
        out[:, cluster], _ = np.linalg.qr(vectors[:, cluster])
    return out


def unitary_eig(U: np.ndarray, tol: float = EIG_RESIDUAL_TOL) -> EigenSystem:
    """Eigendecomposition of a unitary matrix.

    Uses the complex Schur form: for a normal matrix the triangular factor is
    diagonal and the Schur vectors are already orthonormal, so degenerate
    clusters need no special treatment beyond a defensive QR pass.

    Raises:
        ValueError: ``U`` is not unitary within ``UNITARY_TOL``.
        EigensolverError: a residual exceeds ``tol``.
    """
    U = np.asarray(U, dtype=np.complex128)
    if not is_unitary(U):
        raise ValueError("matrix is not unitary")
    T, Z = scipy.linalg.schur(U, output="complex")
    eigvals = np.diag(T)
    phases = np.mod(np.angle(eigvals), TWO_PI)
    phases[phases >= TWO_PI] = 0.0
    order = np.argsort(phases, kind="stable")
    phases = phases[order]
    vectors = _orthonormalize_clusters(phases, Z[:, order])
    system = EigenSystem(phases, vectors)
    res = system.residuals(U)
    worst = float(res.max(initial=0.0))
    if worst > tol:
        raise EigensolverError(f"eigenvector residual {worst:.3e} exceeds {tol:.1e}")
    return system
