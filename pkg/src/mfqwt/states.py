"""Multifractal test states: binomial cascades and the intermediate map.

The intermediate map in momentum space is

    U[p, p'] = exp(i phi_p) / N * (1 - exp(2i pi N gamma))
               / (1 - exp(2i pi (p - p' + N gamma) / N))

with ``gamma = n1 / n2``.  It factorizes as
``diag(exp(i phi)) @ F @ diag(exp(2i pi gamma q)) @ F^-1`` where ``F`` is the
forward QFT, which is what :func:`apply_isrm` uses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .numerics import (
    TWO_PI,
    EigensolverError,
    EigenSystem,
    QuantumState,
    qft_array,
    unitary_eig,
)

DENSE_EIG_LIMIT = 2**12


@dataclass(frozen=True)
class CascadeParams:
    n: int
    p1: float

    def __post_init__(self) -> None:
        if not 0.0 < self.p1 < 1.0:
            raise ValueError(f"p1 must lie in (0, 1), got {self.p1!r}")
        if self.n < 1:
            raise ValueError("cascade depth must be positive")

    @property
    def p2(self) -> float:
        return 1.0 - self.p1


def cascade_weights(n: int, p1: float) -> np.ndarray:
    """Cascade measure of length ``2**n``; bit ``n-1-j`` of the index picks level ``j``."""
    w = np.array([1.0])
    for _ in range(n):
        # each pass appends one finer digit at the least significant end
        w = np.outer(w, [p1, 1.0 - p1]).ravel()
    return w


def cascade_state(params: CascadeParams) -> QuantumState:
    """State whose squared amplitudes are the cascade weights.

    The most significant bit of the basis index selects the first split.
    """
    w = cascade_weights(params.n, params.p1)
    return QuantumState(np.sqrt(w) / math.sqrt(w.sum()))


def cascade_tau_analytic(q: float, p1: float) -> float:
    """``tau_q = -log2(p1**q + p2**q)`` for the binomial cascade."""
    p2 = 1.0 - p1
    return -math.log2(p1**q + p2**q)


@dataclass(frozen=True, eq=False)
class IsrmParams:
    """Parameters of one member of the intermediate-map ensemble."""

    n: int
    n1: int
    n2: int
    phases: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        N = 2**self.n
        if self.n < 1 or self.n1 < 1 or self.n2 < 1:
            raise ValueError("n, n1 and n2 must be positive")
        if math.gcd(self.n1, self.n2) != 1:
            raise ValueError(f"n1={self.n1} and n2={self.n2} are not coprime")
        if (N * self.n1) % self.n2 == 0:
            raise ValueError(f"N*gamma = {N}*{self.n1}/{self.n2} is an integer; map is singular")
        phi = np.asarray(self.phases, dtype=float)
        if phi.shape != (N,):
            raise ValueError(f"phases must have shape ({N},), got {phi.shape}")
        if np.any(phi < 0) or np.any(phi >= TWO_PI):
            raise ValueError("phases must lie in [0, 2pi)")
        phi = phi.copy()
        phi.setflags(write=False)
        object.__setattr__(self, "phases", phi)

    @property
    def N(self) -> int:
        return 2**self.n

    @property
    def gamma(self) -> float:
        return self.n1 / self.n2

    @classmethod
    def random(cls, n: int, n1: int, n2: int, seed: int, realization: int = 0) -> "IsrmParams":
        """I.i.d. uniform phases drawn from the stream for ``(seed, realization)``."""
        rng = realization_rng(seed, realization)
        phases = rng.uniform(0.0, TWO_PI, size=2**n)
        return cls(n, n1, n2, phases, seed)

    @classmethod
    def quantized_map(cls, n: int, n1: int, n2: int) -> "IsrmParams":
        """Non-random phases ``phi_p = -2 pi p**2 / N`` (mod 2pi)."""
        N = 2**n
        p = np.arange(N)
        # p**2 mod N first keeps the phase exact for large p
        phases = np.mod(-TWO_PI * ((p * p) % N) / N, TWO_PI)
        return cls(n, n1, n2, phases, None)


def realization_rng(seed: int, realization: int) -> np.random.Generator:
    """Independent generator for one ensemble member, order-independent."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(realization,)))


def _momentum_shift_phase(params: IsrmParams) -> np.ndarray:
    # exp(2i pi gamma q) computed from the exact rational gamma*q mod 1
    q = np.arange(params.N)
    frac = np.mod(params.n1 * q, params.n2) / params.n2
    return np.exp(1j * TWO_PI * frac)


def build_isrm(params: IsrmParams) -> np.ndarray:
    """Dense ``N x N`` intermediate-map unitary."""
    N = params.N
    p = np.arange(N)
    diff = p[:, None] - p[None, :]
    # N*gamma mod 1 exactly, so large N does not lose the phase
    ngamma_frac = ((N * params.n1) % params.n2) / params.n2
    numer = 1.0 - np.exp(1j * TWO_PI * ngamma_frac)
    denom = 1.0 - np.exp(1j * TWO_PI * (diff + N * params.n1 / params.n2) / N)
    return (np.exp(1j * params.phases)[:, None] / N) * numer / denom


def isrm_step_array(x: np.ndarray, params: IsrmParams, t: int = 1) -> np.ndarray:
    """Apply ``U**t`` along the last axis of ``x`` via the QFT factorization."""
    if t < 0:
        raise ValueError("iteration count must be non-negative")
    kick = np.exp(1j * params.phases)
    shift = _momentum_shift_phase(params)
    y = np.array(x, dtype=np.complex128, copy=True)
    for _ in range(t):
        y = qft_array(y, "inverse")
        y *= shift
        y = qft_array(y, "forward")
        y *= kick
    return y


def apply_isrm(state: QuantumState, params: IsrmParams, t: int = 1) -> QuantumState:
    """``U**t |psi>`` in O(t N log N)."""
    if state.dim != params.N:
        raise ValueError(f"state has dimension {state.dim}, map has {params.N}")
    return QuantumState(isrm_step_array(state.amplitudes, params, t))


def isrm_eigensystem(params: IsrmParams) -> EigenSystem:
    return unitary_eig(build_isrm(params))


def isrm_eigenvector_ensemble(
    n: int,
    n1: int,
    n2: int,
    realizations: int,
    seed: int,
    *,
    start: int = 0,
    dense_limit: int = DENSE_EIG_LIMIT,
) -> list[EigenSystem]:
    """Eigensystems of ``realizations`` independent random-phase maps.

    Realization ``k`` uses the stream ``(seed, start + k)``, so any subset
    can be recomputed alone.
    """
    if 2**n > dense_limit:
        raise ValueError(f"N = {2**n} exceeds the dense eigendecomposition limit {dense_limit}")
    out = []
    for k in range(start, start + realizations):
        params = IsrmParams.random(n, n1, n2, seed, k)
        try:
            out.append(isrm_eigensystem(params))
        except EigensolverError as exc:
            raise EigensolverError(f"realization {k}: {exc}") from exc
    return out


# -- serialization ---------------------------------------------------------


def save_states(path, states: Sequence[QuantumState] | np.ndarray, **meta) -> Path:
    """Store states (rows) in an ``.npz`` container with scalar metadata."""
    path = Path(path)
    arr = np.stack([np.asarray(s, dtype=np.complex128) for s in states])
    np.savez(path, amplitudes=arr, **{k: np.asarray(v) for k, v in meta.items()})
    return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")


def load_states(path) -> tuple[list[QuantumState], dict]:
    with np.load(path) as data:
        amps = data["amplitudes"]
        meta = {k: data[k].item() if data[k].ndim == 0 else data[k] for k in data.files if k != "amplitudes"}
    return [QuantumState(row) for row in np.atleast_2d(amps)], meta


def save_eigensystem(path, system: EigenSystem, **meta) -> Path:
    path = Path(path)
    np.savez(path, eigenphases=system.eigenphases, vectors=system.vectors,
             **{k: np.asarray(v) for k, v in meta.items()})
    return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")


def load_eigensystem(path) -> EigenSystem:
    with np.load(path) as data:
        return EigenSystem(data["eigenphases"], data["vectors"])


def write_state_csv(path, state: QuantumState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i, z in enumerate(state.amplitudes):
            w.writerow([i, repr(float(z.real)), repr(float(z.imag))])


def read_state_csv(path) -> QuantumState:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    amps = np.zeros(len(rows), dtype=np.complex128)
    for row in rows:
        amps[int(row["index"])] = complex(float(row["re"]), float(row["im"]))
    return QuantumState(amps)
