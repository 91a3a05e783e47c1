"""FPU chain with one end fixed to a wall and the other end free.

Moving particles carry indices 1..N; particle 0 is pinned (q_0 = p_0 = 0).
Bond j couples particles j and j+1, with elongation b_j = q_j - q_{j+1}
for j = 0..N-1, so the chain has exactly N springs.

All functions accept either a single state (arrays of shape ``(N,)``) or a
batch of states (arrays of shape ``(S, N)``); the trailing axis is always the
particle axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FpuParams:
    n_particles: int
    alpha: float = 0.25
    beta: float = 0.25
    temperature: float = 1.0

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"n_particles must be a positive integer, got {self.n_particles!r}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta!r}")
        if self.beta == 0 and self.alpha != 0:
            raise ValueError("a cubic coupling needs beta > 0 for the Gibbs weight to be integrable")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")

    def to_dict(self) -> dict:
        return {
            "n_particles": int(self.n_particles),
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "temperature": float(self.temperature),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FpuParams":
        return cls(int(d["n_particles"]), float(d["alpha"]), float(d["beta"]), float(d["temperature"]))


def bonds_from_positions(q):
    q = np.asarray(q, dtype=float)
    b = np.empty_like(q)
    b[..., 0] = -q[..., 0]
    np.subtract(q[..., :-1], q[..., 1:], out=b[..., 1:])
    return b


def positions_from_bonds(b):
    # q_{j+1} = q_j - b_j with q_0 = 0
    return -np.cumsum(np.asarray(b, dtype=float), axis=-1)


@dataclass(frozen=True)
class PhasePoint:
    """One microstate. ``bonds`` is derived from ``q`` when omitted."""

    q: np.ndarray
    p: np.ndarray
    bonds: np.ndarray = field(default=None)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise ValueError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        if self.bonds is None:
            object.__setattr__(self, "bonds", bonds_from_positions(q))
        else:
            b = np.asarray(self.bonds, dtype=float)
            if b.shape != q.shape:
                raise ValueError("bonds must have the same shape as q")
            object.__setattr__(self, "bonds", b)

    @classmethod
    def from_bonds(cls, bonds, p) -> "PhasePoint":
        bonds = np.asarray(bonds, dtype=float)
        return cls(positions_from_bonds(bonds), p, bonds)

    @property
    def n_particles(self) -> int:
        return self.q.shape[-1]


def coupling_matrix(n: int) -> np.ndarray:
    """Hessian of the quadratic potential: tridiagonal, diagonal (2, ..., 2, 1)."""
    k = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    k[-1, -1] = 1.0
    return k


@dataclass(frozen=True)
class ChainModel:
    params: FpuParams
    mode_frequencies: np.ndarray
    mode_vectors: np.ndarray  # columns are modes, ascending frequency
    low_mode_count: int

    @property
    def n(self) -> int:
        return self.params.n_particles

    @property
    def low_modes(self) -> np.ndarray:
        return self.mode_vectors[:, : self.low_mode_count]

    @property
    def omega_max(self) -> float:
        return float(self.mode_frequencies[-1])


def build_chain(params: FpuParams) -> ChainModel:
    n = params.n_particles
    k = coupling_matrix(n)
    try:
        evals, evecs = np.linalg.eigh(k)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD tridiagonal
        raise RuntimeError(f"eigen-decomposition of the coupling matrix failed for N={n}") from exc
    if np.any(evals <= 0):
        raise RuntimeError(f"coupling matrix not positive definite: min eigenvalue {evals.min()}")
    order = np.argsort(evals)
    evals = evals[order]
    evecs = evecs[:, order]
    # fix the sign of each eigenvector for reproducibility
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(n)])
    evecs = evecs * signs
    freqs = np.sqrt(evals)
    freqs.setflags(write=False)
    evecs.setflags(write=False)
    return ChainModel(params, freqs, evecs, n // 2 + 1 if n > 1 else 1)


def potential(params: FpuParams, b):
    b = np.asarray(b, dtype=float)
    return b * b / 2 + params.alpha * b**3 / 3 + params.beta * b**4 / 4


def potential_prime(params: FpuParams, b):
    b = np.asarray(b, dtype=float)
    return b + params.alpha * b * b + params.beta * b**3


def force(params: FpuParams, q):
    """-dH/dq for every moving particle."""
    b = bonds_from_positions(q)
    if params.alpha or params.beta:
        vp = b * (1.0 + b * (params.alpha + params.beta * b))
    else:
        vp = b
    vp[..., :-1] -= vp[..., 1:]
    return vp


def _qp(x, p=None):
    if isinstance(x, PhasePoint):
        return x.q, x.p
    return np.asarray(x, dtype=float), np.asarray(p, dtype=float)


def hamiltonian(model: ChainModel, x, p=None):
    q, p = _qp(x, p)
    return 0.5 * np.sum(p * p, axis=-1) + np.sum(potential(model.params, bonds_from_positions(q)), axis=-1)


def normal_coordinates(model: ChainModel, x, p=None):
    q, p = _qp(x, p)
    return q @ model.mode_vectors, p @ model.mode_vectors


def mode_energies(model: ChainModel, x, p=None):
    qk, pk = normal_coordinates(model, x, p)
    return 0.5 * (pk * pk + model.mode_frequencies**2 * qk * qk)


def observable_E(model: ChainModel, x, p=None):
    """Energy held by the lowest floor(N/2)+1 modes, divided by N."""
    e = mode_energies(model, x, p)
    return np.sum(e[..., : model.low_mode_count], axis=-1) / model.n


def half_kinetic(model: ChainModel, x, p=None):
    _, p = _qp(x, p)
    h = model.n // 2
    return 0.5 * np.sum(p[..., :h] ** 2, axis=-1)


@dataclass(frozen=True)
class ProjectionCoeffs:
    lambda_E: float
    lambda_K: float
    sample_size: int

    def __post_init__(self):
        if not (np.isfinite(self.lambda_E) and np.isfinite(self.lambda_K)):
            raise ValueError("projection coefficients must be finite")
        if self.sample_size <= 1:
            raise ValueError("projection coefficients need more than one sample")

    def to_dict(self) -> dict:
        return {"lambda_E": self.lambda_E, "lambda_K": self.lambda_K, "sample_size": self.sample_size}


def observable_Etilde(model: ChainModel, x, proj: ProjectionCoeffs, p=None):
    return observable_E(model, x, p) - proj.lambda_E * hamiltonian(model, x, p)


def observable_Ktilde(model: ChainModel, x, proj: ProjectionCoeffs, p=None):
    return half_kinetic(model, x, p) - proj.lambda_K * hamiltonian(model, x, p)
