"""Independent Gibbs sampling of the fixed-free FPU chain.

With one end free the Gibbs weight factorises into N independent momenta
(Gaussian, variance T) and N independent bond elongations with density
proportional to exp(-V(b)/T).  Bonds are drawn by inverting a tabulated CDF.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .fpu_model import (
    ChainModel,
    FpuParams,
    PhasePoint,
    ProjectionCoeffs,
    half_kinetic,
    hamiltonian,
    observable_E,
    positions_from_bonds,
)

BLOCK_SIZE = 1024
GENERATOR_ID = f"pcg64-seedseq-block{BLOCK_SIZE}-invcdf-v1"

_MAGIC = b"ACSM"
_FORMAT_VERSION = 1

# log of the density ratio at which the tabulated support is cut
_TAIL_LOG_CUTOFF = 690.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class BondSampler:
    temperature: float
    alpha: float
    beta: float
    grid: np.ndarray  # cell edges, strictly increasing
    cdf: np.ndarray  # CDF at the edges, 0 .. 1
    tail_cutoffs: tuple
    mass: float  # normalisation of exp(-(V - Vmin)/T) on the grid
    mass_check: float  # same integral by adaptive quadrature

    def reduced_potential(self, b):
        b = np.asarray(b, dtype=float)
        return (b * b / 2 + self.alpha * b**3 / 3 + self.beta * b**4 / 4) / self.temperature

    def pdf(self, b):
        return np.exp(-(self.reduced_potential(b) - self._vmin)) / self.mass

    @property
    def _vmin(self) -> float:
        return _potential_min(self.alpha, self.beta) / self.temperature

    def cdf_at(self, b):
        return np.interp(b, self.grid, self.cdf, left=0.0, right=1.0)

    def ppf(self, u):
        """Inverse CDF, linear within each tabulation cell."""
        return np.interp(u, self.cdf, self.grid)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))


def _potential_poly(alpha: float, beta: float) -> Polynomial:
    return Polynomial([0.0, 0.0, 0.5, alpha / 3.0, beta / 4.0])


def _potential_min(alpha: float, beta: float) -> float:
    v = _potential_poly(alpha, beta)
    crit = [r.real for r in v.deriv().roots() if abs(r.imag) < 1e-12]
    return float(min(v(np.array(crit + [0.0]))))


def build_bond_sampler(params: FpuParams, n_cells: int = 1 << 15) -> BondSampler:
    alpha, beta, temp = params.alpha, params.beta, params.temperature
    if beta < 0 or (beta == 0 and alpha != 0):
        raise ValueError("bond density is not integrable: need beta > 0 (or alpha = beta = 0)")
    v = _potential_poly(alpha, beta)
    vmin = _potential_min(alpha, beta)
    level = v - (vmin + _TAIL_LOG_CUTOFF * temp)
    roots = np.array([r.real for r in level.roots() if abs(r.imag) < 1e-9 * max(1.0, abs(r))])
    lo, hi = float(roots.min()), float(roots.max())

    def density(b):
        return np.exp(-(v(b) - vmin) / temp)

    edges = np.linspace(lo, hi, n_cells + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    pts = mids[:, None] + half[:, None] * _GL_NODES[None, :]
    cell_mass = (density(pts) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(cell_mass)])
    mass = float(cum[-1])

    # independent check of the normalisation
    scale = np.sqrt(temp)
    check, _ = integrate.quad(density, lo, hi, points=[0.0], limit=500, epsabs=0.0, epsrel=1e-13)
    if abs(check - mass) > 1e-10 * mass:
        raise RuntimeError(f"bond CDF tabulation mass {mass!r} disagrees with quadrature {check!r}")
    tail, _ = integrate.quad(density, hi, hi + 50 * scale)
    tail_lo, _ = integrate.quad(density, lo - 50 * scale, lo)
    if (tail + tail_lo) > 1e-12 * mass:
        raise RuntimeError("tabulated support misses more than 1e-12 of the mass")

    cdf = cum / mass
    cdf[-1] = 1.0
    if np.any(np.diff(cdf) <= 0):
        # extreme tails can underflow: drop zero-mass cells so the CDF is strictly increasing
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        edges, cdf = edges[keep], cdf[keep]
    edges.setflags(write=False)
    cdf.setflags(write=False)
    return BondSampler(temp, alpha, beta, edges, cdf, (lo, hi), mass, float(check))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


def _draw_block(bond_sampler: BondSampler, n: int, seed: int, block: int):
    rng = _block_rng(seed, block)
    p = rng.standard_normal((BLOCK_SIZE, n)) * np.sqrt(bond_sampler.temperature)
    b = bond_sampler.sample(rng, (BLOCK_SIZE, n))
    return b, p


def draw_states(model: ChainModel, bond_sampler: BondSampler, seed: int, start: int, stop: int):
    """Bonds and momenta for sample indices ``start <= i < stop``.

    Each state depends only on ``(seed, i)``: index i lives in block
    ``i // BLOCK_SIZE``, whose stream is keyed by the seed and block number.
    """
    if not np.isclose(model.params.temperature, bond_sampler.temperature, rtol=1e-15, atol=0):
        raise ValueError("model and bond sampler temperatures differ")
    n = model.n
    first, last = start // BLOCK_SIZE, (stop - 1) // BLOCK_SIZE
    bs, ps = [], []
    for blk in range(first, last + 1):
        b, p = _draw_block(bond_sampler, n, seed, blk)
        lo = max(start - blk * BLOCK_SIZE, 0)
        hi = min(stop - blk * BLOCK_SIZE, BLOCK_SIZE)
        bs.append(b[lo:hi])
        ps.append(p[lo:hi])
    return np.concatenate(bs), np.concatenate(ps)


def sample_state(model: ChainModel, bond_sampler: BondSampler, rng_stream) -> PhasePoint:
    """One state from an explicit generator, or from ``(seed, index)``."""
    if isinstance(rng_stream, np.random.Generator):
        p = rng_stream.standard_normal(model.n) * np.sqrt(bond_sampler.temperature)
        b = bond_sampler.sample(rng_stream, model.n)
        return PhasePoint.from_bonds(b, p)
    seed, index = rng_stream
    b, p = draw_states(model, bond_sampler, seed, index, index + 1)
    return PhasePoint.from_bonds(b[0], p[0])


@dataclass
class SampleSet:
    q: np.ndarray  # (S, N)
    p: np.ndarray  # (S, N)
    seed: int
    params: FpuParams
    generator_id: str = GENERATOR_ID

    def __len__(self) -> int:
        return self.q.shape[0]

    def __getitem__(self, i) -> PhasePoint:
        return PhasePoint(self.q[i], self.p[i])

    @property
    def points(self):
        return [self[i] for i in range(len(self))]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.q[idx], self.p[idx], self.seed, self.params, self.generator_id)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.q, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.p, dtype="<f8").tobytes())
        return h.hexdigest()


def sample_set(model: ChainModel, size: int, seed: int, bond_sampler: BondSampler | None = None) -> SampleSet:
    if size < 1:
        raise ValueError("sample size must be positive")
    if bond_sampler is None:
        bond_sampler = build_bond_sampler(model.params)
    b, p = draw_states(model, bond_sampler, seed, 0, size)
    return SampleSet(positions_from_bonds(b), p, int(seed), model.params)


def _two_pass_cov(x, y):
    x = x - x.mean()
    y = y - y.mean()
    n = len(x)
    return float(np.dot(x, y) / (n - 1))


def estimate_projection(model: ChainModel, sample: SampleSet) -> ProjectionCoeffs:
    """Gram-Schmidt coefficients removing the component along H."""
    if len(sample) <= 100:
        raise ValueError(f"need more than 100 samples to estimate projections, got {len(sample)}")
    h = hamiltonian(model, sample.q, sample.p)
    var_h = _two_pass_cov(h, h)
    if not var_h > 0 or var_h <= (np.finfo(float).eps * np.abs(h).max()) ** 2:
        raise ValueError("degenerate sample: the Hamiltonian has zero variance")
    e = observable_E(model, sample.q, sample.p)
    k = half_kinetic(model, sample.q, sample.p)
    return ProjectionCoeffs(_two_pass_cov(e, h) / var_h, _two_pass_cov(k, h) / var_h, len(sample))


# -- sample file --------------------------------------------------------------

def header_size(header: dict) -> int:
    return 4 + 4 + 4 + len(_encode_header(header))


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode()


def write_sample_file(path, sample: SampleSet, extra: dict | None = None) -> dict:
    header = {
        "params": sample.params.to_dict(),
        "seed": int(sample.seed),
        "n_samples": len(sample),
        "generator_id": sample.generator_id,
    }
    if extra:
        header.update(extra)
    blob = _encode_header(header)
    n = sample.params.n_particles
    data = np.empty((len(sample), 2 * n), dtype="<f8")
    data[:, :n] = sample.q
    data[:, n:] = sample.p
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes())
    return header


def read_sample_file(path) -> tuple[SampleSet, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a sample file (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported sample file version {version}")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    params = FpuParams.from_dict(header["params"])
    n, s = params.n_particles, int(header["n_samples"])
    data = np.frombuffer(raw, dtype="<f8", offset=12 + hlen)
    if data.size != s * 2 * n:
        raise ValueError(f"{path}: expected {s * 2 * n} values, found {data.size}")
    data = data.reshape(s, 2 * n).astype(float)
    return SampleSet(data[:, :n].copy(), data[:, n:].copy(), int(header["seed"]), params, header["generator_id"]), header
