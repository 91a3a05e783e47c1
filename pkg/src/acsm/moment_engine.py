"""Moment coefficients c_n = Var(f^(n)) over a Gibbs sample, and Hankel gates."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, lgamma

import jsonschema
import mpmath
import numpy as np

from .lie_derivatives import trajectory_jet

JET_ORDER_CAP = 24
DEFAULT_BLOCKS = 20


@dataclass
class MomentSequence:
    c: np.ndarray
    stderr: np.ndarray
    sample_size: int = 0
    observable_id: str = ""
    params: dict | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.c.shape != self.stderr.shape:
            raise ValueError("c and stderr lengths differ")
        if np.any(self.c < 0):
            raise ValueError("moment coefficients must be non-negative")
        if not np.all(np.isfinite(self.stderr)):
            raise ValueError("standard errors must be finite")

    @classmethod
    def exact(cls, c, observable_id: str = "fixture") -> "MomentSequence":
        c = np.asarray(c, dtype=float)
        return cls(c, np.zeros_like(c), 0, observable_id)

    @property
    def max_n(self) -> int:
        return len(self.c) - 1

    def scaled(self, factor: float) -> "MomentSequence":
        """Moments of ``sqrt(factor) * f``."""
        return MomentSequence(self.c * factor, self.stderr * factor, self.sample_size,
                              self.observable_id, self.params, self.seed, dict(self.meta))

    def to_dict(self) -> dict:
        d = {
            "observable": self.observable_id,
            "params": self.params,
            "n_samples": int(self.sample_size),
            "c": [float(x) for x in self.c],
            "stderr": [float(x) for x in self.stderr],
            "seed": self.seed,
        }
        d.update(self.meta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MomentSequence":
        jsonschema.validate(d, MOMENT_FILE_SCHEMA)
        known = {"observable", "params", "n_samples", "c", "stderr", "seed"}
        meta = {k: v for k, v in d.items() if k not in known}
        return cls(d["c"], d["stderr"], d["n_samples"], d["observable"], d["params"], d["seed"], meta)


MOMENT_FILE_SCHEMA = {
    "type": "object",
    "required": ["observable", "params", "n_samples", "c", "stderr", "seed"],
    "properties": {
        "observable": {"type": "string"},
        "params": {"type": ["object", "null"]},
        "n_samples": {"type": "integer", "minimum": 0},
        "c": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "stderr": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "seed": {"type": ["integer", "null"]},
    },
}


def write_moment_file(path, m: MomentSequence) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_dict(), fh, indent=2)


def read_moment_file(path) -> MomentSequence:
    with open(path) as fh:
        d = json.load(fh)
    if len(d.get("c", [])) != len(d.get("stderr", [])):
        raise jsonschema.ValidationError("c and stderr must have equal length")
    return MomentSequence.from_dict(d)


# -- estimation ---------------------------------------------------------------

def lie_derivative_samples(model, sample, observable, order: int, chunk: int = 4096, threads: int = 1) -> np.ndarray:
    """f^(m)(x_s) for m = 0..order and every sample point; shape (order+1, S)."""
    s = len(sample)
    out = np.empty((order + 1, s))
    fact = np.array([factorial(m) for m in range(order + 1)], dtype=float)[:, None]

    def work(start):
        stop = min(start + chunk, s)
        qj, pj = trajectory_jet(model, sample.q[start:stop], order, sample.p[start:stop])
        out[:, start:stop] = observable.jet(model, qj, pj) * fact

    starts = range(0, s, chunk)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for st in starts:
            work(st)
    return out


def _variances(d: np.ndarray) -> np.ndarray:
    mu = d.mean(axis=1, keepdims=True)
    r = d - mu
    return np.einsum("ij,ij->i", r, r) / (d.shape[1] - 1)


def _block_slices(s: int, blocks: int):
    edges = np.linspace(0, s, blocks + 1).astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(blocks)]


def jackknife_from_derivatives(d: np.ndarray, blocks: int = DEFAULT_BLOCKS) -> np.ndarray:
    """Leave-one-block-out variances, shape (blocks, order+1)."""
    if blocks < 2:
        raise ValueError("jackknife needs at least 2 blocks")
    s = d.shape[1]
    if s < 2 * blocks:
        raise ValueError(f"{s} samples are too few for {blocks} jackknife blocks")
    reps = []
    for sl in _block_slices(s, blocks):
        keep = np.ones(s, dtype=bool)
        keep[sl] = False
        reps.append(_variances(d[:, keep]))
    return np.array(reps)


def jackknife_stderr(replicas: np.ndarray) -> np.ndarray:
    b = replicas.shape[0]
    return np.sqrt((b - 1) / b * ((replicas - replicas.mean(axis=0)) ** 2).sum(axis=0))


def moments_from_derivatives(d: np.ndarray, blocks: int = DEFAULT_BLOCKS, **meta) -> MomentSequence:
    c = _variances(d)
    err = jackknife_stderr(jackknife_from_derivatives(d, blocks))
    return MomentSequence(c, err, d.shape[1], **meta)


def estimate_moments(model, sample, observable, max_n: int, blocks: int = DEFAULT_BLOCKS,
                     jet_cap: int = JET_ORDER_CAP, threads: int = 1) -> MomentSequence:
    """c_0 = Var f and c_n = Var f^(n), with jackknife standard errors."""
    if max_n > jet_cap:
        raise ValueError(f"max_n={max_n} exceeds the jet order cap {jet_cap}")
    if len(sample) == 0:
        raise ValueError("empty sample")
    d = lie_derivative_samples(model, sample, observable, max_n, threads=threads)
    return moments_from_derivatives(
        d, blocks,
        observable_id=getattr(observable, "name", type(observable).__name__),
        params=model.params.to_dict(),
        seed=getattr(sample, "seed", None),
    )


def jackknife_moments(model, sample, observable, max_n: int, blocks: int = DEFAULT_BLOCKS,
                      threads: int = 1) -> list[MomentSequence]:
    if blocks < 2:
        raise ValueError("jackknife needs at least 2 blocks")
    d = lie_derivative_samples(model, sample, observable, max_n, threads=threads)
    reps = jackknife_from_derivatives(d, blocks)
    n_left = len(sample) - len(sample) // blocks
    name = getattr(observable, "name", "")
    return [MomentSequence(r, np.zeros_like(r), n_left, name, model.params.to_dict(), sample.seed) for r in reps]


# -- Hankel gate --------------------------------------------------------------

POSITIVE, NEGATIVE, ZERO, INDETERMINATE = "positive", "negative", "zero", "indeterminate"


def conditioning_scale(c) -> Fraction:
    """lambda = c_1 / c_0 as an exact rational (1 when undefined)."""
    c0, c1 = Fraction(float(c[0])), Fraction(float(c[1])) if len(c) > 1 else Fraction(0)
    if c0 > 0 and c1 > 0:
        return c1 / c0
    return Fraction(1)


def conditioned_moments(c) -> list[Fraction]:
    """c_n / (c_0 lambda^n), exactly, from the rounded double inputs."""
    lam = conditioning_scale(c)
    c0 = Fraction(float(c[0])) or Fraction(1)
    return [Fraction(float(x)) / (c0 * lam**k) for k, x in enumerate(c)]


def _hankel(ch, n, shift):
    return [[ch[i + j + shift] for j in range(n + 1)] for i in range(n + 1)]


def _exact_det(rows) -> Fraction:
    a = [row[:] for row in rows]
    n = len(a)
    det = Fraction(1)
    for k in range(n):
        piv = next((i for i in range(k, n) if a[i][k] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            det = -det
        det *= a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] / a[k][k]
            if f:
                for j in range(k, n):
                    a[i][j] -= f * a[k][j]
    return det


def _interval_det(rows, prec: int):
    """Determinant enclosure by interval Gaussian elimination; None if a pivot straddles 0."""
    iv = mpmath.iv
    old = iv.prec
    iv.prec = prec
    try:
        a = [[iv.mpf(x.numerator) / iv.mpf(x.denominator) for x in row] for row in rows]
        n = len(a)
        det = iv.mpf(1)
        for k in range(n):
            piv = max(range(k, n), key=lambda i: abs(a[i][k].mid))
            if 0 in a[piv][k]:
                return None
            if piv != k:
                a[k], a[piv] = a[piv], a[k]
                det = -det
            det *= a[k][k]
            for i in range(k + 1, n):
                f = a[i][k] / a[k][k]
                for j in range(k, n):
                    a[i][j] = a[i][j] - f * a[k][j]
        return det
    finally:
        iv.prec = old


def certified_det(rows, prec: int, exact_fallback: bool = True):
    """(value, status, method) for the determinant of a rational matrix."""
    enc = _interval_det(rows, prec)
    if enc is not None and 0 not in enc:
        mid = mpmath.mpf(enc.mid)
        return mid, (POSITIVE if mid > 0 else NEGATIVE), f"interval-{prec}"
    if not exact_fallback:
        return (mpmath.mpf(enc.mid) if enc is not None else mpmath.nan), INDETERMINATE, f"interval-{prec}"
    d = _exact_det(rows)
    status = POSITIVE if d > 0 else NEGATIVE if d < 0 else ZERO
    return mpmath.mpf(d.numerator) / d.denominator, status, "exact"


@dataclass
class HankelReport:
    det_Delta: list
    det_DeltaTilde: list
    status_Delta: list
    status_DeltaTilde: list
    first_negative_order: int | None
    first_zero_order: int | None
    precision_bits: int
    methods: list = field(default_factory=list)
    scale: float = 1.0

    @property
    def indeterminate(self) -> bool:
        return INDETERMINATE in self.status_Delta or INDETERMINATE in self.status_DeltaTilde

    def max_reliable_order(self) -> int:
        """Largest quadrature order n with Delta_k and DeltaTilde_k > 0 for all k < n."""
        n = 0
        while (n < len(self.status_Delta) and n < len(self.status_DeltaTilde)
               and self.status_Delta[n] == POSITIVE and self.status_DeltaTilde[n] == POSITIVE):
            n += 1
        return n

    def to_dict(self) -> dict:
        return {
            "det_Delta": [mpmath.nstr(x, 17) for x in self.det_Delta],
            "det_DeltaTilde": [mpmath.nstr(x, 17) for x in self.det_DeltaTilde],
            "status_Delta": self.status_Delta,
            "status_DeltaTilde": self.status_DeltaTilde,
            "first_negative_order": self.first_negative_order,
            "first_zero_order": self.first_zero_order,
            "precision_bits": self.precision_bits,
            "conditioning_scale": self.scale,
        }


def hankel_check(m, precision_bits: int = 512, max_order: int | None = None,
                 exact_fallback: bool = True) -> HankelReport:
    """Signs of det Delta_n and det DeltaTilde_n on the conditioned moments.

    Determinants are reported for the conditioned sequence
    c_n / (c_0 lambda^n); that rescaling multiplies every determinant by a
    positive factor, so signs are those of the raw Hankel matrices.
    """
    c = m.c if isinstance(m, MomentSequence) else np.asarray(m, dtype=float)
    ch = conditioned_moments(c)
    top = (len(c) - 1) // 2 if max_order is None else max_order
    if 2 * top > len(c) - 1:
        raise ValueError(f"order {top} needs c_0..c_{2 * top}")
    dets, dets_t, st, st_t, methods = [], [], [], [], []
    for n in range(top + 1):
        v, s, how = certified_det(_hankel(ch, n, 0), precision_bits, exact_fallback)
        dets.append(v)
        st.append(s)
        methods.append(how)
        if 2 * n + 1 <= len(c) - 1:
            v, s, how = certified_det(_hankel(ch, n, 1), precision_bits, exact_fallback)
            dets_t.append(v)
            st_t.append(s)
    first_neg = next((n for n in range(top + 1)
                      if st[n] == NEGATIVE or (n < len(st_t) and st_t[n] == NEGATIVE)), None)
    first_zero = next((n for n in range(top + 1)
                       if st[n] == ZERO or (n < len(st_t) and st_t[n] == ZERO)), None)
    return HankelReport(dets, dets_t, st, st_t, first_neg, first_zero, precision_bits, methods,
                        float(conditioning_scale(c)))


@dataclass
class UniquenessEstimate:
    d_values: np.ndarray
    sup_estimate: float


def uniqueness_bound(m) -> UniquenessEstimate:
    """D_n = (c_n / (2n)!)^(1/n); c_n <= D^n (2n)! for D = sup D_n."""
    c = m.c if isinstance(m, MomentSequence) else np.asarray(m, dtype=float)
    d = []
    for n in range(1, len(c)):
        d.append(0.0 if c[n] == 0 else float(np.exp((np.log(c[n]) - lgamma(2 * n + 1)) / n)))
    d = np.array(d)
    return UniquenessEstimate(d, float(d.max()) if len(d) else 0.0)
