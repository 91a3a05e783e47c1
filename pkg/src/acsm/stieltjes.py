"""Atomic (Gauss) approximants of the spectral measure from moment sequences.

With u = omega^2 the coefficients c_n are the power moments of a positive
measure on [0, inf).  The n-point Gauss rule of that measure gives the
rational approximant

    F_2n(s) = s * sum_k rho_k / (s^2 + omega_k^2)

of the Laplace transform of the autocorrelation.  Nodes come from the
symmetric Jacobi matrix built by the modified Chebyshev algorithm, run in
arbitrary precision on the conditioned moments.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .moment_engine import (
    POSITIVE,
    MomentSequence,
    conditioned_moments,
    conditioning_scale,
    hankel_check,
)

DEFAULT_PRECISION = 512
MAX_PRECISION = 4096
RESIDUAL_TOL = mpmath.mpf("1e-20")


def default_precision() -> int:
    return int(os.environ.get("ACSM_PRECISION_BITS", DEFAULT_PRECISION))


class MomentGateError(ArithmeticError):
    """Raised when a moment sequence is not a Stieltjes sequence up to the requested order."""

    def __init__(self, message, max_order: int, failing_order: int | None = None):
        super().__init__(message)
        self.max_order = max_order
        self.failing_order = failing_order


@dataclass
class SpectralApproximant:
    omega: tuple  # mpf, ascending
    rho: tuple  # mpf
    order: int
    moment_residuals: list
    alpha: list = field(default_factory=list)  # Jacobi recurrence, u variable
    beta: list = field(default_factory=list)
    sfraction: list = field(default_factory=list)
    precision_bits: int = DEFAULT_PRECISION
    source: dict = field(default_factory=dict)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([float(w) for w in self.omega])

    @property
    def rhos(self) -> np.ndarray:
        return np.array([float(r) for r in self.rho])

    @property
    def nodes_u(self) -> np.ndarray:
        return self.omegas**2

    @property
    def atoms(self):
        return list(zip(self.omegas, self.rhos))

    @property
    def normalized_rhos(self) -> np.ndarray:
        r = self.rhos
        return r / r.sum()

    def moment(self, k: int):
        return mpmath.fsum(r * w ** (2 * k) for w, r in zip(self.omega, self.rho))


def _chebyshev(mom, n):
    """Recurrence coefficients (alpha_k, beta_k), k < n, from moments 0..2n-1."""
    zero = mpmath.mpf(0)
    sig_prev = [zero] * (2 * n)
    sig = list(mom[: 2 * n])
    alpha = [sig[1] / sig[0]]
    beta = [sig[0]]
    for k in range(1, n):
        new = [zero] * (2 * n)
        for l in range(k, 2 * n - k):
            new[l] = sig[l + 1] - alpha[k - 1] * sig[l] - beta[k - 1] * sig_prev[l]
        if new[k] <= 0:
            raise MomentGateError(f"recurrence breakdown at order {k + 1}", k, k)
        alpha.append(new[k + 1] / new[k] - sig[k] / sig[k - 1])
        beta.append(new[k] / sig[k - 1])
        sig_prev, sig = sig, new
    return alpha, beta


def _gauss(alpha, beta):
    n = len(alpha)
    j = mpmath.matrix(n, n)
    for i in range(n):
        j[i, i] = alpha[i]
        if i + 1 < n:
            j[i, i + 1] = j[i + 1, i] = mpmath.sqrt(beta[i + 1])
    if n == 1:
        return [alpha[0]], [beta[0]]
    evals, evecs = mpmath.eigsy(j)
    idx = sorted(range(n), key=lambda i: evals[i])
    return [evals[i] for i in idx], [beta[0] * evecs[0, i] ** 2 for i in idx]


def sfraction_coefficients(alpha, beta):
    """Stieltjes continued-fraction coefficients g_0, g_1, ...

    ``int dPhi(u)/(z+u) = g0/(z + g1/(1 + g2/(z + g3/(1 + ...))))`` with
    alpha_0 = g1, beta_k = g_{2k-1} g_{2k}, alpha_k = g_{2k} + g_{2k+1}.
    """
    g = [beta[0], alpha[0]]
    for k in range(1, len(alpha)):
        g.append(beta[k] / g[-1])
        g.append(alpha[k] - g[-1])
    return g


def evaluate_sfraction(g, z):
    """Value of the truncated S-fraction at z (uses every coefficient given)."""
    tail = mpmath.mpf(0)
    for idx in range(len(g) - 1, 0, -1):
        base = 1 if idx % 2 == 1 else z
        tail = g[idx] / (base + tail)
    return g[0] / (z + tail)


def _as_moments(m):
    if isinstance(m, MomentSequence):
        return m.c, {"observable": m.observable_id, "n_samples": m.sample_size, "params": m.params}
    return np.asarray(m, dtype=float), {}


def quadrature_from_moments(m, order: int, precision_bits: int | None = None) -> SpectralApproximant:
    """n-atom approximant matching c_0..c_{2n-1}."""
    c, source = _as_moments(m)
    n = int(order)
    if n < 1:
        raise ValueError("order must be >= 1")
    if len(c) < 2 * n:
        raise ValueError(f"order {n} needs c_0..c_{2 * n - 1}, have {len(c)} coefficients")
    prec = precision_bits or default_precision()
    c = c[: 2 * n]
    if not c[0] > 0:
        raise MomentGateError("c_0 must be positive", 0, 0)

    report = hankel_check(c, prec, max_order=n - 1)
    reliable = report.max_reliable_order()
    if reliable < n:
        bad = next(k for k in range(n) if report.status_Delta[k] != POSITIVE
                   or (k < len(report.status_DeltaTilde) and report.status_DeltaTilde[k] != POSITIVE))
        raise MomentGateError(
            f"Hankel determinants at order {bad}: Delta {report.status_Delta[bad]}, DeltaTilde "
            f"{report.status_DeltaTilde[bad] if bad < len(report.status_DeltaTilde) else 'n/a'}; "
            f"moments support at most order {reliable}",
            reliable, bad)

    lam = conditioning_scale(c)
    ch = conditioned_moments(c)
    while True:
        with mpmath.workprec(prec):
            mom = [mpmath.mpf(x.numerator) / x.denominator for x in ch]
            alpha, beta = _chebyshev(mom, n)
            nodes, weights = _gauss(alpha, beta)
            resid = []
            for k in range(2 * n):
                s = mpmath.fsum(w * x**k for w, x in zip(weights, nodes))
                resid.append(abs(s - mom[k]) / mom[k])
            ok = max(resid) <= RESIDUAL_TOL
            if ok or prec >= MAX_PRECISION:
                lam_mp = mpmath.mpf(lam.numerator) / lam.denominator
                c0 = mpmath.mpf(float(c[0]))
                u = [x * lam_mp for x in nodes]
                rho = [w * c0 for w in weights]
                alpha_u = [a * lam_mp for a in alpha]
                beta_u = [beta[0] * c0] + [b * lam_mp**2 for b in beta[1:]]
                break
        prec *= 2
    if not ok:
        raise MomentGateError(f"moment residual {mpmath.nstr(max(resid), 3)} above tolerance at "
                              f"{MAX_PRECISION} bits", n - 1)
    if any(x <= 0 for x in u) or any(r <= 0 for r in rho):
        raise MomentGateError("non-positive node or weight despite a passing Hankel gate", n - 1, n - 1)
    with mpmath.workprec(prec):
        omega = tuple(mpmath.sqrt(x) for x in u)
        g = sfraction_coefficients(alpha_u, beta_u)
    return SpectralApproximant(omega, tuple(rho), n, [float(r) for r in resid], alpha_u, beta_u, g, prec, source)


def approximants_up_to(m, n_max: int, precision_bits: int | None = None):
    """Approximants of orders 1..n_max, stopping at the first gate failure.

    Returns ``(approximants, gate_error_or_None)``.  When the moments are
    exactly those of a k-atom measure (a zero Hankel determinant), order k is
    exact and higher orders are not attempted.
    """
    out = []
    for n in range(1, n_max + 1):
        try:
            out.append(quadrature_from_moments(m, n, precision_bits))
        except MomentGateError as err:
            return out, err
    return out, None


def laplace_approximant(a: SpectralApproximant, s):
    s = complex(s)
    total = 0j
    for w, r in zip(a.omegas, a.rhos):
        den = s * s + w * w
        if abs(den) <= 1e-300 + 1e-14 * w * w:
            raise ZeroDivisionError(f"s = {s} is a pole (+-i*{w})")
        total += r / den
    return s * total


def correlation_reconstruction(a: SpectralApproximant, t):
    t = np.asarray(t, dtype=float)
    return np.sum(a.rhos * np.cos(np.multiply.outer(t, a.omegas)), axis=-1)


# -- isolation diagnostic --------------------------------------------------------

ISOLATION, DENSE, INCONCLUSIVE = "isolation-indication", "dense-indication", "inconclusive"


@dataclass
class IsolationReport:
    tables: list  # per order: list of (omega, rho, rho_normalized)
    min_gap: float
    dominant_residue_fraction: list
    residue_stability: dict
    first_gap_ratio: list
    verdict: str

    def to_dict(self) -> dict:
        return {
            "tables": self.tables,
            "min_gap": self.min_gap,
            "dominant_residue_fraction": self.dominant_residue_fraction,
            "residue_stability": self.residue_stability,
            "first_gap_ratio": [None if not np.isfinite(x) else x for x in self.first_gap_ratio],
            "verdict": self.verdict,
        }


def isolation_diagnostic(approximants, fraction_threshold: float = 0.99, stability: float = 0.1) -> IsolationReport:
    """Does a dominant pole stay isolated with a stable residue as the order grows?

    ``isolation-indication``: the dominant atom's omega and rho both move less
    than ``stability`` (relative) between the last two orders and it carries
    more than ``fraction_threshold`` of the total residue.
    ``dense-indication``: below that fraction, the residue mass outside the
    dominant atom grows with the order and, where defined, the ratio between
    the second and first frequency shrinks.
    """
    aps = sorted(approximants, key=lambda a: a.order)
    if not aps:
        raise ValueError("no approximants")
    tables = [[(float(w), float(r), float(rn)) for w, r, rn in zip(a.omegas, a.rhos, a.normalized_rhos)]
              for a in aps]
    fractions = [float(a.normalized_rhos.max()) for a in aps]
    ratios = [float(a.omegas[1] / a.omegas[0]) if a.order > 1 else float("nan") for a in aps]
    top = aps[-1]
    om = top.omegas
    min_gap = float(np.min(np.diff(om))) if len(om) > 1 else float("inf")

    if len(aps) == 1:
        if top.order == 1:
            return IsolationReport(tables, min_gap, fractions,
                                   {"omega": 0.0, "rho": 0.0}, ratios, ISOLATION)
        raise ValueError("the isolation diagnostic needs at least two orders")

    prev = aps[-2]
    i_top = int(np.argmax(top.rhos))
    i_prev = int(np.argmax(prev.rhos))
    d_om = abs(top.omegas[i_top] - prev.omegas[i_prev]) / prev.omegas[i_prev]
    d_rho = abs(top.rhos[i_top] - prev.rhos[i_prev]) / prev.rhos[i_prev]
    stab = {"omega": float(d_om), "rho": float(d_rho)}

    if fractions[-1] > fraction_threshold and d_om < stability and d_rho < stability:
        verdict = ISOLATION
    else:
        spreading = (1 - fractions[-1]) > (1 - fractions[-2])
        shrinking = not (np.isfinite(ratios[-1]) and np.isfinite(ratios[-2])) or ratios[-1] < ratios[-2]
        verdict = DENSE if fractions[-1] <= fraction_threshold and spreading and shrinking else INCONCLUSIVE
    return IsolationReport(tables, min_gap, fractions, stab, ratios, verdict)


# -- pole tables -----------------------------------------------------------------

POLE_COLUMNS = ["order", "k", "omega", "one_over_omega", "rho", "rho_normalized", "omega_stderr", "rho_stderr"]


def jackknife_pole_errors(replica_moments, orders, precision_bits: int | None = None):
    """{order: (omega_stderr, rho_stderr)} from the spread over jackknife replicas."""
    out = {}
    for n in orders:
        oms, rhs = [], []
        for rep in replica_moments:
            try:
                a = quadrature_from_moments(rep, n, precision_bits)
            except MomentGateError:
                continue
            oms.append(a.omegas)
            rhs.append(a.rhos)
        b = len(oms)
        if b < 2:
            out[n] = (np.full(n, np.nan), np.full(n, np.nan))
            continue
        oms, rhs = np.array(oms), np.array(rhs)
        f = (b - 1) / b
        out[n] = (np.sqrt(f * ((oms - oms.mean(0)) ** 2).sum(0)), np.sqrt(f * ((rhs - rhs.mean(0)) ** 2).sum(0)))
    return out


def pole_rows(approximants, errors=None):
    rows = []
    for a in approximants:
        es = (errors or {}).get(a.order, (np.full(a.order, np.nan), np.full(a.order, np.nan)))
        for k, (w, r, rn) in enumerate(zip(a.omegas, a.rhos, a.normalized_rhos)):
            rows.append({
                "order": a.order, "k": k, "omega": w, "one_over_omega": 1.0 / w,
                "rho": r, "rho_normalized": rn,
                "omega_stderr": float(es[0][k]), "rho_stderr": float(es[1][k]),
            })
    return rows


def write_pole_csv(path, rows, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.DictWriter(fh, fieldnames=POLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def read_pole_csv(path) -> list[SpectralApproximant]:
    """Rebuild the atomic approximants stored in a pole CSV (float precision only)."""
    by_order = {}
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in ("order", "k", "omega", "rho")):
        raise ValueError(f"{path}: not a pole table (need order, k, omega, rho columns)")
    for row in reader:
        try:
            n, k = int(row["order"]), int(row["k"])
            w, r = float(row["omega"]), float(row["rho"])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed pole row {row!r}") from exc
        if not (w >= 0 and r > 0):
            raise ValueError(f"{path}: pole row needs omega >= 0 and rho > 0")
        by_order.setdefault(n, {})[k] = (w, r)
    out = []
    for n, atoms in sorted(by_order.items()):
        if sorted(atoms) != list(range(n)):
            raise ValueError(f"{path}: order {n} does not list atoms 0..{n - 1}")
        ws, rs = zip(*(atoms[k] for k in range(n)))
        out.append(SpectralApproximant(tuple(mpmath.mpf(w) for w in ws), tuple(mpmath.mpf(r) for r in rs), n, [],
                                       precision_bits=53, source={"file": str(path)}))
    return out
