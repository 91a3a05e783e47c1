"""Finite-order regularity diagnostics on moment sequences and atomic approximants.

Every verdict here is an indication at the tested order, never a proof: the
underlying statements need the full infinite moment sequence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import comb, factorial, lgamma

import mpmath
import numpy as np

from .moment_engine import MomentSequence
from .stieltjes import SpectralApproximant


def _c_and_err(m):
    if isinstance(m, MomentSequence):
        return m.c, m.stderr
    c = np.asarray(m, dtype=float)
    return c, np.zeros_like(c)


def _fit_exponent(x, y):
    """Least-squares slope of log y against log x (y > 0)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


# -- Akhiezer-Krein ------------------------------------------------------------

@dataclass
class AkhiezerKreinReport:
    L: float
    t_values: list
    min_eigenvalue_by_order: list
    status_by_order: list  # "psd", "not-psd", "indeterminate"
    failing_order: int | None
    verdict: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_values"] = [float(x) for x in self.t_values]
        d["min_eigenvalue_by_order"] = [float(x) for x in self.min_eigenvalue_by_order]
        return d


def symmetric_moments(c, k_max: int) -> list:
    """c'_{2n} = c_n, c'_{2n+1} = 0 for indices 0..k_max."""
    return [mpmath.mpf(float(c[i // 2])) if i % 2 == 0 else mpmath.mpf(0) for i in range(k_max + 1)]


def ak_t_values(c, L, k_max: int, precision_bits: int = 512) -> list:
    """t_k(L) = det(A_k) / ((k+1)! L^(k+1)) for the lower-Hessenberg matrix A_k.

    Row i of A_k holds (i-j+1) c'_{i-j} for j <= i and -(i+1) L on the superdiagonal.
    """
    with mpmath.workprec(precision_bits):
        L = mpmath.mpf(L)
        cp = symmetric_moments(c, k_max)
        out = []
        for k in range(k_max + 1):
            a = mpmath.matrix(k + 1, k + 1)
            for i in range(k + 1):
                for j in range(i + 1):
                    a[i, j] = (i - j + 1) * cp[i - j]
                if i + 1 <= k:
                    a[i, i + 1] = -(i + 1) * L
            out.append(mpmath.det(a) / (mpmath.factorial(k + 1) * L ** (k + 1)))
        return out


def _psd_profile(t, precision_bits):
    mins, status = [], []
    with mpmath.workprec(precision_bits):
        for size in range(len(t) // 2 + 1):
            h = mpmath.matrix([[t[i + j] for j in range(size + 1)] for i in range(size + 1)])
            ev = mpmath.eigsy(h, eigvals_only=True)
            lo = min(ev)
            scale = max(abs(x) for x in ev)
            mins.append(lo)
            if abs(lo) <= scale * mpmath.mpf(2) ** (-precision_bits // 2):
                status.append("indeterminate")
            else:
                status.append("psd" if lo > 0 else "not-psd")
    return mins, status


def akhiezer_krein(m, L: float, k_max: int | None = None, precision_bits: int = 512) -> AkhiezerKreinReport:
    c, _ = _c_and_err(m)
    top = 2 * (len(c) - 1) + 1
    k_max = min(12, top) if k_max is None else k_max
    if k_max > top:
        raise ValueError(f"t_{k_max} needs c up to c_{k_max // 2}")
    if not L > 0:
        raise ValueError("L must be positive")
    t = ak_t_values(c, L, k_max, precision_bits)
    mins, status = _psd_profile(t, precision_bits)
    fail = next((i for i, s in enumerate(status) if s == "not-psd"), None)
    if fail is not None:
        verdict = f"not non-negative definite (fails at truncation {fail})"
    elif "indeterminate" in status:
        verdict = "indeterminate at this precision"
    else:
        verdict = f"non-negative definite through truncation {len(status) - 1}"
    return AkhiezerKreinReport(float(L), t, mins, status, fail, verdict)


def default_L_grid(m) -> list:
    c, _ = _c_and_err(m)
    base = c[1] / c[0] if c[0] > 0 and len(c) > 1 and c[1] > 0 else 1.0
    return [float(2.0**j * base) for j in range(-6, 7)]


def akhiezer_krein_scan(m, Ls=None, k_max: int | None = None, precision_bits: int = 512) -> dict:
    """A-K reports over a grid of L; a bounded density is indicated if any L passes."""
    Ls = default_L_grid(m) if Ls is None else Ls
    reports = [akhiezer_krein(m, L, k_max, precision_bits) for L in Ls]
    passing = [r.L for r in reports if r.failing_order is None and "indeterminate" not in r.status_by_order]
    order = len(reports[0].status_by_order) - 1
    verdict = (f"bounded-density indication at order {order}" if passing
               else f"no bounded density indicated at order {order}")
    return {"reports": reports, "passing_L": passing, "verdict": verdict, "bounded_density": bool(passing)}


# -- Hausdorff -------------------------------------------------------------------

def hausdorff_moments(a: SpectralApproximant, k_max: int, precision_bits: int = 512):
    """mu_k = sum rho_i w_i^k and mu~_k = sum rho_i w_i^(k+1/2), w = u/(1+u)."""
    with mpmath.workprec(precision_bits):
        w = [x * x / (1 + x * x) for x in a.omega]
        if any(x >= 1 for x in w):  # pragma: no cover - u is finite
            raise AssertionError("Euler-transformed node outside [0, 1)")
        mu = [mpmath.fsum(r * x**k for r, x in zip(a.rho, w)) for k in range(k_max + 1)]
        half = mpmath.mpf(1) / 2
        mut = [mpmath.fsum(r * x ** (k + half) for r, x in zip(a.rho, w)) for k in range(k_max + 1)]
    return mu, mut


def hausdorff_mu_from_stieltjes(a: SpectralApproximant, k_max: int, precision_bits: int = 512):
    """mu_k = c_0 - d^(k-1)/dz^(k-1) (z^k F(z)) / (k-1)! at z = 1, F the Stieltjes transform."""
    with mpmath.workprec(precision_bits):
        c0 = mpmath.fsum(a.rho)
        u = [w * w for w in a.omega]

        def stieltjes(z):
            return mpmath.fsum(r / (z + x) for r, x in zip(a.rho, u))

        mu = [c0]
        for k in range(1, k_max + 1):
            d = mpmath.diff(lambda z: z**k * stieltjes(z), mpmath.mpf(1), k - 1)
            mu.append(c0 - d / mpmath.factorial(k - 1))
    return mu


def mu_tilde_binomial(mu, k_max: int, precision_bits: int = 512, tol: float = 1e-30):
    """mu~_k from the mu_l through sqrt(w) = sum_n C(1/2, n) 2^(-1/2) (2w - 1)^n.

    The series is summed until a term falls below ``tol`` relative to the
    partial sum or the supplied mu run out; the number of terms used for
    each k is returned alongside.  Convergence is slow when the measure
    puts weight near w = 0.
    """
    out, used = [], []
    with mpmath.workprec(precision_bits):
        mu = [mpmath.mpf(x) for x in mu]
        half = mpmath.mpf(1) / 2
        root_half = mpmath.sqrt(half)
        for k in range(k_max + 1):
            total = mpmath.mpf(0)
            n_used = 0
            for n in range(len(mu) - k):
                # int w^k (2w - 1)^n dnu
                inner = mpmath.fsum(mpmath.binomial(n, l) * 2**l * (-1) ** (n - l) * mu[k + l] for l in range(n + 1))
                term = mpmath.binomial(half, n) * root_half * inner
                total += term
                n_used = n + 1
                if n > 4 and abs(term) < tol * abs(total):
                    break
            out.append(total)
            used.append(n_used)
    return out, used


@dataclass
class HausdorffReport:
    mu: list
    mu_tilde: list
    lambda_sup: dict  # level k -> list of max_m (p+1)|lambda^k_{p,m}| for p = 1..p_max
    trend_slopes: dict  # level k -> growth exponent in p over the upper half of p
    verdicts: dict
    indeterminate: bool
    tables: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": [float(x) for x in self.mu],
            "mu_tilde": [float(x) for x in self.mu_tilde],
            "lambda_sup": {str(k): v for k, v in self.lambda_sup.items()},
            "trend_slopes": {str(k): v for k, v in self.trend_slopes.items()},
            "verdicts": {str(k): v for k, v in self.verdicts.items()},
            "indeterminate": self.indeterminate,
        }


def hausdorff_lambda_tables(mu_tilde, p_max: int, k_max: int, precision_bits: int = 512):
    """lambda^k_{p,m} as interval enclosures, {k: {p: {m: iv}}}.

    lambda^0_{p,m} = C(p,m) sum_j (-1)^j C(p-m,j) mu~_{m+j};
    lambda^k_{p,m} = (p+1)(lambda^{k-1}_{p,m} - lambda^{k-1}_{p,m-1}) for k <= m <= p-k.
    """
    if len(mu_tilde) < p_max + 1:
        raise ValueError(f"need mu~_0..mu~_{p_max}")
    iv = mpmath.iv
    old = iv.prec
    iv.prec = precision_bits
    try:
        with mpmath.workprec(precision_bits):
            mt = [iv.mpf(mpmath.mpf(x)) for x in mu_tilde[: p_max + 1]]
        tables = {0: {}}
        for p in range(p_max + 1):
            row = {}
            for m in range(p + 1):
                s = iv.mpf(0)
                for j in range(p - m + 1):
                    term = iv.mpf(comb(p - m, j)) * mt[m + j]
                    s = s + term if j % 2 == 0 else s - term
                row[m] = iv.mpf(comb(p, m)) * s
            tables[0][p] = row
        for k in range(1, k_max):
            tables[k] = {}
            for p in range(p_max + 1):
                prev = tables[k - 1][p]
                tables[k][p] = {m: (p + 1) * (prev[m] - prev[m - 1])
                                for m in range(k, p - k + 1) if m in prev and m - 1 in prev}
        return tables
    finally:
        iv.prec = old


def hausdorff_lambda(mu_tilde, p_max: int = 60, k_max: int = 2, precision_bits: int = 512,
                     mu=None, bound_exponent: float = 0.25) -> HausdorffReport:
    """Growth in p of sup_m (p+1)|lambda^k_{p,m}| for each derivative level k < k_max."""
    tables = hausdorff_lambda_tables(mu_tilde, p_max, k_max, precision_bits)
    sups, slopes, verdicts = {}, {}, {}
    indeterminate = False
    for k in range(k_max):
        seq, ps = [], []
        for p in range(1, p_max + 1):
            row = tables[k][p]
            if not row:
                continue
            vals = []
            for v in row.values():
                mid = mpmath.mpf(v.mid.a)
                width = mpmath.mpf(v.delta.b)
                if width > abs(mid) and width > mpmath.mpf(2) ** (-precision_bits // 2):
                    indeterminate = True
                vals.append(abs(mid))
            seq.append(float((p + 1) * max(vals)))
            ps.append(p)
        sups[k] = seq
        half = len(ps) // 2
        slope = _fit_exponent(ps[half:], seq[half:])
        slopes[k] = slope
        verdicts[k] = (f"bounded indication (growth exponent {slope:.3f}) at p <= {p_max}"
                       if slope < bound_exponent else
                       f"unbounded indication (growth exponent {slope:.3f}) at p <= {p_max}")
    return HausdorffReport(list(mu or []), list(mu_tilde[: p_max + 1]), sups, slopes, verdicts, indeterminate, tables)


# -- root test ---------------------------------------------------------------------

@dataclass
class RootTestReport:
    r: list  # c_n^(1/n), n >= 1
    r_normalized: list  # (c_n / c_0)^(1/n), used for the verdict
    r_stderr: list
    bounded: bool
    D_fit: float
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


def root_test(m, threshold: float = float("inf"), n_sigma: float = 3.0) -> RootTestReport:
    """n-th root growth of the normalised coefficients.

    ``bounded`` when r_n does not increase (beyond ``n_sigma`` standard errors)
    over the upper half of the available orders and stays below ``threshold``.
    D is fitted from c_n ~ c_0 D^n (2n)! over the same orders.
    """
    c, err = _c_and_err(m)
    if not c[0] > 0:
        raise ValueError("c_0 must be positive")
    ns = np.arange(1, len(c))
    r_raw = np.maximum(c[1:], 0.0) ** (1.0 / np.maximum(ns, 1))
    ratio = c[1:] / c[0]
    r = np.where(ratio > 0, ratio ** (1.0 / np.maximum(ns, 1)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.sqrt((err[1:] / np.where(c[1:] > 0, c[1:], 1)) ** 2 + (err[0] / c[0]) ** 2)
    r_err = r * rel / ns
    tail = slice(len(ns) // 2, None)
    rt, et = r[tail], r_err[tail]
    rises = np.diff(rt) > n_sigma * np.sqrt(et[1:] ** 2 + et[:-1] ** 2) + 1e-9 * rt[:-1]
    bounded = bool(not rises.any() and (len(rt) == 0 or rt.max() <= threshold))
    pos = ratio[tail] > 0
    if pos.any():
        nt = ns[tail][pos]
        logd = (np.log(ratio[tail][pos]) - np.array([lgamma(2 * n + 1) for n in nt])) / nt
        d_fit = float(np.exp(logd.mean()))
    else:
        d_fit = 0.0
    verdict = (f"bounded indication at order {ns[-1] if len(ns) else 0}" if bounded
               else f"unbounded indication at order {ns[-1]}; c_n ~ D^n (2n)! with D ~ {d_fit:.4g}")
    return RootTestReport([float(x) for x in r_raw], [float(x) for x in r], [float(x) for x in r_err], bounded, d_fit, verdict)


# -- a-priori polynomials -------------------------------------------------------------

@dataclass
class AprioriReport:
    entries: list  # dicts with n, l, which, minimum, argmin, tol, passed
    passed: bool

    def to_dict(self) -> dict:
        return {"entries": self.entries, "passed": self.passed}

    def failures(self):
        return [e for e in self.entries if not e["passed"]]


def apriori_coefficients(c, n: int, l: int, which: str):
    """Signed coefficients (ascending powers of y) of P_n^l or Q_n^l, as Fractions."""
    a = [Fraction(float(c[k + l])) / factorial(2 * k) for k in range(2 * n + 2) if k + l < len(c)]
    if which == "P":
        return [2 * a[0]] + [(-1) ** k * a[k] for k in range(1, 2 * n + 1)]
    return [(-1) ** k * a[k + 1] for k in range(2 * n + 1)]


def _global_min_nonneg(coeffs):
    """Certified minimum over y >= 0 of an exact rational polynomial (ascending coefficients)."""
    import sympy

    y = sympy.Symbol("y")
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    if len(coeffs) > 1 and coeffs[-1] < 0:
        return float("-inf"), float("inf")
    poly = sympy.Poly(list(reversed([sympy.Rational(x.numerator, x.denominator) for x in coeffs])), y, domain="QQ")
    cands = [sympy.Rational(0)]
    deriv = poly.diff(y)
    if deriv.degree() > 0:
        for (lo, hi), _ in deriv.intervals(eps=sympy.Rational(1, 10**30)):
            if hi >= 0:
                cands.append(max(sympy.Rational(0), (lo + hi) / 2))
    vals = [(poly.eval(x), x) for x in cands]
    vmin, arg = min(vals, key=lambda t: t[0])
    return float(vmin), float(arg)


def apriori_polynomials(m, n_max: int, l_max: int, n_sigma: float = 3.0) -> AprioriReport:
    """Non-negativity on y >= 0 of P_n^l and Q_n^l built from a_k^l = c_{k+l}/(2k)!."""
    c, err = _c_and_err(m)
    if 2 * n_max + l_max + 1 > len(c) - 1:
        raise ValueError(f"need c up to c_{2 * n_max + l_max + 1}")
    entries = []
    for n in range(n_max + 1):
        for l in range(l_max + 1):
            for which in ("P", "Q"):
                coeffs = apriori_coefficients(c, n, l, which)
                vmin, y0 = _global_min_nonneg(coeffs)
                if np.isfinite(y0):
                    shift = 1 if which == "Q" else 0
                    sig = sum(float(err[k + l + shift]) / factorial(2 * (k + shift)) * y0**k
                              for k in range(len(coeffs)))
                    size = sum(abs(float(x)) * y0**k for k, x in enumerate(coeffs))
                    tol = n_sigma * sig + 1e-12 * size
                else:
                    tol = 0.0
                entries.append({"n": n, "l": l, "which": which, "minimum": vmin, "argmin": y0,
                                "tol": tol, "passed": bool(vmin >= -tol)})
    return AprioriReport(entries, all(e["passed"] for e in entries))


# -- combined report ------------------------------------------------------------------

def criteria_report(m=None, approximant=None, *, mu_tilde=None, k_max_ak: int | None = None, p_max: int = 60,
                    lambda_levels: int = 2, precision_bits: int = 512, apriori_n: int | None = None) -> dict:
    """Run every criterion the inputs allow and collect JSON-ready results.

    ``m`` feeds Akhiezer-Krein, the root test and the a-priori polynomials;
    the Hausdorff criterion uses ``mu_tilde`` when given, otherwise the
    moments of ``approximant``.
    """
    out = {}
    if m is not None:
        c, _ = _c_and_err(m)
        scan = akhiezer_krein_scan(m, k_max=k_max_ak, precision_bits=precision_bits)
        out["akhiezer_krein"] = {
            "inputs": {"L_grid": [r.L for r in scan["reports"]], "k_max": len(scan["reports"][0].t_values) - 1},
            "reports": [r.to_dict() for r in scan["reports"]],
            "passing_L": scan["passing_L"],
            "verdict": scan["verdict"],
        }
        out["root_test"] = root_test(m).to_dict()
        top = len(c) - 1
        n_ap = max(0, (top - 1) // 2) if apriori_n is None else apriori_n
        l_ap = max(0, top - 1 - 2 * n_ap)
        out["apriori"] = {"inputs": {"n_max": n_ap, "l_max": l_ap}, **apriori_polynomials(m, n_ap, l_ap).to_dict()}
    source = None
    if mu_tilde is None and approximant is not None:
        mu, mu_tilde = hausdorff_moments(approximant, p_max + 1, precision_bits)
        source = f"atomic approximant of order {approximant.order}"
    elif mu_tilde is not None:
        mu, source = None, "supplied mu~"
    if mu_tilde is not None:
        rep = hausdorff_lambda(mu_tilde, p_max, lambda_levels, precision_bits, mu=mu)
        out["hausdorff"] = {"inputs": {"p_max": p_max, "levels": lambda_levels, "source": source}, **rep.to_dict()}
    return out
