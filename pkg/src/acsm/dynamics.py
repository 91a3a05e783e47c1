"""Molecular-dynamics verification of the moment-based predictions.

Ensembles of Gibbs initial conditions are integrated with a symplectic
scheme and time autocorrelations are averaged over the ensemble.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import fpu_model as fm
from .moment_engine import DEFAULT_BLOCKS, _block_slices, jackknife_stderr

# fourth-order symplectic composition of three Verlet substeps
_CBRT2 = 2.0 ** (1.0 / 3.0)
_YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


class IntegratorError(RuntimeError):
    """Raised when a run violates the stability or energy-drift requirements."""

    def __init__(self, msg, drift=None, suggested_dt=None):
        super().__init__(msg)
        self.drift = drift
        self.suggested_dt = suggested_dt


class AlignmentError(ValueError):
    """A requested time is not reachable in whole steps."""


def default_dt(model: fm.ChainModel) -> float:
    # keeps the Verlet energy oscillation, about (dt*omega)^2/8 per mode, under 1e-6
    return 1e-3 / model.omega_max


@dataclass
class Trajectory:
    q0: np.ndarray
    p0: np.ndarray
    dt: float
    n_steps: int
    stride: int
    times: np.ndarray
    values: dict  # observable name -> (n_stored, ...) array
    max_drift: float
    drift_bound: float
    q: np.ndarray  # final state
    p: np.ndarray
    scheme: str = "verlet"


def _state(x, p=None):
    if hasattr(x, "q") and hasattr(x, "p"):
        return np.array(x.q, dtype=float), np.array(x.p, dtype=float)
    return np.array(x, dtype=float), np.array(p, dtype=float)


def _verlet(params, q, p, f, h):
    p = p + 0.5 * h * f
    q = q + h * p
    f = fm.force(params, q)
    p = p + 0.5 * h * f
    return q, p, f


def integrate(model: fm.ChainModel, x, dt: float | None = None, n_steps: int = 1, stride: int = 1, p=None,
              observables=(), drift_bound: float = 1e-6, scheme: str = "verlet") -> Trajectory:
    """Integrate a batch of states with velocity Verlet (or its 4th-order composition).

    ``x`` is a PhasePoint, a SampleSet or a position array of shape (..., N)
    with ``p`` alongside.  A negative ``dt`` runs the flow backwards.
    Observables are recorded every ``stride`` steps, starting at t = 0.
    The relative energy drift |H(t) - H(0)| / H(0) is checked at the same
    points; exceeding ``drift_bound`` raises IntegratorError with a suggested
    step.
    """
    dt = default_dt(model) if dt is None else float(dt)
    if dt == 0 or not np.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    if abs(dt) * model.omega_max >= 0.5:
        raise IntegratorError(f"|dt|*omega_max = {abs(dt) * model.omega_max:.3g} is not below 0.5",
                              suggested_dt=np.copysign(0.25 / model.omega_max, dt))
    if n_steps < 0 or stride < 1:
        raise ValueError("n_steps must be >= 0 and stride >= 1")
    if scheme not in ("verlet", "yoshida4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    q, pp = _state(x, p)
    q0, p0 = q.copy(), pp.copy()
    params = model.params
    h0 = fm.hamiltonian(model, q, pp)
    scale = np.where(np.abs(h0) > 0, np.abs(h0), 1.0)
    f = fm.force(params, q)
    subs = (1.0,) if scheme == "verlet" else _YOSHIDA

    rec_steps = list(range(0, n_steps + 1, stride))
    values = {getattr(o, "name", str(i)): [] for i, o in enumerate(observables)}
    names = list(values)
    max_drift = 0.0

    def record():
        nonlocal max_drift
        for name, obs in zip(names, observables):
            values[name].append(np.asarray(obs.value(model, q, pp), dtype=float))
        drift = float(np.max(np.abs(fm.hamiltonian(model, q, pp) - h0) / scale))
        max_drift = max(max_drift, drift)
        if drift > drift_bound:
            order = 2 if scheme == "verlet" else 4
            suggest = dt * 0.8 * (drift_bound / drift) ** (1.0 / order)
            raise IntegratorError(
                f"relative energy drift {drift:.3g} exceeds {drift_bound:g} at step {step} (dt={dt:g}); "
                f"try dt={suggest:.3g}", drift=drift, suggested_dt=suggest)

    step = 0
    record()
    for step in range(1, n_steps + 1):
        for c in subs:
            q, pp, f = _verlet(params, q, pp, f, c * dt)
        if step % stride == 0:
            record()
    return Trajectory(q0, p0, dt, n_steps, stride, dt * np.array(rec_steps, dtype=float),
                      {k: np.array(v) for k, v in values.items()}, max_drift, drift_bound, q, pp, scheme)


# -- ensemble correlations --------------------------------------------------------

@dataclass
class EmpiricalCorrelation:
    times: np.ndarray
    values: np.ndarray  # C(t)
    stderr: np.ndarray
    ensemble_size: int
    decrement: np.ndarray = None  # 0.5 * mean (f_t - f)^2
    decrement_stderr: np.ndarray = None
    variance: float = 0.0
    name: str = ""
    replicas: np.ndarray = field(default=None, repr=False)  # jackknife C(t), (blocks, len(times))


def step_indices(t_grid, dt: float) -> np.ndarray:
    """Whole-step indices for each time; AlignmentError if a time falls between steps."""
    t = np.asarray(t_grid, dtype=float)
    k = np.rint(t / dt)
    bad = np.abs(k * dt - t) > 1e-9 * np.maximum(1.0, np.abs(t))
    if bad.any():
        raise AlignmentError(f"times {t[bad].tolist()} are not multiples of dt={dt:g}")
    if (k < 0).any():
        raise AlignmentError("times must be non-negative (use a negative dt for backward runs)")
    return k.astype(int)


def _cov(a, b):
    """Covariance along the last axis with ddof=1; a is (T, S), b is (S,)."""
    s = b.shape[-1]
    return ((a - a.mean(axis=-1, keepdims=True)) * (b - b.mean())).sum(axis=-1) / (s - 1)


def _ensemble_run(model, sample, observables, t_grid, dt, drift_bound, scheme):
    dt = default_dt(model) if dt is None else dt
    k = step_indices(t_grid, abs(dt))
    stride = int(np.gcd.reduce(k[k > 0])) if (k > 0).any() else 1
    n_steps = int(k.max()) if len(k) else 0
    traj = integrate(model, sample, dt, n_steps, stride, observables=observables,
                     drift_bound=drift_bound, scheme=scheme)
    rows = k // stride
    return traj, {n: v[rows] for n, v in traj.values.items()}


def _correlation_from_series(times, ft, g, blocks, name=""):
    """C(t) = cov(f_t, g), with jackknife over contiguous blocks of initial conditions."""
    s = g.shape[-1]
    if s < 2 * blocks:
        raise ValueError(f"{s} initial conditions are too few for {blocks} jackknife blocks")
    c = _cov(ft, g)
    dec = 0.5 * ((ft - g) ** 2).mean(axis=-1)
    reps, dreps = [], []
    for sl in _block_slices(s, blocks):
        keep = np.ones(s, dtype=bool)
        keep[sl] = False
        reps.append(_cov(ft[:, keep], g[keep]))
        dreps.append(0.5 * ((ft[:, keep] - g[keep]) ** 2).mean(axis=-1))
    reps, dreps = np.array(reps), np.array(dreps)
    return EmpiricalCorrelation(np.asarray(times, float), c, jackknife_stderr(reps), s, dec,
                                jackknife_stderr(dreps), float(np.var(g, ddof=1)), name, reps)


def empirical_autocorrelation(model, sample, observable, t_grid, dt: float | None = None,
                              blocks: int = DEFAULT_BLOCKS, drift_bound: float = 1e-6,
                              scheme: str = "verlet") -> EmpiricalCorrelation:
    """Ensemble estimate of C_f(t) over Gibbs initial conditions.

    C(0) is the sample variance of f (ddof=1).  The decrement
    0.5 * mean (f_t - f)^2 is returned alongside; under an invariant
    measure it equals C(0) - C(t).
    """
    _, series = _ensemble_run(model, sample, [observable], t_grid, dt, drift_bound, scheme)
    ft = next(iter(series.values()))
    return _correlation_from_series(t_grid, ft, ft[0], blocks, getattr(observable, "name", ""))


def empirical_cross_correlation(model, sample, f, g, t_grid, dt: float | None = None,
                                blocks: int = DEFAULT_BLOCKS, drift_bound: float = 1e-6,
                                scheme: str = "verlet") -> EmpiricalCorrelation:
    """C_{f,g}(t) = cov(f_t, g); a negative ``dt`` evaluates it at -t_grid."""
    _, series = _ensemble_run(model, sample, [_Named(f, "f"), _Named(g, "g")], t_grid, dt, drift_bound, scheme)
    ev = _correlation_from_series(t_grid, series["f"], series["g"][0], blocks, "cross")
    if dt is not None and dt < 0:
        ev.times = -ev.times
    return ev


@dataclass(frozen=True)
class _Named:
    obs: object
    name: str

    def value(self, model, q, p):
        return self.obs.value(model, q, p)


# -- truncation bounds ------------------------------------------------------------

def partial_sums(c, t, orders):
    """S_n(t) = c_0 + sum_{k=1..n} (-1)^k c_k t^(2k) / (2k)! for each n in ``orders``."""
    t = np.asarray(t, dtype=float)
    out = {}
    for n in orders:
        s = np.full_like(t, float(c[0]))
        for k in range(1, n + 1):
            s = s + (-1) ** k * c[k] * t ** (2 * k) / factorial(2 * k)
        out[n] = s
    return out


def _partial_sum_stderr(err, t, n):
    t = np.asarray(t, dtype=float)
    var = np.full_like(t, float(err[0]) ** 2)
    for k in range(1, n + 1):
        var = var + (err[k] * t ** (2 * k) / factorial(2 * k)) ** 2
    return np.sqrt(var)


@dataclass
class TruncationReport:
    times: np.ndarray
    orders: list
    sums: dict
    holds: dict  # n -> bool array over times
    t_star: float
    n_sigma: float

    @property
    def all_hold(self) -> bool:
        return bool(all(v.all() for v in self.holds.values()))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "orders": list(self.orders), "t_star": self.t_star,
                "holds": {str(k): v.tolist() for k, v in self.holds.items()}}


def truncation_bounds_check(emp: EmpiricalCorrelation, m, orders, n_sigma: float = 3.0) -> TruncationReport:
    """Even truncations bound C(t) from above and odd ones from below.

    The remainder after n terms carries the sign (-1)^(n+1), so S_n >= C
    for even n (n = 0 is |C(t)| <= C(0)) and S_n <= C for odd n.  The
    tolerance combines the correlation stderr with the moment stderr
    propagated through the partial sum.
    """
    orders = list(orders)
    if max(orders) > m.max_n:
        raise ValueError(f"moments available to order {m.max_n}, need {max(orders)}")
    t = emp.times
    sums = partial_sums(m.c, t, orders)
    holds = {}
    for n in orders:
        sig = np.sqrt(emp.stderr**2 + _partial_sum_stderr(m.stderr, t, n) ** 2)
        if n % 2 == 0:
            holds[n] = sums[n] >= emp.values - n_sigma * sig
        else:
            holds[n] = sums[n] <= emp.values + n_sigma * sig
    ok = np.logical_and.reduce([holds[n] for n in orders])
    bad = np.flatnonzero(~ok)
    last = len(t) - 1 if len(bad) == 0 else bad[0] - 1
    t_star = float(t[last]) if last >= 0 else float("nan")
    return TruncationReport(t, orders, sums, holds, t_star, n_sigma)


def write_correlation_csv(path, emp: EmpiricalCorrelation, sums: dict | None = None, comment: str | None = None) -> None:
    sums = sums or {}
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["t", "C", "stderr"] + [f"S_{n}" for n in sums])
        for i, t in enumerate(emp.times):
            w.writerow([repr(float(t)), repr(float(emp.values[i])), repr(float(emp.stderr[i]))]
                       + [repr(float(s[i])) for s in sums.values()])


# -- correlated variables ---------------------------------------------------------

@dataclass
class CorrelatedReport:
    correlation: float
    epsilon: float
    bound: float  # (eps^2 + 2 eps) sigma_g^2
    times: np.ndarray = None
    difference: np.ndarray = None  # |C_g - C_ftilde|
    stderr: np.ndarray = None
    holds: bool = True
    skipped: bool = False
    n_sigma: float = 4.0

    def to_dict(self) -> dict:
        d = {"correlation": self.correlation, "epsilon": self.epsilon, "bound": self.bound,
             "holds": self.holds, "skipped": self.skipped}
        if not self.skipped:
            d.update(times=self.times.tolist(), difference=self.difference.tolist(), stderr=self.stderr.tolist())
        return d


def correlated_variables_check(model, sample, f, g, t_grid, dt: float | None = None,
                               blocks: int = DEFAULT_BLOCKS, n_sigma: float = 4.0,
                               drift_bound: float = 1e-6, scheme: str = "verlet") -> CorrelatedReport:
    """Compare C_g with the autocorrelation of the rescaled f it is strongly correlated with.

    With |corr(f, g)| = 1 - eps^2/2 and f~ = sign(corr) (sigma_g/sigma_f) f,
    |C_g(t) - C_f~(t)| <= (eps^2 + 2 eps) sigma_g^2 for all t.
    """
    q, p = _state(sample)
    fv, gv = f.value(model, q, p), g.value(model, q, p)
    corr = float(np.corrcoef(fv, gv)[0, 1])
    eps = float(np.sqrt(max(0.0, 2.0 * (1.0 - abs(corr)))))
    sg2 = float(np.var(gv, ddof=1))
    bound = (eps**2 + 2 * eps) * sg2
    if abs(corr) <= 0.5:
        return CorrelatedReport(corr, eps, bound, skipped=True, holds=False, n_sigma=n_sigma)
    _, series = _ensemble_run(model, sample, [_Named(f, "f"), _Named(g, "g")], t_grid, dt, drift_bound, scheme)
    ft, gt = series["f"], series["g"]
    s = ft.shape[-1]

    def diff(idx):
        a, b = ft[:, idx], gt[:, idx]
        ratio = np.var(b[0], ddof=1) / np.var(a[0], ddof=1)
        return _cov(b, b[0]) - ratio * _cov(a, a[0])

    d = diff(np.arange(s))
    reps = []
    for sl in _block_slices(s, blocks):
        keep = np.ones(s, dtype=bool)
        keep[sl] = False
        reps.append(diff(np.flatnonzero(keep)))
    se = jackknife_stderr(np.array(reps))
    holds = bool(np.all(np.abs(d) <= bound + n_sigma * se))
    return CorrelatedReport(corr, eps, bound, np.asarray(t_grid, float), np.abs(d), se, holds, False, n_sigma)
