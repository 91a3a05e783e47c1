"""Temperature scans of FPU pole structure and the sech overlay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fpu_model as fm
from . import gibbs_sampler as gs
from .moment_engine import MomentSequence, estimate_moments
from .observables import make_observable
from .reference import calibrate_b, sech_moments
from .stieltjes import approximants_up_to, isolation_diagnostic

SCALES = {
    "desk": {"n_particles": 40, "temperatures": [1e-5, 1e-4, 1e-3, 1e-2], "n_samples": 100_000},
    "paper": {"n_particles": 40, "temperatures": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0], "n_samples": 1_000_000},
}


@dataclass
class PoleRun:
    temperature: float
    observable: str
    moments: MomentSequence
    approximants: list
    gate_error: Exception | None
    isolation: object = None
    projection: fm.ProjectionCoeffs | None = None

    @property
    def max_order(self) -> int:
        return self.approximants[-1].order if self.approximants else 0

    def dominant(self, order: int | None = None):
        """(omega, normalised residue) of the largest-residue atom at ``order`` (default: highest)."""
        a = self._at(order)
        i = int(np.argmax(a.rhos))
        return float(a.omegas[i]), float(a.normalized_rhos[i])

    def _at(self, order):
        if order is None:
            return self.approximants[-1]
        for a in self.approximants:
            if a.order == order:
                return a
        raise KeyError(f"order {order} not available (max {self.max_order})")


@dataclass
class PoleStudy:
    params: dict
    n_samples: int
    seed: int
    runs: dict = field(default_factory=dict)  # (observable, T) -> PoleRun

    def series(self, observable: str) -> list:
        return [r for (o, _), r in sorted(self.runs.items(), key=lambda kv: kv[0][1]) if o == observable]


def pole_run(model, sample, observable: str, order: int, precision_bits: int = 512, threads: int = 1,
             proj=None) -> PoleRun:
    if observable in ("Etilde", "Ktilde") and proj is None:
        proj = gs.estimate_projection(model, sample)
    obs = make_observable(observable, model, proj)
    m = estimate_moments(model, sample, obs, 2 * order - 1, threads=threads)
    aps, err = approximants_up_to(m, order, precision_bits)
    iso = isolation_diagnostic(aps) if len(aps) >= 2 or (aps and aps[-1].order == 1) else None
    return PoleRun(model.params.temperature, observable, m, aps, err, iso, proj)


def pole_study(temperatures, observables=("Etilde",), n_particles: int = 40, alpha: float = 0.25, beta: float = 0.25,
               n_samples: int = 100_000, seed: int = 1, order: int = 4, precision_bits: int = 512,
               threads: int = 1) -> PoleStudy:
    """Moments and approximants for each (observable, T), one Gibbs sample per temperature."""
    study = PoleStudy({"n_particles": n_particles, "alpha": alpha, "beta": beta}, n_samples, seed)
    for t in temperatures:
        model = fm.build_chain(fm.FpuParams(n_particles, alpha, beta, t))
        sample = gs.sample_set(model, n_samples, seed)
        proj = gs.estimate_projection(model, sample)
        for name in observables:
            study.runs[(name, t)] = pole_run(model, sample, name, order, precision_bits, threads, proj)
    return study


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def sech_overlay(run: PoleRun, orders=(3, 4), precision_bits: int = 512):
    """Calibrated sech approximants next to the observable's, plus first-gap comparisons.

    b is fixed so that both order-1 approximants share their pole, and the
    sech moments are rescaled to the observable's c_0.  The gap between the
    two lowest poles is measured on a log axis, log(omega_2 / omega_1); the
    absolute gap omega_2 - omega_1 is reported too.
    """
    b = calibrate_b(run.moments)
    n_max = max(orders)
    s = sech_moments(b, 2 * n_max).as_moment_sequence().scaled(float(run.moments.c[0]))
    sech_aps, err = approximants_up_to(s, n_max, precision_bits)
    if err is not None:
        raise err
    out = {"b": b, "orders": {}}
    for n in orders:
        a_obs = run._at(n)
        a_sech = next(a for a in sech_aps if a.order == n)
        g_obs = float(np.log(a_obs.omegas[1] / a_obs.omegas[0]))
        g_sech = float(np.log(a_sech.omegas[1] / a_sech.omegas[0]))
        abs_obs = float(a_obs.omegas[1] - a_obs.omegas[0])
        abs_sech = float(a_sech.omegas[1] - a_sech.omegas[0])
        out["orders"][n] = {"observable": a_obs, "sech": a_sech, "gap_observable": g_obs, "gap_sech": g_sech,
                            "gap_ratio": g_obs / g_sech, "abs_gap_ratio": abs_obs / abs_sech}
    return out
