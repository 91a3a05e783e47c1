import csv

import numpy as np
import pytest

from acsm import dynamics as dy
from acsm import fpu_model as fm
from acsm import gibbs_sampler as gs
from acsm import lie_derivatives as ld
from acsm import moment_engine as me
from acsm import observables as ob


def mode_coordinate(model, k, name):
    v = model.mode_vectors[:, k]
    return ob.Polynomial(tuple((float(v[i]), (("q", i + 1, 1),)) for i in range(model.n)), name)


@pytest.fixture(scope="module")
def harmonic_run():
    model = fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 0.5))
    s = gs.sample_set(model, 4000, 1)
    t = np.arange(0, 13) * 0.25
    emp = dy.empirical_autocorrelation(model, s, ob.position(1), t, dt=1e-3)
    return model, s, emp


# -- integrator


def test_harmonic_verlet_phase_lag():
    model = fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 1.0))
    dt = 1e-3
    n = int(round(20 * np.pi / dt))
    tr = dy.integrate(model, [1.0], dt, n, stride=n, p=[0.0], observables=[ob.position(1)])
    t = n * dt
    err = abs(tr.values["q1"][-1] - np.cos(t))
    # velocity Verlet advances the phase with omega (1 + dt^2 / 24 + ...)
    lag = t * dt**2 / 24
    assert err <= 1.1 * lag
    assert tr.max_drift < 1e-6


def test_harmonic_fourth_order_matches_cosine():
    model = fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 1.0))
    dt = 1e-3
    n = int(round(20 * np.pi / dt))
    stride = n // 50
    tr = dy.integrate(model, [1.0], dt, n, stride=stride, p=[0.0], observables=[ob.position(1)], scheme="yoshida4")
    assert np.max(np.abs(tr.values["q1"] - np.cos(tr.times))) < 1e-6


def test_time_reversal():
    model = fm.build_chain(fm.FpuParams(40, 0.25, 0.25, 0.1))
    s = gs.sample_set(model, 4, 9)
    dt = 0.05 / model.omega_max
    fwd = dy.integrate(model, s, dt, 2000, stride=2000, drift_bound=1e-3)
    back = dy.integrate(model, fwd.q, -dt, 2000, stride=2000, p=fwd.p, drift_bound=1e-3)
    np.testing.assert_allclose(back.q, s.q, atol=1e-10)
    np.testing.assert_allclose(back.p, s.p, atol=1e-10)


def test_jet_consistency():
    model = fm.build_chain(fm.FpuParams(8, 0.25, 0.25, 1.0))
    x = gs.sample_set(model, 1, 4)[0]
    qj, _ = ld.trajectory_jet(model, x, 8)
    errs = []
    for t in (0.4, 0.2):
        steps = 400
        tr = dy.integrate(model, x, t / steps, steps, stride=steps, scheme="yoshida4")
        approx = sum(qj[m] * t**m for m in range(9))
        errs.append(np.max(np.abs(tr.q - approx)))
    # the remainder is O(t^9): halving t shrinks it by about 2^9
    assert 2**9 / 3 < errs[0] / errs[1] < 2**9 * 3


def test_step_too_large_rejected():
    model = fm.build_chain(fm.FpuParams(4, 0.25, 0.25, 1.0))
    with pytest.raises(dy.IntegratorError):
        dy.integrate(model, np.zeros(4), 0.6 / model.omega_max, 1, p=np.ones(4))


def test_drift_rejection_suggests_smaller_step():
    model = fm.build_chain(fm.FpuParams(8, 0.25, 0.25, 1.0))
    s = gs.sample_set(model, 8, 2)
    dt = 0.2 / model.omega_max
    with pytest.raises(dy.IntegratorError) as exc:
        dy.integrate(model, s, dt, 500, stride=10, drift_bound=1e-9)
    assert exc.value.drift > 1e-9
    assert 0 < exc.value.suggested_dt < dt


def test_misaligned_grid():
    with pytest.raises(dy.AlignmentError):
        dy.step_indices([0.0, 0.15], 0.1)
    with pytest.raises(dy.AlignmentError):
        dy.step_indices([-0.2], 0.1)
    assert list(dy.step_indices([0.0, 0.3, 1.2], 0.1)) == [0, 3, 12]


# -- empirical correlations


def test_c0_is_sample_variance(harmonic_run):
    model, s, emp = harmonic_run
    assert emp.values[0] == pytest.approx(np.var(s.q[:, 0], ddof=1), rel=1e-12)
    assert emp.ensemble_size == len(s)


def test_harmonic_autocorrelation_is_cosine(harmonic_run):
    _, _, emp = harmonic_run
    expect = 0.5 * np.cos(emp.times)
    assert np.all(np.abs(emp.values - expect) <= 3 * emp.stderr)
    assert np.all(np.abs(emp.values) <= emp.values[0] + 3 * emp.stderr)


def test_decrement_identity(harmonic_run):
    _, _, emp = harmonic_run
    lhs = emp.values[0] - emp.values
    se = np.sqrt(emp.stderr**2 + emp.stderr[0] ** 2 + emp.decrement_stderr**2)
    assert np.all(np.abs(lhs - emp.decrement) <= 3 * se + 1e-15)


def test_harmonic_energy_fraction_is_constant():
    model = fm.build_chain(fm.FpuParams(10, 0.0, 0.0, 1.0))
    s = gs.sample_set(model, 2000, 6)
    f = ob.Etilde(gs.estimate_projection(model, s))
    emp = dy.empirical_autocorrelation(model, s, f, [0.0, 1.0, 2.0, 4.0], dt=1e-3)
    c = me.estimate_moments(model, s, f, 0)
    assert np.all(np.abs(emp.values - c.c[0]) <= 3 * emp.stderr + 1e-5 * c.c[0])


def test_stationarity_cross_correlation():
    model = fm.build_chain(fm.FpuParams(6, 0.25, 0.25, 0.5))
    s = gs.sample_set(model, 3000, 8)
    t = [0.0, 0.5, 1.0, 1.5]
    E, K = ob.EnergyFraction(), ob.HalfKinetic()
    fwd = dy.empirical_cross_correlation(model, s, E, K, t, dt=1e-3)
    back = dy.empirical_cross_correlation(model, s, K, E, t, dt=-1e-3)
    np.testing.assert_allclose(back.times, -np.asarray(t))
    se = np.sqrt(fwd.stderr**2 + back.stderr**2)
    assert np.all(np.abs(fwd.values - back.values) <= 4 * se)


def test_too_few_initial_conditions():
    model = fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 1.0))
    s = gs.sample_set(model, 10, 1)
    with pytest.raises(ValueError):
        dy.empirical_autocorrelation(model, s, ob.position(1), [0.0, 0.1], dt=1e-3)


# -- truncation bounds


def test_partial_sums_of_cosine():
    t = np.linspace(0, 3, 31)
    sums = dy.partial_sums(np.ones(6), t, range(6))
    for n in range(6):
        if n % 2 == 0:
            assert np.all(sums[n] >= np.cos(t) - 1e-15)
        else:
            assert np.all(sums[n] <= np.cos(t) + 1e-15)
            # strictly below once the remainder is resolvable: odd truncations are lower bounds only
            far = t >= 0.5
            assert np.all(sums[n][far] < np.cos(t[far]))


def test_harmonic_sandwich(harmonic_run, tmp_path):
    model, s, emp = harmonic_run
    m = me.estimate_moments(model, s, ob.position(1), 4)
    rep = dy.truncation_bounds_check(emp, m, [0, 1, 2, 3])
    assert rep.all_hold
    assert rep.t_star == emp.times[-1]
    path = tmp_path / "c.csv"
    dy.write_correlation_csv(path, emp, rep.sums, "harmonic")
    rows = list(csv.reader(l for l in open(path) if not l.startswith("#")))
    assert rows[0] == ["t", "C", "stderr", "S_0", "S_1", "S_2", "S_3"]
    assert len(rows) == len(emp.times) + 1


def test_sandwich_detects_wrong_moments(harmonic_run):
    model, s, emp = harmonic_run
    m = me.MomentSequence.exact([0.5, 0.05, 0.5, 0.5])
    rep = dy.truncation_bounds_check(emp, m, [0, 1])
    assert not rep.all_hold
    assert rep.t_star < emp.times[-1]


def test_fpu_sandwich():
    model = fm.build_chain(fm.FpuParams(40, 0.25, 0.25, 1e-3))
    s = gs.sample_set(model, 2000, 11)
    f = ob.Etilde(gs.estimate_projection(model, s))
    t = np.arange(0, 11) * 0.2
    emp = dy.empirical_autocorrelation(model, s, f, t, dt=1e-3)
    m = me.estimate_moments(model, s, f, 3)
    rep = dy.truncation_bounds_check(emp, m, [0, 1, 2, 3])
    assert rep.t_star > 0
    assert rep.holds[0].all()


# -- correlated variables


def test_identical_variables():
    model = fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 0.5))
    s = gs.sample_set(model, 400, 3)
    q = ob.position(1)
    rep = dy.correlated_variables_check(model, s, q, q, [0.0, 1.0], dt=1e-3)
    assert rep.epsilon == pytest.approx(0.0, abs=1e-7)
    assert np.max(rep.difference) < 1e-12
    assert rep.holds


def test_perturbed_variable():
    model = fm.build_chain(fm.FpuParams(3, 0.0, 0.0, 0.5))
    s = gs.sample_set(model, 3000, 4)
    f = mode_coordinate(model, 0, "Q0")
    h = mode_coordinate(model, 2, "Q2")
    delta = 0.1
    g = ob.Polynomial(f.terms + tuple((delta * a, mono) for a, mono in h.terms), "Q0+dQ2")
    rep = dy.correlated_variables_check(model, s, f, g, [0.0, 0.5, 1.0, 2.0], dt=1e-3)
    assert not rep.skipped
    assert rep.holds
    assert np.max(rep.difference) < rep.bound


def test_weak_correlation_skipped():
    model = fm.build_chain(fm.FpuParams(3, 0.0, 0.0, 0.5))
    s = gs.sample_set(model, 500, 4)
    rep = dy.correlated_variables_check(model, s, mode_coordinate(model, 0, "a"), mode_coordinate(model, 1, "b"), [0.0])
    assert rep.skipped


def test_energy_fraction_tracks_its_projection():
    model = fm.build_chain(fm.FpuParams(40, 0.25, 0.25, 1e-3))
    s = gs.sample_set(model, 2000, 12)
    E = ob.EnergyFraction()
    Et = ob.Etilde(gs.estimate_projection(model, s))
    rep = dy.correlated_variables_check(model, s, Et, E, [0.0, 0.5, 1.0], dt=1e-3)
    assert abs(rep.correlation) > 0.5
    assert rep.holds
