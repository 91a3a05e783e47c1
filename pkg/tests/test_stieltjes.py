import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsm import stieltjes as sj
from acsm.moment_engine import MomentSequence
from acsm.reference import sech_moments


def atomic_moments(omegas, rhos, count):
    return [float(sum(r * w ** (2 * m) for w, r in zip(omegas, rhos))) for m in range(count)]


def test_single_frequency():
    a = sj.quadrature_from_moments([3.0 * 1.5 ** (2 * m) for m in range(2)], 1)
    assert a.order == 1
    np.testing.assert_allclose(a.omegas, [1.5], rtol=1e-15)
    np.testing.assert_allclose(a.rhos, [3.0], rtol=1e-15)


def test_two_atom_recovery():
    c = atomic_moments([1.0, 2.0], [0.7, 0.3], 4)
    a = sj.quadrature_from_moments(c, 2)
    np.testing.assert_allclose(a.omegas, [1.0, 2.0], rtol=1e-12)
    np.testing.assert_allclose(a.rhos, [0.7, 0.3], rtol=1e-12)


def test_sech_order_four():
    a = sj.quadrature_from_moments(sech_moments(1.0, 8).c, 4)
    assert len(a.omegas) == 4
    assert np.all(a.omegas > 0) and np.all(a.rhos > 0)
    assert max(a.moment_residuals) < 1e-15
    # post hoc moment matching by direct summation
    for m in range(8):
        assert abs(a.moment(m) - sech_moments(1.0, 8).c[m]) <= 1e-15 * sech_moments(1.0, 8).c[m]


def test_gate_failure_reports_order():
    c = np.ones(4)
    c[2] = 0.99
    with pytest.raises(sj.MomentGateError) as exc:
        sj.quadrature_from_moments(c, 2)
    assert exc.value.max_order == 1
    assert exc.value.failing_order == 1
    aps, err = sj.approximants_up_to(c, 2)
    assert len(aps) == 1 and err is not None


def test_laplace_values():
    a = sj.quadrature_from_moments([2.0, 2.0 * 9.0], 1)
    assert sj.laplace_approximant(a, 3.0) == pytest.approx(2.0 / 6.0)  # rho / (2 omega)
    big = 1e7
    assert (big * sj.laplace_approximant(a, big)).real == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ZeroDivisionError):
        sj.laplace_approximant(a, 3j)


def test_asymptotic_reexpansion():
    c = sech_moments(1.0, 8).c
    a = sj.quadrature_from_moments(c, 4)
    with mpmath.workdps(60):
        s = mpmath.mpf(40)
        f = s * mpmath.fsum(r / (s * s + w * w) for w, r in zip(a.omega, a.rho))
        series = mpmath.fsum((-1) ** m * mpmath.mpf(c[m]) / s ** (2 * m + 1) for m in range(8))
        # first omitted term sets the size of the remainder
        assert abs(f - series) <= 2 * a.moment(8) / s**17


def test_sfraction_matches_stieltjes_transform():
    a = sj.quadrature_from_moments(sech_moments(0.7, 10).c, 5)
    with mpmath.workprec(a.precision_bits):
        for z in (mpmath.mpf("0.3"), mpmath.mpf(2), mpmath.mpf(17)):
            direct = mpmath.fsum(r / (z + w * w) for w, r in zip(a.omega, a.rho))
            assert abs(sj.evaluate_sfraction(a.sfraction, z) - direct) <= mpmath.mpf(10) ** -40 * abs(direct)


def test_reconstruction_basics():
    a = sj.quadrature_from_moments([0.5, 0.5 * 1.3**2], 1)
    t = np.linspace(0, 20, 101)
    np.testing.assert_allclose(sj.correlation_reconstruction(a, t), 0.5 * np.cos(1.3 * t), atol=1e-14)
    b = sj.quadrature_from_moments(sech_moments(1.0, 8).c, 4)
    assert sj.correlation_reconstruction(b, 0.0) == pytest.approx(1.0, rel=1e-14)
    assert np.all(np.abs(sj.correlation_reconstruction(b, np.linspace(0, 50, 500))) <= 1.0 + 1e-14)


def test_reconstruction_error_shrinks_with_order():
    c = sech_moments(1.0, 20).c
    t = np.linspace(0, 2, 201)
    errs = [np.max(np.abs(sj.correlation_reconstruction(sj.quadrature_from_moments(c, n), t) - 1 / np.cosh(t)))
            for n in (4, 6, 8)]
    assert errs[0] > errs[1] > errs[2]


def test_isolation_single_atom_and_sech():
    one = sj.quadrature_from_moments([1.0, 4.0], 1)
    assert sj.isolation_diagnostic([one]).verdict == sj.ISOLATION
    aps, err = sj.approximants_up_to(sech_moments(1.0, 8).c, 4)
    assert err is None
    rep = sj.isolation_diagnostic(aps)
    assert rep.verdict == sj.DENSE
    assert rep.dominant_residue_fraction[-1] < 0.99


def test_isolation_dominant_atom():
    c = atomic_moments([0.3, 1.5, 2.5, 3.0], [0.995, 0.002, 0.002, 0.001], 8)
    aps, _ = sj.approximants_up_to(c, 4)
    rep = sj.isolation_diagnostic(aps)
    assert rep.verdict == sj.ISOLATION
    assert rep.dominant_residue_fraction[-1] > 0.99


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 5.0), st.floats(0.05, 1.0)), min_size=4, max_size=6,
                unique_by=lambda t: round(t[0], 2)))
def test_interlacing_and_positivity(atoms):
    w, r = zip(*atoms)
    if min(np.diff(sorted(w))) < 0.05:
        return
    c = atomic_moments(w, r, 6)
    u = [sj.quadrature_from_moments(c, n).nodes_u for n in (1, 2, 3)]
    for lo, hi in zip(u, u[1:]):
        assert np.all(hi > 0)
        # each node of the lower order lies strictly between consecutive higher-order nodes
        for k, x in enumerate(lo):
            assert hi[k] < x < hi[k + 1]


def test_pole_csv_round_trip(tmp_path):
    aps, _ = sj.approximants_up_to(atomic_moments([1.0, 2.0], [0.7, 0.3], 4), 2)
    path = tmp_path / "p.csv"
    sj.write_pole_csv(path, sj.pole_rows(aps), "note")
    back = sj.read_pole_csv(path)
    assert [a.order for a in back] == [1, 2]
    np.testing.assert_allclose(back[1].omegas, aps[1].omegas, rtol=1e-16)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        sj.read_pole_csv(tmp_path / "bad.csv")


def test_moment_sequence_input_and_precision_env(monkeypatch):
    monkeypatch.setenv("ACSM_PRECISION_BITS", "256")
    assert sj.default_precision() == 256
    m = MomentSequence.exact(atomic_moments([1.0, 2.0], [0.7, 0.3], 4))
    a = sj.quadrature_from_moments(m, 2)
    assert a.precision_bits >= 256
