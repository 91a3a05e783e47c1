import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acsm import fpu_model as fm
from acsm import gibbs_sampler as gs


def test_params_validation():
    with pytest.raises(ValueError):
        fm.FpuParams(0)
    with pytest.raises(ValueError):
        fm.FpuParams(4, temperature=0.0)
    with pytest.raises(ValueError):
        fm.FpuParams(4, alpha=0.3, beta=0.0)
    p = fm.FpuParams(4, 0.0, 0.0, 2.0)
    assert fm.FpuParams.from_dict(p.to_dict()) == p


def test_single_particle_frequency():
    m = fm.build_chain(fm.FpuParams(1))
    np.testing.assert_allclose(m.mode_frequencies, [1.0])
    assert m.low_mode_count == 1


def test_two_particles_closed_form():
    m = fm.build_chain(fm.FpuParams(2))
    lam = np.array([(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2])
    np.testing.assert_allclose(m.mode_frequencies, np.sqrt(lam), rtol=1e-14)
    np.testing.assert_allclose(m.mode_frequencies, [0.618034, 1.618034], atol=1e-6)


def test_forty_particle_band(fpu40):
    w = fpu40.mode_frequencies
    assert len(w) == 40
    assert np.all((w > 0) & (w < 2))
    assert np.all(np.diff(w) > 0)
    assert fpu40.low_mode_count == 21


def test_modes_orthonormal(fpu40):
    v = fpu40.mode_vectors
    np.testing.assert_allclose(v.T @ v, np.eye(40), atol=1e-12)
    a = fm.coupling_matrix(40)
    np.testing.assert_allclose(a @ v, v * fpu40.mode_frequencies**2, atol=1e-12)


def test_hamiltonian_examples():
    m = fm.build_chain(fm.FpuParams(1, 0.25, 0.25))
    assert fm.hamiltonian(m, np.zeros(1), np.zeros(1)) == 0.0
    x = fm.PhasePoint.from_bonds(np.array([1.0]), np.zeros(1))
    assert fm.hamiltonian(m, x) == pytest.approx(0.5 + 1 / 12 + 1 / 16, rel=1e-15)


def test_hamiltonian_term_by_term(rng, fpu40):
    q, p = rng.normal(size=(2, 7, 40))
    b = fm.bonds_from_positions(q)
    a, bt = fpu40.params.alpha, fpu40.params.beta
    ref = 0.5 * (p**2).sum(-1) + 0.5 * (b**2).sum(-1) + a / 3 * (b**3).sum(-1) + bt / 4 * (b**4).sum(-1)
    np.testing.assert_allclose(fm.hamiltonian(fpu40, q, p), ref, rtol=1e-13)


def test_force_is_minus_gradient(rng, fpu40):
    q = 0.3 * rng.normal(size=40)
    h = 1e-6
    grad = np.array([
        (fm.hamiltonian(fpu40, q + h * e, np.zeros(40)) - fm.hamiltonian(fpu40, q - h * e, np.zeros(40))) / (2 * h)
        for e in np.eye(40)
    ])
    np.testing.assert_allclose(fm.force(fpu40.params, q), -grad, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)))
def test_bond_round_trip(q):
    np.testing.assert_allclose(fm.positions_from_bonds(fm.bonds_from_positions(q)), q, atol=1e-12 * 1e3)


def test_mode_energies(fpu40, rng):
    assert np.all(fm.mode_energies(fpu40, np.zeros(40), np.zeros(40)) == 0)
    q = 0.7 * fpu40.mode_vectors[:, 3]
    e = fm.mode_energies(fpu40, q, np.zeros(40))
    expect = np.zeros(40)
    expect[3] = fpu40.mode_frequencies[3] ** 2 * 0.49 / 2
    np.testing.assert_allclose(e, expect, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_mode_energies_sum_to_quadratic_hamiltonian(n, seed):
    m = fm.build_chain(fm.FpuParams(n, 0.0, 0.0))
    q, p = np.random.default_rng(seed).normal(size=(2, n))
    h = fm.hamiltonian(m, q, p)
    assert fm.mode_energies(m, q, p).sum() == pytest.approx(h, rel=1e-10)


def test_observable_E_examples():
    m = fm.build_chain(fm.FpuParams(6))
    assert fm.observable_E(m, np.zeros(6), np.zeros(6)) == 0
    q = m.mode_vectors[:, -1]
    assert abs(fm.observable_E(m, q, np.zeros(6))) < 1e-15


def test_observable_E_equipartition():
    m = fm.build_chain(fm.FpuParams(10, 0.0, 0.0, 0.3))
    s = gs.sample_set(m, 40_000, 5)
    e = fm.observable_E(m, s.q, s.p)
    expect = 0.3 * m.low_mode_count / m.n
    assert abs(e.mean() - expect) <= 3 * e.std(ddof=1) / np.sqrt(len(e))


def test_etilde_ktilde_definitions(fpu40, rng):
    q, p = 0.05 * rng.normal(size=(2, 5, 40))
    zero = fm.ProjectionCoeffs(0.0, 0.0, 10)
    np.testing.assert_array_equal(fm.observable_Etilde(fpu40, q, zero, p), fm.observable_E(fpu40, q, p))
    proj = fm.ProjectionCoeffs(0.2, 0.3, 10)
    np.testing.assert_allclose(fm.observable_Ktilde(fpu40, q, proj, np.zeros_like(p)),
                               -0.3 * fm.hamiltonian(fpu40, q, np.zeros_like(p)))


def test_projected_observables_decorrelated(fpu40):
    s = gs.sample_set(fpu40, 20_000, 2)
    proj = gs.estimate_projection(fpu40, s)
    h = fm.hamiltonian(fpu40, s.q, s.p)
    for f in (fm.observable_Etilde(fpu40, s.q, proj, s.p), fm.observable_Ktilde(fpu40, s.q, proj, s.p)):
        prod = (f - f.mean()) * (h - h.mean())
        assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / np.sqrt(len(h))


def test_etilde_variance_positive_low_T():
    m = fm.build_chain(fm.FpuParams(40, 0.25, 0.25, 1e-5))
    s = gs.sample_set(m, 5000, 1)
    proj = gs.estimate_projection(m, s)
    assert np.var(fm.observable_Etilde(m, s.q, proj, s.p)) > 0


def test_half_kinetic_mean_quadratic():
    m = fm.build_chain(fm.FpuParams(8, 0.0, 0.0, 0.2))
    s = gs.sample_set(m, 40_000, 9)
    k = fm.half_kinetic(m, s.q, s.p)
    assert abs(k.mean() - 0.2 * 4 / 2) <= 3 * k.std(ddof=1) / np.sqrt(len(k))
