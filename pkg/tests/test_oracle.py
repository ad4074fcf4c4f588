"""Exact master-equation integrator against closed forms."""

import numpy as np
import pytest
import scipy.sparse as sp

from spintwa import oracle
from spintwa.model import (
    Decay, Dephasing, Gain, HeisenbergBond, LongitudinalField, OneAxisTwist, SpinModel,
    TransverseDrive, validate,
)
from spintwa.observables import correct_second_moments, features_from_monomials


def _random_rho(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = g @ g.conj().T
    return r / np.trace(r)


def _dense(o):
    return o.toarray()


@pytest.mark.parametrize("spin", [0.5, 1, 3.5, 10])
def test_spin_commutators(spin):
    o = oracle.spin_operators(spin)
    spl, smi, sz = _dense(o.sp), _dense(o.sm), _dense(o.sz)
    assert np.abs(sz @ spl - spl @ sz - spl).max() < 1e-12
    assert np.abs(spl @ smi - smi @ spl - 2 * sz).max() < 1e-12
    m = np.arange(-spin, spin + 0.5)
    assert np.allclose(np.diag(sz).real, m)
    cas = _dense(o.sx) @ _dense(o.sx) + _dense(o.sy) @ _dense(o.sy) + sz @ sz
    assert np.allclose(cas, spin * (spin + 1) * np.eye(len(m)))


def test_rhs_preserves_trace_and_kills_identity_commutator():
    rng = np.random.default_rng(0)
    m = validate(SpinModel(1, 3, (TransverseDrive(1.3), OneAxisTwist(0.7), LongitudinalField(0.2)),
                           (Decay(1.0), Gain(0.4), Dephasing(0.3))))
    for _ in range(3):
        rho = _random_rho(7, rng)
        assert abs(np.trace(oracle.liouvillian_rhs(m, rho))) < 1e-12
    h_only = validate(SpinModel(1, 3, (TransverseDrive(1.3), OneAxisTwist(0.7))))
    assert np.abs(oracle.liouvillian_rhs(h_only, np.eye(7) / 7)).max() < 1e-14


def test_superoperator_matches_apply():
    rng = np.random.default_rng(1)
    m = validate(SpinModel(1, 2, (TransverseDrive(0.9),), (Decay(1.0), Dephasing(0.5))))
    liou = oracle.Liouvillian(m)
    rho = _random_rho(5, rng)
    vec = liou.superoperator() @ rho.ravel(order="F")
    np.testing.assert_allclose(vec.reshape(5, 5, order="F"), liou.apply(rho), atol=1e-12)


def test_two_level_decay_rate():
    # S = 1/2: effective rate G/2S = G, excited population decays as exp(-2 G t)
    m = validate(SpinModel(1, 0.5, (), (Decay(0.8),)))
    t = np.linspace(0, 2, 5)
    states = oracle.evolve(m, oracle.initial_state(m, np.pi, 0.0), t)
    pe = np.array([s.data[1, 1].real for s in states])
    np.testing.assert_allclose(pe, np.exp(-2 * 0.8 * t), atol=1e-8)


def test_rabi_rotation():
    m = validate(SpinModel(1, 10, (TransverseDrive(1.7),)))
    t = np.linspace(0, 4, 9)
    first, _ = oracle.expectation_series(m, oracle.initial_state(m), t)
    np.testing.assert_allclose(first[:, 0, 2], -10 * np.cos(1.7 * t), atol=1e-6)
    np.testing.assert_allclose(first[:, 0, 1], 10 * np.sin(1.7 * t), atol=1e-6)


@pytest.mark.parametrize("method", ["RK45", "BDF"])
def test_dephasing_coherence_decay(method):
    m = validate(SpinModel(1, 5, (), (Dephasing(0.6),)))
    t = np.linspace(0, 3, 7)
    rho0 = oracle.initial_state(m, np.pi / 2, 0.4)
    first, _ = oracle.expectation_series(m, rho0, t, method=method)
    s0 = first[0, 0, 0] + 1j * first[0, 0, 1]
    np.testing.assert_allclose(first[:, 0, 0] + 1j * first[:, 0, 1], s0 * np.exp(-0.6 * t), atol=1e-6)
    np.testing.assert_allclose(first[:, 0, 2], 0.0, atol=1e-8)


def test_stiff_models_select_bdf():
    soft = oracle.Liouvillian(validate(SpinModel(1, 10, (), (Dephasing(1.0),))))
    stiff = oracle.Liouvillian(validate(SpinModel(1, 100, (), (Dephasing(1.0),))))
    assert oracle.choose_method(soft) == "RK45"
    assert oracle.choose_method(stiff) == "BDF"
    with pytest.raises(ValueError):
        oracle.evolve(validate(SpinModel(1, 1)), np.eye(3) / 3, [0, 1], method="Euler")


def test_integrators_agree_on_driven_decay():
    m = validate(SpinModel(1, 8, (TransverseDrive(2.0), OneAxisTwist(0.5)), (Decay(1.0),)))
    t = np.linspace(0, 3, 7)
    rho0 = oracle.initial_state(m, 0.3, 0.1)
    f_rk, s_rk = oracle.expectation_series(m, rho0, t, method="RK45")
    f_bdf, s_bdf = oracle.expectation_series(m, rho0, t, method="BDF", rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(f_rk, f_bdf, atol=1e-6)
    np.testing.assert_allclose(s_rk, s_bdf, atol=1e-5)


def test_tolerance_tightening_is_stable():
    m = validate(SpinModel(1, 20, (TransverseDrive(4.0),), (Decay(1.0),)))
    t = np.linspace(0, 2, 5)
    rho0 = oracle.initial_state(m)
    loose, _ = oracle.expectation_series(m, rho0, t, rtol=1e-8, atol=1e-10)
    tight, _ = oracle.expectation_series(m, rho0, t, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(loose, tight, atol=1e-6)


def test_invariants_hold_along_evolution():
    m = validate(SpinModel(1, 4, (TransverseDrive(1.0),), (Decay(1.0), Gain(0.2))))
    for s in oracle.evolve(m, oracle.initial_state(m, 1.0, 0.0), np.linspace(0, 2, 5)):
        s.check()
    bad = oracle.DensityMatrix(np.diag([1.2, -0.2]).astype(complex), 0.5)
    with pytest.raises(AssertionError):
        bad.check()


def test_dark_state_is_the_decay_steady_state():
    m = validate(SpinModel(1, 6, (TransverseDrive(0.0),), (Decay(1.0),)))
    rho = oracle.steady_state(m).data
    assert abs(rho[0, 0] - 1) < 1e-10  # basis starts at m = -S


@pytest.mark.parametrize("ratio", [0.5, 2.0])
def test_driven_steady_state_phases(ratio):
    m = validate(SpinModel(1, 50, (TransverseDrive(ratio),), (Decay(1.0),)))
    null = oracle.steady_state(m, method="nullspace")
    null.check()
    first, second = oracle.spin_moments(null, m)
    if ratio < 1:
        # mean-field lower-hemisphere fixed point <S_z> = -S sqrt(1 - (Omega/Gamma)^2)
        assert first[0, 2] / 50 == pytest.approx(-np.sqrt(1 - ratio ** 2), abs=0.03)
    else:
        assert abs(first[0, 2]) / 50 < 0.05
        assert np.all(np.diag(second[0]) / 50 ** 2 > 0.2)


def test_steady_state_methods_agree():
    m = validate(SpinModel(1, 10, (TransverseDrive(0.7),), (Decay(1.0),)))
    null = oracle.steady_state(m, method="nullspace").data
    evo = oracle.steady_state(m, method="evolve", t_chunk=20.0).data
    assert np.abs(null - evo).max() < 1e-8


def test_steady_state_rejects_pairs():
    m = validate(SpinModel(2, 1, (), (Decay(1.0),)))
    with pytest.raises(oracle.OracleDimensionError):
        oracle.steady_state(m)


def test_uncoupled_pair_matches_single_site():
    single = validate(SpinModel(1, 1, (TransverseDrive(1.1),), (Decay(0.7),)))
    pair = validate(SpinModel(2, 1, (TransverseDrive(1.1), HeisenbergBond(0.0, 0.0, 0.0, 0, 1)),
                              (Decay(0.7),)))
    t = np.linspace(0, 2, 5)
    f1, s1 = oracle.expectation_series(single, oracle.initial_state(single, 0.8, 0.2), t)
    f2, s2 = oracle.expectation_series(pair, oracle.initial_state(pair, 0.8, 0.2), t)
    for site in range(2):
        np.testing.assert_allclose(f2[:, site], f1[:, 0], atol=1e-8)
        np.testing.assert_allclose(s2[:, site], s1[:, 0], atol=1e-8)


def test_bond_energy_is_conserved_without_dissipation():
    m = validate(SpinModel(2, 1.5, (HeisenbergBond(0.5, -1.0, 0.3, 0, 1),)))
    liou = oracle.Liouvillian(m)
    h = liou.hamiltonian
    energy = lambda r: np.real(np.sum(h.T.multiply(r.data)))
    states = oracle.evolve(m, oracle.initial_state(m, [0.4, 2.0], [0.0, 1.0]), [0, 1, 2])
    e = [energy(s) for s in states]
    np.testing.assert_allclose(e, e[0], atol=1e-8)
    corr = oracle.pair_correlation(states[-1], liou, 0, 1)
    assert np.isfinite(corr)


def test_dimension_limits():
    with pytest.raises(oracle.OracleDimensionError):
        oracle.check_dimension(validate(SpinModel(1, 1001)))
    with pytest.raises(oracle.OracleDimensionError):
        oracle.check_dimension(validate(SpinModel(2, 50)))
    with pytest.raises(oracle.OracleDimensionError):
        oracle.check_dimension(validate(SpinModel(3, 1)))
    assert oracle.check_dimension(validate(SpinModel(2, 20))) == 41 ** 2


def test_coherent_state_expectations():
    m = validate(SpinModel(1, 7))
    for theta, phi in [(0.0, 0.0), (np.pi, 0.0), (1.0, 2.0)]:
        first, second = oracle.spin_moments(oracle.initial_state(m, theta, phi), m)
        n = first[0] / 7
        assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
        # variance S/2 perpendicular to the mean direction
        perp = np.cross(n, [0.3, 0.5, 0.8])
        perp /= np.linalg.norm(perp)
        var = perp @ second[0] @ perp - (perp @ first[0]) ** 2
        assert var == pytest.approx(3.5, abs=1e-10)


# -- exact phase-space moments -------------------------------------------------


@pytest.mark.parametrize("k", [-1, 0, 1])
@pytest.mark.parametrize("spin", [0.5, 1, 2, 3.5, 5])
def test_ordering_corrections_round_trip(spin, k):
    rng = np.random.default_rng(int(4 * spin) + k)
    d = int(2 * spin) + 1
    rho = _random_rho(d, rng)
    m = validate(SpinModel(1, spin))
    first, second = oracle.spin_moments(rho, m)
    feats = features_from_monomials(oracle.symbol_moments(rho, spin, k))
    np.testing.assert_allclose(feats[:3], first[0], atol=1e-10)
    assert feats[3] == pytest.approx(2 * spin + 1 - k, abs=1e-10)
    np.testing.assert_allclose(correct_second_moments(feats, k), second[0], atol=1e-10)


def test_symbol_moments_examples():
    spin = 3
    down = np.zeros((7, 7), dtype=complex)
    down[0, 0] = 1
    q = oracle.symbol_moments(down, spin, -1)
    assert q[0, 0, 1, 1].real == pytest.approx(7)
    assert q[1, 1, 0, 0].real == pytest.approx(1)
    # a spin-coherent state is 2S quanta in one rotated mode c = conj(ua) a + conj(ub) b,
    # so normally ordered moments pick up N(N-1) rather than N^2 at second order
    from spintwa.sampling import rotate

    ua, ub = rotate(0.0, 1.0, 1.1, 0.4)
    ket = oracle.coherent_ket(spin, 1.1, 0.4)
    p = oracle.symbol_moments(np.outer(ket, ket.conj()), spin, 1)
    n = 2 * spin
    assert p[1, 0, 0, 1] == pytest.approx(np.conj(ua) * ub * n, abs=1e-10)
    assert p[2, 0, 0, 2] == pytest.approx((np.conj(ua) * ub) ** 2 * n * (n - 1), abs=1e-10)
    assert p[1, 1, 1, 1] == pytest.approx(abs(ua * ub) ** 2 * n * (n - 1), abs=1e-10)
    with pytest.raises(ValueError):
        oracle.symbol_moments(down, spin, 0, max_order=3)
    with pytest.raises(ValueError):
        oracle.symbol_moments(down, 2, 0)


def test_operators_are_sparse():
    assert sp.issparse(oracle.spin_operators(100).sp)
