import numpy as np
import pytest

from spintwa import oracle
from spintwa.engine import InitialState, IntegratorConfig, evolve_ensemble
from spintwa.ensemble import FEATURES, NTOT
from spintwa.model import Decay, SpinModel, TransverseDrive, nearest_neighbor_chain, validate
from spintwa.observables import (
    ObservableSeries,
    correct_second_moments,
    correlations,
    features_from_monomials,
    fit_correlation_length,
    first_moments,
    observable_series,
    optimal_squeezing,
    same_site_flip_flop,
    squeezing_from_moments,
    squeezing_parameter,
)


def _snapshot(spin, k, theta=0.0, phi=0.0, n_traj=4000, seed=1, n_sites=1):
    m = validate(SpinModel(n_sites, spin))
    cfg = IntegratorConfig(dt=0.1, t_final=0.0, save_times=(0.0,), n_traj=n_traj, master_seed=seed)
    acc, _ = evolve_ensemble(m, k, cfg, InitialState(theta, phi))
    return acc


@pytest.mark.parametrize("k", [-1, 0, 1])
def test_down_state_first_moments(k):
    mean, err = first_moments(_snapshot(30, k))
    if k == 1:
        assert mean[0, 0, 2] == pytest.approx(-30, abs=1e-12) and np.all(err == 0)
    else:
        assert abs(mean[0, 0, 2] + 30) <= 3 * err[0, 0, 2]


@pytest.mark.parametrize("k", [-1, 0, 1])
def test_coherent_state_transverse_variance(k):
    s = 50
    ser = observable_series(_snapshot(s, k, n_traj=20_000))
    for a in (0, 1):
        assert abs(ser.second[0, 0, a, a] - s / 2) <= 3 * ser.second_err[0, 0, a, a] + 1e-12


@pytest.mark.parametrize("k", [-1, 0])
def test_coherent_state_is_not_squeezed(k):
    sq = squeezing_parameter(_snapshot(50, k, n_traj=20_000))
    assert abs(sq.xi2[0, 0] - 1) <= 3 * sq.err[0, 0]
    assert sq.reliable.all()


def test_rotated_coherent_state_matches_oracle():
    s = 20
    ser = observable_series(_snapshot(s, 0, theta=1.2, phi=0.5, n_traj=20_000))
    m = validate(SpinModel(1, s))
    first, second = oracle.spin_moments(oracle.initial_state(m, 1.2, 0.5), m)
    assert np.all(np.abs(ser.mean[0, 0] - first[0]) <= 3 * ser.mean_err[0, 0])
    # sampled particle number fluctuates, adding S/2 along the mean direction
    n = first[0] / s
    expected = second[0] + 0.5 * s * np.outer(n, n)
    assert np.all(np.abs(ser.second[0, 0] - expected) <= 3 * ser.second_err[0, 0] + 1e-12)


def test_series_invariants():
    m = validate(SpinModel(1, 10, (TransverseDrive(2.0),), (Decay(1.0),)))
    cfg = IntegratorConfig.uniform(1e-3, 2.0, 9, n_traj=500, master_seed=3)
    acc, _ = evolve_ensemble(m, 0, cfg, InitialState())
    ser = observable_series(acc)
    assert np.all(ser.variance >= -3 * ser.variance_err)
    assert np.all(np.abs(ser.mean) <= 10 + 3 * ser.mean_err)
    assert np.all(ser.n_traj == 500)


@pytest.mark.parametrize("k", [-1, 0, 1])
def test_correction_shifts_only_the_diagonal(k):
    rng = np.random.default_rng(k + 5)
    f = rng.normal(size=len(FEATURES))
    f[NTOT] = 9.0
    raw = correct_second_moments(f, 0) + 0.125 * np.eye(3)  # k = 0 shift is -1/8
    tab = correct_second_moments(f, k)
    np.testing.assert_allclose(tab - raw, (k * 9.0 / 4 - (1 - k * k) / 8) * np.eye(3), atol=1e-14)
    np.testing.assert_allclose(tab, tab.T)


@pytest.mark.parametrize("k", [-1, 0, 1])
@pytest.mark.parametrize("spin", [1, 2.5])
def test_flip_flop_round_trip(spin, k):
    rng = np.random.default_rng(7)
    d = int(2 * spin) + 1
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    feats = features_from_monomials(oracle.symbol_moments(rho, spin, k))
    ops = oracle.spin_operators(spin)
    exact = np.trace((ops.sp @ ops.sm).toarray() @ rho).real
    assert same_site_flip_flop(feats, k) == pytest.approx(exact, abs=1e-10)


def test_squeezing_closed_form():
    s = 10.0
    mean = np.array([0.0, 0.0, -s])
    second = np.diag([s / 2, s / 2, s * s])
    assert squeezing_from_moments(mean, second, s) == pytest.approx(1.0)
    # squeeze along an axis rotated by 30 degrees in the x-y plane
    c, sn = np.cos(np.pi / 6), np.sin(np.pi / 6)
    rot = np.array([[c, -sn, 0], [sn, c, 0], [0, 0, 1]])
    cov = rot @ np.diag([s / 8, 2 * s, 0]) @ rot.T
    val = squeezing_from_moments(mean, cov + np.outer(mean, mean), s)
    assert val == pytest.approx(0.25)
    with np.errstate(all="ignore"):
        assert not np.isfinite(squeezing_from_moments(np.zeros(3), second, s))


def test_optimal_squeezing_respects_mask():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    xi = np.array([1.0, 0.5, 0.2, 0.7])
    assert optimal_squeezing(t, xi) == (0.2, 2.0)
    assert optimal_squeezing(t, xi, np.array([True, True, False, True])) == (0.5, 1.0)


def test_fit_recovers_exponential():
    s = np.arange(11)
    xi, res = fit_correlation_length(s, np.exp(-s / 2.5))
    assert xi == pytest.approx(2.5) and res == pytest.approx(0.0, abs=1e-12)
    # odd separations are ignored
    stag = np.exp(-s / 2.5) * np.where(s % 2, -1.0, 1.0)
    assert fit_correlation_length(s, stag)[0] == pytest.approx(2.5)
    assert np.isnan(fit_correlation_length(np.arange(3), [1.0, 0.5, 0.2])[0])
    assert fit_correlation_length(s, np.ones(11))[0] == np.inf


def test_correlation_profile_of_uncorrelated_chain():
    m = nearest_neighbor_chain(8, 10, 0.0, 0.0, 0.0, decay=1.0)
    cfg = IntegratorConfig.uniform(1e-3, 0.5, 3, n_traj=400, master_seed=2)
    acc, _ = evolve_ensemble(m, 0, cfg, InitialState(), correlations=True)
    prof = correlations(acc)
    assert np.all(prof.c[:, 0] == 1.0)
    assert prof.c.shape == (3, 5)
    assert np.all(np.abs(prof.c[:, 1:]) <= 4 * prof.c_err[:, 1:])
    np.testing.assert_array_equal(prof.times, cfg.times())


def test_correlations_need_cross_sums():
    acc = _snapshot(5, 0, n_traj=10)
    with pytest.raises(ValueError):
        correlations(acc)


def test_exact_series_has_zero_errors():
    first = np.array([[[0.0, 0.0, -1.0]]])
    second = np.diag([0.5, 0.5, 1.0])[None, None]
    ser = ObservableSeries.exact([0.0], 1.0, first, second)
    assert np.all(ser.mean_err == 0)
    np.testing.assert_allclose(ser.variance[0, 0], [0.5, 0.5, 0.0])
