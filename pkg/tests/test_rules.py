"""Per-term drift and noise against hand evaluation of the stochastic equations."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spintwa.model import (
    Decay, Dephasing, Gain, HeisenbergBond, OneAxisTwist, SpinModel, TransverseDrive, validate,
)
from spintwa.rules import (
    InteractionOrderingError,
    assemble,
    pack,
    rule_decay,
    rule_dephasing,
    rule_gain,
    rule_heisenberg_bond,
    rule_longitudinal_field,
    rule_one_axis_twist,
    rule_transverse_drive,
    total_drift,
    total_wieners,
    wieners_per_site,
)

amp = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


def point(*pairs):
    x = np.empty(2 * len(pairs), dtype=complex)
    for i, (a, b) in enumerate(pairs):
        x[2 * i], x[2 * i + 1] = a, b
    return x


def test_decay_drift_example():
    r = rule_decay(0.1, 0)
    d = r.drift(point((1.0, 2.0)))
    assert d[0] == pytest.approx(-0.45)
    # d beta = G (|alpha|^2 - 1/2) beta = 0.1 * 0.5 * 2
    assert d[1] == pytest.approx(0.1)


def test_gain_drift_example():
    r = rule_gain(0.1, 0)
    d = r.drift(point((2.0, 1.0)))
    assert d[1] == pytest.approx(-0.45)


@given(amp, amp, st.sampled_from([-1, 0, 1]), st.floats(0, 2))
def test_gain_is_decay_with_modes_swapped(a, b, k, rate):
    dec = rule_decay(rate, k).drift(point((a, b)))
    gain = rule_gain(rate, k).drift(point((b, a)))
    np.testing.assert_allclose(gain[::-1], dec, atol=1e-12)
    dw = np.array([0.3, -0.2, 0.5, 0.1])
    n_dec, c_dec = rule_decay(rate, k).noise(point((a, b)), dw)
    n_gain, c_gain = rule_gain(rate, k).noise(point((b, a)), dw)
    np.testing.assert_allclose(n_gain[::-1], n_dec, atol=1e-12)
    assert c_dec == c_gain


@given(amp, amp, st.sampled_from([-1, 0, 1]), st.floats(0.01, 2))
def test_decay_matches_closed_form(a, b, k, g):
    r = rule_decay(g, k)
    d = r.drift(point((a, b)))
    assert d[0] == pytest.approx(-g * (abs(b) ** 2 + (1 + k) / 2) * a, abs=1e-9)
    assert d[1] == pytest.approx(g * (abs(a) ** 2 - (1 - k) / 2) * b, abs=1e-9)
    dw = np.array([0.3, -0.7, 1.1, 0.4])
    n, clamps = r.noise(point((a, b)), dw)
    arg_a = g * (1 - k) / 2 * (abs(b) ** 2 + (1 + k) / 2)
    arg_b = g * (1 + k) / 2 * (abs(a) ** 2 - (1 - k) / 2)
    assert n[0] == pytest.approx(np.sqrt(max(arg_a, 0)) * (0.3 - 0.7j), abs=1e-9)
    assert n[1] == pytest.approx(np.sqrt(max(arg_b, 0)) * (1.1 + 0.4j), abs=1e-9)
    assert clamps == int(arg_a < 0) + int(arg_b < 0)


def test_decay_p_has_no_alpha_noise():
    n, _ = rule_decay(0.3, 1).noise(point((0.4, 2.0)), [1.0, 1.0, 1.0, 1.0])
    assert n[0] == 0
    assert n[1] != 0


def test_decay_wigner_clamps_negative_beta_argument():
    n, clamps = rule_decay(0.3, 0).noise(point((0.2, 2.0)), [1.0, 1.0, 1.0, 1.0])
    assert clamps == 1
    assert n[1] == 0
    _, none = rule_decay(0.3, 0).noise(point((0.9, 2.0)), [1.0, 1.0, 1.0, 1.0])
    assert none == 0


@given(amp, amp, st.floats(0, 3), st.floats(-3, 3))
def test_dephasing_matches_closed_form(a, b, g, dw):
    r = rule_dephasing(g)
    d = r.drift(point((a, b)))
    assert d[0] == pytest.approx(-g / 4 * a, abs=1e-12)
    assert d[1] == pytest.approx(-g / 4 * b, abs=1e-12)
    n, clamps = r.noise(point((a, b)), [dw])
    assert n[0] == pytest.approx(1j * np.sqrt(g / 2) * a * dw, abs=1e-12)
    assert n[1] == pytest.approx(-1j * np.sqrt(g / 2) * b * dw, abs=1e-12)
    assert clamps == 0


def test_zero_coefficients_are_identity():
    x = point((0.3 + 0.2j, 1.5 - 0.1j), (0.7, -0.4j))
    for r in (rule_dephasing(0.0), rule_transverse_drive(0.0), rule_longitudinal_field(0.0),
              rule_one_axis_twist(0.0), rule_heisenberg_bond(0, 0, 0, 0, 1), rule_decay(0.0, 0)):
        assert np.all(r.drift(x) == 0)
        n, _ = r.noise(x, np.ones(4))
        assert np.all(n == 0)


@given(amp, amp, st.floats(-3, 3))
def test_drive_and_field(a, b, om):
    d = rule_transverse_drive(om).drift(point((a, b)))
    assert d[0] == pytest.approx(-0.5j * om * b, abs=1e-12)
    assert d[1] == pytest.approx(-0.5j * om * a, abs=1e-12)
    f = rule_longitudinal_field(om).drift(point((a, b)))
    assert f[0] == pytest.approx(-0.5j * om * a, abs=1e-12)
    assert f[1] == pytest.approx(0.5j * om * b, abs=1e-12)


@given(amp, amp, st.floats(-3, 3))
def test_twist_matches_closed_form(a, b, g):
    d = rule_one_axis_twist(g).drift(point((a, b)))
    ca, cb = np.conj(a), np.conj(b)
    assert d[0] == pytest.approx(-0.5j * g * (ca * b * b + a * abs(b) ** 2), abs=1e-9)
    assert d[1] == pytest.approx(-0.5j * g * (cb * a * a + abs(a) ** 2 * b), abs=1e-9)


def test_twist_examples():
    r = rule_one_axis_twist(0.2)
    d = r.drift(point((0.0, 3.0)))
    assert d[0] == 0 and d[1] == 0
    s = 4.0
    d = r.drift(point((np.sqrt(s), np.sqrt(s))))
    assert d[0] == pytest.approx(-1j * 0.2 * s ** 1.5)


def _bond_expected(x, jx, jy, jz, literal=False):
    out = np.zeros_like(x)
    for n, m in ((0, 1), (1, 0)):
        an, bn, am, bm = x[2 * n], x[2 * n + 1], x[2 * m], x[2 * m + 1]
        zm = abs(am) ** 2 - abs(bm) ** 2
        out[2 * n] = -0.25j * ((jx + jy) * am * np.conj(bm) * bn + (jx - jy) * np.conj(am) * bm * bn
                               + jz * zm * an)
        out[2 * n + 1] = -0.25j * ((jx + jy) * np.conj(am) * bm * an + (jx - jy) * am * np.conj(bm) * an
                                   - jz * zm * (an if literal else bn))
    return out


@settings(max_examples=50)
@given(amp, amp, amp, amp, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.booleans())
def test_bond_matches_closed_form(a1, b1, a2, b2, jx, jy, jz, literal):
    x = point((a1, b1), (a2, b2))
    d = rule_heisenberg_bond(jx, jy, jz, 0, 1, literal=literal).drift(x)
    np.testing.assert_allclose(d, _bond_expected(x, jx, jy, jz, literal), atol=1e-9)


def test_bond_is_symmetric_in_direction():
    x = point((0.3 + 0.1j, 1.2), (0.8j, -0.5 + 0.2j))
    d01 = rule_heisenberg_bond(0.4, -0.7, 0.3, 0, 1).drift(x)
    d10 = rule_heisenberg_bond(0.4, -0.7, 0.3, 1, 0).drift(x)
    np.testing.assert_allclose(d01, d10, atol=1e-14)


def test_down_polarized_pair_is_bond_fixed_point():
    x = point((0.0, 2.0), (0.0, 1.5 + 0.5j))
    d = rule_heisenberg_bond(0.5, -0.25, 0.0, 0, 1).drift(x)
    assert np.all(d == 0)


@given(amp, amp, amp, amp)
def test_hamiltonian_drift_conserves_norm(a1, b1, a2, b2):
    x = point((a1, b1), (a2, b2))
    rules = [rule_transverse_drive(0.7), rule_longitudinal_field(-0.3, 1), rule_one_axis_twist(0.4),
             rule_heisenberg_bond(0.5, -1.0, 0.3, 0, 1)]
    d = total_drift(rules, x)
    for n in range(2):
        rate = 2 * np.real(np.conj(x[2 * n]) * d[2 * n] + np.conj(x[2 * n + 1]) * d[2 * n + 1])
        assert abs(rate) < 1e-8 * (1 + np.abs(x).max() ** 4)


def test_interactions_require_wigner():
    for k in (-1, 1):
        with pytest.raises(InteractionOrderingError):
            rule_one_axis_twist(1.0, k)
        with pytest.raises(InteractionOrderingError):
            rule_heisenberg_bond(1, 1, 1, 0, 1, k)
        rule_one_axis_twist(1.0, k, allow_non_wigner=True)
        m = validate(SpinModel(1, 5, (OneAxisTwist(1.0),)))
        with pytest.raises(InteractionOrderingError):
            assemble(m, k)


def test_rule_noise_flags():
    assert rule_transverse_drive(1.0).is_hamiltonian
    assert rule_one_axis_twist(1.0).n_wieners == 0
    assert rule_decay(1.0, 0).n_wieners == 4
    assert rule_dephasing(1.0).n_wieners == 1


def test_wiener_count_is_additive():
    m = validate(SpinModel(2, 5, (TransverseDrive(1.0),), (Decay(1.0), Dephasing(0.5))))
    rules = assemble(m, 0)
    assert list(wieners_per_site(rules, 2)) == [5, 5]
    assert total_wieners(rules) == 10
    offsets = [r.wiener_offset for r in rules if r.n_wieners]
    assert offsets == [0, 4, 8, 9]
    assert pack(rules).n_wieners == 10


def test_empty_model_has_no_rules():
    assert assemble(validate(SpinModel(1, 3)), 0) == []


def test_squeezing_model_drift_is_sum_of_terms():
    g, gam, gphi, s = 1.0, 0.25, 0.5, 10
    m = validate(SpinModel(1, s, (OneAxisTwist(g),), (Decay(gam), Dephasing(gphi))))
    rng = np.random.default_rng(3)
    x = rng.normal(size=2) + 1j * rng.normal(size=2)
    a, b = x
    gt, gd = g / (2 * s), gam / (2 * s)
    expected = np.array([
        -0.5j * gt * (np.conj(a) * b ** 2 + a * abs(b) ** 2) - gd * (abs(b) ** 2 + 0.5) * a - gphi / 4 * a,
        -0.5j * gt * (np.conj(b) * a ** 2 + abs(a) ** 2 * b) + gd * (abs(a) ** 2 - 0.5) * b - gphi / 4 * b,
    ])
    np.testing.assert_allclose(total_drift(assemble(m, 0), x), expected, atol=1e-12)
