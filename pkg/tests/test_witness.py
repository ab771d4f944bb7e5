import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kaonbell.observables import TwoQubitState, effective_observable, psi_minus
from kaonbell.physics import K0, K0BAR, PhysicalConstants
from kaonbell.witness import (
    BellSetting,
    ScanPoint,
    ScanResult,
    bell_operator,
    ch_function,
    fingerprint,
    optimize_times,
    reference_setting,
    parse_axis,
    pauli_tensor,
    product_state,
    s_function,
    scan_grid,
    separable_extrema,
    time_scan,
    violation,
)

time_vals = st.floats(min_value=0.0, max_value=10.0)
settings4 = st.builds(BellSetting.from_times, time_vals, time_vals, time_vals, time_vals)
angles = st.tuples(
    st.floats(0.0, math.pi), st.floats(0.0, 2 * math.pi),
    st.floats(0.0, math.pi), st.floats(0.0, 2 * math.pi),
)


def _bloch_s(s, c, picture="effective"):
    # Independent route: singlet correlation E = alpha_a alpha_b - v_a . v_b.
    def e(ma, mb):
        aa, va = effective_observable(ma, c, picture).bloch()
        ab, vb = effective_observable(mb, c, picture).bloch()
        return aa * ab - va @ vb

    return e(s.n, s.m) - e(s.n, s.mprime) + e(s.nprime, s.m) + e(s.nprime, s.mprime)


def test_reference_setting_values_frozen(pdg):
    # Frozen from the Bloch-form oracle below; the optimizer bound is cross-checked in
    # the sampling tests.
    s = reference_setting()
    assert s.times == (0.0, 1.34, 1.34, 2.80)
    w = violation(s, psi_minus(), pdg)
    assert w.s_state == pytest.approx(-0.695842, abs=1e-6)
    assert w.s_sep_min == pytest.approx(-0.576648, abs=1e-6)
    assert w.delta_min == pytest.approx(-0.119194, abs=1e-6)


@given(settings4, st.sampled_from(["effective", "exact", "printed"]))
def test_s_function_matches_bloch_oracle(s, picture):
    c = PhysicalConstants()
    assert s_function(s, psi_minus(), c, picture) == pytest.approx(_bloch_s(s, c, picture), abs=1e-12)


@given(angles)
def test_product_state_is_pure_product(a):
    rho = product_state(*a).rho
    assert np.trace(rho @ rho).real == pytest.approx(1.0)
    # partial trace over B is pure too
    red = np.einsum("ijkj->ik", rho.reshape(2, 2, 2, 2))
    assert np.trace(red @ red).real == pytest.approx(1.0)


@given(settings4, angles)
def test_pauli_tensor_reproduces_product_expectation(s, a):
    c = PhysicalConstants()
    w = bell_operator(s, c)
    t = pauli_tensor(w)
    ta, pa, tb, pb = a
    ra = np.array([1, math.sin(ta) * math.cos(pa), math.sin(ta) * math.sin(pa), math.cos(ta)])
    rb = np.array([1, math.sin(tb) * math.cos(pb), math.sin(tb) * math.sin(pb), math.cos(tb)])
    direct = np.trace(w @ product_state(*a).rho).real
    assert ra @ t @ rb == pytest.approx(direct, abs=1e-12)


def test_stable_limit_degenerate_setting(cp_conserving):
    s = BellSetting.from_times(0, 0, 0, 0)
    assert s_function(s, psi_minus(), cp_conserving) == pytest.approx(-2.0, abs=1e-12)
    ext = separable_extrema(s, cp_conserving)
    assert ext.s_min == pytest.approx(-2.0, abs=1e-9)
    assert ext.s_max == pytest.approx(2.0, abs=1e-9)


def test_maximally_mixed_state_has_no_correlation(cp_conserving):
    s = BellSetting.from_times(0, 0, 0, 0)
    assert s_function(s, TwoQubitState.maximally_mixed(), cp_conserving) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("times", [(0.0, 1.34, 1.34, 2.8), (4.48, 4.81, 4.81, 7.9), (2.0, 0.5, 6.0, 3.0)])
def test_extrema_stable_under_random_restarts(pdg, times):
    s = BellSetting.from_times(*times)
    base = separable_extrema(s, pdg)
    more = separable_extrema(s, pdg, restarts=100, seed=5)
    assert abs(base.s_min - more.s_min) < 1e-6
    assert abs(base.s_max - more.s_max) < 1e-6


@given(settings4)
def test_random_product_states_never_beat_the_bounds(s):
    c = PhysicalConstants()
    ext = separable_extrema(s, c)
    t = pauli_tensor(bell_operator(s, c))
    rng = np.random.default_rng(0)
    v = rng.normal(size=(2, 2000, 3))
    v /= np.linalg.norm(v, axis=2, keepdims=True)
    r = np.concatenate([np.ones((2, 2000, 1)), v], axis=2)
    vals = np.einsum("ni,ij,nj->n", r[0], t, r[1])
    assert vals.min() >= ext.s_min - 1e-8
    assert vals.max() <= ext.s_max + 1e-8


def test_argmin_reproduces_minimum(pdg):
    s = reference_setting()
    ext = separable_extrema(s, pdg)
    rho = product_state(*ext.argmin)
    assert s_function(s, rho, pdg) == pytest.approx(ext.s_min, abs=1e-9)


@pytest.mark.parametrize("picture", ["effective", "exact", "printed"])
def test_ch_is_affine_image_of_chsh(pdg, picture):
    s = reference_setting()
    rho = psi_minus()
    w = violation(s, rho, pdg, picture)
    ch, lo, hi = ch_function(s, rho, pdg, picture)
    assert ch == pytest.approx((w.s_state - 2) / 4, abs=1e-10)
    assert lo == pytest.approx((w.s_sep_min - 2) / 4, abs=1e-8)
    assert hi == pytest.approx((w.s_sep_max - 2) / 4, abs=1e-8)


def test_ch_stable_bounds(cp_conserving):
    _, lo, hi = ch_function(BellSetting.from_times(0, 0, 0, 0), psi_minus(), cp_conserving)
    assert (lo, hi) == pytest.approx((-1.0, 0.0), abs=1e-9)


def test_setting_helpers():
    s = BellSetting.from_times(1, 2, 3, 4, question=[K0, K0BAR, K0, K0BAR])
    assert s.times == (1, 2, 3, 4)
    assert s.with_times(m=9.0).times == (1, 9.0, 3, 4)
    assert s.n.quasispin == K0 and s.m.quasispin == K0BAR
    with pytest.raises(ValueError):
        BellSetting.from_times(1, 2, 3, 4, question=[K0])


def test_parse_axis():
    assert parse_axis("m+nprime") == ("m", "nprime")
    assert parse_axis("t_n") == ("n",)
    assert parse_axis(["m'", "n"]) == ("mprime", "n")
    with pytest.raises(ValueError):
        parse_axis("q")


def test_fingerprint_is_deterministic_and_sensitive(pdg):
    s = reference_setting()
    assert fingerprint(pdg, s) == fingerprint(PhysicalConstants(), reference_setting())
    assert fingerprint(pdg, s) != fingerprint(pdg.doubled_oscillation(), s)
    assert len(fingerprint(pdg)) == 16


@pytest.mark.parametrize(
    "lo,hi,step,n",
    [(0, 1.6, 0.02, 81), (0, 1, 0.3, 4), (0.5, 0.5, 1.0, 1), (0, 0.1, 5.0, 1)],
)
def test_scan_grid(lo, hi, step, n):
    grid = scan_grid(lo, hi, step)
    assert len(grid) == n
    assert grid[0] == lo and grid[-1] <= hi + 1e-12


@pytest.mark.parametrize("lo,hi,step", [(0, 1, 0), (0, 1, -1), (1, 0, 0.1), (-1, 1, 0.1), (0, math.inf, 1)])
def test_scan_grid_rejects(lo, hi, step):
    with pytest.raises(ValueError):
        scan_grid(lo, hi, step)


def test_scan_csv_round_trip_is_byte_identical(pdg):
    res = time_scan(reference_setting(), "n", 0.0, 0.1, 0.05, c=pdg)
    text = res.to_csv()
    assert ScanResult.from_csv(text).to_csv() == text
    assert text.splitlines()[0] == "t,s_state,s_sep_min,s_sep_max,delta_min"
    assert res.points[0].delta_min == pytest.approx(-0.119194, abs=1e-6)


def test_scan_parallel_matches_serial(pdg):
    a = time_scan(reference_setting(), "m+nprime", 1.0, 1.2, 0.1, c=pdg)
    b = time_scan(reference_setting(), "m+nprime", 1.0, 1.2, 0.1, c=pdg, workers=2)
    assert a.to_csv() == b.to_csv()


def test_scan_result_requires_increasing_t():
    with pytest.raises(ValueError):
        ScanResult([ScanPoint(1.0, 0, 0, 0), ScanPoint(0.5, 0, 0, 0)])


def test_optimize_small_box(pdg):
    res = optimize_times(1.5, c=pdg, grid=3, n_starts=2)
    assert all(0.0 <= t <= 1.5 for t in res.setting.times)
    assert res.value == pytest.approx(res.witness.delta_min)
    reference = violation(reference_setting(), psi_minus(), pdg).delta_min
    assert res.value < reference


def test_optimize_zero_box_and_validation(pdg):
    res = optimize_times(0.0, c=pdg)
    assert res.setting.times == (0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        optimize_times(-1.0, c=pdg)
    with pytest.raises(ValueError):
        optimize_times(1000.0, c=pdg)
    with pytest.raises(ValueError):
        optimize_times(1.0, c=pdg, objective="nope")
