import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kaonbell.physics import (
    DEFAULT_DELTA_M,
    DEFAULT_GAMMA_L,
    K0,
    K0BAR,
    K1,
    K2,
    Measurement,
    PhysicalConstants,
    Quasispin,
    constants_from_mapping,
    evolution_operator,
    load_constants,
    mass_eigenstates,
    propagator,
    survival_norm,
)

times = st.floats(min_value=0.0, max_value=40.0, allow_nan=False)
thetas = st.floats(min_value=0.0, max_value=math.pi)
phis = st.floats(min_value=-10.0, max_value=10.0)


def test_default_constants_in_short_lifetime_units():
    assert DEFAULT_GAMMA_L == pytest.approx(0.8954e-10 / 5.116e-8)
    assert DEFAULT_DELTA_M == pytest.approx(0.5289e10 * 0.8954e-10)
    c = PhysicalConstants()
    assert c.gamma_s == 1.0
    assert c.delta == pytest.approx(2 * 1.66e-3 / (1 + 1.66e-3**2))


def test_delta_is_overlap_of_mass_eigenstates(pdg):
    k_s, k_l = mass_eigenstates(pdg)
    assert np.vdot(k_s, k_l).real == pytest.approx(pdg.delta, abs=1e-15)
    assert np.linalg.norm(k_s) == pytest.approx(1.0)
    assert np.linalg.norm(k_l) == pytest.approx(1.0)


def test_strangeness_states():
    np.testing.assert_allclose(K0.vector, np.array([1, 1]) / math.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(K0BAR.vector, np.array([1, -1]) / math.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(K1.vector, [1, 0], atol=1e-15)
    np.testing.assert_allclose(K2.vector, [0, 1], atol=1e-15)


@pytest.mark.parametrize(
    "kwargs",
    [dict(gamma_l=2.0), dict(gamma_l=0.0), dict(gamma_l=-1e-3), dict(eps=1.0)],
)
def test_invalid_constants_rejected(kwargs):
    with pytest.raises(ValueError):
        PhysicalConstants(**kwargs)


def test_doubled_oscillation_only_changes_delta_m(pdg):
    d = pdg.doubled_oscillation()
    assert d.delta_m == 2 * pdg.delta_m
    assert (d.gamma_l, d.eps) == (pdg.gamma_l, pdg.eps)


def test_constants_mapping_round_trip(pdg, tmp_path):
    data = {k: pdg.to_dict()[k] for k in ("gamma_l", "delta_m", "eps_re", "eps_im")}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    assert load_constants(path) == pdg
    with pytest.raises(ValueError, match="unknown"):
        constants_from_mapping({"gamma_x": 1.0})
    with pytest.raises(ValueError):
        constants_from_mapping({"gamma_l": "fast"})


def test_quasispin_and_measurement_validation():
    with pytest.raises(ValueError):
        Quasispin(-0.1, 0.0)
    with pytest.raises(ValueError):
        Quasispin(4.0, 0.0)
    assert Quasispin(1.0, 2 * math.pi + 0.5).phi == pytest.approx(0.5)
    with pytest.raises(ValueError):
        Measurement(K0, -1.0)
    with pytest.raises(ValueError):
        Measurement(K0, float("nan"))


def test_evolution_identity_at_zero(pdg):
    np.testing.assert_allclose(evolution_operator(0.0, pdg), np.eye(2), atol=1e-14)
    with pytest.raises(ValueError):
        evolution_operator(-1.0, pdg)


def test_mass_eigenstates_are_eigenvectors(pdg):
    k_s, k_l = mass_eigenstates(pdg)
    t = 1.7
    u = evolution_operator(t, pdg)
    np.testing.assert_allclose(u @ k_s, math.exp(-t / 2) * k_s, atol=1e-14)
    factor = np.exp((-1j * pdg.delta_m - pdg.gamma_l / 2) * t)
    np.testing.assert_allclose(u @ k_l, factor * k_l, atol=1e-14)


@given(times, times)
def test_semigroup(s, t):
    c = PhysicalConstants()
    np.testing.assert_allclose(
        evolution_operator(s, c) @ evolution_operator(t, c), evolution_operator(s + t, c), atol=1e-12
    )


@given(times.filter(lambda t: t > 0))
def test_evolution_is_a_contraction(t):
    sv = np.linalg.svd(evolution_operator(t, PhysicalConstants()), compute_uv=False)
    assert np.all(sv > 0)
    assert np.all(sv <= 1 + 1e-12)


@given(times)
def test_strangeness_survival_closed_form(t):
    c = PhysicalConstants()
    eps = c.eps.real
    decay = math.exp(-t) + math.exp(-c.gamma_l * t)
    assert survival_norm(K0, t, c) == pytest.approx(decay * (1 + eps) ** 2 / (2 * (1 + eps**2)))
    assert survival_norm(K0BAR, t, c) == pytest.approx(decay * (1 - eps) ** 2 / (2 * (1 + eps**2)))


@given(thetas, phis, times)
def test_survival_matches_effective_propagator(theta, phi, t):
    # N(t) = |k^dag V D(t)|^2 when V's columns are taken as orthogonal coordinates.
    c = PhysicalConstants()
    q = Quasispin(theta, phi)
    row = q.vector.conj() @ propagator(t, c, "effective")
    assert np.vdot(row, row).real == pytest.approx(survival_norm(q, t, c), abs=1e-13)


@given(thetas, phis, times)
def test_pictures_coincide_without_cp_violation(theta, phi, t):
    c = PhysicalConstants(eps=0.0)
    np.testing.assert_allclose(propagator(t, c, "effective"), propagator(t, c, "exact"), atol=1e-14)
