import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallbiot import lumped
from smallbiot.dunking import DimensionalInput
from smallbiot.geometry import measures, named_shape
from smallbiot.lumped import LumpedInputs

SART2 = LumpedInputs(1e-3, 66.0624, 161.157, 120516.0, 40172.0)


def test_basic_formulas():
    inp = LumpedInputs(0.5, 2.0, 1 / 3)
    assert inp.bi == 0.25
    assert inp.bi_prime == pytest.approx(1 / 12)
    assert inp.tau1 == 1.0
    assert lumped.u1_avg(1.0, 0.5, 2.0) == pytest.approx(math.exp(-1))
    assert lumped.u2p_avg(1.0, inp) == pytest.approx(math.exp(-1 / (1 + 1 / 12)))
    assert lumped.u2p_delta(inp) == pytest.approx(1 / 13)
    assert lumped.u2p_boundary_avg(0.0, inp) == pytest.approx(14 / 13)


def test_estimators_by_hand():
    inp = LumpedInputs(0.2, 2.0, 0.5, 0.75, 0.25)
    est = lumped.error_estimators(inp)
    bi, bp, mix = 0.1, 0.05, abs(0.75 - 0.25 - 0.25)
    assert est["e1_asymp"] == pytest.approx(bp / math.e)
    assert est["e1_UB"] == pytest.approx(0.5 * math.sqrt(bp))
    assert est["e2P_asymp"] == pytest.approx((mix / math.e + 0.25) * bi ** 2)
    assert est["C0"] == pytest.approx(0.25 / math.e / 0.5)
    assert est["C1"] == pytest.approx(mix / 0.5)
    assert est["t0"] == pytest.approx(0.2 * 2.5)
    assert est["e_delta_rel_estimate"] == pytest.approx((est["C0"] / 0.2 + est["C1"]) * bi)


def test_sart2_e2p_estimator_coefficient():
    est = lumped.error_estimators(SART2)
    # per unit B^2
    coef = est["e2P_asymp"] / SART2.biot ** 2
    assert coef == pytest.approx(13.79, rel=1e-3)


def test_zero_biot_and_zero_phi():
    inp = LumpedInputs(0.0, 2.0, 0.5, 0.1, 0.1)
    est = lumped.error_estimators(inp)
    assert est["e1_asymp"] == 0 and est["e_delta_rel_estimate"] == 0 and est["t0"] is None
    assert inp.tau1 == math.inf
    assert np.all(lumped.u1_avg([0, 10, 1e9], 0.0, 2.0) == 1)
    with pytest.raises(ValueError, match="phi = 0"):
        lumped.error_estimators(LumpedInputs(1.0, 2.0, 0.0))
    assert lumped.report(LumpedInputs(1.0, 2.0, 0.0)).estimators == {}


def test_input_validation():
    with pytest.raises(ValueError):
        LumpedInputs(-1.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        LumpedInputs(1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        LumpedInputs(1.0, 2.0, -0.5)
    with pytest.raises(ValueError):
        lumped.u1_avg(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        lumped.error_estimators(LumpedInputs(1.0, 2.0, 0.5), t0=0.0)


@settings(max_examples=50)
@given(B=st.floats(1e-6, 10), gamma=st.floats(0.1, 100), phi=st.floats(0, 500),
       t=st.floats(0, 1e3))
def test_corrected_model_decays_slower(B, gamma, phi, t):
    inp = LumpedInputs(B, gamma, phi)
    u1 = lumped.u1_avg(t, B, gamma)
    u2 = lumped.u2p_avg(t, inp)
    assert u1 <= u2 * (1 + 1e-12) <= 1 + 1e-12
    assert 0 <= lumped.u2p_delta(inp) < 1


@settings(max_examples=50)
@given(B=st.floats(1e-6, 10), phi=st.floats(1e-3, 500))
def test_resistances_partition(B, phi):
    m = measures(named_shape("sart1"))
    inp = LumpedInputs(B, m.gamma, phi)
    r = lumped.resistances(inp, m)
    assert r["R_eq"] == pytest.approx(r["R_avg"] + r["R_h"])
    # conductive over convective resistance is Bi'
    assert r["R_avg"] / r["R_h"] == pytest.approx(inp.bi_prime, rel=1e-12)
    assert r["L_cond"] == pytest.approx(phi * m.volume / m.boundary)
    assert lumped.large_biot_resistance(inp, m.boundary) == pytest.approx(r["R_avg"])


def test_dimensional_resistances():
    m = measures(named_shape("square"))
    dim = DimensionalInput(rho_c=4e6, k=20.0, h=100.0, ell=0.01, T_i=400, T_inf=300)
    inp = LumpedInputs(dim.h * dim.ell / dim.k, m.gamma, 2 / 3)
    r = lumped.resistances(inp, m, dim)
    area = 4 * 0.01
    assert r["L"] == pytest.approx(0.25 * 0.01)
    assert r["R_h"] == pytest.approx(1 / (100 * area))
    assert r["R_avg"] == pytest.approx(2 / 3 * 0.0025 / (20 * area))
    assert r["R_avg"] / r["R_h"] == pytest.approx(inp.bi_prime)
    r0 = lumped.resistances(LumpedInputs(0.0, m.gamma, 2 / 3), m)
    assert math.isinf(r0["R_h"]) and "flag" in r0


def test_report_record():
    m = measures(named_shape("square"))
    rep = lumped.report(LumpedInputs(0.1, m.gamma, 2 / 3, bound_mode=True), measures=m)
    rec = rep.record()
    assert rec["bound_mode"] and "resistances" in rec and rec["tau1"] == pytest.approx(2.5)
    assert rep.u2p_avg(0.0) == 1.0
