import csv
import json

import numpy as np
import pytest

import nlsc.classify as C
from nlsc.classify import (
    BLOWUP,
    GLOBAL,
    INDETERMINATE,
    SWEEP_COLUMNS,
    Geometry,
    classify,
    config_digest,
    energy_critical_coupling_floor,
    f_func,
    g_func,
    sweep,
)
from nlsc.errors import InconsistentInput, RegimeMismatch, SweepContradiction
from nlsc.grid import Field, ModelParams, build_grid, energy, h1c_seminorm_sq
from nlsc.groundstate import Thresholds, shoot_ground_state, thresholds

# |grad W_0|^2 in d = 3 is 3^(3/2) pi^2 / 4, and E(W_0) is a third of it; frozen.
W0_D3_NORM = 12.820992204969127

MC = ModelParams(3, 4 / 3, -0.1)
IC = ModelParams(3, 2.0, -0.1)
EC = ModelParams(3, 4.0, -0.1)


@pytest.fixture(scope="module")
def g3():
    return build_grid(3, 30.0, 2000)


@pytest.fixture(scope="module")
def mc(g3):
    gs = shoot_ground_state(MC, g3, tol=1e-3)
    return gs, thresholds(MC, g3, gs=gs)


@pytest.fixture(scope="module")
def ic(g3):
    gs = shoot_ground_state(IC, g3, tol=1e-3)
    return gs, thresholds(IC, g3, gs=gs)


def gaussian(g, amp, width=1.0):
    return Field(g, amp * np.exp(-(g.nodes / width) ** 2))


def test_f_endpoints(ic):
    _, th = ic
    assert f_func(0.0, IC, th.c_gn) == 0.0
    assert f_func(th.k_c, IC, th.c_gn) == pytest.approx(th.h_c, rel=1e-12)


@pytest.mark.parametrize("d,alpha", [(3, 2.0), (3, 1.5), (4, 1.25), (5, 1.0)])
def test_f_increasing_below_k(d, alpha):
    p = ModelParams(d, alpha, -0.1)
    cgn = 0.07
    # K solves f'(K) = 0
    k = (2 * (alpha + 2) / (d * alpha * cgn)) ** (1 / (d * alpha / 2 - 2))
    x = np.linspace(0, k, 10001)[:-1]
    assert np.all(np.diff(f_func(x, p, cgn)) > 0)
    assert f_func(1.05 * k, p, cgn) < f_func(k, p, cgn)


def test_f_g_regimes():
    with pytest.raises(RegimeMismatch):
        f_func(1.0, MC, 0.1)
    with pytest.raises(RegimeMismatch):
        g_func(1.0, IC, 0.1)


def test_g_at_w(g3):
    th = thresholds(EC, g3)
    assert g_func(0.0, EC, th.c_se) == 0.0
    assert g_func(th.w_h1c, EC, th.c_se) == pytest.approx(th.w_energy, rel=1e-6)


def test_g_closed_form_d3():
    p = ModelParams(3, 4.0, 0.0)
    th = thresholds(p, build_grid(3, 30.0, 2000))
    y = np.sqrt(W0_D3_NORM)
    assert g_func(y, p, th.c_se) == pytest.approx(W0_D3_NORM / 3, rel=1e-4)


def test_coupling_floor():
    assert energy_critical_coupling_floor(3) == pytest.approx(-21 / 100, rel=1e-14)
    assert energy_critical_coupling_floor(4) == pytest.approx(-32 / 36, rel=1e-14)


def test_masscrit_below_ground_state_mass(mc):
    gs, th = mc
    v = classify(gs.profile.scaled(0.9), MC, th)
    assert v.prediction == GLOBAL
    assert v.rule_fired == "mass-critical:below-ground-state-mass"
    assert v.margins["mass"] == pytest.approx(0.1, rel=1e-3)


def test_masscrit_ground_state_is_indeterminate(mc):
    gs, th = mc
    assert classify(gs.profile, MC, th).prediction == INDETERMINATE


def test_masscrit_negative_energy(mc):
    gs, th = mc
    v = classify(gs.profile.scaled(1.2), MC, th)
    assert v.prediction == BLOWUP and v.margins["negative_energy"] > 0
    # without radial symmetry or finite variance no rule applies
    bare = Geometry(radial=False, has_xu_l2=False)
    assert classify(gs.profile.scaled(1.2), MC, th, bare).prediction == INDETERMINATE


@pytest.mark.parametrize("lam,expected", [(0.9, GLOBAL), (1.0, INDETERMINATE), (1.05, BLOWUP)])
def test_intercritical_around_q(ic, lam, expected):
    gs, th = ic
    v = classify(gs.profile.scaled(lam), IC, th)
    assert v.prediction == expected
    if expected == BLOWUP:
        assert v.rule_fired == "intercritical:above-ground-state"
        assert v.margins["energy"] > 0 and v.margins["kinetic_above"] > 0


def test_intercritical_equality_is_indeterminate(ic):
    gs, th = ic
    u = gs.profile
    m = float(np.sum(u.grid.weights * np.abs(u.values) ** 2))
    # thresholds placed exactly at the datum's own levels
    exact = Thresholds(regime="intercritical", c_bar=IC.c, radial=False, c_gn=th.c_gn,
                       _h=energy(u, IC) * m**IC.sigma,
                       _k=np.sqrt(h1c_seminorm_sq(u, IC.c)) * m ** (IC.sigma / 2))
    v = classify(u, IC, exact)
    assert v.prediction == INDETERMINATE
    assert v.margins["energy"] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("p", [MC, IC, EC], ids=["mass-critical", "intercritical", "energy-critical"])
def test_negative_energy_blows_up_in_every_regime(g3, p):
    gs = shoot_ground_state(p, g3, tol=1e-3) if p.regime != "energy-critical" else None
    th = thresholds(p, g3, gs=gs)
    u = gaussian(g3, 8.0)
    assert energy(u, p) < 0
    v = classify(u, p, th)
    assert v.prediction == BLOWUP
    assert v.rule_fired.endswith("negative-energy")


def test_energy_critical_rules(g3):
    th = thresholds(EC, g3)
    small = gaussian(g3, 0.1)
    assert classify(small, EC, th).prediction == INDETERMINATE
    below = ModelParams(3, 4.0, -0.22)
    thb = thresholds(below, g3)
    v = classify(gaussian(g3, 4.0), below, thb)
    assert v.prediction == INDETERMINATE
    assert v.rule_fired == "energy-critical:coupling-too-negative"
    assert v.margins["coupling"] < 0


def test_energy_critical_inconsistent_input(g3):
    u = gaussian(g3, 1.0)
    t = h1c_seminorm_sq(u, EC.c)
    fake = Thresholds(regime="energy-critical", c_bar=EC.c, radial=False,
                      _w_energy=10 * energy(u, EC), _w_h1c=np.sqrt(t), c_se=0.5)
    with pytest.raises(InconsistentInput):
        classify(u, EC, fake)


def test_regime_mismatch(ic, mc):
    gs, _ = ic
    _, thm = mc
    with pytest.raises(RegimeMismatch):
        classify(gs.profile, IC, thm)


def test_classify_is_pure(ic):
    gs, th = ic
    u = gs.profile.scaled(1.05)
    a = classify(u, IC, th)
    assert classify(u, IC, th) == a
    # only norms matter, so a global phase changes nothing
    b = classify(u.scaled(np.exp(0.4j)), IC, th)
    assert b.prediction == a.prediction
    for k in a.margins:
        assert b.margins[k] == pytest.approx(a.margins[k], rel=1e-12, abs=1e-15)


def test_radial_thresholds_raise_the_bar():
    g3 = build_grid(3, 30.0, 4000)
    p = ModelParams(3, 2.0, 0.5)
    gs = shoot_ground_state(p, g3)
    plain = thresholds(p, g3)
    rad = thresholds(p, g3, radial=True)
    u = gs.profile.scaled(0.99)
    # a radial ground state of P_c sits above the c_bar = 0 thresholds but below the radial ones
    assert classify(u, p, plain).prediction != GLOBAL
    assert classify(u, p, rad).prediction == GLOBAL


def test_empty_config():
    rep = sweep({})
    assert rep.rows == () and rep.contradictions == ()
    assert rep.counts() == {}


def test_config_digest_is_canonical():
    a = {"cells": [{"d": 3, "c": -0.1}], "defaults": {"n": 2000}}
    b = {"defaults": {"n": 2000}, "cells": [{"c": -0.1, "d": 3}]}
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest({"cells": []})


LAMBDA_SCAN = {
    "defaults": {"t_end": 2.0},
    "cells": [{"d": 3, "alpha": 4 / 3, "c": -0.1, "family": "lambda_q", "values": [0.8, 1.2]}],
}


@pytest.fixture(scope="module")
def small_sweep():
    return sweep(LAMBDA_SCAN)


def test_small_sweep_agrees(small_sweep):
    rows = small_sweep.rows
    assert [r["prediction"] for r in rows] == [GLOBAL, BLOWUP]
    assert [r["simulated"] for r in rows] == ["GlobalSoFar", "BlowupDetected"]
    assert all(r["agreement"] for r in rows)
    assert small_sweep.contradictions == ()
    assert rows[0]["h1c_ratio_max"] < 2.0


def test_sweep_outputs(small_sweep, tmp_path):
    small_sweep.write_csv(tmp_path / "s.csv")
    small_sweep.write_json(tmp_path / "s.json")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == SWEEP_COLUMNS
    assert len(rows) == 3
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["config_digest"] == config_digest(LAMBDA_SCAN)
    assert summary["contradictions"] == []


@pytest.mark.parametrize(
    "prediction,simulated,ratio,ok",
    [
        (GLOBAL, "GlobalSoFar", 1.0, True),
        (GLOBAL, "BlowupDetected", 1e3, False),
        (GLOBAL, "Unresolved", 20.0, False),
        (BLOWUP, "GlobalSoFar", 1.0, False),
        (BLOWUP, "Unresolved", 50.0, True),
        (INDETERMINATE, "BlowupDetected", 1e3, True),
    ],
)
def test_agreement_rules(prediction, simulated, ratio, ok):
    assert C._agreement(prediction, simulated, ratio) is ok


def test_contradiction_is_fatal(monkeypatch):
    monkeypatch.setattr(C, "_agreement", lambda *a: False)
    cfg = {"defaults": {"t_end": 0.1},
           "cells": [{"d": 3, "alpha": 4 / 3, "c": -0.1, "family": "gaussian", "values": [0.5]}]}
    with pytest.raises(SweepContradiction) as err:
        sweep(cfg)
    assert err.value.row["value"] == 0.5
    assert len(err.value.report.contradictions) == 1
    rep = sweep(cfg, raise_on_contradiction=False)
    assert len(rep.contradictions) == 1
