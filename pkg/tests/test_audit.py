import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from essopt.audit import (AuditTolerances, DispatchSchedule, audit_schedule, extract_schedule,
                          hull_containment_sample, relaxation_gap, schedule_from_csv, schedule_to_csv)
from essopt.grid import Branch, Bus, EssDevice, Generator, Horizon, Network
from essopt.network import Objective
from essopt.problem import build_problem
from essopt.solvers import SolverOptions, solve

from oracles import arbitrage_net

DEV = EssDevice(2, 1.0, 1.0, 0.0, 4.0, 2.0)
BESS = EssDevice(2, 1.0, 1.0, 0.0, 2.0, 1.0, r_bess=0.02, r_cvt=0.02, s_cvt_max=1.0)


def schedule(model="milp", T=4, **arrays):
    s = DispatchSchedule.zeros([model], T, [DEV])
    for k, v in arrays.items():
        getattr(s, k)[0] = v
    return s


def test_zero_schedule_passes():
    rep = audit_schedule(schedule(), [DEV], Horizon(4, 1.0))
    assert rep.passed
    assert all(r.worst == 0.0 for r in rep.results)
    np.testing.assert_array_equal(rep.soc[0], [2.0] * 4)


def test_simultaneous_modes_fail_complementarity():
    s = schedule(p_ch=[0, 0, 0.5, 0], p_disch=[0, 0, 0.5, 0], p_net=[0, 0, 0.0, 0])
    rep = audit_schedule(s, [DEV], Horizon(4, 1.0))
    assert rep.complementarity[0] >= 0.5
    assert not rep.passed
    fam = [r for r in rep.failures if r.family == "complementarity"]
    assert fam and fam[0].period == 2


def test_soc_disagreement_measured():
    s = schedule(soc=[2.0, 2.3, 2.0, 2.0])
    rep = audit_schedule(s, [DEV], Horizon(4, 1.0))
    assert rep.worst("soc-consistency", 0) == pytest.approx(0.3)
    assert [r.family for r in rep.failures] == ["soc-consistency"]


def test_soc_band_and_bounds():
    s = schedule(p_ch=[1.0] * 4, p_net=[1.0] * 4, soc=[3.0, 4.0, 5.0, 6.0])
    rep = audit_schedule(s, [DEV], Horizon(4, 1.0))
    assert rep.worst("soc-band") == pytest.approx(2.0)
    s = schedule(p_ch=[1.5, 0, 0, 0], p_net=[1.5, 0, 0, 0], soc=[3.5] * 4)
    assert audit_schedule(s, [DEV], Horizon(4, 1.0)).worst("power-bounds") == pytest.approx(0.5)


def test_net_power_equation_checked():
    s = schedule(p_ch=[1.0, 0, 0, 0], p_net=[0.9, 0, 0, 0], soc=[2.9] * 4)
    rep = audit_schedule(s, [DEV], Horizon(4, 1.0))
    assert rep.worst("net-power") == pytest.approx(0.1)


def test_terminal_soc_family():
    s = schedule("linear", p_signed=[1.0, 0, 0, 0], p_net=[-1.0, 0, 0, 0], soc=[1.0] * 4)
    h = Horizon(4, 1.0)
    assert audit_schedule(s, [DEV], h).passed
    rep = audit_schedule(s, [DEV], h, terminal_soc=True)
    assert rep.worst("terminal-soc") == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        audit_schedule(schedule(), [DEV, DEV], Horizon(4, 1.0))
    with pytest.raises(ValueError):
        audit_schedule(schedule(), [DEV], Horizon(3, 1.0))
    with pytest.raises(ValueError):
        DispatchSchedule(("milp",), np.zeros((1, 2)), *(np.zeros((1, 3)) for _ in range(7)))


def test_converter_schedule_needs_voltage():
    s = DispatchSchedule.zeros(["bess-loss"], 2, [BESS])
    with pytest.raises(ValueError):
        audit_schedule(s, [BESS], Horizon(2, 1.0))
    with pytest.raises(ValueError):
        relaxation_gap(s, 0, BESS)


def test_tolerances():
    assert AuditTolerances().soc == 1e-8
    assert AuditTolerances.uniform(1e-6).complementarity == 1e-6
    with pytest.raises(ValueError):
        AuditTolerances(power=0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.floats(0.0, 4.0), st.sampled_from(["milp", "linear", "complementarity"]))
def test_zero_net_power_keeps_soc_exactly(T, e_init, model):
    dev = EssDevice(2, 1.0, 1.0, 0.0, 4.0, e_init)
    s = DispatchSchedule.zeros([model], T, [dev])
    rep = audit_schedule(s, [dev], Horizon(T, 0.25))
    assert rep.passed
    assert np.all(rep.soc[0] == e_init)


# -- solver outputs -----------------------------------------------------------

@pytest.mark.parametrize("model", ["milp", "linear", "complementarity"])
def test_solver_outputs_pass_audit(model):
    prices = [10.0, 50.0, 5.0, 40.0]
    dev = EssDevice(2, 1.0, 1.0, 0.0, 1.5, 0.5, eta_ch=0.9, eta_disch=0.9)
    if model == "linear":
        dev = EssDevice(2, 1.0, 1.0, 0.0, 1.5, 0.5)
    net = arbitrage_net(prices, dev)
    p = build_problem(net, model, "dc", "arbitrage", prices)
    sol = solve(p)
    assert sol.ok
    s = extract_schedule(p, sol)
    rep = audit_schedule(s, net.devices, net.horizon)
    assert rep.passed, rep.to_text()


def feeder(devices, T=2):
    return Network([Bus(1, 1.0, 1.0, "slack"), Bus(2)], [Branch(1, 2, 0.01, 0.02, 10.0)],
                   [Generator(1, -10, 10, -10, 10, 0.0, 20.0)], devices,
                   [[0.0] * T, [0.5] * T], [[0.0] * T, [0.2] * T], 10.0, Horizon(T, 1.0))


def test_hull_output_gap_and_audit():
    net = feeder([BESS])
    p = build_problem(net, "bess-loss", "distflow", "arbitrage", [30.0, 10.0])
    sol = solve(p)
    s = extract_schedule(p, sol)
    assert audit_schedule(s, net.devices, net.horizon).passed
    g = relaxation_gap(s, 0, BESS)
    assert np.all(np.abs(g) <= 1e-9)


def test_relaxation_gap_on_engineered_slack():
    net = feeder([BESS])
    p = build_problem(net, "bess-convex", "distflow")
    f = p.devices[0]["fields"]
    p = p.with_bounds({f["p_signed"][0]: (0.05, 0.05), f["p_signed"][1]: (0.0, 0.0)})
    p = p.with_changes(objective=Objective(None, {v: -1.0 for v in f["p_loss"]}))
    sol = solve(p)
    assert sol.status == "optimal"
    g = relaxation_gap(extract_schedule(p, sol), 0, BESS)
    assert g.max() > 1e-6
    assert g.min() >= -1e-9


def test_zero_schedule_gap():
    s = DispatchSchedule.zeros(["bess-convex"], 3, [BESS])
    s.v_sq[:] = 1.0
    assert np.all(relaxation_gap(s, 0, BESS) == 0.0)


# -- CSV ----------------------------------------------------------------------

def test_csv_round_trip_exact():
    rng = np.random.default_rng(0)
    arrays = {k: rng.standard_normal((2, 3)) for k in
              ("p_ch", "p_disch", "p_signed", "p_net", "q_ess", "p_loss", "soc", "v_sq")}
    s = DispatchSchedule(("milp", "bess-convex"), **arrays, base_mva=10.0)
    back = schedule_from_csv(schedule_to_csv(s), base_mva=10.0)
    assert back.models == s.models
    for k, v in arrays.items():
        np.testing.assert_array_equal(getattr(back, k), v)


def test_csv_missing_columns_and_rows():
    with pytest.raises(ValueError):
        schedule_from_csv("device,t,p_ch\n0,0,1\n")
    lines = schedule_to_csv(schedule(T=3)).splitlines()
    with pytest.raises(ValueError):
        schedule_from_csv("\n".join(lines[:2] + lines[3:]) + "\n")


def test_report_serialization():
    rep = audit_schedule(schedule(soc=[2.0, 2.3, 2.0, 2.0]), [DEV], Horizon(4, 1.0))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "device,family,worst_violation,period,tolerance,pass"
    assert any(line.startswith("0,soc-consistency,") and line.endswith(",fail") for line in lines)
    assert rep.to_text().startswith("audit: FAIL")


# -- hull containment ---------------------------------------------------------

BUS = Bus(2, 0.81, 1.21)


def test_containment_as_printed_clean():
    dev = EssDevice(2, 1, 1, 0, 1, 0, r_bess=0.03, r_cvt=0.05, s_cvt_max=1.0)
    rep = hull_containment_sample(dev, BUS, 100_000, seed=7)
    assert rep.counts == {"hull-cone": 0, "hull-reactive": 0, "hull-voltage": 0}
    assert all(v is None for v in rep.worst_sample.values())


def test_containment_symmetric_counterexample_surfaced():
    dev = EssDevice(2, 1, 1, 0, 1, 0, r_bess=0.01, r_cvt=0.3, s_cvt_max=1.0)
    rep = hull_containment_sample(dev, BUS, 100_000, seed=7, variant="symmetric")
    assert rep.counts["hull-reactive"] > 0
    ws = rep.worst_sample["hull-reactive"]
    assert ws["excess"] == pytest.approx(rep.max_violation["hull-reactive"])
    # analytic bound: worst case sits at p=0, |q|=s, V=v_min: excess = (r_cvt - r_bess) * s^2
    assert rep.max_violation["hull-reactive"] <= 0.29 + 1e-12
    assert "worst:" in rep.to_text()
    ok = EssDevice(2, 1, 1, 0, 1, 0, r_bess=0.3, r_cvt=0.01, s_cvt_max=1.0)
    assert hull_containment_sample(ok, BUS, 20_000, seed=1, variant="symmetric").counts["hull-reactive"] == 0


def test_containment_reproducible():
    dev = EssDevice(2, 1, 1, 0, 1, 0, r_bess=0.02, r_cvt=0.01, s_cvt_max=2.0)
    a = hull_containment_sample(dev, BUS, 5000, seed=3, base_mva=10.0)
    b = hull_containment_sample(dev, BUS, 5000, seed=3, base_mva=10.0)
    assert a.to_text() == b.to_text()
    assert a.max_violation == b.max_violation


def test_containment_preconditions():
    dev = EssDevice(2, 1, 1, 0, 1, 0, r_bess=0.02, r_cvt=0.01)
    with pytest.raises(ValueError):
        hull_containment_sample(dev, Bus(2, 1.0, 1.0), 10, 0)
    with pytest.raises(ValueError):
        hull_containment_sample(EssDevice(2, 1, 1, 0, 1, 0, s_cvt_max=0.0), BUS, 10, 0)
    with pytest.raises(ValueError):
        hull_containment_sample(dev, BUS, 10, 0, variant="x")


def test_audit_at_solver_tolerance():
    prices = [10.0, 50.0]
    dev = EssDevice(2, 1.0, 1.0, 0.0, 1.0, 0.0)
    net = arbitrage_net(prices, dev)
    opts = SolverOptions(feasibility_tol=1e-6, optimality_tol=1e-6)
    p = build_problem(net, "linear", "dc", "arbitrage", prices)
    sol = solve(p, opts)
    rep = audit_schedule(extract_schedule(p, sol), net.devices, net.horizon, AuditTolerances.uniform(1e-6))
    assert rep.passed
    assert math.isclose(-sol.objective, 40.0, abs_tol=1e-4)
