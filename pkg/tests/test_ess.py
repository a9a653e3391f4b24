import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from essopt.blocks import ConstraintBlock
from essopt.ess import (EssModel, VoltageRef, add_hull_rows, emit_bess_convex_model,
                        emit_bess_loss_model, emit_complementarity_model, emit_linear_model,
                        emit_milp_model, emit_model, loss_row_meta, soc_trajectory, store_power)
from essopt.grid import EssDevice, Horizon


def device(**kw) -> EssDevice:
    base = dict(bus=2, p_ch_max=2.0, p_disch_max=2.0, e_min=0.0, e_max=10.0, e_init=5.0)
    base.update(kw)
    return EssDevice(**base)


def vref(T: int, bus: int = 2, lo: float = 0.81, hi: float = 1.21) -> VoltageRef:
    return VoltageRef(bus, tuple(f"v[{t}]" for t in range(T)), lo, hi)


def block_violation(blk: ConstraintBlock, x: dict) -> float:
    worst = 0.0
    for v in blk.variables.values():
        worst = max(worst, v.lb - x[v.name], x[v.name] - v.ub)
    for row in blk.all_rows():
        worst = max(worst, row.violation(x))
    for a, b, _ in blk.bilinear_pairs:
        worst = max(worst, abs(x[a] * x[b]))
    return worst


def milp_point(blk, p_ch, p_dis, dev, h, alphas=None):
    """Fill dependent variables of a milp/complementarity block from the raw powers."""
    f = blk.meta["fields"]
    x = {}
    soc = dev.e_init
    for t in range(h.num_periods):
        x[f["p_ch"][t]], x[f["p_disch"][t]] = p_ch[t], p_dis[t]
        net = dev.eta_ch * p_ch[t] - p_dis[t] / dev.eta_disch
        x[f["p_net"][t]] = net
        soc += h.dt_hours * net
        x[f["soc"][t]] = soc
        if "alpha_ch" in f:
            a_ch, a_dis = alphas[t] if alphas else (float(p_ch[t] > 0), float(p_dis[t] > 0))
            x[f["alpha_ch"][t]], x[f["alpha_disch"][t]] = a_ch, a_dis
    return x


# -- milp ---------------------------------------------------------------------

def test_milp_charge_efficiency_example():
    dev = device(eta_ch=0.9)
    h = Horizon(1, 0.25)
    blk = emit_milp_model(dev, h)
    x = milp_point(blk, [2.0], [0.0], dev, h)
    f = blk.meta["fields"]
    assert x[f["p_net"][0]] == pytest.approx(1.8)
    assert x[f["soc"][0]] - dev.e_init == pytest.approx(0.45)
    assert block_violation(blk, x) < 1e-12


def test_milp_idle_feasible_iff_initial_energy_in_band():
    h = Horizon(3, 1.0)
    for e_init, ok in ((5.0, True), (0.0, True), (10.0, True)):
        dev = device(e_init=e_init)
        blk = emit_milp_model(dev, h)
        x = milp_point(blk, [0.0] * 3, [0.0] * 3, dev, h)
        assert (block_violation(blk, x) < 1e-12) is ok
        assert all(x[s] == e_init for s in blk.meta["fields"]["soc"])


def test_milp_soc_rows_carry_dt():
    blk = emit_milp_model(device(), Horizon(4, 0.25))
    f = blk.meta["fields"]
    rows = [r for r in blk.linear_rows if r.tag == "soc-balance"]
    assert len(rows) == 4
    for t, r in enumerate(rows):
        assert r.coeffs[f["p_net"][t]] == -0.25


def test_milp_simultaneous_modes_infeasible():
    dev = device()
    h = Horizon(1, 1.0)
    blk = emit_milp_model(dev, h)
    x = milp_point(blk, [1.0], [1.0], dev, h, alphas=[(1.0, 1.0)])
    assert block_violation(blk, x) == pytest.approx(1.0)


def test_milp_binaries_only_in_milp():
    h = Horizon(2, 1.0)
    dev = device()
    assert len(emit_milp_model(dev, h).binary_vars) == 4
    assert emit_linear_model(dev, h).binary_vars == []
    assert emit_complementarity_model(dev, h).binary_vars == []
    assert emit_bess_convex_model(dev, h, vref(2)).binary_vars == []


# -- linear -------------------------------------------------------------------

def linear_point(blk, p_signed, dev, h):
    f = blk.meta["fields"]
    x = {}
    soc = dev.e_init
    for t, p in enumerate(p_signed):
        x[f["p_signed"][t]] = p
        soc -= h.dt_hours * p
        x[f["soc"][t]] = soc
    return x


def test_linear_boundary_and_violation():
    dev = device(p_ch_max=10.0, p_disch_max=10.0, e_init=5.0, e_max=10.0)
    h = Horizon(1, 1.0)
    blk = emit_linear_model(dev, h)
    x = linear_point(blk, [-5.0], dev, h)
    assert x[blk.meta["fields"]["soc"][0]] == 10.0
    assert block_violation(blk, x) == 0.0
    x = linear_point(blk, [-6.0], dev, h)
    assert block_violation(blk, x) == pytest.approx(1.0)


def test_linear_idle_keeps_soc():
    dev = device()
    h = Horizon(3, 1.0)
    blk = emit_linear_model(dev, h)
    x = linear_point(blk, [0.0] * 3, dev, h)
    assert block_violation(blk, x) == 0.0
    assert {x[s] for s in blk.meta["fields"]["soc"]} == {5.0}


def test_linear_bounds_follow_ratings():
    blk = emit_linear_model(device(p_ch_max=3.0, p_disch_max=1.5), Horizon(1, 1.0), base_mva=10.0)
    v = blk.variables[blk.meta["fields"]["p_signed"][0]]
    assert (v.lb, v.ub) == (-0.3, 0.15)


# -- complementarity ----------------------------------------------------------

def test_complementarity_pairs():
    dev = device(e_init=5.0)
    h = Horizon(4, 1.0)
    blk = emit_complementarity_model(dev, h)
    f = blk.meta["fields"]
    assert [(a, b) for a, b, _ in blk.bilinear_pairs] == list(zip(f["p_ch"], f["p_disch"]))
    x = milp_point(blk, [0.0] * 4, [1.0, 0.5, 1.0, 0.0], dev, h)
    assert block_violation(blk, x) < 1e-12
    x = milp_point(blk, [0, 0, 0, 1.0], [0, 0, 0, 1.0], dev, h)
    assert block_violation(blk, x) == pytest.approx(1.0)
    assert x[f["p_ch"][3]] * x[f["p_disch"][3]] == 1.0


def test_complementarity_and_milp_project_to_same_set():
    """Exhaustive 0.1 MW grid over T=2: same feasible (p_ch, p_disch) sets."""
    dev = device(p_ch_max=1.0, p_disch_max=1.0, e_min=0.2, e_max=1.5, e_init=0.6,
                 eta_ch=0.9, eta_disch=0.8)
    h = Horizon(2, 1.0)
    milp = emit_milp_model(dev, h)
    comp = emit_complementarity_model(dev, h)
    grid = [round(0.1 * k, 10) for k in range(11)]
    modes = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    feas_milp, feas_comp = set(), set()
    for pt in itertools.product(grid, repeat=4):
        p_ch, p_dis = pt[0::2], pt[1::2]
        if block_violation(comp, milp_point(comp, p_ch, p_dis, dev, h)) <= 1e-12:
            feas_comp.add(pt)
        for alphas in itertools.product(modes, repeat=2):
            if block_violation(milp, milp_point(milp, p_ch, p_dis, dev, h, list(alphas))) <= 1e-12:
                feas_milp.add(pt)
                break
    assert feas_comp == feas_milp
    assert 100 < len(feas_comp) < 11 ** 4


# -- converter-loss models ----------------------------------------------------

def bess_point(blk, p, q, v, dev):
    f = blk.meta["fields"]
    x = {}
    soc = dev.e_init
    for t in range(len(p)):
        loss = (dev.r_eq * p[t] ** 2 + dev.r_cvt * q[t] ** 2) / v[t]
        x.update({f["p_signed"][t]: p[t], f["q_ess"][t]: q[t], f["p_loss"][t]: loss,
                  f["p_net"][t]: p[t] + loss, f["v"][t]: v[t]})
        soc -= p[t] + loss
        x[f["soc"][t]] = soc
    return x


def test_r_eq_composition():
    assert device(r_bess=0.015, r_cvt=0.005).r_eq == pytest.approx(0.02)


def test_loss_equation_example():
    dev = device(r_bess=0.01, r_cvt=0.01, s_cvt_max=2.0)
    blk = emit_bess_loss_model(dev, Horizon(1, 1.0), vref(1))
    x = bess_point(blk, [1.0], [0.0], [1.0], dev)
    assert x[blk.meta["fields"]["p_loss"][0]] == pytest.approx(0.02)
    assert block_violation(blk, x) < 1e-12
    (row,) = [r for r in blk.quad_rows if r.tag == "loss-equation"]
    assert row.nonconvex


@pytest.mark.parametrize("v", [0.81, 1.0, 1.21])
def test_loss_zero_case(v):
    dev = device(r_bess=0.02, r_cvt=0.03)
    for emit in (emit_bess_loss_model, emit_bess_convex_model):
        blk = emit(dev, Horizon(1, 1.0), vref(1))
        assert block_violation(blk, bess_point(blk, [0.0], [0.0], [v], dev)) == 0.0


def test_bess_sign_convention():
    dev = device(r_bess=0.01, r_cvt=0.01, s_cvt_max=2.0)
    blk = emit_bess_loss_model(dev, Horizon(2, 1.0), vref(2))
    x = bess_point(blk, [1.0, -1.0], [0.0, 0.0], [1.0, 1.0], dev)
    soc = blk.meta["fields"]["soc"]
    # discharging 1 MW drains 1.02; charging 1 MW stores 0.98
    assert x[soc[0]] == pytest.approx(5.0 - 1.02)
    assert x[soc[1]] == pytest.approx(5.0 - 1.02 + 0.98)
    assert block_violation(blk, x) < 1e-12


def test_converter_models_need_voltage():
    h = Horizon(2, 1.0)
    with pytest.raises(ValueError):
        emit_bess_loss_model(device(), h, None)
    with pytest.raises(ValueError):
        emit_bess_convex_model(device(), h, vref(2, bus=3))
    with pytest.raises(ValueError):
        emit_bess_convex_model(device(), h, vref(1))
    with pytest.raises(ValueError):
        emit_bess_convex_model(device(), h, vref(2, lo=1.0, hi=1.0))


def test_hull_rows_are_convex_and_tagged():
    blk = emit_bess_convex_model(device(r_bess=0.02, r_cvt=0.01), Horizon(1, 1.0), vref(1))
    tags = sorted(r.tag for r in blk.all_rows())
    assert tags.count("hull-cone") == 1
    assert tags.count("hull-reactive") == 1
    assert tags.count("hull-voltage") == 1
    assert not any(r.nonconvex for r in blk.quad_rows)
    for r in blk.quad_rows:
        assert all(c >= 0 and u == v for u, v, c in r.quad)


def test_hull_variant_coefficient():
    dev = device(r_bess=0.02, r_cvt=0.05)
    for variant, coef in (("as_printed", 0.02), ("symmetric", 0.05)):
        blk = emit_bess_convex_model(dev, Horizon(1, 1.0), vref(1), hull_variant=variant)
        (row,) = [r for r in blk.quad_rows if r.tag == "hull-reactive"]
        assert row.quad[0][2] == coef
    with pytest.raises(ValueError):
        emit_bess_convex_model(dev, Horizon(1, 1.0), vref(1), hull_variant="other")


def test_loss_surface_points_satisfy_hull_cone_with_equality():
    rng = np.random.default_rng(3)
    dev = device(r_bess=0.03, r_cvt=0.02, s_cvt_max=1.0)
    for _ in range(200):
        r = math.sqrt(rng.uniform())
        th = rng.uniform(0, 2 * math.pi)
        v = rng.uniform(0.81, 1.21)
        blk = emit_bess_convex_model(dev, Horizon(1, 1.0), vref(1))
        x = bess_point(blk, [r * math.cos(th)], [r * math.sin(th)], [v], dev)
        (cone,) = [c for c in blk.cone_rows if c.tag == "hull-cone"]
        vals = [a.value(x) for a in cone.args]
        assert vals[0] * vals[1] == pytest.approx(sum(w * w for w in vals[2:]), abs=1e-12)
        assert block_violation(blk, x) <= 1e-9


def test_add_hull_rows_rejects_unknown_variant():
    meta = loss_row_meta(device(), 1.0, vref(1), 0, "p", "q", "l", 0)
    with pytest.raises(ValueError):
        add_hull_rows(ConstraintBlock("b"), meta, "mirror")


# -- soc arithmetic -----------------------------------------------------------

def test_soc_trajectory_examples():
    dev = device(e_init=10.0, e_max=20.0)
    assert soc_trajectory(dev, [2.0, -2.0], Horizon(2, 0.5)).tolist() == [11.0, 10.0]
    assert soc_trajectory(dev, [0.0] * 3, Horizon(3, 1.0)).tolist() == [10.0] * 3
    with pytest.raises(ValueError):
        soc_trajectory(dev, [1.0], Horizon(2, 1.0))


series = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=12)


@given(series, st.floats(0.05, 2.0))
def test_soc_trajectory_affine(xs, dt):
    dev = device(e_init=3.0)
    h = Horizon(len(xs), dt)
    one = soc_trajectory(dev, xs, h) - dev.e_init
    two = soc_trajectory(dev, [2 * v for v in xs], h) - dev.e_init
    np.testing.assert_allclose(two, 2 * one, rtol=1e-12, atol=1e-9)


@given(series)
def test_soc_trajectory_zero_sum_returns_to_start(xs):
    xs = xs + [-sum(xs)]
    dev = device(e_init=4.0)
    soc = soc_trajectory(dev, xs, Horizon(len(xs), 1.0))
    assert soc[-1] == pytest.approx(4.0, abs=1e-9)


def test_store_power_table():
    dev = device(eta_ch=0.9, eta_disch=0.8)
    assert store_power("milp", dev, p_ch=[2.0], p_disch=[0.0]).tolist() == pytest.approx([1.8])
    assert store_power("complementarity", dev, p_ch=[0.0], p_disch=[0.8]).tolist() == pytest.approx([-1.0])
    assert store_power("linear", dev, p_signed=[1.5]).tolist() == [-1.5]
    assert store_power("bess-loss", dev, p_signed=[-1.0], p_loss=[0.02]).tolist() == pytest.approx([0.98])


# -- determinism --------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(EssModel)), st.integers(1, 5), st.floats(0.1, 1.0),
       st.floats(0.5, 1.0), st.integers(0, 3))
def test_emitters_deterministic(model, T, dt, eta, index):
    dev = device(eta_ch=eta, eta_disch=eta, r_bess=0.01, r_cvt=0.02)
    h = Horizon(T, dt)
    kw = dict(index=index, base_mva=10.0, voltage=vref(T))
    a, b = emit_model(model, dev, h, **kw), emit_model(model, dev, h, **kw)
    assert a.dump() == b.dump()
    assert list(a.variables) == list(b.variables)
    assert all(name.startswith(f"ess{index}.") for name in a.variables)
    assert a.external_refs() <= set(kw["voltage"].names)


def test_terminal_soc_row():
    blk = emit_linear_model(device(), Horizon(3, 1.0), terminal_soc=True)
    rows = [r for r in blk.linear_rows if r.tag == "terminal-soc"]
    assert len(rows) == 1 and rows[0].rhs == 5.0
    assert not [r for r in emit_linear_model(device(), Horizon(3, 1.0)).linear_rows
                if r.tag == "terminal-soc"]


def test_model_numbers_round_trip():
    for m in EssModel:
        assert EssModel.from_number(m.number) is m
    assert [m.number for m in EssModel] == [2, 3, 4, 5, 6]
