"""Three-layer binary universal approximator."""

import csv
import math

import numpy as np
import pytest

from bcnn import ufa
from bcnn.ufa import (UfaSpec, add_discontinuity_branch, audit_unit_weights,
                      build_ufa, build_ufa_vector, eval_ufa, eval_ufa_vector,
                      rect_indicator, refinement_sweep, spec_from_function,
                      sup_error, write_curve_csv, write_sweep_csv)

import oracles


def sine(x):
    return 0.5 + 0.4 * math.sin(2 * math.pi * x)


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_spec_rejects_non_integer_grid():
    with pytest.raises(ValueError):
        spec_from_function(sine, 0.3, 32)


def test_spec_rejects_bad_q():
    with pytest.raises(ValueError):
        spec_from_function(sine, 0.25, 0)


def test_spec_rejects_samples_below_offset():
    spec = UfaSpec(d=0.25, q=8, f_samples=np.array([-1.0, 0.0, 1.0]), f_min=0.0)
    with pytest.raises(ValueError):
        spec.validate()


def test_layer1_unit_count():
    net = build_ufa(spec_from_function(sine, 1.0 / 8, 8))
    assert net.n_layer1_units == 2 * (8 - 1)  # 2(1/d - 1) sign units


# ---------------------------------------------------------------------------
# construction and evaluation
# ---------------------------------------------------------------------------

def test_zero_function_outputs_offset_everywhere():
    net = build_ufa(spec_from_function(lambda x: 0.0, 0.25, 16))
    xs = np.linspace(0, 1, 101)
    assert np.all(eval_ufa(net, xs) == 0.0)


def test_constant_one_q10():
    net = build_ufa(spec_from_function(lambda x: 1.0, 0.25, 10))
    assert np.all(net.counts == 10)
    for k in (1, 2, 3):
        assert eval_ufa(net, 0.25 * k) == 1.0


def test_ramp_midpoint_value():
    net = build_ufa(spec_from_function(lambda x: x, 0.25, 100))
    assert eval_ufa(net, 0.5) == 0.5  # round(100 * 0.5) / 100


def test_center_exactness():
    d, q = 1.0 / 16, 32
    net = build_ufa(spec_from_function(sine, d, q))
    for k in range(1, 16):
        x = k * d
        want = round(q * sine(x)) / q
        assert eval_ufa(net, x) == want
        assert abs(eval_ufa(net, x) - sine(x)) <= 1 / (2 * q) + 1e-12


def test_matches_pointwise_oracle():
    rng = np.random.default_rng(0)
    net = build_ufa(spec_from_function(sine, 1.0 / 8, 16))
    for x in rng.uniform(0.0, 1.0, 200):
        assert eval_ufa(net, x) == oracles.ufa_point_ref(sine, 1.0 / 8, 16, x)


def test_outside_domain_gives_offset():
    net = build_ufa(spec_from_function(sine, 0.25, 8))
    assert eval_ufa(net, -0.5) == 0.0
    assert eval_ufa(net, 1.5) == 0.0


def test_single_rectangle_active():
    net = build_ufa(spec_from_function(sine, 1.0 / 8, 8))
    xs = np.linspace(0.0, 1.0, 4001)
    rect = rect_indicator(net, xs)       # +-1 per rectangle
    active = (rect > 0).sum(axis=-1)
    assert np.max(active) <= 1
    # incl. exact cell boundaries: half-open means the left cell wins
    for k in range(2, 7):
        edge = k / 8 - 1 / 16
        ra = rect_indicator(net, edge)
        assert (ra > 0).sum() == 1
        assert ra[k - 1] > 0  # cell with left edge == `edge` is active


def test_negative_targets_offset_equality():
    f = lambda x: math.sin(2 * math.pi * x) - 0.25
    d, q = 1.0 / 16, 64
    auto = build_ufa(spec_from_function(f, d, q))
    assert auto.f_min < 0
    lifted = build_ufa(spec_from_function(lambda x: f(x) - auto.f_min, d, q,
                                          f_min=0.0))
    xs = np.linspace(0.05, 0.95, 500)
    np.testing.assert_array_equal(eval_ufa(auto, xs),
                                  eval_ufa(lifted, xs) + auto.f_min)


def test_lipschitz_error_bound():
    lip = 0.4 * 2 * math.pi
    for d, q in [(1 / 8, 8), (1 / 16, 16), (1 / 32, 32)]:
        net = build_ufa(spec_from_function(sine, d, q))
        err = sup_error(net, sine, 2000)
        assert err <= lip * d / 2 + 1 / (2 * q) + 1e-9


def test_grid_quantized_step_function_is_exact():
    # piecewise constant on the construction's own (center-aligned) cells,
    # with values on the 1/Q lattice: reproduced without error
    d, q = 1.0 / 8, 16
    f = lambda x: (math.floor(x / d + 0.5) % 3) * 4 / q
    net = build_ufa(spec_from_function(f, d, q))
    assert sup_error(net, f, 5000) == 0.0


def test_monotone_refinement():
    rows = refinement_sweep(sine, steps=4, n_samples=2000)
    errs = [r[2] for r in rows]
    assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 0.1


def test_end_caps_cover_whole_domain():
    net = build_ufa(spec_from_function(sine, 1.0 / 8, 64),
                    end_values=(sine(0.0), sine(1.0)))
    err = sup_error(net, sine, 3000, include_ends=True)
    lip = 0.4 * 2 * math.pi
    assert err <= lip * (1.0 / 8) / 2 + 1 / (2 * 64) + 1e-9


# ---------------------------------------------------------------------------
# discontinuities
# ---------------------------------------------------------------------------

def step_fn(x):
    return 0.0 if x < 0.5 else 1.0


def test_discontinuity_branch_fixes_step():
    d, q = 1.0 / 8, 64
    base = build_ufa(spec_from_function(step_fn, d, q))
    net = add_discontinuity_branch(base, 0.5, step_fn(0.5))
    assert abs(eval_ufa(net, 0.5) - 1.0) <= 1 / (2 * q)
    # the carved grid cells keep their values away from the new branch
    assert eval_ufa(net, 0.25) == 0.0
    assert eval_ufa(net, 0.75) == 1.0


def test_discontinuity_dedup_idempotent():
    base = build_ufa(spec_from_function(step_fn, 1.0 / 8, 32))
    once = add_discontinuity_branch(base, 0.5, 1.0)
    twice = add_discontinuity_branch(once, 0.5, 1.0)
    assert twice is once
    xs = np.linspace(0.01, 0.99, 500)
    np.testing.assert_array_equal(eval_ufa(once, xs), eval_ufa(twice, xs))


def test_discontinuity_still_single_active():
    base = build_ufa(spec_from_function(step_fn, 1.0 / 8, 32))
    net = add_discontinuity_branch(base, 0.5, 1.0)
    xs = np.linspace(0.0, 1.0, 3001)
    active = (rect_indicator(net, xs) > 0).sum(axis=-1)
    assert np.max(active) <= 1


def test_discontinuity_outside_domain_rejected():
    net = build_ufa(spec_from_function(step_fn, 1.0 / 8, 32))
    with pytest.raises(ValueError):
        add_discontinuity_branch(net, 1.5, 1.0)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def test_all_unit_weights_are_pm1():
    net = build_ufa(spec_from_function(sine, 1.0 / 8, 16))
    weights = audit_unit_weights(net)
    assert set(weights) <= {1, -1}
    assert len(weights) > 0


def test_counts_are_nonnegative_integers():
    net = build_ufa(spec_from_function(sine, 1.0 / 32, 64))
    assert net.counts.dtype == np.int64
    assert np.all(net.counts >= 0)
    assert net.n_subbranches == int(net.counts.sum())


# ---------------------------------------------------------------------------
# vector inputs
# ---------------------------------------------------------------------------

def test_vector_k1_matches_scalar():
    d, q = 1.0 / 8, 32
    net1 = build_ufa(spec_from_function(sine, d, q))
    netv = build_ufa_vector(lambda v: np.array([sine(v[0])]), [d], q, [0.0], [1.0])
    for x in np.linspace(0.07, 0.93, 50):
        assert eval_ufa_vector(netv, [x])[0] == eval_ufa(net1, x)


def test_vector_k2_constant_one():
    netv = build_ufa_vector(lambda v: np.array([1.0]), [0.25, 0.25], 16,
                            [0.0, 0.0], [1.0, 1.0])
    assert eval_ufa_vector(netv, [0.5, 0.5])[0] == 1.0
    assert eval_ufa_vector(netv, [0.3, 0.7])[0] == 1.0


def test_vector_k2_sum_error_bound():
    d, q = 1.0 / 8, 64
    netv = build_ufa_vector(lambda v: np.array([v[0] + v[1]]), [d, d], q,
                            [0.0, 0.0], [1.0, 1.0])
    worst = 0.0
    for x in np.linspace(d, 1 - d, 15):
        for y in np.linspace(d, 1 - d, 15):
            got = eval_ufa_vector(netv, [x, y])[0]
            worst = max(worst, abs(got - (x + y)))
    assert worst <= d + 1 / (2 * q)


def test_vector_k4_rejected():
    with pytest.raises(ValueError):
        build_ufa_vector(lambda v: np.array([0.0]), [0.25] * 4, 8,
                         [0.0] * 4, [1.0] * 4)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def test_curve_csv_columns(tmp_path):
    net = build_ufa(spec_from_function(sine, 0.25, 16))
    p = tmp_path / "curve.csv"
    write_curve_csv(net, sine, str(p), n_samples=16)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["x", "f(x)", "ufa(x)", "abs_error"]
    assert len(rows) == 17
    x, fx, ux, err = map(float, rows[1])
    assert abs(abs(ux - fx) - err) < 1e-6  # columns carry 8 significant digits


def test_sweep_csv_columns(tmp_path):
    p = tmp_path / "sweep.csv"
    write_sweep_csv([(0.25, 8, 0.5), (0.125, 16, 0.25)], str(p))
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["d", "Q", "sup_error"]
    assert len(rows) == 3
    assert float(rows[1][0]) == 0.25 and int(rows[1][1]) == 8


def test_csv_overwrite(tmp_path):
    p = tmp_path / "c.csv"
    net = build_ufa(spec_from_function(sine, 0.25, 16))
    write_curve_csv(net, sine, str(p), n_samples=4)
    first = p.read_bytes()
    write_curve_csv(net, sine, str(p), n_samples=4)
    assert p.read_bytes() == first
