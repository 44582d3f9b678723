"""Domain types, validation, and the moment functions."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_small, make_toy
from ddro.models import (InvestmentPlan, MomentSpec, MomentVariant, Scenario,
                         SupportSet, first_stage_cost, lambda_from_distances,
                         moment_mean, moment_mean_matrix, validate_instance,
                         validate_plan)


def plan_of(x, y=None, e=None):
    x = np.asarray(x, dtype=int)
    return InvestmentPlan(x=x, y=np.zeros_like(x, dtype=float) if y is None else np.asarray(y, float),
                          e=e)


# ----------------------------------------------------------------------
# validate_instance
# ----------------------------------------------------------------------

def test_well_formed_instance_validates():
    assert validate_instance(make_small(2, 3, 2)) == []


def test_flipped_support_bound_named():
    inst = make_toy(lo=5.0, hi=3.0)
    violations = validate_instance(inst)
    assert len(violations) == 1
    assert "SupportSet(0,0)" in violations[0]


def test_overlapping_capacity_ranges_named():
    inst = make_small(1, 1, 1)
    S, D, T = 1, 1, 1
    moment = MomentSpec(base_mean=inst.moment.base_mean, epsilon=inst.moment.epsilon,
                        variant=MomentVariant.CAPACITY,
                        range_lower=np.array([[[0.0, 150.0]]]),
                        range_upper=np.array([[[200.0, 400.0]]]),
                        lam_cap=np.zeros((S, D, 2)))
    bad = validate_instance(replace(inst, moment=moment))
    assert any("ranges" in v and "overlap" in v for v in bad)


def test_scenario_outside_support_flagged():
    inst = make_toy(lo=8.0, hi=12.0, scenarios=(Scenario([[20.0]]),))
    bad = validate_instance(inst)
    assert any("scenarios[0]" in v for v in bad)


def test_negative_cost_flagged():
    inst = make_toy()
    costs = replace(inst.costs, production=np.array([[-1.0]]))
    bad = validate_instance(replace(inst, costs=costs))
    assert any("production" in v for v in bad)


# ----------------------------------------------------------------------
# moment_mean
# ----------------------------------------------------------------------

def test_closed_plan_gives_base_mean():
    for variant_builder in (lambda: make_toy(lam=0.4),
                            lambda: make_toy(lam=0.4, demand_cap=0.5)):
        inst = variant_builder()
        assert moment_mean(inst.moment, plan_of([[0]]), 0, 0) == pytest.approx(10.0)


def test_bounded_mean_caps_at_limit():
    # contributions sum 0.6 over open sites, cap 0.5 -> 50 * 1.5 = 75
    spec = MomentSpec(base_mean=[[50.0]], epsilon=[[0.0]],
                      variant=MomentVariant.LOCATION_BOUNDED,
                      lam=[[0.25], [0.35]], demand_cap=[[0.5]])
    plan = plan_of([[1], [1]])
    assert moment_mean(spec, plan, 0, 0) == pytest.approx(75.0)


def test_capacity_zero_impact_range():
    spec = MomentSpec(base_mean=[[40.0]], epsilon=[[0.0]], variant=MomentVariant.CAPACITY,
                      range_lower=np.array([[[0.0, 100.0]]]),
                      range_upper=np.array([[[100.0, math.inf]]]),
                      lam_cap=np.array([[[0.0, 0.3]]]))
    e_low = np.zeros((1, 1, 2), dtype=int); e_low[0, 0, 0] = 1
    e_high = np.zeros((1, 1, 2), dtype=int); e_high[0, 0, 1] = 1
    assert moment_mean(spec, plan_of([[1]], y=[[50.0]], e=e_low), 0, 0) == pytest.approx(40.0)
    assert moment_mean(spec, plan_of([[1]], y=[[200.0]], e=e_high), 0, 0) == pytest.approx(52.0)


def test_moment_index_out_of_range():
    inst = make_toy()
    with pytest.raises(IndexError):
        moment_mean(inst.moment, plan_of([[0]]), 1, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=3, max_size=3),
       st.lists(st.booleans(), min_size=3, max_size=3))
def test_moment_monotone_in_x(open_a, open_b):
    lam = np.array([[0.1, 0.2], [0.05, 0.15], [0.2, 0.1]])
    spec = MomentSpec(base_mean=np.full((2, 1), 30.0), epsilon=np.zeros((2, 1)), lam=lam)
    xa = np.array(open_a, dtype=int)[:, None]
    xb = np.array(open_b, dtype=int)[:, None]
    both = np.maximum(xa, xb)
    ma = moment_mean_matrix(spec, plan_of(xa))
    mb = moment_mean_matrix(spec, plan_of(both))
    assert np.all(mb >= ma - 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=4, max_size=4))
def test_zero_lambda_means_base(openings):
    spec = MomentSpec(base_mean=np.full((3, 1), 17.0), epsilon=np.zeros((3, 1)),
                      lam=np.zeros((4, 3)))
    x = np.array(openings, dtype=int)[:, None]
    assert np.allclose(moment_mean_matrix(spec, plan_of(x)), 17.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=3, max_size=3),
       st.floats(min_value=0.0, max_value=0.6))
def test_bounded_never_exceeds_cap(openings, cap):
    lam = np.array([[0.3], [0.25], [0.2]])
    spec = MomentSpec(base_mean=np.full((1, 1), 20.0), epsilon=np.zeros((1, 1)),
                      variant=MomentVariant.LOCATION_BOUNDED, lam=lam,
                      demand_cap=np.full((1, 1), cap))
    x = np.array(openings, dtype=int)[:, None]
    assert moment_mean(spec, plan_of(x), 0, 0) <= 20.0 * (1.0 + cap) + 1e-12


# ----------------------------------------------------------------------
# lambda_from_distances
# ----------------------------------------------------------------------

def test_lambda_single_supply_forced_by_normalization():
    lam = lambda_from_distances(np.array([[13.0]]), scale=25.0, target_sum=0.25)
    assert lam[0, 0] == pytest.approx(0.25)


def test_lambda_two_supplies_formula():
    lam = lambda_from_distances(np.array([[0.0], [25.0]]), scale=25.0, target_sum=0.5)
    e1 = math.exp(-1.0)
    assert lam[0, 0] == pytest.approx(0.5 * 1.0 / (1.0 + e1))
    assert lam[1, 0] == pytest.approx(0.5 * e1 / (1.0 + e1))


def test_lambda_zero_target_disables_dependency():
    lam = lambda_from_distances(np.array([[3.0], [9.0]]), scale=25.0, target_sum=0.0)
    assert np.all(lam == 0.0)


def test_lambda_underflow_column_errors():
    with pytest.raises(ValueError, match="column"):
        lambda_from_distances(np.array([[1e9]]), scale=1.0, target_sum=0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=4),
       st.floats(min_value=0.01, max_value=1.0), st.integers(min_value=0, max_value=10_000))
def test_lambda_columns_sum_to_target(n_s, n_d, target, seed):
    rng = np.random.default_rng(seed)
    dist = rng.uniform(0.0, 120.0, size=(n_s, n_d))
    lam = lambda_from_distances(dist, scale=25.0, target_sum=target)
    assert np.all(np.abs(lam.sum(axis=0) - target) <= 1e-12)
    assert np.all(lam >= 0.0) and np.all(lam <= target + 1e-12)


# ----------------------------------------------------------------------
# plans and first-stage cost
# ----------------------------------------------------------------------

def test_validate_plan_catches_closing_and_overcapacity():
    inst = make_small(2, 2, 2)
    bad_close = plan_of([[1, 0], [0, 0]])
    assert any("closes" in v for v in validate_plan(inst, bad_close))
    too_big = plan_of([[1, 1], [0, 0]], y=[[1e9, 0.0], [0.0, 0.0]])
    assert any("capacity limit" in v for v in validate_plan(inst, too_big))


def test_setup_cost_paid_once_at_first_open_period():
    inst = make_small(1, 1, 3, cF=100.0, cV=2.0)
    plan = plan_of([[0, 1, 1]], y=[[0.0, 3.0, 1.0]])
    # setup charged at t=1 only (cF constant across periods here)
    assert first_stage_cost(inst, plan) == pytest.approx(100.0 + 2.0 * 4.0)
