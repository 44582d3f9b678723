"""Out-of-sample sampling, evaluation, statistics, and variant comparison."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_small, make_toy, toy_second_stage
from ddro.algorithms import AlgorithmConfig
from ddro.evaluation import (ALL_VARIANTS, EvaluationSpec, compare_variants,
                             evaluate_plan, report_to_csv, sample_scenarios,
                             statistics)
from ddro.formulations import build_deterministic
from ddro.models import InvestmentPlan, moment_mean_matrix
from ddro.solver import SolveOptions


def plan(x, y, e=None):
    return InvestmentPlan(x=np.asarray(x, dtype=int), y=np.asarray(y, dtype=float), e=e)


# ----------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------

def test_cv_zero_samples_exact_mean():
    inst = make_small(2, 3, 2, lam=0.3)
    p = plan([[1, 1], [0, 1]], [[5.0, 0.0], [0.0, 3.0]])
    spec = EvaluationSpec(n_scenarios=4, seed=1, cv=0.0)
    mean = moment_mean_matrix(inst.moment, p)
    for s in sample_scenarios(inst, p, spec):
        assert np.allclose(s.demand, mean)
        assert s.provenance == "sampled"


def test_closed_plan_sample_mean_near_base():
    inst = make_small(2, 3, 2, lam=0.3)
    p = plan(np.zeros((2, 2)), np.zeros((2, 2)))
    spec = EvaluationSpec(n_scenarios=4000, seed=3, cv=0.1)
    draws = np.stack([s.demand for s in sample_scenarios(inst, p, spec)])
    mu = inst.moment.base_mean
    se = 0.1 * mu / np.sqrt(spec.n_scenarios)
    assert np.all(np.abs(draws.mean(axis=0) - mu) <= 3.0 * se + 1e-9)


def test_sampling_seed_determinism():
    inst = make_small(1, 2, 1)
    p = plan([[1]], [[4.0]])
    spec = EvaluationSpec(n_scenarios=10, seed=42)
    a = sample_scenarios(inst, p, spec)
    b = sample_scenarios(inst, p, spec)
    assert all(np.array_equal(x.demand, y.demand) for x, y in zip(a, b))


def test_sampling_truncates_at_zero():
    inst = make_small(1, 2, 1)
    p = plan([[0]], [[0.0]])
    spec = EvaluationSpec(n_scenarios=200, seed=0, cv=3.0)  # huge spread
    draws = np.stack([s.demand for s in sample_scenarios(inst, p, spec)])
    assert np.min(draws) >= 0.0


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def test_evaluate_zero_demand_zero_plan():
    inst = make_toy()
    p = plan([[0]], [[0.0]])
    row = evaluate_plan(inst, p, [type("S", (), {"demand": np.zeros((1, 1))})()])
    assert row.values[0] == pytest.approx(0.0, abs=1e-9)
    assert row.investment_cost == 0.0


def test_evaluate_single_scenario_matches_hand_lp():
    inst = make_toy(cF=10.0, cV=1.0, cP=1.0, cI=5.0, R=3.0)
    p = plan([[1]], [[6.0]])
    from ddro.models import Scenario
    row = evaluate_plan(inst, p, [Scenario([[9.0]], provenance="sampled")])
    expected = (10.0 + 6.0) + toy_second_stage(inst, 1, 6.0, 9.0)
    assert row.values[0] == pytest.approx(expected, abs=1e-7)


def test_evaluate_linear_in_revenue():
    from dataclasses import replace
    inst = make_small(2, 3, 1, lam=0.0)
    p = plan([[1], [0]], [[8.0], [0.0]])
    spec = EvaluationSpec(n_scenarios=5, seed=2)
    scen = sample_scenarios(inst, p, spec)
    base = evaluate_plan(inst, p, scen)
    doubled = replace(inst, costs=replace(inst.costs, revenue=2.0 * inst.costs.revenue))
    row2 = evaluate_plan(doubled, p, scen)
    shift = np.array([np.sum(inst.costs.revenue * s.demand) for s in scen])
    assert np.allclose(row2.values, base.values - shift, rtol=1e-9, atol=1e-6)


def test_evaluate_rejects_infeasible_plan():
    inst = make_small(1, 1, 1)
    with pytest.raises(ValueError, match="infeasible"):
        evaluate_plan(inst, plan([[1]], [[1e9]]), [])


def test_evaluate_cv0_equals_deterministic_objective_at_det_plan():
    inst = make_small(2, 3, 2, lam=0.25, cF=20.0)
    det = build_deterministic(inst, ddu_enabled=True)
    res, det_plan = det.solve(SolveOptions(relative_gap=1e-9))
    scen = sample_scenarios(inst, det_plan, EvaluationSpec(n_scenarios=1, seed=0, cv=0.0))
    row = evaluate_plan(inst, det_plan, scen)
    assert row.values[0] == pytest.approx(res.objective, rel=1e-6)


# ----------------------------------------------------------------------
# statistics
# ----------------------------------------------------------------------

def test_statistics_frozen_examples():
    s = statistics([1.0, 2.0, 3.0, 4.0])
    assert s["cvar50"] == pytest.approx(3.5)   # mean of worst half
    assert s["cvar75"] == pytest.approx(4.0)   # worst single element by ceil rule
    assert s["quantile50"] == pytest.approx(2.0)
    assert s["quantile75"] == pytest.approx(3.0)
    assert s["quantile90"] == pytest.approx(4.0)
    assert s["average"] == pytest.approx(2.5)


def test_statistics_constant_list():
    s = statistics([7.0] * 9)
    assert all(v == pytest.approx(7.0) for v in s.values())


def test_statistics_empty_errors():
    with pytest.raises(ValueError):
        statistics([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
                min_size=1, max_size=200))
def test_cvar_monotone_and_dominates_average(values):
    s = statistics(values)
    assert s["cvar50"] <= s["cvar75"] + 1e-9
    assert s["cvar75"] <= s["cvar90"] + 1e-9
    assert s["cvar50"] >= s["average"] - 1e-9


# ----------------------------------------------------------------------
# variant comparison
# ----------------------------------------------------------------------

def test_compare_lambda_zero_collapses_dro_variants():
    inst = make_small(2, 3, 2, lam=0.0, eps_frac=0.3)
    spec = EvaluationSpec(n_scenarios=40, seed=7)
    report = compare_variants(inst, spec, AlgorithmConfig(stop_gap=0.001))
    assert not report.errors
    a, b = report.rows["dro+ddu"], report.rows["dro"]
    assert a.stats["average"] == pytest.approx(b.stats["average"], rel=1e-9)
    assert np.allclose(a.values, b.values)
    assert report.solve_objectives["dro+ddu"] == pytest.approx(
        report.solve_objectives["dro"], rel=1e-9)


def test_compare_point_support_eps0_matches_deterministic():
    inst = make_small(2, 3, 2, lam=0.0, eps_frac=0.0, support=(1.0, 1.0))
    spec = EvaluationSpec(n_scenarios=10, seed=1, variants=("dro+ddu", "det+ddu"))
    report = compare_variants(inst, spec, AlgorithmConfig(stop_gap=1e-6,
                                                          master_gap_initial=1e-7,
                                                          master_gap_final=1e-9))
    assert report.solve_objectives["dro+ddu"] == pytest.approx(
        report.solve_objectives["det+ddu"], rel=1e-6)


def test_compare_common_mean_mode():
    inst = make_small(2, 3, 1, lam=0.3)
    spec = EvaluationSpec(n_scenarios=30, seed=9, common_mean=True)
    report = compare_variants(inst, spec, AlgorithmConfig(stop_gap=0.01))
    assert set(report.rows) == set(ALL_VARIANTS)


def test_report_csv_shape():
    inst = make_small(1, 2, 1, lam=0.0)
    spec = EvaluationSpec(n_scenarios=5, seed=0, variants=("det",))
    report = compare_variants(inst, spec)
    csv = report_to_csv(report)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("variant,average,")
    assert len(lines) == 2 and lines[1].startswith("det,")
