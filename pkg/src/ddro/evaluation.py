"""Out-of-sample evaluation of fixed investment plans.

Scenario demand is sampled from a normal distribution whose mean is the
decision-dependent moment function evaluated at the plan under test (the
per-plan reading; a common-mean alternative is available via
``EvaluationSpec.common_mean``).  Objective convention throughout: total
cost minus revenue, lower is better.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .algorithms import AlgorithmConfig, SolveOutcome, solve_instance
from .formulations import build_deterministic, second_stage_value
from .models import (InvestmentPlan, NetworkInstance, Scenario, first_stage_cost,
                     moment_mean_matrix, validate_plan)
from .solver import SolveOptions

DRO_DDU = "dro+ddu"
DRO = "dro"
DET_DDU = "det+ddu"
DET = "det"
ALL_VARIANTS = (DRO_DDU, DRO, DET_DDU, DET)


@dataclass(frozen=True)
class EvaluationSpec:
    n_scenarios: int = 1000
    seed: int = 0
    cv: float = 0.1                      # std dev as a fraction of the mean
    variants: tuple[str, ...] = ALL_VARIANTS
    common_mean: bool = False            # score all plans against the dro+ddu mean

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be >= 1")
        if self.cv < 0:
            raise ValueError("cv must be nonnegative")
        bad = set(self.variants) - set(ALL_VARIANTS)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}; choose from {ALL_VARIANTS}")


def draw_noise(spec: EvaluationSpec, shape) -> np.ndarray:
    """Standard-normal draws shared across variants for common random numbers."""
    rng = np.random.default_rng(spec.seed)
    return rng.standard_normal((spec.n_scenarios,) + tuple(shape))


def sample_scenarios(inst: NetworkInstance, plan: InvestmentPlan, spec: EvaluationSpec,
                     noise: np.ndarray | None = None) -> list[Scenario]:
    """Demand draws xi ~ Normal(mean(plan), cv*mean), truncated at zero."""
    mean = moment_mean_matrix(inst.moment, plan)
    if noise is None:
        noise = draw_noise(spec, mean.shape)
    out = []
    for w in range(noise.shape[0]):
        d = np.maximum(mean * (1.0 + spec.cv * noise[w]), 0.0)
        out.append(Scenario(demand=d, provenance="sampled"))
    return out


def statistics(values) -> dict:
    """Empirical summary: average, nearest-rank quantiles, and CVaR(q) as the
    mean of the worst ceil((1-q)*n) cost values."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise ValueError("statistics need a nonempty value list")
    srt = np.sort(vals)
    n = vals.size

    def quantile(q):
        rank = max(int(math.ceil(q * n)), 1)
        return float(srt[rank - 1])

    def cvar(q):
        tail = max(int(math.ceil((1.0 - q) * n)), 1)
        return float(srt[-tail:].mean())

    return {
        "average": float(vals.mean()),
        "quantile50": quantile(0.50), "quantile75": quantile(0.75), "quantile90": quantile(0.90),
        "cvar50": cvar(0.50), "cvar75": cvar(0.75), "cvar90": cvar(0.90),
    }


@dataclass
class EvaluationRow:
    values: np.ndarray
    stats: dict
    investment_cost: float

    def to_dict(self) -> dict:
        return {**self.stats, "investmentCost": self.investment_cost}


def evaluate_plan(inst: NetworkInstance, plan: InvestmentPlan, scenarios,
                  workers: int = 1) -> EvaluationRow:
    """Per-scenario total objective (first-stage cost + realized operational
    cost - revenue) for a fixed plan; imports are uncapacitated, so every
    scenario LP is feasible by construction.  Scenario LPs evaluate
    concurrently with ``workers`` > 1; aggregation stays in scenario order."""
    bad = validate_plan(inst, plan)
    if bad:
        raise ValueError(f"plan infeasible for this instance: {bad[:3]}")
    fs = first_stage_cost(inst, plan)
    for w, s in enumerate(scenarios):
        if np.any(s.demand < 0):
            raise ValueError(f"scenario {w} has negative demand")

    def one(s):
        try:
            return fs + second_stage_value(inst, plan, s.demand)
        except solver.SolverError as exc:  # cannot happen with uncapacitated imports
            raise RuntimeError(f"second-stage LP failed: {exc}") from exc

    if workers > 1 and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = np.fromiter(ex.map(one, scenarios), dtype=float, count=len(scenarios))
    else:
        vals = np.fromiter((one(s) for s in scenarios), dtype=float, count=len(scenarios))
    return EvaluationRow(values=vals, stats=statistics(vals), investment_cost=fs)


@dataclass
class EvaluationReport:
    rows: dict[str, EvaluationRow] = field(default_factory=dict)
    plans: dict[str, InvestmentPlan] = field(default_factory=dict)
    solve_objectives: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": {k: r.to_dict() for k, r in self.rows.items()},
            "solveObjectives": self.solve_objectives,
            "errors": self.errors,
            "plans": {k: {"x": p.x.tolist(), "y": p.y.tolist(),
                          "e": None if p.e is None else p.e.tolist()}
                      for k, p in self.plans.items()},
        }


STAT_COLUMNS = ("average", "cvar50", "cvar75", "cvar90",
                "quantile50", "quantile75", "quantile90", "investmentCost")


def report_to_csv(report: EvaluationReport) -> str:
    """One row per variant, columns as in the summary table."""
    lines = ["variant," + ",".join(STAT_COLUMNS)]
    for variant, row in report.rows.items():
        d = row.to_dict()
        lines.append(variant + "," + ",".join(f"{d[c]:.6f}" for c in STAT_COLUMNS))
    return "\n".join(lines) + "\n"


def solve_variant_plans(inst: NetworkInstance, variants,
                        solve_config: AlgorithmConfig | None = None):
    """Fixed plans for the requested model variants.

    dro+ddu: the full model; dro: impact factors forced to zero in the
    solve only; det+ddu / det: the deterministic baseline with and without
    decision dependency.  Returns (plans, objectives, errors)."""
    solve_config = solve_config or AlgorithmConfig()
    plans: dict[str, InvestmentPlan] = {}
    objectives: dict[str, float] = {}
    errors: dict[str, str] = {}
    for variant in variants:
        try:
            if variant == DRO_DDU:
                out = solve_instance(inst, solve_config)
                plans[variant], objectives[variant] = _plan_of(out), out.objective
            elif variant == DRO:
                out = solve_instance(inst.without_ddu(), solve_config)
                plans[variant], objectives[variant] = _plan_of(out), out.objective
            elif variant == DET_DDU:
                res, plan = build_deterministic(inst, ddu_enabled=True).solve(
                    SolveOptions(relative_gap=solve_config.stop_gap,
                                 time_limit=solve_config.time_limit))
                plans[variant], objectives[variant] = _require_plan(plan, res), res.objective
            elif variant == DET:
                res, plan = build_deterministic(inst, ddu_enabled=False).solve(
                    SolveOptions(relative_gap=solve_config.stop_gap,
                                 time_limit=solve_config.time_limit))
                plans[variant], objectives[variant] = _require_plan(plan, res), res.objective
        except Exception as exc:  # keep the other variants alive
            errors[variant] = f"{type(exc).__name__}: {exc}"
    return plans, objectives, errors


def _plan_of(out: SolveOutcome) -> InvestmentPlan:
    if out.plan is None:
        raise RuntimeError(f"solve ended {out.status} without an incumbent plan")
    return out.plan


def _require_plan(plan, res) -> InvestmentPlan:
    if plan is None:
        raise RuntimeError(f"deterministic solve ended {res.status} without a plan")
    return plan


def compare_variants(inst: NetworkInstance, spec: EvaluationSpec,
                     solve_config: AlgorithmConfig | None = None) -> EvaluationReport:
    """Solve the requested variants and score all plans on a common noise
    stream; the sampling mean uses the evaluated plan's own decisions (or
    the dro+ddu plan's with ``common_mean``)."""
    report = EvaluationReport()
    plans, objectives, errors = solve_variant_plans(inst, spec.variants, solve_config)
    report.plans.update(plans)
    report.solve_objectives.update(objectives)
    report.errors.update(errors)

    noise = draw_noise(spec, inst.moment.base_mean.shape)
    mean_plan = None
    if spec.common_mean:
        mean_plan = plans.get(DRO_DDU) or next(iter(plans.values()), None)
    for variant in spec.variants:
        plan = plans.get(variant)
        if plan is None:
            continue
        try:
            scenarios = sample_scenarios(inst, mean_plan if mean_plan is not None else plan,
                                         spec, noise=noise)
            report.rows[variant] = evaluate_plan(inst, plan, scenarios)
        except Exception as exc:
            report.errors[variant] = f"{type(exc).__name__}: {exc}"
    return report
