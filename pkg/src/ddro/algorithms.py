"""Decomposition drivers: enhanced C&CG, classical C&CG and Benders.

All three share the bound bookkeeping: the lower bound is the master's
proven bound (best bound, not the incumbent objective, so it stays valid
under inexact master solves) recorded as a running maximum; the upper bound
comes from the candidate first stage evaluated against its exact worst
case, recorded as a running minimum.  %Gap = 100*(UB-LB)/|UB|, which
coincides with 100*(1-LB/UB) whenever UB > 0 and stays meaningful for
profitable (negative-cost) instances.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .formulations import (BendersCut, BigMPolicy, MasterSolution,
                           build_benders_master, build_master,
                           build_monolithic_discrete,
                           build_subproblem_continuous, default_bigm,
                           solve_subproblem_discrete)
from .models import InvestmentPlan, MomentVariant, NetworkInstance, Scenario
from .solver import INF, SolveOptions

CCG_PLUS = "ccg+"
CCG_CLASSIC = "ccg"
BENDERS = "benders"
MONOLITHIC = "monolithic"
ALGORITHMS = (CCG_PLUS, CCG_CLASSIC, BENDERS, MONOLITHIC)

CONVERGED = "converged"
TIME_LIMIT = "time_limit"
ITERATION_LIMIT = "iteration_limit"
STALLED = "stalled"


class AlgorithmError(RuntimeError):
    """Backend or modeling failure, annotated with the iteration context."""


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: str = CCG_PLUS
    stop_gap: float = 0.001            # fraction; stop at %Gap <= 100*stop_gap
    time_limit: float | None = None    # seconds, master + subproblems combined
    master_gap_initial: float = 0.05   # delta^i
    master_gap_final: float = 1e-4     # delta^f
    gap_factor: float = 0.5            # f%
    pregenerate: bool = True
    per_period_cuts: bool = True
    parallel_subproblems: bool = False
    max_iterations: int = 10000
    threads: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.master_gap_final <= self.master_gap_initial:
            raise ValueError("master_gap_final must not exceed master_gap_initial")
        if not 0.0 < self.gap_factor < 1.0:
            raise ValueError("gap_factor must lie strictly between 0 and 1")
        if self.stop_gap < 0:
            raise ValueError("stop_gap must be nonnegative")


@dataclass
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    master_gap_used: float
    scenario_added: bool
    master_time: float
    subproblem_time: float
    raw_master_objective: float

    def to_dict(self) -> dict:
        return {
            "iter": self.iteration, "LB": self.lb, "UB": self.ub,
            "masterGapUsed": self.master_gap_used, "scenarioAdded": self.scenario_added,
            "masterTime": self.master_time, "subproblemTime": self.subproblem_time,
            "rawMasterObjective": self.raw_master_objective,
        }


@dataclass
class IterationLog:
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord, sink=None) -> None:
        self.records.append(rec)
        if sink is not None:
            sink(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class SolveOutcome:
    plan: InvestmentPlan | None
    objective: float          # best UB
    bound: float              # best LB
    gap_pct: float
    status: str
    log: IterationLog
    scenario_pool: list[Scenario]
    algorithm: str
    solve_time: float
    beta1: np.ndarray | None = None
    beta2: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.log)

    def to_dict(self) -> dict:
        plan = None
        if self.plan is not None:
            plan = {"x": self.plan.x.tolist(), "y": self.plan.y.tolist(),
                    "e": None if self.plan.e is None else self.plan.e.tolist()}
        return {
            "algorithm": self.algorithm,
            "status": self.status,
            "objective": self.objective,
            "bound": self.bound,
            "gapPct": self.gap_pct,
            "iterations": self.iterations,
            "solveTime": self.solve_time,
            "plan": plan,
            "log": [r.to_dict() for r in self.log],
            "scenarioPool": [s.demand.tolist() for s in self.scenario_pool],
        }


# ----------------------------------------------------------------------
# Bound and schedule arithmetic
# ----------------------------------------------------------------------

def pct_gap(lb: float, ub: float) -> float:
    """%Gap = 100*(UB-LB)/|UB|; 0 for coinciding bounds, inf if either bound
    is still at its sentinel."""
    if lb == ub:
        return 0.0
    if not (math.isfinite(lb) and math.isfinite(ub)):
        return INF
    denom = abs(ub)
    if denom < 1e-12:
        return 0.0 if abs(ub - lb) < 1e-12 else INF
    return 100.0 * (ub - lb) / denom


def update_relative_gap(initial: float, final: float, factor: float,
                        lb: float, ub: float) -> float:
    """Master-gap schedule: max(min(delta_i, f * (UB-LB)/|UB|), delta_f);
    with no incumbent yet (infinite UB) the initial gap is kept."""
    if not (math.isfinite(lb) and math.isfinite(ub)):
        return initial
    denom = abs(ub)
    if denom < 1e-12:
        dyn = 0.0 if abs(ub - lb) < 1e-12 else INF
    else:
        dyn = factor * (ub - lb) / denom
    return max(min(initial, dyn), final)


def pregenerate_scenarios(support) -> list[Scenario]:
    """One scenario per (demand node, period): that coordinate at its upper
    bound, every other at its lower bound.  For a discrete support, the
    listed scenarios matching this pattern are returned instead."""
    lo, up = support.lower, support.upper
    D, T = lo.shape
    if not support.is_discrete:
        out = []
        for j in range(D):
            for t in range(T):
                d = lo.copy()
                d[j, t] = up[j, t]
                out.append(Scenario(demand=d, provenance="pregenerated"))
        return out
    out = []
    for s in support.scenarios:
        diff_up = np.abs(s.demand - up) <= 1e-9
        diff_lo = np.abs(s.demand - lo) <= 1e-9
        for j in range(D):
            for t in range(T):
                mask = diff_lo.copy()
                mask[j, t] = diff_up[j, t]
                if mask.all():
                    out.append(Scenario(demand=s.demand, provenance="pregenerated"))
                    break
            else:
                continue
            break
    return out


def candidate_upper_bound(master_values: MasterSolution, subproblem_values) -> float:
    """First-stage cost + moment-dual terms at the master solution + total
    worst-case recourse value."""
    return (master_values.first_stage_cost + master_values.moment_dual_cost
            + float(np.sum(np.asarray(list(subproblem_values), dtype=float))))


# ----------------------------------------------------------------------
# Drivers
# ----------------------------------------------------------------------

def _deadline_remaining(start: float, limit: float | None) -> float | None:
    if limit is None:
        return None
    return limit - (time.perf_counter() - start)


def _worst_case(inst, sol: MasterSolution, policy: BigMPolicy, config: AlgorithmConfig,
                iteration: int, parallel: bool):
    """Solve the worst-case subproblem at a fixed first stage.

    The subproblem separates by period once the first stage is fixed, so it
    is always solved as per-period models (concurrently when ``parallel``);
    results merge in period order for determinism.  Discrete supports use
    the exact per-candidate evaluation instead.  Returns (scenario,
    per-part values, per-period solutions)."""
    tag = f"subproblem-iteration {iteration}"
    if inst.support.is_discrete:
        pool = list(inst.support.scenarios)
        if parallel and len(pool) > 1:
            with ThreadPoolExecutor(max_workers=min(8, len(pool))) as ex:
                dres = solve_subproblem_discrete(inst, sol.plan, sol.beta1, sol.beta2,
                                                 pool, executor=ex)
        else:
            dres = solve_subproblem_discrete(inst, sol.plan, sol.beta1, sol.beta2, pool)
        return Scenario(dres.scenario.demand, provenance=tag), [dres.value], []

    def solve_period(periods):
        sp = build_subproblem_continuous(inst, sol.plan, sol.beta1, sol.beta2,
                                         policy=policy, periods=periods)
        res, ss = sp.solve(SolveOptions(relative_gap=1e-9, sense=solver.MAX,
                                        threads=config.threads))
        if ss is None:
            raise AlgorithmError(f"worst-case subproblem returned no solution "
                                 f"(status {res.status}) at iteration {iteration}")
        return ss

    tasks = [(t,) for t in range(inst.periods)]
    if parallel and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(tasks))) as ex:
            sols = list(ex.map(solve_period, tasks))
    else:
        sols = [solve_period(p) for p in tasks]
    xi = np.concatenate([ss.xi for ss in sols], axis=1)
    return Scenario(xi, provenance=tag), [ss.value for ss in sols], sols


def _run_ccg(inst: NetworkInstance, config: AlgorithmConfig, enhanced: bool,
             variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    policy = default_bigm(inst)
    per_period = enhanced and config.per_period_cuts
    pool_init = pregenerate_scenarios(inst.support) if (enhanced and config.pregenerate) else []
    master = build_master(inst, pool_init, variant=variant, per_period_cuts=per_period,
                          policy=policy)
    lb, ub = -INF, INF
    best_plan = None
    best_sol: MasterSolution | None = None
    delta = config.master_gap_initial if enhanced else config.master_gap_final
    prev_delta = delta
    log = IterationLog()
    status = ITERATION_LIMIT
    start = time.perf_counter()

    for it in range(1, config.max_iterations + 1):
        remaining = _deadline_remaining(start, config.time_limit)
        if remaining is not None and remaining <= 0:
            status = TIME_LIMIT
            break
        t0 = time.perf_counter()
        try:
            mres = master.solve(SolveOptions(relative_gap=delta, time_limit=remaining,
                                             threads=config.threads))
        except solver.SolverError as exc:
            raise AlgorithmError(f"master solve failed at iteration {it}: {exc}") from exc
        master_time = time.perf_counter() - t0
        if mres.status in (solver.INFEASIBLE, solver.UNBOUNDED):
            raise AlgorithmError(f"master {mres.status} at iteration {it}")
        if not mres.has_solution:
            status = TIME_LIMIT
            break
        sol = master.extract(mres)
        lb_improved = mres.best_bound > lb + 1e-12 * max(1.0, abs(lb))
        lb = max(lb, mres.best_bound)

        # an iteration that has started is allowed to finish its subproblem,
        # so the recorded UB stays valid
        t0 = time.perf_counter()
        try:
            xi, sp_values, _ = _worst_case(inst, sol, policy, config, iteration=it,
                                           parallel=enhanced and config.parallel_subproblems)
        except solver.SolverError as exc:
            raise AlgorithmError(f"subproblem solve failed at iteration {it}: {exc}") from exc
        sp_time = time.perf_counter() - t0

        ubc = candidate_upper_bound(sol, sp_values)
        if ubc < ub:
            ub = ubc
            best_plan, best_sol = sol.plan, sol
        added = master.add_scenario(xi)
        gap = pct_gap(lb, ub)
        log.append(IterationRecord(it, lb, ub, delta, added, master_time, sp_time,
                                   mres.objective), log_sink)
        if gap <= 100.0 * config.stop_gap:
            status = CONVERGED
            break
        if not added:
            # non-improving scenario: force an exact master once, then give up
            if delta <= config.master_gap_final * (1 + 1e-12):
                status = STALLED
                break
            delta = config.master_gap_final
        elif enhanced:
            delta = update_relative_gap(config.master_gap_initial, config.master_gap_final,
                                        config.gap_factor, lb, ub)
            if not lb_improved:
                # the proven bound at the scheduled gap no longer beats the
                # recorded LB; contract the master gap geometrically so the
                # certificate catches up (the paper's schedule assumes the
                # incumbent is used as LB and needs no such push)
                delta = max(config.master_gap_final,
                            min(delta, config.gap_factor * prev_delta))
        prev_delta = delta
    return SolveOutcome(plan=best_plan, objective=ub, bound=lb, gap_pct=pct_gap(lb, ub),
                        status=status, log=log, scenario_pool=list(master.scenarios),
                        algorithm=CCG_PLUS if enhanced else CCG_CLASSIC,
                        solve_time=time.perf_counter() - start,
                        beta1=None if best_sol is None else best_sol.beta1,
                        beta2=None if best_sol is None else best_sol.beta2)


def run_ccg_plus(inst: NetworkInstance, config: AlgorithmConfig | None = None,
                 variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    """Enhanced C&CG: pregenerated scenario pool, inexact masters on the
    adaptive gap schedule, per-period cuts, decomposed subproblems."""
    config = config or AlgorithmConfig(algorithm=CCG_PLUS)
    return _run_ccg(inst, config, enhanced=True, variant=variant, log_sink=log_sink)


def run_ccg_classic(inst: NetworkInstance, config: AlgorithmConfig | None = None,
                    variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    """Classical C&CG: empty starting pool, exact masters, a single
    aggregated cut per scenario, sequential undecomposed subproblem."""
    config = config or AlgorithmConfig(algorithm=CCG_CLASSIC)
    return _run_ccg(inst, config, enhanced=False, variant=variant, log_sink=log_sink)


def run_benders(inst: NetworkInstance, config: AlgorithmConfig | None = None,
                variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    """Benders-style row generation: one optimality cut per worst-case
    scenario, built from the subproblem duals (nu*, psi*)."""
    config = config or AlgorithmConfig(algorithm=BENDERS)
    if inst.support.is_discrete:
        raise AlgorithmError("the Benders driver needs the continuous-support subproblem "
                             "(discrete supports: use ccg+/ccg/monolithic)")
    policy = default_bigm(inst)
    master = build_benders_master(inst, variant=variant, policy=policy)
    lb, ub = -INF, INF
    best_plan = None
    best_sol: MasterSolution | None = None
    log = IterationLog()
    status = ITERATION_LIMIT
    start = time.perf_counter()

    for it in range(1, config.max_iterations + 1):
        remaining = _deadline_remaining(start, config.time_limit)
        if remaining is not None and remaining <= 0:
            status = TIME_LIMIT
            break
        t0 = time.perf_counter()
        try:
            mres = master.solve(SolveOptions(relative_gap=config.master_gap_final,
                                             time_limit=remaining, threads=config.threads))
        except solver.SolverError as exc:
            raise AlgorithmError(f"Benders master failed at iteration {it}: {exc}") from exc
        master_time = time.perf_counter() - t0
        if mres.status in (solver.INFEASIBLE, solver.UNBOUNDED):
            raise AlgorithmError(f"Benders master {mres.status} at iteration {it}")
        if not mres.has_solution:
            status = TIME_LIMIT
            break
        sol = master.extract(mres)
        lb = max(lb, mres.best_bound)

        t0 = time.perf_counter()
        try:
            xi, sp_values, parts = _worst_case(inst, sol, policy, config, iteration=it,
                                               parallel=config.parallel_subproblems)
        except solver.SolverError as exc:
            raise AlgorithmError(f"Benders subproblem failed at iteration {it}: {exc}") from exc
        sp_time = time.perf_counter() - t0

        ubc = candidate_upper_bound(sol, sp_values)
        if ubc < ub:
            ub = ubc
            best_plan, best_sol = sol.plan, sol
        nu = np.concatenate([p.nu for p in parts], axis=1)
        psi = np.concatenate([p.psi for p in parts], axis=1)
        added = master.add_cut(BendersCut(xi=xi.demand, nu=nu, psi=psi), dedup=True)
        gap = pct_gap(lb, ub)
        log.append(IterationRecord(it, lb, ub, config.master_gap_final, added,
                                   master_time, sp_time, mres.objective), log_sink)
        if gap <= 100.0 * config.stop_gap:
            status = CONVERGED
            break
        if not added:
            status = STALLED
            break
    return SolveOutcome(plan=best_plan, objective=ub, bound=lb, gap_pct=pct_gap(lb, ub),
                        status=status, log=log,
                        scenario_pool=[Scenario(c.xi, provenance=f"subproblem-iteration {k+1}")
                                       for k, c in enumerate(master.cuts)],
                        algorithm=BENDERS, solve_time=time.perf_counter() - start,
                        beta1=None if best_sol is None else best_sol.beta1,
                        beta2=None if best_sol is None else best_sol.beta2)


def run_monolithic(inst: NetworkInstance, config: AlgorithmConfig | None = None,
                   variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    """Direct solve of the single-stage discrete-support reformulation."""
    config = config or AlgorithmConfig(algorithm=MONOLITHIC)
    if not inst.support.is_discrete:
        raise AlgorithmError("the monolithic reformulation needs a discrete support")
    start = time.perf_counter()
    master = build_monolithic_discrete(inst, variant=variant)
    t0 = time.perf_counter()
    res = master.solve(SolveOptions(relative_gap=config.stop_gap,
                                    time_limit=config.time_limit, threads=config.threads))
    elapsed = time.perf_counter() - t0
    if res.status in (solver.INFEASIBLE, solver.UNBOUNDED):
        raise AlgorithmError(f"monolithic model ended {res.status}")
    log = IterationLog()
    if not res.has_solution:
        log.append(IterationRecord(1, res.best_bound, INF, config.stop_gap, False,
                                   elapsed, 0.0, INF), log_sink)
        return SolveOutcome(plan=None, objective=INF, bound=res.best_bound,
                            gap_pct=INF, status=TIME_LIMIT, log=log,
                            scenario_pool=list(master.scenarios), algorithm=MONOLITHIC,
                            solve_time=time.perf_counter() - start)
    sol = master.extract(res)
    lb, ub = res.best_bound, res.objective
    log.append(IterationRecord(1, lb, ub, config.stop_gap, False, elapsed, 0.0,
                               res.objective), log_sink)
    status = CONVERGED if res.status in (solver.OPTIMAL, solver.GAP_REACHED) else TIME_LIMIT
    return SolveOutcome(plan=sol.plan, objective=ub, bound=lb, gap_pct=pct_gap(lb, ub),
                        status=status, log=log, scenario_pool=list(master.scenarios),
                        algorithm=MONOLITHIC, solve_time=time.perf_counter() - start,
                        beta1=sol.beta1, beta2=sol.beta2)


_RUNNERS = {CCG_PLUS: run_ccg_plus, CCG_CLASSIC: run_ccg_classic,
            BENDERS: run_benders, MONOLITHIC: run_monolithic}


def solve_instance(inst: NetworkInstance, config: AlgorithmConfig | None = None,
                   variant: MomentVariant | None = None, log_sink=None) -> SolveOutcome:
    config = config or AlgorithmConfig()
    return _RUNNERS[config.algorithm](inst, config, variant=variant, log_sink=log_sink)
