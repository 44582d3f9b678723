"""Optimization model builders.

Every model variant is built here against the :mod:`ddro.solver` contract:
the scenario master (with per-period or aggregated recourse cuts), the
worst-case subproblem in its KKT/big-M form, the discrete-support
subproblem, the monolithic discrete reformulation, the Benders master, and
the deterministic baseline.

Index conventions: supply nodes i = 0..S-1, ports i = 0..I-1 (transport and
flow arrays stack supply rows first, ports after), demand nodes j = 0..D-1,
periods t = 0..T-1.  The open indicator before the horizon is fixed to 0,
so the full setup cost is paid in the first open period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import solver
from .models import (InvestmentPlan, MomentVariant, NetworkInstance, Scenario,
                     first_stage_cost, validate_plan)
from .solver import BINARY, INF, MAX, Model, SolveOptions, SolveResult

DEDUP_TOL = 1e-9


class FormulationError(ValueError):
    """Raised for unsupported moment-variant / model combinations."""


# ----------------------------------------------------------------------
# Big-M policy
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BigMPolicy:
    """Big-M constants for the KKT linearization and McCormick envelopes.

    ``m_primal[i, t]`` bounds the production-capacity slack (kg),
    ``m_dual`` bounds the dual variables and dual-constraint slacks,
    ``beta1_bar``/``beta2_bar`` bound the mean-dual prices (per kg).
    """

    m_primal: np.ndarray
    m_dual: float
    beta1_bar: np.ndarray
    beta2_bar: np.ndarray

    def violations(self) -> list[str]:
        out = []
        if np.any(self.m_primal <= 0):
            out.append("BigMPolicy.m_primal: entries must be strictly positive")
        if self.m_dual <= 0:
            out.append("BigMPolicy.m_dual: must be strictly positive")
        if np.any(self.beta1_bar <= 0) or np.any(self.beta2_bar <= 0):
            out.append("BigMPolicy.beta_bar: entries must be strictly positive")
        return out


def default_bigm(inst: NetworkInstance, safety: float = 1.1) -> BigMPolicy:
    """Derive big-M values from the instance data.

    The mean-dual price beta prices one unit of demand, so the worst
    per-unit cost of serving (or refusing) demand bounds it:
    beta_bar[j, t] = R + max_i transport + max(production, import) cost.
    Degenerate zero-cost data is floored at 1.0 instead of violating the
    strict-positivity invariant.  User overrides on the instance win
    verbatim.
    """
    c = inst.costs
    cum_kg = np.cumsum(c.capacity_limit, axis=1) * inst.conversion
    m_primal = np.maximum(safety * cum_kg, 1.0)
    raw_beta = (c.revenue + c.transport.max(axis=0)
                + np.maximum(c.production.max(axis=0), c.imports.max(axis=0))[None, :])
    beta_bar = np.maximum(safety * raw_beta, 1.0)
    max_coeff = max(c.production.max(initial=0.0), c.imports.max(initial=0.0),
                    c.transport.max(initial=0.0), c.revenue.max(initial=0.0))
    # the second term provably covers every dual-constraint slack reachable
    # from an optimal basis of the second-stage LP
    slack_cover = 2.0 * (c.production.max(initial=0.0) + c.imports.max(initial=0.0)
                         + c.transport.max(initial=0.0) + c.revenue.max(initial=0.0))
    m_dual = max(safety * max(raw_beta.max(initial=0.0) + max_coeff, slack_cover), 1.0)

    if inst.bigm is not None:
        o = inst.bigm
        if o.m_primal is not None:
            m_primal = np.asarray(o.m_primal, dtype=float)
        if o.m_dual is not None:
            m_dual = float(o.m_dual)
        b1 = np.asarray(o.beta1_bar, dtype=float) if o.beta1_bar is not None else beta_bar
        b2 = np.asarray(o.beta2_bar, dtype=float) if o.beta2_bar is not None else beta_bar
    else:
        b1 = b2 = beta_bar
    return BigMPolicy(m_primal=m_primal, m_dual=m_dual, beta1_bar=b1, beta2_bar=b2)


def alpha_floor(inst: NetworkInstance) -> np.ndarray:
    """Per-period lower bound on the recourse value: -sum_j R[j,t] * xi_bar[j,t].

    Keeps the first master solve bounded when the scenario pool is empty."""
    return -(inst.costs.revenue * inst.support.upper).sum(axis=0)


# ----------------------------------------------------------------------
# Shared building blocks
# ----------------------------------------------------------------------

def _grid(m: Model, shape, **kwargs) -> np.ndarray:
    refs = np.empty(shape, dtype=int)
    for idx in np.ndindex(*shape):
        refs[idx] = m.add_var(**kwargs)
    return refs


def _add_first_stage(m: Model, inst: NetworkInstance):
    """x, y variables with investment objective and constraints 2b-2d."""
    S, T = inst.n_supply, inst.periods
    cF, cV, cbar = inst.costs.setup, inst.costs.capacity, inst.costs.capacity_limit
    x = np.empty((S, T), dtype=int)
    y = np.empty((S, T), dtype=int)
    for i in range(S):
        for t in range(T):
            # setup cost enters as cF[t]*(x_t - x_{t-1}); collect per-variable
            coeff = cF[i, t] - (cF[i, t + 1] if t + 1 < T else 0.0)
            x[i, t] = m.add_var(kind=BINARY, obj=coeff, name=f"x[{i},{t}]")
    for i in range(S):
        for t in range(T):
            y[i, t] = m.add_var(lb=0.0, ub=float(cbar[i, t]), obj=float(cV[i, t]), name=f"y[{i},{t}]")
    for i in range(S):
        for t in range(T):
            m.add_constr([(y[i, t], 1.0), (x[i, t], -float(cbar[i, t]))], "<=", 0.0,
                         name=f"cap_link[{i},{t}]")
            if t >= 1:
                m.add_constr([(x[i, t], 1.0), (x[i, t - 1], -1.0)], ">=", 0.0,
                             name=f"open_monotone[{i},{t}]")
    return x, y


@dataclass
class MomentRefs:
    """Variable handles of the dual-moment block, per moment variant."""

    variant: MomentVariant
    beta1: np.ndarray
    beta2: np.ndarray
    phi1: np.ndarray | None = None
    phi2: np.ndarray | None = None
    ups1: np.ndarray | None = None
    ups2: np.ndarray | None = None
    a: np.ndarray | None = None
    e: np.ndarray | None = None
    zeta1: np.ndarray | None = None
    zeta2: np.ndarray | None = None


def _add_moment_block(m: Model, inst: NetworkInstance, x, y, variant: MomentVariant,
                      policy: BigMPolicy) -> MomentRefs:
    """Mean-dual prices, the linearized decision-dependent moment terms and
    their McCormick envelopes; objective coefficients included."""
    S, D, T = inst.n_supply, inst.n_demand, inst.periods
    mo = inst.moment
    mu, eps = mo.base_mean, mo.epsilon
    b1bar, b2bar = policy.beta1_bar, policy.beta2_bar

    beta1 = np.empty((D, T), dtype=int)
    beta2 = np.empty((D, T), dtype=int)
    for j in range(D):
        for t in range(T):
            beta1[j, t] = m.add_var(lb=0.0, ub=float(b1bar[j, t]), obj=float(mu[j, t] + eps[j, t]),
                                    name=f"beta1[{j},{t}]")
    for j in range(D):
        for t in range(T):
            beta2[j, t] = m.add_var(lb=0.0, ub=float(b2bar[j, t]), obj=float(-mu[j, t] + eps[j, t]),
                                    name=f"beta2[{j},{t}]")
    refs = MomentRefs(variant=variant, beta1=beta1, beta2=beta2)

    if variant in (MomentVariant.LOCATION_LINEAR, MomentVariant.LOCATION_BOUNDED):
        if mo.lam is None:
            raise FormulationError("instance has no location impact factors (lam)")
        lam = mo.lam
        in_obj = variant == MomentVariant.LOCATION_LINEAR
        phi = []
        for mm, beta, bbar, sgn in ((1, beta1, b1bar, 1.0), (2, beta2, b2bar, -1.0)):
            p = np.empty((S, D, T), dtype=int)
            for i in range(S):
                for j in range(D):
                    for t in range(T):
                        coeff = sgn * mu[j, t] * lam[i, j] if in_obj else 0.0
                        p[i, j, t] = m.add_var(lb=0.0, ub=float(bbar[j, t]), obj=coeff,
                                               name=f"phi{mm}[{i},{j},{t}]")
            phi.append(p)
            for i in range(S):
                for j in range(D):
                    for t in range(T):
                        bb = float(bbar[j, t])
                        m.add_constr([(p[i, j, t], 1.0), (x[i, t], -bb)], "<=", 0.0)
                        m.add_constr([(p[i, j, t], 1.0), (beta[j, t], -1.0)], "<=", 0.0)
                        m.add_constr([(p[i, j, t], 1.0), (beta[j, t], -1.0), (x[i, t], -bb)],
                                     ">=", -bb)
        refs.phi1, refs.phi2 = phi
        if variant == MomentVariant.LOCATION_BOUNDED:
            _add_bounded_moment_block(m, inst, x, refs, policy)
    elif variant == MomentVariant.CAPACITY:
        _add_capacity_moment_block(m, inst, y, refs, policy)
    else:
        raise FormulationError(f"unknown moment variant {variant!r}")
    return refs


def _add_bounded_moment_block(m: Model, inst: NetworkInstance, x, refs: MomentRefs,
                              policy: BigMPolicy) -> None:
    """Demand-cap linearization: ups_m replaces min(sum lam*phi_m, cap*beta_m)
    in the objective, with indicator a = 1 iff sum_i lam*x exceeds the cap."""
    S, D, T = inst.n_supply, inst.n_demand, inst.periods
    mo = inst.moment
    if mo.demand_cap is None:
        raise FormulationError("bounded location variant needs demand_cap on the moment spec")
    mu, lam, cap = mo.base_mean, mo.lam, mo.demand_cap
    lam_col = lam.sum(axis=0)  # per demand node
    ups1 = np.empty((D, T), dtype=int)
    ups2 = np.empty((D, T), dtype=int)
    a = np.empty((D, T), dtype=int)
    for j in range(D):
        for t in range(T):
            ub1 = max(lam_col[j], cap[j, t]) * float(policy.beta1_bar[j, t])
            ub2 = max(lam_col[j], cap[j, t]) * float(policy.beta2_bar[j, t])
            ups1[j, t] = m.add_var(lb=0.0, ub=ub1, obj=float(mu[j, t]), name=f"ups1[{j},{t}]")
            ups2[j, t] = m.add_var(lb=0.0, ub=ub2, obj=float(-mu[j, t]), name=f"ups2[{j},{t}]")
            a[j, t] = m.add_var(kind=BINARY, name=f"a[{j},{t}]")
    for j in range(D):
        for t in range(T):
            m_a = max(lam_col[j], cap[j, t]) + 1.0
            m_u = max(lam_col[j], cap[j, t]) * float(policy.beta1_bar[j, t]) + 1.0
            xterms = [(x[i, t], float(lam[i, j])) for i in range(S)]
            m.add_constr(xterms + [(a[j, t], -m_a)], "<=", float(cap[j, t]))
            # reverse indicator constraint, kept as stated even though the
            # objective pressure makes it partially redundant
            m.add_constr(xterms + [(a[j, t], -m_a)], ">=", float(cap[j, t]) - m_a)
            p1terms = [(refs.phi1[i, j, t], float(lam[i, j])) for i in range(S)]
            m.add_constr(p1terms + [(ups1[j, t], -1.0), (a[j, t], -m_u)], "<=", 0.0)
            m.add_constr([(refs.beta1[j, t], float(cap[j, t])), (ups1[j, t], -1.0),
                          (a[j, t], m_u)], "<=", m_u)
            p2terms = [(refs.phi2[i, j, t], float(lam[i, j])) for i in range(S)]
            m.add_constr(p2terms + [(ups2[j, t], -1.0)], ">=", 0.0)
            m.add_constr([(refs.beta2[j, t], float(cap[j, t])), (ups2[j, t], -1.0)], ">=", 0.0)
    refs.ups1, refs.ups2, refs.a = ups1, ups2, a


def _add_capacity_moment_block(m: Model, inst: NetworkInstance, y, refs: MomentRefs,
                               policy: BigMPolicy) -> None:
    """Range indicators e with cumulative-capacity selection constraints and
    the zeta McCormick products replacing e*beta."""
    S, D, T = inst.n_supply, inst.n_demand, inst.periods
    mo = inst.moment
    if mo.lam_cap is None or mo.range_lower is None or mo.range_upper is None:
        raise FormulationError("capacity variant needs lam_cap and capacity ranges")
    if mo.demand_cap is not None:
        raise FormulationError("demand_cap is not supported with the capacity variant in "
                               "the solve reformulation; drop the cap or use a location variant")
    R = mo.n_ranges
    mu = mo.base_mean
    cum_limit = np.cumsum(inst.costs.capacity_limit, axis=1)
    e = np.empty((S, T, R), dtype=int)
    for i in range(S):
        for t in range(T):
            for r in range(R):
                e[i, t, r] = m.add_var(kind=BINARY, name=f"e[{i},{t},{r}]")
    zeta = []
    for mm, beta, bbar, sgn in ((1, refs.beta1, policy.beta1_bar, 1.0),
                                (2, refs.beta2, policy.beta2_bar, -1.0)):
        zz = np.empty((S, D, T, R), dtype=int)
        for i in range(S):
            for j in range(D):
                for t in range(T):
                    for r in range(R):
                        zz[i, j, t, r] = m.add_var(
                            lb=0.0, ub=float(bbar[j, t]),
                            obj=sgn * mu[j, t] * float(mo.lam_cap[i, j, r]),
                            name=f"zeta{mm}[{i},{j},{t},{r}]")
        zeta.append(zz)
        for i in range(S):
            for j in range(D):
                for t in range(T):
                    for r in range(R):
                        bb = float(bbar[j, t])
                        m.add_constr([(zz[i, j, t, r], 1.0), (e[i, t, r], -bb)], "<=", 0.0)
                        m.add_constr([(zz[i, j, t, r], 1.0), (beta[j, t], -1.0)], "<=", 0.0)
                        m.add_constr([(zz[i, j, t, r], 1.0), (beta[j, t], -1.0),
                                      (e[i, t, r], -bb)], ">=", -bb)
    for i in range(S):
        for t in range(T):
            m.add_constr([(e[i, t, r], 1.0) for r in range(R)], "==", 1.0,
                         name=f"one_range[{i},{t}]")
            cum_terms = [(y[i, tp], 1.0) for tp in range(t + 1)]
            m_rng = float(cum_limit[i, t]) + float(np.max(mo.range_lower[i, t])) + 1.0
            for r in range(R):
                lo = float(mo.range_lower[i, t, r])
                up = float(mo.range_upper[i, t, r])
                # l_r - M(1-e) <= cumulative y <= u_r + M(1-e)
                m.add_constr(cum_terms + [(e[i, t, r], -m_rng)], ">=", lo - m_rng,
                             name=f"range_lo[{i},{t},{r}]")
                if math.isfinite(up):
                    m.add_constr(cum_terms + [(e[i, t, r], m_rng)], "<=", up + m_rng,
                                 name=f"range_hi[{i},{t},{r}]")
    refs.e = e
    refs.zeta1, refs.zeta2 = zeta


def moment_dual_cost(inst: NetworkInstance, refs: MomentRefs, values: np.ndarray) -> float:
    """Moment-dual part of the objective, evaluated at solved values.

    This is the exact expression the candidate upper bound needs: it uses
    the linearized products (phi / upsilon / zeta) from the master solution
    rather than recomputing x*beta."""
    mo = inst.moment
    mu, eps = mo.base_mean, mo.epsilon
    b1 = values[refs.beta1]
    b2 = values[refs.beta2]
    total = float(np.sum((mu + eps) * b1) + np.sum((-mu + eps) * b2))
    if refs.variant == MomentVariant.LOCATION_LINEAR:
        p1 = values[refs.phi1]
        p2 = values[refs.phi2]
        total += float(np.einsum("jt,ij,ijt->", mu, mo.lam, p1)
                       - np.einsum("jt,ij,ijt->", mu, mo.lam, p2))
    elif refs.variant == MomentVariant.LOCATION_BOUNDED:
        total += float(np.sum(mu * values[refs.ups1]) - np.sum(mu * values[refs.ups2]))
    else:
        z1 = values[refs.zeta1]
        z2 = values[refs.zeta2]
        total += float(np.einsum("jt,ijr,ijtr->", mu, mo.lam_cap, z1)
                       - np.einsum("jt,ijr,ijtr->", mu, mo.lam_cap, z2))
    return total


def _add_scenario_block(m: Model, inst: NetworkInstance, y, beta1, beta2, alpha,
                        per_period: bool, scen: Scenario, k: int) -> None:
    """Recourse variables and constraints for one pooled scenario, plus the
    linking cut(s) against alpha."""
    S, I, D, T = inst.n_supply, inst.n_ports, inst.n_demand, inst.periods
    c = inst.costs
    xi = scen.demand
    conv = inst.conversion
    h = np.empty((S, T), dtype=int)
    v = np.empty((I, T), dtype=int)
    z = np.empty((S + I, D, T), dtype=int)
    for i in range(S):
        for t in range(T):
            h[i, t] = m.add_var(lb=0.0, obj=0.0, name=f"h{k}[{i},{t}]")
    for i in range(I):
        for t in range(T):
            v[i, t] = m.add_var(lb=0.0, ub=float(xi[:, t].sum()), name=f"v{k}[{i},{t}]")
    for a_ in range(S + I):
        for j in range(D):
            for t in range(T):
                z[a_, j, t] = m.add_var(lb=0.0, ub=float(xi[j, t]), name=f"z{k}[{a_},{j},{t}]")
    for i in range(S):
        for t in range(T):
            # production limited by cumulative built capacity (kg)
            m.add_constr([(h[i, t], 1.0)] + [(y[i, tp], -conv) for tp in range(t + 1)],
                         "<=", 0.0, name=f"s{k}_cap[{i},{t}]")
            m.add_constr([(h[i, t], 1.0)] + [(z[i, j, t], -1.0) for j in range(D)],
                         "==", 0.0, name=f"s{k}_hbal[{i},{t}]")
    for i in range(I):
        for t in range(T):
            m.add_constr([(v[i, t], 1.0)] + [(z[S + i, j, t], -1.0) for j in range(D)],
                         "==", 0.0, name=f"s{k}_vbal[{i},{t}]")
    for j in range(D):
        for t in range(T):
            m.add_constr([(z[a_, j, t], 1.0) for a_ in range(S + I)], "==", float(xi[j, t]),
                         name=f"s{k}_dem[{j},{t}]")

    def cut_terms(t):
        terms = [(beta1[j, t], float(xi[j, t])) for j in range(D)]
        terms += [(beta2[j, t], -float(xi[j, t])) for j in range(D)]
        terms += [(h[i, t], -float(c.production[i, t])) for i in range(S)]
        terms += [(v[i, t], -float(c.imports[i, t])) for i in range(I)]
        terms += [(z[a_, j, t], -float(c.transport[a_, j, t]))
                  for a_ in range(S + I) for j in range(D)]
        rhs = -float((c.revenue[:, t] * xi[:, t]).sum())
        return terms, rhs

    if per_period:
        for t in range(T):
            terms, rhs = cut_terms(t)
            m.add_constr([(alpha[t], 1.0)] + terms, ">=", rhs, name=f"s{k}_cut[{t}]")
    else:
        terms_all: list = [(alpha[0], 1.0)]
        rhs_all = 0.0
        for t in range(T):
            terms, rhs = cut_terms(t)
            terms_all += terms
            rhs_all += rhs
        m.add_constr(terms_all, ">=", rhs_all, name=f"s{k}_cut")


# ----------------------------------------------------------------------
# Master model (scenario pool) and the monolithic discrete reformulation
# ----------------------------------------------------------------------

@dataclass
class MasterSolution:
    plan: InvestmentPlan
    beta1: np.ndarray
    beta2: np.ndarray
    alpha: np.ndarray
    objective: float
    best_bound: float
    first_stage_cost: float
    moment_dual_cost: float
    values: np.ndarray


class MasterModel:
    """Scenario master: first stage, dual-moment block and one recourse block
    per pooled scenario, with per-period cuts (alpha_t) or one aggregated cut
    (single alpha)."""

    def __init__(self, inst: NetworkInstance, variant: MomentVariant, policy: BigMPolicy,
                 per_period_cuts: bool = True, alpha_min: np.ndarray | None = None,
                 name: str = "master"):
        self.instance = inst
        self.variant = variant
        self.policy = policy
        self.per_period = per_period_cuts
        self.scenarios: list[Scenario] = []
        self.model = Model(name=name)
        self.x, self.y = _add_first_stage(self.model, inst)
        T = inst.periods
        if per_period_cuts:
            lo = alpha_floor(inst) if alpha_min is None else np.asarray(alpha_min, dtype=float)
            self.alpha = np.array([self.model.add_var(lb=float(lo[t]), ub=INF, obj=1.0,
                                                      name=f"alpha[{t}]") for t in range(T)])
        else:
            if alpha_min is None:
                lo_total = float(alpha_floor(inst).sum())
            elif np.ndim(alpha_min) == 0:
                lo_total = float(alpha_min)
            else:
                lo_total = float(np.sum(alpha_min))
            self.alpha = np.array([self.model.add_var(lb=lo_total, ub=INF, obj=1.0, name="alpha")])
        self.moment = _add_moment_block(self.model, inst, self.x, self.y, variant, policy)

    @property
    def pool_size(self) -> int:
        return len(self.scenarios)

    def add_scenario(self, scen: Scenario) -> bool:
        """Append recourse columns and constraints for one scenario.

        Returns False (and leaves the model unchanged) when the scenario
        duplicates a pooled one componentwise within 1e-9.  Raises for
        scenarios outside the support box."""
        if not self.instance.support.contains(scen):
            raise ValueError("scenario outside the support set")
        if any(scen.close_to(s, DEDUP_TOL) for s in self.scenarios):
            return False
        k = len(self.scenarios)
        _add_scenario_block(self.model, self.instance, self.y, self.moment.beta1,
                            self.moment.beta2, self.alpha, self.per_period, scen, k)
        self.scenarios.append(scen)
        return True

    def solve(self, options: SolveOptions | None = None) -> SolveResult:
        return self.model.solve(options or SolveOptions())

    def extract(self, res: SolveResult) -> MasterSolution:
        vals = res.values
        x = np.rint(vals[self.x]).astype(int)
        y = np.maximum(vals[self.y], 0.0) * x  # zero out capacity at closed sites
        e = None
        if self.moment.e is not None:
            raw = vals[self.moment.e]
            e = np.zeros(raw.shape, dtype=int)
            sel = raw.argmax(axis=2)
            for i in range(raw.shape[0]):
                for t in range(raw.shape[1]):
                    e[i, t, sel[i, t]] = 1
        plan = InvestmentPlan(x=x, y=y, e=e)
        return MasterSolution(
            plan=plan,
            beta1=vals[self.moment.beta1].copy(),
            beta2=vals[self.moment.beta2].copy(),
            alpha=vals[self.alpha].copy(),
            objective=res.objective,
            best_bound=res.best_bound,
            first_stage_cost=first_stage_cost(self.instance, plan),
            moment_dual_cost=moment_dual_cost(self.instance, self.moment, vals),
            values=vals,
        )


def build_master(inst: NetworkInstance, scenario_pool=(), variant: MomentVariant | None = None,
                 per_period_cuts: bool = True, policy: BigMPolicy | None = None,
                 alpha_min: np.ndarray | None = None) -> MasterModel:
    """Master problem over a (possibly empty) scenario pool.

    With an empty pool alpha is unbounded below in the raw formulation; the
    master therefore floors it at a valid lower bound on recourse cost (see
    :func:`alpha_floor`), so the first solve stays bounded."""
    variant = MomentVariant(variant) if variant is not None else inst.moment.variant
    policy = policy or default_bigm(inst)
    master = MasterModel(inst, variant, policy, per_period_cuts=per_period_cuts,
                         alpha_min=alpha_min)
    for s in scenario_pool:
        master.add_scenario(s)
    return master


def add_scenario(master: MasterModel, scen: Scenario) -> MasterModel:
    """Spec-surface alias: append a scenario to the master (idempotent for
    duplicates) and return the updated master."""
    master.add_scenario(scen)
    return master


def build_monolithic_discrete(inst: NetworkInstance, scenarios=None,
                              variant: MomentVariant | None = None,
                              policy: BigMPolicy | None = None) -> MasterModel:
    """Single-stage MILP over a finite support: one recourse block per
    scenario, single alpha bounded by the scenario cuts themselves."""
    scenarios = list(scenarios) if scenarios is not None else list(inst.support.scenarios)
    if not scenarios:
        raise FormulationError("monolithic discrete reformulation needs a nonempty scenario list")
    variant = MomentVariant(variant) if variant is not None else inst.moment.variant
    policy = policy or default_bigm(inst)
    # alpha needs no artificial floor: every scenario cut bounds it from below
    master = MasterModel(inst, variant, policy, per_period_cuts=False,
                         alpha_min=-INF, name="monolithic")
    for s in scenarios:
        master.add_scenario(s)
    return master


# ----------------------------------------------------------------------
# Worst-case subproblem (KKT / big-M form) over the continuous support
# ----------------------------------------------------------------------

@dataclass
class SubproblemSolution:
    """Optimum of the worst-case subproblem restricted to ``periods``."""

    value: float
    xi: np.ndarray        # (D, |periods|)
    nu: np.ndarray        # (S, |periods|)
    psi: np.ndarray       # (D, |periods|)
    h: np.ndarray
    v: np.ndarray
    z: np.ndarray
    max_cs_residual: float


class SubproblemModel:
    """Worst-case demand search for a fixed first stage.

    Maximizes the realized second-stage cost minus the mean-dual correction
    over the support box; primal feasibility, dual feasibility and the
    big-M linearized complementary-slackness conditions force the recourse
    variables to be second-stage optimal for the chosen demand.
    """

    def __init__(self, inst: NetworkInstance, plan: InvestmentPlan,
                 beta1: np.ndarray, beta2: np.ndarray, policy: BigMPolicy,
                 periods=None):
        self.instance = inst
        self.policy = policy
        self.periods = tuple(periods) if periods is not None else tuple(range(inst.periods))
        self.beta1 = np.asarray(beta1, dtype=float)
        self.beta2 = np.asarray(beta2, dtype=float)
        if np.any(self.beta1 < -1e-9) or np.any(self.beta2 < -1e-9):
            raise ValueError("mean-dual prices must be nonnegative")
        bad = policy.violations()
        if bad:
            raise FormulationError("big-M policy violates its invariant: " + "; ".join(bad))

        S, I, D = inst.n_supply, inst.n_ports, inst.n_demand
        P = len(self.periods)
        c = inst.costs
        lo, up = inst.support.lower, inst.support.upper
        ycum_kg = plan.cumulative_capacity * inst.conversion  # (S, T)
        md = policy.m_dual
        m = Model(name="subproblem")
        self.model = m

        self.xi = np.empty((D, P), dtype=int)
        for j in range(D):
            for p, t in enumerate(self.periods):
                self.xi[j, p] = m.add_var(lb=float(lo[j, t]), ub=float(up[j, t]),
                                          obj=float(-c.revenue[j, t] - self.beta1[j, t]
                                                    + self.beta2[j, t]),
                                          name=f"xi[{j},{t}]")
        self.h = np.empty((S, P), dtype=int)
        for i in range(S):
            for p, t in enumerate(self.periods):
                self.h[i, p] = m.add_var(lb=0.0, ub=float(ycum_kg[i, t]),
                                         obj=float(c.production[i, t]), name=f"h[{i},{t}]")
        self.v = np.empty((I, P), dtype=int)
        mv = up.sum(axis=0)  # total demand upper bound per period
        for i in range(I):
            for p, t in enumerate(self.periods):
                self.v[i, p] = m.add_var(lb=0.0, ub=float(mv[t]), obj=float(c.imports[i, t]),
                                         name=f"v[{i},{t}]")
        self.z = np.empty((S + I, D, P), dtype=int)
        for a_ in range(S + I):
            for j in range(D):
                for p, t in enumerate(self.periods):
                    self.z[a_, j, p] = m.add_var(lb=0.0, ub=float(up[j, t]),
                                                 obj=float(c.transport[a_, j, t]),
                                                 name=f"z[{a_},{j},{t}]")
        self.nu = np.empty((S, P), dtype=int)
        self.tau = np.empty((S, P), dtype=int)
        for i in range(S):
            for p, t in enumerate(self.periods):
                self.nu[i, p] = m.add_var(lb=0.0, ub=md, name=f"nu[{i},{t}]")
                self.tau[i, p] = m.add_var(lb=-md, ub=md, name=f"tau[{i},{t}]")
        self.eta = np.empty((I, P), dtype=int)
        for i in range(I):
            for p, t in enumerate(self.periods):
                self.eta[i, p] = m.add_var(lb=-md, ub=md, name=f"eta[{i},{t}]")
        self.psi = np.empty((D, P), dtype=int)
        for j in range(D):
            for p, t in enumerate(self.periods):
                self.psi[j, p] = m.add_var(lb=-md, ub=md, name=f"psi[{j},{t}]")
        self.k1 = _grid(m, (S, P), kind=BINARY)
        self.k2 = _grid(m, (S, P), kind=BINARY)
        self.k3 = _grid(m, (I, P), kind=BINARY)
        self.k4 = _grid(m, (S, D, P), kind=BINARY)
        self.k5 = _grid(m, (I, D, P), kind=BINARY)

        for p, t in enumerate(self.periods):
            for i in range(S):
                mp = float(policy.m_primal[i, t])
                yk = float(ycum_kg[i, t])
                m.add_constr([(self.h[i, p], 1.0)] + [(self.z[i, j, p], -1.0) for j in range(D)],
                             "==", 0.0, name=f"hbal[{i},{t}]")
                # dual feasibility: tau - nu <= cP
                m.add_constr([(self.tau[i, p], 1.0), (self.nu[i, p], -1.0)], "<=",
                             float(c.production[i, t]), name=f"dual_h[{i},{t}]")
                # CS: capacity slack vs nu
                m.add_constr([(self.h[i, p], -1.0), (self.k1[i, p], -mp)], "<=", -yk)
                m.add_constr([(self.nu[i, p], 1.0), (self.k1[i, p], md)], "<=", md)
                # CS: production reduced cost vs h
                m.add_constr([(self.nu[i, p], 1.0), (self.tau[i, p], -1.0),
                              (self.k2[i, p], -md)], "<=", -float(c.production[i, t]))
                m.add_constr([(self.h[i, p], 1.0), (self.k2[i, p], mp)], "<=", mp)
            for i in range(I):
                m.add_constr([(self.v[i, p], 1.0)] + [(self.z[S + i, j, p], -1.0)
                                                      for j in range(D)],
                             "==", 0.0, name=f"vbal[{i},{t}]")
                # dual feasibility: eta <= cI
                m.add_constr([(self.eta[i, p], 1.0)], "<=", float(c.imports[i, t]),
                             name=f"dual_v[{i},{t}]")
                # CS: import reduced cost vs v
                mvt = max(float(mv[t]), 1e-12)
                m.add_constr([(self.eta[i, p], -1.0), (self.k3[i, p], -md)], "<=",
                             -float(c.imports[i, t]))
                m.add_constr([(self.v[i, p], 1.0), (self.k3[i, p], mvt)], "<=", mvt)
            for j in range(D):
                m.add_constr([(self.z[a_, j, p], 1.0) for a_ in range(S + I)]
                             + [(self.xi[j, p], -1.0)], "==", 0.0, name=f"dem[{j},{t}]")
                mz = max(float(up[j, t]), 1e-12)
                for i in range(S):
                    m.add_constr([(self.psi[j, p], 1.0), (self.tau[i, p], -1.0)], "<=",
                                 float(c.transport[i, j, t]), name=f"dual_zs[{i},{j},{t}]")
                    m.add_constr([(self.tau[i, p], 1.0), (self.psi[j, p], -1.0),
                                  (self.k4[i, j, p], -md)], "<=", -float(c.transport[i, j, t]))
                    m.add_constr([(self.z[i, j, p], 1.0), (self.k4[i, j, p], mz)], "<=", mz)
                for i in range(I):
                    m.add_constr([(self.psi[j, p], 1.0), (self.eta[i, p], -1.0)], "<=",
                                 float(c.transport[S + i, j, t]), name=f"dual_zi[{i},{j},{t}]")
                    m.add_constr([(self.eta[i, p], 1.0), (self.psi[j, p], -1.0),
                                  (self.k5[i, j, p], -md)], "<=", -float(c.transport[S + i, j, t]))
                    m.add_constr([(self.z[S + i, j, p], 1.0), (self.k5[i, j, p], mz)], "<=", mz)
        self._ycum_kg = ycum_kg
        self._mv = mv

    def solve(self, options: SolveOptions | None = None) -> tuple[SolveResult, SubproblemSolution | None]:
        opts = options or SolveOptions()
        if opts.sense != MAX:
            opts = SolveOptions(relative_gap=opts.relative_gap, time_limit=opts.time_limit,
                                threads=opts.threads, sense=MAX)
        res = self.model.solve(opts)
        if res.status == solver.INFEASIBLE:
            raise FormulationError(
                "worst-case subproblem infeasible: the big-M policy is too tight to admit "
                "a KKT certificate (check BigMPolicy invariants / overrides)")
        if not res.has_solution:
            return res, None
        return res, self.extract(res)

    def extract(self, res: SolveResult) -> SubproblemSolution:
        vals = res.values
        return SubproblemSolution(
            value=res.objective,
            xi=vals[self.xi].copy(),
            nu=vals[self.nu].copy(),
            psi=vals[self.psi].copy(),
            h=vals[self.h].copy(),
            v=vals[self.v].copy(),
            z=vals[self.z].copy(),
            max_cs_residual=self.complementarity_residual(vals),
        )

    def complementarity_residual(self, vals: np.ndarray) -> float:
        """Largest complementarity product after rescaling each factor by its
        big-M (dimensionless; ~0 at a clean KKT point)."""
        inst, c = self.instance, self.instance.costs
        S, I, D = inst.n_supply, inst.n_ports, inst.n_demand
        md = self.policy.m_dual
        worst = 0.0
        for p, t in enumerate(self.periods):
            mvt = max(float(self._mv[t]), 1e-12)
            for i in range(S):
                mp = float(self.policy.m_primal[i, t])
                slack = (self._ycum_kg[i, t] - vals[self.h[i, p]]) / mp
                worst = max(worst, slack * vals[self.nu[i, p]] / md)
                rc = (c.production[i, t] + vals[self.nu[i, p]] - vals[self.tau[i, p]]) / md
                worst = max(worst, rc * vals[self.h[i, p]] / mp)
            for i in range(I):
                rc = (c.imports[i, t] - vals[self.eta[i, p]]) / md
                worst = max(worst, rc * vals[self.v[i, p]] / mvt)
            for j in range(D):
                mz = max(float(inst.support.upper[j, t]), 1e-12)
                for i in range(S):
                    rc = (c.transport[i, j, t] + vals[self.tau[i, p]] - vals[self.psi[j, p]]) / md
                    worst = max(worst, rc * vals[self.z[i, j, p]] / mz)
                for i in range(I):
                    rc = (c.transport[S + i, j, t] + vals[self.eta[i, p]] - vals[self.psi[j, p]]) / md
                    worst = max(worst, rc * vals[self.z[S + i, j, p]] / mz)
        return float(worst)


def build_subproblem_continuous(inst: NetworkInstance, plan: InvestmentPlan,
                                beta1, beta2, policy: BigMPolicy | None = None,
                                periods=None) -> SubproblemModel:
    policy = policy or default_bigm(inst)
    return SubproblemModel(inst, plan, beta1, beta2, policy, periods=periods)


# ----------------------------------------------------------------------
# Second-stage LP (primal and dual) and the discrete subproblem
# ----------------------------------------------------------------------

def build_second_stage_lp(inst: NetworkInstance, plan: InvestmentPlan, demand: np.ndarray):
    """Operational LP for a fixed plan and demand realization.

    Returns (model, refs) where refs holds h/v/z handle grids.  The model
    objective includes the constant revenue term -sum R*demand as an offset,
    so the optimum equals the realized second-stage cost."""
    S, I, D, T = inst.n_supply, inst.n_ports, inst.n_demand, inst.periods
    c = inst.costs
    demand = np.asarray(demand, dtype=float)
    ycum_kg = plan.cumulative_capacity * inst.conversion
    m = Model(name="second_stage")
    h = np.empty((S, T), dtype=int)
    v = np.empty((I, T), dtype=int)
    z = np.empty((S + I, D, T), dtype=int)
    for i in range(S):
        for t in range(T):
            h[i, t] = m.add_var(lb=0.0, ub=float(ycum_kg[i, t]), obj=float(c.production[i, t]),
                                name=f"h[{i},{t}]")
    for i in range(I):
        for t in range(T):
            v[i, t] = m.add_var(lb=0.0, obj=float(c.imports[i, t]), name=f"v[{i},{t}]")
    for a_ in range(S + I):
        for j in range(D):
            for t in range(T):
                z[a_, j, t] = m.add_var(lb=0.0, ub=float(demand[j, t]),
                                        obj=float(c.transport[a_, j, t]), name=f"z[{a_},{j},{t}]")
    for i in range(S):
        for t in range(T):
            m.add_constr([(h[i, t], 1.0)] + [(z[i, j, t], -1.0) for j in range(D)], "==", 0.0)
    for i in range(I):
        for t in range(T):
            m.add_constr([(v[i, t], 1.0)] + [(z[S + i, j, t], -1.0) for j in range(D)], "==", 0.0)
    for j in range(D):
        for t in range(T):
            m.add_constr([(z[a_, j, t], 1.0) for a_ in range(S + I)], "==", float(demand[j, t]))
    m.obj_offset = -float(np.sum(c.revenue * demand))
    return m, {"h": h, "v": v, "z": z}


def build_second_stage_dual(inst: NetworkInstance, plan: InvestmentPlan, demand: np.ndarray):
    """LP dual of the second stage (max sense); used as the strong-duality
    oracle against :func:`build_second_stage_lp`."""
    S, I, D, T = inst.n_supply, inst.n_ports, inst.n_demand, inst.periods
    c = inst.costs
    demand = np.asarray(demand, dtype=float)
    ycum_kg = plan.cumulative_capacity * inst.conversion
    m = Model(name="second_stage_dual")
    nu = np.empty((S, T), dtype=int)
    tau = np.empty((S, T), dtype=int)
    eta = np.empty((I, T), dtype=int)
    psi = np.empty((D, T), dtype=int)
    for i in range(S):
        for t in range(T):
            nu[i, t] = m.add_var(lb=0.0, obj=-float(ycum_kg[i, t]), name=f"nu[{i},{t}]")
            tau[i, t] = m.add_var(lb=-INF, ub=INF, obj=0.0, name=f"tau[{i},{t}]")
    for i in range(I):
        for t in range(T):
            eta[i, t] = m.add_var(lb=-INF, ub=INF, obj=0.0, name=f"eta[{i},{t}]")
    for j in range(D):
        for t in range(T):
            psi[j, t] = m.add_var(lb=-INF, ub=INF, obj=float(demand[j, t]), name=f"psi[{j},{t}]")
    for i in range(S):
        for t in range(T):
            m.add_constr([(tau[i, t], 1.0), (nu[i, t], -1.0)], "<=", float(c.production[i, t]))
    for i in range(I):
        for t in range(T):
            m.add_constr([(eta[i, t], 1.0)], "<=", float(c.imports[i, t]))
    for i in range(S):
        for j in range(D):
            for t in range(T):
                m.add_constr([(psi[j, t], 1.0), (tau[i, t], -1.0)], "<=",
                             float(c.transport[i, j, t]))
    for i in range(I):
        for j in range(D):
            for t in range(T):
                m.add_constr([(psi[j, t], 1.0), (eta[i, t], -1.0)], "<=",
                             float(c.transport[S + i, j, t]))
    m.obj_offset = -float(np.sum(c.revenue * demand))
    return m, {"nu": nu, "tau": tau, "eta": eta, "psi": psi}


def second_stage_value(inst: NetworkInstance, plan: InvestmentPlan, demand: np.ndarray,
                       options: SolveOptions | None = None) -> float:
    """Realized second-stage cost (including the revenue credit) for a fixed
    plan and demand matrix."""
    m, _ = build_second_stage_lp(inst, plan, demand)
    res = m.solve(options or SolveOptions())
    if res.status not in (solver.OPTIMAL, solver.GAP_REACHED):
        raise solver.SolverError(f"second-stage LP ended with status {res.status}")
    return res.objective


@dataclass
class DiscreteSubproblemResult:
    index: int
    scenario: Scenario
    value: float
    candidate_values: list[float]


def solve_subproblem_discrete(inst: NetworkInstance, plan: InvestmentPlan, beta1, beta2,
                              scenarios, executor=None) -> DiscreteSubproblemResult:
    """Exact worst case over a finite scenario list: per-candidate LP
    evaluation plus the mean-dual correction; ties break to the lowest
    scenario index."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("discrete subproblem needs a nonempty scenario list")
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)

    def candidate(s: Scenario) -> float:
        f = second_stage_value(inst, plan, s.demand)
        return f - float(np.sum((beta1 - beta2) * s.demand))

    if executor is not None:
        values = list(executor.map(candidate, scenarios))
    else:
        values = [candidate(s) for s in scenarios]
    best = int(np.argmax(values))  # argmax returns the first maximizer
    return DiscreteSubproblemResult(index=best, scenario=scenarios[best],
                                    value=float(values[best]), candidate_values=values)


# ----------------------------------------------------------------------
# Benders master
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BendersCut:
    """One optimality cut, built from a worst-case scenario and the
    capacity/demand duals of the KKT subproblem at that scenario."""

    xi: np.ndarray    # (D, T)
    nu: np.ndarray    # (S, T)
    psi: np.ndarray   # (D, T)

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float))

    def close_to(self, other: "BendersCut", tol: float = DEDUP_TOL) -> bool:
        return (np.max(np.abs(self.xi - other.xi), initial=0.0) <= tol
                and np.max(np.abs(self.nu - other.nu), initial=0.0) <= tol
                and np.max(np.abs(self.psi - other.psi), initial=0.0) <= tol)


class BendersMaster:
    """First stage + dual-moment block + single alpha, tightened by
    accumulated optimality cuts."""

    def __init__(self, inst: NetworkInstance, variant: MomentVariant, policy: BigMPolicy,
                 alpha_min: float | None = None):
        self.instance = inst
        self.variant = variant
        self.policy = policy
        self.cuts: list[BendersCut] = []
        self.model = Model(name="benders_master")
        self.x, self.y = _add_first_stage(self.model, inst)
        lo = float(alpha_floor(inst).sum()) if alpha_min is None else float(alpha_min)
        self.alpha = np.array([self.model.add_var(lb=lo, ub=INF, obj=1.0, name="alpha")])
        self.moment = _add_moment_block(self.model, inst, self.x, self.y, variant, policy)

    def add_cut(self, cut: BendersCut, dedup: bool = False) -> bool:
        """alpha >= sum_t ( -sum_i conv*cum_y*nu* + sum_j xi*(psi*-R) - (b1-b2)xi* )."""
        if dedup and any(cut.close_to(c) for c in self.cuts):
            return False
        inst = self.instance
        S, D, T = inst.n_supply, inst.n_demand, inst.periods
        conv = inst.conversion
        terms: list = [(self.alpha[0], 1.0)]
        for i in range(S):
            for tp in range(T):
                coeff = conv * float(cut.nu[i, tp:].sum())  # y_{i,tp} feeds periods t >= tp
                if coeff:
                    terms.append((self.y[i, tp], coeff))
        for j in range(D):
            for t in range(T):
                xi = float(cut.xi[j, t])
                if xi:
                    terms.append((self.moment.beta1[j, t], xi))
                    terms.append((self.moment.beta2[j, t], -xi))
        rhs = float(np.sum(cut.xi * (cut.psi - inst.costs.revenue)))
        self.model.add_constr(terms, ">=", rhs, name=f"benders_cut[{len(self.cuts)}]")
        self.cuts.append(cut)
        return True

    def solve(self, options: SolveOptions | None = None) -> SolveResult:
        return self.model.solve(options or SolveOptions())

    def extract(self, res: SolveResult) -> MasterSolution:
        vals = res.values
        x = np.rint(vals[self.x]).astype(int)
        y = np.maximum(vals[self.y], 0.0) * x
        e = None
        if self.moment.e is not None:
            raw = vals[self.moment.e]
            e = np.zeros(raw.shape, dtype=int)
            sel = raw.argmax(axis=2)
            for i in range(raw.shape[0]):
                for t in range(raw.shape[1]):
                    e[i, t, sel[i, t]] = 1
        plan = InvestmentPlan(x=x, y=y, e=e)
        return MasterSolution(
            plan=plan,
            beta1=vals[self.moment.beta1].copy(),
            beta2=vals[self.moment.beta2].copy(),
            alpha=vals[self.alpha].copy(),
            objective=res.objective,
            best_bound=res.best_bound,
            first_stage_cost=first_stage_cost(inst=self.instance, plan=plan),
            moment_dual_cost=moment_dual_cost(self.instance, self.moment, vals),
            values=vals,
        )


def build_benders_master(inst: NetworkInstance, cut_pool=(), variant: MomentVariant | None = None,
                         policy: BigMPolicy | None = None,
                         alpha_min: float | None = None) -> BendersMaster:
    variant = MomentVariant(variant) if variant is not None else inst.moment.variant
    policy = policy or default_bigm(inst)
    master = BendersMaster(inst, variant, policy, alpha_min=alpha_min)
    for cut in cut_pool:
        master.add_cut(cut if isinstance(cut, BendersCut) else BendersCut(*cut))
    return master


# ----------------------------------------------------------------------
# Deterministic baseline (demand pinned at its decision-dependent mean)
# ----------------------------------------------------------------------

class DeterministicModel:
    def __init__(self, model: Model, inst: NetworkInstance, x, y, h, v, z):
        self.model = model
        self.instance = inst
        self.x, self.y = x, y
        self.h, self.v, self.z = h, v, z

    def solve(self, options: SolveOptions | None = None):
        res = self.model.solve(options or SolveOptions())
        plan = None
        if res.has_solution:
            x = np.rint(res.values[self.x]).astype(int)
            y = np.maximum(res.values[self.y], 0.0) * x
            plan = InvestmentPlan(x=x, y=y)
        return res, plan


def build_deterministic(inst: NetworkInstance, variant: MomentVariant | None = None,
                        ddu_enabled: bool = True) -> DeterministicModel:
    """Single-level MILP where demand equals the decision-dependent mean.

    Defined for the location variants only; the capacity variant has no
    deterministic counterpart here and is rejected.  With ``ddu_enabled``
    False the impact factors are treated as zero (classic expansion model
    at base means)."""
    variant = MomentVariant(variant) if variant is not None else inst.moment.variant
    if variant == MomentVariant.CAPACITY:
        raise FormulationError("deterministic baseline is not defined for the capacity "
                               "moment variant")
    S, I, D, T = inst.n_supply, inst.n_ports, inst.n_demand, inst.periods
    c, mo = inst.costs, inst.moment
    mu = mo.base_mean
    lam = mo.lam if (ddu_enabled and mo.lam is not None) else np.zeros((S, D))
    bounded = ddu_enabled and variant == MomentVariant.LOCATION_BOUNDED
    if bounded and mo.demand_cap is None:
        raise FormulationError("bounded location variant needs demand_cap on the moment spec")

    m = Model(name="deterministic")
    x, y = _add_first_stage(m, inst)
    conv = inst.conversion
    dmax = mu * (1.0 + lam.sum(axis=0)[:, None])
    if bounded:
        dmax = np.minimum(dmax, mu * (1.0 + mo.demand_cap))
    h = np.empty((S, T), dtype=int)
    v = np.empty((I, T), dtype=int)
    z = np.empty((S + I, D, T), dtype=int)
    for i in range(S):
        for t in range(T):
            h[i, t] = m.add_var(lb=0.0, obj=float(c.production[i, t]), name=f"h[{i},{t}]")
    for i in range(I):
        for t in range(T):
            v[i, t] = m.add_var(lb=0.0, obj=float(c.imports[i, t]), name=f"v[{i},{t}]")
    for a_ in range(S + I):
        for j in range(D):
            for t in range(T):
                z[a_, j, t] = m.add_var(lb=0.0, ub=float(dmax[j, t]),
                                        obj=float(c.transport[a_, j, t]), name=f"z[{a_},{j},{t}]")
    for i in range(S):
        for t in range(T):
            m.add_constr([(h[i, t], 1.0)] + [(y[i, tp], -conv) for tp in range(t + 1)], "<=", 0.0)
            m.add_constr([(h[i, t], 1.0)] + [(z[i, j, t], -1.0) for j in range(D)], "==", 0.0)
    for i in range(I):
        for t in range(T):
            m.add_constr([(v[i, t], 1.0)] + [(z[S + i, j, t], -1.0) for j in range(D)], "==", 0.0)

    if not bounded:
        # demand = mu*(1 + sum_i lam*x): substituted directly into the flow
        # balance and the revenue term
        for j in range(D):
            for t in range(T):
                terms = [(z[a_, j, t], 1.0) for a_ in range(S + I)]
                terms += [(x[i, t], -float(mu[j, t] * lam[i, j])) for i in range(S)]
                m.add_constr(terms, "==", float(mu[j, t]))
        for i in range(S):
            for t in range(T):
                m.add_obj_coeff(x[i, t], -float(np.sum(c.revenue[:, t] * mu[:, t] * lam[i, :])))
        m.obj_offset = -float(np.sum(c.revenue * mu))
    else:
        # demand d = min(mu*(1+sum lam*x), mu*(1+cap)), linearized exactly
        # with an indicator per (j, t)
        cap_val = mu * (1.0 + mo.demand_cap)
        for j in range(D):
            for t in range(T):
                d = m.add_var(lb=0.0, ub=float(dmax[j, t]), obj=-float(c.revenue[j, t]),
                              name=f"d[{j},{t}]")
                b = m.add_var(kind=BINARY, name=f"dcap[{j},{t}]")
                big = float(mu[j, t] * (lam.sum(axis=0)[j] + mo.demand_cap[j, t] + 1.0)) + 1.0
                lin = [(x[i, t], float(mu[j, t] * lam[i, j])) for i in range(S)]
                m.add_constr([(d, 1.0)] + [(xv, -cv) for xv, cv in lin], "<=", float(mu[j, t]))
                m.add_constr([(d, 1.0)], "<=", float(cap_val[j, t]))
                m.add_constr([(d, 1.0)] + [(xv, -cv) for xv, cv in lin] + [(b, -big)],
                             ">=", float(mu[j, t]) - big)
                m.add_constr([(d, 1.0), (b, -big)], ">=", float(cap_val[j, t]) - big)
                m.add_constr([(z[a_, j, t], 1.0) for a_ in range(S + I)] + [(d, -1.0)],
                             "==", 0.0)
    return DeterministicModel(m, inst, x, y, h, v, z)
