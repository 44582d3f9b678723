"""Shared toy instances and independent oracles.

The 1-supply/1-port/1-demand single-period toy has a closed-form second
stage, which gives fully independent expected values for the solver stack:
serving splits between local production (capped by built capacity) and
uncapacitated imports, whichever is cheaper.
"""

from __future__ import annotations

import numpy as np
import pytest

from ddro.models import (CostSchedule, InvestmentPlan, MomentSpec, MomentVariant,
                         NetworkInstance, Node, NodeRole, Scenario, SupportSet)


def make_toy(mu=10.0, lo=None, hi=None, eps=0.0, lam=0.0, cF=10.0, cV=1.0, cP=1.0,
             cI=5.0, cTs=1.0, cTp=1.0, R=10.0, cbar=100.0, scenarios=(),
             conversion=1.0, demand_cap=None):
    """1 supply, 1 port, 1 demand node, 1 period."""
    nodes = (Node("S1", NodeRole.SUPPLY, (0.0, 0.0)),
             Node("P1", NodeRole.PORT, (1.0, 0.0)),
             Node("D1", NodeRole.DEMAND, (0.0, 1.0)))
    lo = mu if lo is None else lo
    hi = mu if hi is None else hi
    variant = MomentVariant.LOCATION_LINEAR if demand_cap is None else MomentVariant.LOCATION_BOUNDED
    return NetworkInstance(
        nodes=nodes, periods=1,
        costs=CostSchedule(setup=[[cF]], capacity=[[cV]], production=[[cP]],
                           imports=[[cI]], transport=[[[cTs]], [[cTp]]], revenue=[[R]],
                           capacity_limit=[[cbar]], distances=[[1.0], [1.0]]),
        support=SupportSet(lower=[[lo]], upper=[[hi]], scenarios=scenarios),
        moment=MomentSpec(base_mean=[[mu]], epsilon=[[eps]], variant=variant,
                          lam=[[lam]],
                          demand_cap=None if demand_cap is None else [[demand_cap]]),
        conversion=conversion, name="toy-1x1x1")


def make_small(n_supply=2, n_demand=3, periods=2, seed=0, mu_scale=10.0, lam=0.2,
               eps_frac=0.0, support=(0.8, 1.3), cF=40.0, cV=1.0, cP=1.0, cI=6.0,
               R=8.0, transport=0.1, scenarios=None, rng_scenarios=0):
    """Small multi-node instance with hand-controllable economics; the
    decision-dependent mean always stays inside the support box."""
    rng = np.random.default_rng(seed)
    nodes = []
    for i in range(n_supply):
        nodes.append(Node(f"S{i+1}", NodeRole.SUPPLY, tuple(rng.uniform(0, 10, 2))))
    nodes.append(Node("P1", NodeRole.PORT, tuple(rng.uniform(0, 10, 2))))
    for j in range(n_demand):
        nodes.append(Node(f"D{j+1}", NodeRole.DEMAND, tuple(rng.uniform(0, 10, 2))))
    S, D, T = n_supply, n_demand, periods
    src = np.array([n.coords for n in nodes[:S + 1]])
    dst = np.array([n.coords for n in nodes[S + 1:]])
    dist = np.sqrt(((src[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2))
    mu = mu_scale * (1.0 + rng.uniform(-0.2, 0.2, size=(D, T)))
    lam_mat = np.full((S, D), lam / S)
    # support wide enough for the lifted mean +/- eps
    lower = support[0] * mu
    head = 1.0 + lam + eps_frac + (0.05 if lam > 0 else 0.0)
    upper = np.maximum(support[1], head) * mu
    scen = tuple(scenarios) if scenarios is not None else ()
    if rng_scenarios:
        scen = tuple(Scenario(rng.uniform(lower, upper)) for _ in range(rng_scenarios))
    return NetworkInstance(
        nodes=tuple(nodes), periods=T,
        costs=CostSchedule(setup=np.full((S, T), cF), capacity=np.full((S, T), cV),
                           production=np.full((S, T), cP), imports=np.full((1, T), cI),
                           transport=np.repeat((transport * dist)[:, :, None], T, axis=2),
                           revenue=np.full((D, T), R),
                           capacity_limit=np.full((S, T), 50.0 * mu_scale),
                           distances=dist),
        support=SupportSet(lower=lower, upper=upper, scenarios=scen),
        moment=MomentSpec(base_mean=mu, epsilon=eps_frac * mu, lam=lam_mat),
        name=f"small-{S}x{D}x{T}-seed{seed}")


def zero_instance(periods=1):
    """Everything-zero degenerate toy (zero means, costs, revenue)."""
    return make_toy(mu=0.0, cF=0.0, cV=0.0, cP=0.0, cI=0.0, cTs=0.0, cTp=0.0, R=0.0,
                    cbar=0.0)


# ----------------------------------------------------------------------
# Independent closed-form oracles for the 1x1x1 toy
# ----------------------------------------------------------------------

def toy_second_stage(inst, x, y, xi) -> float:
    """Closed-form f(x, y, xi): produce up to capacity on the cheaper route,
    import the rest; revenue credited for all served demand."""
    cP = inst.costs.production[0, 0]
    cI = inst.costs.imports[0, 0]
    cTs = inst.costs.transport[0, 0, 0]
    cTp = inst.costs.transport[1, 0, 0]
    R = inst.costs.revenue[0, 0]
    cap = y * inst.conversion * x
    prod_cost, imp_cost = cP + cTs, cI + cTp
    a = min(cap, xi) if prod_cost < imp_cost else 0.0
    return prod_cost * a + imp_cost * (xi - a) - R * xi


def toy_ddro_optimum(inst) -> float:
    """First-principles optimum for the toy with a continuous box support:
    the worst-case distribution is two-point at the box endpoints with the
    mean pinned at its worst feasible value; candidate capacities are the
    kink points of f."""
    mu = inst.moment.base_mean[0, 0]
    lo, hi = inst.support.lower[0, 0], inst.support.upper[0, 0]
    lam = inst.moment.lam[0, 0]
    eps = inst.moment.epsilon[0, 0]
    cF, cV = inst.costs.setup[0, 0], inst.costs.capacity[0, 0]
    best = None
    for x in (0, 1):
        m_center = mu * (1.0 + lam * x)
        for y in {0.0, lo, hi, m_center}:
            if x == 0 and y > 0:
                continue
            worst = None
            # worst mean within [m-eps, m+eps] clipped to the support
            for m in {max(m_center - eps, lo), min(m_center + eps, hi), m_center}:
                m = min(max(m, lo), hi)
                p = 0.0 if hi == lo else (m - lo) / (hi - lo)
                val = (p * toy_second_stage(inst, x, y, hi)
                       + (1 - p) * toy_second_stage(inst, x, y, lo))
                worst = val if worst is None else max(worst, val)
            total = cF * x + cV * y + worst
            best = total if best is None else min(best, total)
    return best


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture
def zero_plan():
    return InvestmentPlan(x=np.zeros((1, 1), dtype=int), y=np.zeros((1, 1)))
