"""Domain types for the expansion-planning problem.

Holds the network/instance data model, the ambiguity-set parameters and the
three decision-dependent moment functions (location-linear, location-bounded,
capacity-range based).  All types are immutable after construction and safe
to share across concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np

INF = float("inf")


def _ro(arr, dtype=float) -> np.ndarray:
    """Copy to a read-only ndarray."""
    a = np.array(arr, dtype=dtype)
    a.setflags(write=False)
    return a


class NodeRole(str, Enum):
    SUPPLY = "supply"
    PORT = "port"
    DEMAND = "demand"


class MomentVariant(str, Enum):
    LOCATION_LINEAR = "location"
    LOCATION_BOUNDED = "location-bounded"
    CAPACITY = "capacity"


@dataclass(frozen=True)
class Node:
    id: str
    role: NodeRole
    coords: tuple[float, float]
    label: str = ""


@dataclass(frozen=True)
class CostSchedule:
    """Cost data, dimensioned exactly by role sets x periods.

    ``setup``/``capacity``/``production``/``capacity_limit``: (S, T);
    ``imports``: (I, T); ``transport``: (S+I, D, T) with supply rows first;
    ``revenue``: (D, T); ``distances``: (S+I, D) in km.
    Capacity entries are per MW; all per-unit flows are per kg.
    """

    setup: np.ndarray
    capacity: np.ndarray
    production: np.ndarray
    imports: np.ndarray
    transport: np.ndarray
    revenue: np.ndarray
    capacity_limit: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        for f in ("setup", "capacity", "production", "imports", "transport",
                  "revenue", "capacity_limit", "distances"):
            object.__setattr__(self, f, _ro(getattr(self, f)))


@dataclass(frozen=True)
class Scenario:
    """One demand realization over demand nodes x periods, in kg."""

    demand: np.ndarray
    provenance: str = "pregenerated"

    def __post_init__(self):
        object.__setattr__(self, "demand", _ro(self.demand))

    def close_to(self, other: "Scenario", tol: float = 1e-9) -> bool:
        return self.demand.shape == other.demand.shape and \
            bool(np.max(np.abs(self.demand - other.demand), initial=0.0) <= tol)


@dataclass(frozen=True)
class SupportSet:
    """Componentwise demand box [lower, upper], optionally a finite list."""

    lower: np.ndarray
    upper: np.ndarray
    scenarios: tuple[Scenario, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lower", _ro(self.lower))
        object.__setattr__(self, "upper", _ro(self.upper))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

    @property
    def is_discrete(self) -> bool:
        return len(self.scenarios) > 0

    @property
    def kind(self) -> str:
        return "discrete" if self.is_discrete else "continuous"

    def contains(self, scenario: Scenario, tol: float = 1e-9) -> bool:
        d = scenario.demand
        return bool(np.all(d >= self.lower - tol) and np.all(d <= self.upper + tol))


@dataclass(frozen=True)
class MomentSpec:
    """Decision-dependent mean specification for the demand distribution.

    ``base_mean``/``epsilon``: (D, T).  The location variants use
    ``lam`` (S, D); the bounded one additionally ``demand_cap`` (D, T), the
    relative cap on the demand increase.  The capacity variant uses
    cumulative-capacity ranges ``range_lower``/``range_upper`` (S, T, R)
    in MW and impact factors ``lam_cap`` (S, D, R), nondecreasing in r.
    """

    base_mean: np.ndarray
    epsilon: np.ndarray
    variant: MomentVariant = MomentVariant.LOCATION_LINEAR
    lam: np.ndarray | None = None
    demand_cap: np.ndarray | None = None
    range_lower: np.ndarray | None = None
    range_upper: np.ndarray | None = None
    lam_cap: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", MomentVariant(self.variant))
        object.__setattr__(self, "base_mean", _ro(self.base_mean))
        object.__setattr__(self, "epsilon", _ro(self.epsilon))
        for f in ("lam", "demand_cap", "range_lower", "range_upper", "lam_cap"):
            v = getattr(self, f)
            if v is not None:
                object.__setattr__(self, f, _ro(v))

    @property
    def n_ranges(self) -> int:
        return 0 if self.lam_cap is None else self.lam_cap.shape[2]


@dataclass(frozen=True)
class BigMOverrides:
    """User-supplied big-M values; any field set here wins verbatim."""

    m_primal: np.ndarray | None = None
    m_dual: float | None = None
    beta1_bar: np.ndarray | None = None
    beta2_bar: np.ndarray | None = None

    def __post_init__(self):
        for f in ("m_primal", "beta1_bar", "beta2_bar"):
            v = getattr(self, f)
            if v is not None:
                object.__setattr__(self, f, _ro(v))


@dataclass(frozen=True)
class NetworkInstance:
    """A complete problem instance.

    ``conversion`` is the kg of hydrogen producible per MW of capacity per
    period; it links the MW investment variables to the kg flow variables.
    """

    nodes: tuple[Node, ...]
    periods: int
    costs: CostSchedule
    support: SupportSet
    moment: MomentSpec
    conversion: float = 1.0
    bigm: BigMOverrides | None = None
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @cached_property
    def supply_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.role == NodeRole.SUPPLY)

    @cached_property
    def port_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.role == NodeRole.PORT)

    @cached_property
    def demand_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.role == NodeRole.DEMAND)

    @property
    def n_supply(self) -> int:
        return len(self.supply_nodes)

    @property
    def n_ports(self) -> int:
        return len(self.port_nodes)

    @property
    def n_demand(self) -> int:
        return len(self.demand_nodes)

    @cached_property
    def supply_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.supply_nodes)

    @cached_property
    def port_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.port_nodes)

    @cached_property
    def demand_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.demand_nodes)

    def without_ddu(self) -> "NetworkInstance":
        """Copy of the instance with all decision dependency switched off."""
        m = self.moment
        kw = {"lam": None if m.lam is None else m.lam * 0.0,
              "lam_cap": None if m.lam_cap is None else m.lam_cap * 0.0}
        return replace(self, moment=replace(m, **kw), name=self.name + "-noddu")


@dataclass(frozen=True)
class InvestmentPlan:
    """First-stage decisions: open indicators x (S, T), capacity additions
    y (S, T) in MW, and range indicators e (S, T, R) for the capacity
    moment variant."""

    x: np.ndarray
    y: np.ndarray
    e: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", _ro(self.x, dtype=int))
        object.__setattr__(self, "y", _ro(self.y))
        if self.e is not None:
            object.__setattr__(self, "e", _ro(self.e, dtype=int))

    @property
    def cumulative_capacity(self) -> np.ndarray:
        return np.cumsum(self.y, axis=1)


@dataclass(frozen=True)
class OperationalPlan:
    """Second-stage quantities, all in kg: production (S, T), imports (I, T),
    flow (S+I, D, T)."""

    production: np.ndarray
    imports: np.ndarray
    flow: np.ndarray

    def __post_init__(self):
        for f in ("production", "imports", "flow"):
            object.__setattr__(self, f, _ro(getattr(self, f)))


# ----------------------------------------------------------------------
# Moment functions
# ----------------------------------------------------------------------

def moment_mean_matrix(spec: MomentSpec, plan: InvestmentPlan) -> np.ndarray:
    """Decision-dependent mean demand for every (demand node, period)."""
    base = spec.base_mean
    if spec.variant == MomentVariant.CAPACITY:
        if plan.e is None:
            raise ValueError("capacity moment variant needs range indicators e on the plan")
        lift = np.einsum("ijr,itr->jt", spec.lam_cap, plan.e)
    else:
        lift = spec.lam.T @ plan.x  # (D, T)
    mean = base * (1.0 + lift)
    if spec.variant != MomentVariant.LOCATION_LINEAR and spec.demand_cap is not None:
        mean = np.minimum(mean, base * (1.0 + spec.demand_cap))
    return mean


def moment_mean(spec: MomentSpec, plan: InvestmentPlan, j: int, t: int) -> float:
    """Mean demand at demand node j, period t under the given plan (kg)."""
    n_d, n_t = spec.base_mean.shape
    if not (0 <= j < n_d and 0 <= t < n_t):
        raise IndexError(f"moment index ({j},{t}) out of range for {n_d}x{n_t}")
    return float(moment_mean_matrix(spec, plan)[j, t])


def lambda_from_distances(distances, scale: float, target_sum: float) -> np.ndarray:
    """Distance-decayed impact factors, normalized per demand column.

    lambda[i, j] = target_sum * exp(-d[i, j]/scale) / sum_i exp(-d[i, j]/scale),
    so every column sums to ``target_sum`` exactly.
    """
    d = np.asarray(distances, dtype=float)
    if scale <= 0:
        raise ValueError("scale must be positive")
    if not 0.0 <= target_sum <= 1.0:
        raise ValueError("target_sum must lie in [0, 1]")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    if target_sum == 0.0:
        return np.zeros_like(d)
    w = np.exp(-d / scale)
    col = w.sum(axis=0)
    if np.any(col <= 0.0):
        j = int(np.argmin(col))
        raise ValueError(f"cannot normalize lambda: weight column {j} sums to zero")
    return target_sum * w / col


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------

def _shape_ok(arr, shape) -> bool:
    return isinstance(arr, np.ndarray) and arr.shape == shape


def validate_instance(inst: NetworkInstance) -> list[str]:
    """Check every instance invariant; returns the list of violations
    (empty means the instance is well formed).  Each entry names the
    offending field and index."""
    v: list[str] = []
    if inst.periods < 1:
        v.append(f"NetworkInstance.periods: must be >= 1, got {inst.periods}")
    if not (inst.conversion > 0 and math.isfinite(inst.conversion)):
        v.append(f"NetworkInstance.conversion: must be positive and finite, got {inst.conversion}")

    ids = [n.id for n in inst.nodes]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        v.append(f"nodes: duplicate node ids {dupes}")
    for role, count in ((NodeRole.SUPPLY, inst.n_supply), (NodeRole.PORT, inst.n_ports),
                        (NodeRole.DEMAND, inst.n_demand)):
        if count < 1:
            v.append(f"nodes: no {role.value} nodes (need at least one of each role)")

    S, I, D, T = inst.n_supply, inst.n_ports, inst.n_demand, inst.periods
    c = inst.costs
    for name, arr, shape in (("setup", c.setup, (S, T)), ("capacity", c.capacity, (S, T)),
                             ("production", c.production, (S, T)), ("imports", c.imports, (I, T)),
                             ("transport", c.transport, (S + I, D, T)), ("revenue", c.revenue, (D, T)),
                             ("capacityLimit", c.capacity_limit, (S, T)),
                             ("distances", c.distances, (S + I, D))):
        if not _shape_ok(arr, shape):
            v.append(f"CostSchedule.{name}: expected shape {shape}, got {getattr(arr, 'shape', None)}")
        elif np.any(arr < 0):
            idx = tuple(int(k) for k in np.argwhere(arr < 0)[0])
            v.append(f"CostSchedule.{name}{list(idx)}: negative entry")

    sup = inst.support
    if not (_shape_ok(sup.lower, (D, T)) and _shape_ok(sup.upper, (D, T))):
        v.append(f"SupportSet: bounds must have shape {(D, T)}")
    else:
        bad = np.argwhere(sup.lower > sup.upper)
        for j, t in bad:
            v.append(f"SupportSet({j},{t}): lower bound exceeds upper bound")
        for k, s in enumerate(sup.scenarios):
            if not _shape_ok(s.demand, (D, T)):
                v.append(f"SupportSet.scenarios[{k}]: expected shape {(D, T)}")
            elif not sup.contains(s):
                v.append(f"SupportSet.scenarios[{k}]: outside the support box")

    m = inst.moment
    if not (_shape_ok(m.base_mean, (D, T)) and _shape_ok(m.epsilon, (D, T))):
        v.append(f"MomentSpec: base_mean/epsilon must have shape {(D, T)}")
    else:
        if np.any(m.epsilon < 0):
            j, t = np.argwhere(m.epsilon < 0)[0]
            v.append(f"MomentSpec.epsilon({j},{t}): negative deviation")
    if m.variant == MomentVariant.CAPACITY:
        v.extend(_validate_capacity_moment(inst))
    else:
        if not _shape_ok(m.lam, (S, D)):
            v.append(f"MomentSpec.lam: expected shape {(S, D)}")
        elif np.any(m.lam < 0) or np.any(m.lam > 1):
            i, j = np.argwhere((m.lam < 0) | (m.lam > 1))[0]
            v.append(f"MomentSpec.lam({i},{j}): entry outside [0, 1]")
        if m.variant == MomentVariant.LOCATION_BOUNDED:
            if m.demand_cap is None or not _shape_ok(m.demand_cap, (D, T)):
                v.append(f"MomentSpec.demand_cap: bounded variant needs shape {(D, T)}")
            elif np.any(m.demand_cap < 0):
                j, t = np.argwhere(m.demand_cap < 0)[0]
                v.append(f"MomentSpec.demand_cap({j},{t}): negative cap")

    if inst.bigm is not None:
        b = inst.bigm
        if b.m_primal is not None and np.any(b.m_primal <= 0):
            v.append("bigM.m_primal: entries must be strictly positive")
        if b.m_dual is not None and b.m_dual <= 0:
            v.append("bigM.m_dual: must be strictly positive")
        for f in ("beta1_bar", "beta2_bar"):
            arr = getattr(b, f)
            if arr is not None and np.any(arr <= 0):
                v.append(f"bigM.{f}: entries must be strictly positive")
    return v


def _validate_capacity_moment(inst: NetworkInstance) -> list[str]:
    v: list[str] = []
    m, S, D, T = inst.moment, inst.n_supply, inst.n_demand, inst.periods
    if m.lam_cap is None or m.range_lower is None or m.range_upper is None:
        return ["MomentSpec: capacity variant needs lam_cap, range_lower, range_upper"]
    R = m.lam_cap.shape[2] if m.lam_cap.ndim == 3 else 0
    if not _shape_ok(m.lam_cap, (S, D, R)) or R < 1:
        return [f"MomentSpec.lam_cap: expected shape (S, D, R), got {m.lam_cap.shape}"]
    if not (_shape_ok(m.range_lower, (S, T, R)) and _shape_ok(m.range_upper, (S, T, R))):
        return [f"MomentSpec.ranges: expected shape {(S, T, R)}"]
    if np.any(m.lam_cap < 0) or np.any(m.lam_cap > 1):
        v.append("MomentSpec.lam_cap: entries outside [0, 1]")
    if np.any(np.diff(m.lam_cap, axis=2) < -1e-12):
        i, j, r = np.argwhere(np.diff(m.lam_cap, axis=2) < -1e-12)[0]
        v.append(f"MomentSpec.lam_cap({i},{j}): factors decrease from range {r} to {r + 1}")
    cum_limit = np.cumsum(inst.costs.capacity_limit, axis=1)
    for i in range(S):
        for t in range(T):
            lo, up = m.range_lower[i, t], m.range_upper[i, t]
            if lo[0] > 1e-9:
                v.append(f"MomentSpec.ranges({i},{t}): first range must start at 0")
            for r in range(R):
                if lo[r] > up[r]:
                    v.append(f"MomentSpec.ranges({i},{t}): range {r} has lower > upper")
            for r in range(R - 1):
                if lo[r + 1] < up[r] - 1e-9:
                    v.append(f"MomentSpec.ranges({i},{t}): ranges {r} and {r + 1} overlap")
                elif lo[r + 1] > up[r] + 1e-9:
                    v.append(f"MomentSpec.ranges({i},{t}): gap between ranges {r} and {r + 1}")
            if up[-1] < cum_limit[i, t] - 1e-9:
                v.append(f"MomentSpec.ranges({i},{t}): ranges do not cover cumulative capacity limit")
    return v


def validate_plan(inst: NetworkInstance, plan: InvestmentPlan, tol: float = 1e-6) -> list[str]:
    """Check first-stage feasibility of a plan against the instance."""
    v: list[str] = []
    S, T = inst.n_supply, inst.periods
    if plan.x.shape != (S, T) or plan.y.shape != (S, T):
        return [f"InvestmentPlan: x/y must have shape {(S, T)}"]
    if not np.all((plan.x == 0) | (plan.x == 1)):
        v.append("InvestmentPlan.x: entries must be binary")
    if np.any(np.diff(plan.x, axis=1) < 0):
        i, t = np.argwhere(np.diff(plan.x, axis=1) < 0)[0]
        v.append(f"InvestmentPlan.x({i},{t + 1}): facility closes after opening")
    if np.any(plan.y < -tol):
        i, t = np.argwhere(plan.y < -tol)[0]
        v.append(f"InvestmentPlan.y({i},{t}): negative capacity")
    over = plan.y - inst.costs.capacity_limit * plan.x
    if np.any(over > tol * np.maximum(1.0, inst.costs.capacity_limit)):
        i, t = np.argwhere(over > tol * np.maximum(1.0, inst.costs.capacity_limit))[0]
        v.append(f"InvestmentPlan.y({i},{t}): exceeds capacity limit (or site closed)")
    if inst.moment.variant == MomentVariant.CAPACITY:
        if plan.e is None:
            v.append("InvestmentPlan.e: required for the capacity moment variant")
        else:
            R = inst.moment.n_ranges
            if plan.e.shape != (S, T, R):
                return v + [f"InvestmentPlan.e: expected shape {(S, T, R)}"]
            if np.any(plan.e.sum(axis=2) != 1):
                i, t = np.argwhere(plan.e.sum(axis=2) != 1)[0]
                v.append(f"InvestmentPlan.e({i},{t}): exactly one range must be selected")
            else:
                cum = plan.cumulative_capacity
                r_sel = plan.e.argmax(axis=2)[:, :, None]
                lo = np.take_along_axis(inst.moment.range_lower, r_sel, axis=2)[:, :, 0]
                up = np.take_along_axis(inst.moment.range_upper, r_sel, axis=2)[:, :, 0]
                slack = tol * np.maximum(1.0, cum)
                bad = (cum < lo - slack) | (cum > up + slack)
                if np.any(bad):
                    i, t = np.argwhere(bad)[0]
                    v.append(f"InvestmentPlan.e({i},{t}): cumulative capacity outside the selected range")
    elif plan.e is not None:
        v.append("InvestmentPlan.e: only meaningful for the capacity moment variant")
    return v


def first_stage_cost(inst: NetworkInstance, plan: InvestmentPlan) -> float:
    """Setup plus capacity cost of a plan; x before the horizon is zero, so
    the full setup cost is paid in the first open period."""
    x = plan.x.astype(float)
    dx = np.diff(np.concatenate([np.zeros((inst.n_supply, 1)), x], axis=1), axis=1)
    return float(np.sum(inst.costs.setup * dx) + np.sum(inst.costs.capacity * plan.y))
