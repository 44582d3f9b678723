"""Minimal solver-agnostic layer for building and solving LPs and MILPs.

Every optimization model in the package is expressed once against this
interface.  A single backend ships by default (HiGHS, through
``scipy.optimize.milp``); other engines can be registered and selected via
the ``solver.engine`` configuration key or the ``DDRO_SOLVER`` environment
variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

INF = float("inf")

CONTINUOUS = "continuous"
BINARY = "binary"

MIN = "min"
MAX = "max"

# solve statuses
OPTIMAL = "optimal"
GAP_REACHED = "gap_reached"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_LE = "<="
_GE = ">="
_EQ = "=="
_SENSES = {_LE, _GE, _EQ, "<", ">", "="}


class SolverError(RuntimeError):
    """Raised when the backend fails or reports an unusable status."""


@dataclass(frozen=True)
class SolveOptions:
    """Per-solve controls.

    ``relative_gap`` is the MIP termination tolerance (objective vs. proven
    bound, relative).  ``threads`` is advisory; the default backend is
    single-threaded and ignores it.
    """

    relative_gap: float = 1e-9
    time_limit: float | None = None
    threads: int = 0
    sense: str = MIN

    def __post_init__(self):
        if self.relative_gap < 0:
            raise ValueError("relative_gap must be nonnegative")
        if self.sense not in (MIN, MAX):
            raise ValueError(f"unknown sense {self.sense!r}")


@dataclass
class SolveResult:
    status: str
    objective: float
    best_bound: float
    values: np.ndarray | None
    gap: float | None = None
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def value(self, ref: int) -> float:
        if self.values is None:
            raise SolverError("no incumbent solution available")
        return float(self.values[ref])

    def values_of(self, refs) -> np.ndarray:
        if self.values is None:
            raise SolverError("no incumbent solution available")
        return self.values[np.asarray(refs, dtype=int)]


class Model:
    """A linear / mixed-integer linear model under construction.

    Variables are identified by dense integer handles in insertion order,
    which keeps model construction deterministic: identical build calls
    yield identical matrices.  A model is single-owner; distinct models may
    be built and solved concurrently.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._obj: list[float] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._integrality: list[int] = []
        self._var_names: list[str] = []
        # constraints as parallel lists: (var indices, coefficients, row lb, row ub)
        self._rows: list[tuple[list[int], list[float]]] = []
        self._row_lb: list[float] = []
        self._row_ub: list[float] = []
        self._row_names: list[str] = []
        self.obj_offset: float = 0.0

    # ------------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self._obj)

    @property
    def num_constrs(self) -> int:
        return len(self._rows)

    def add_var(self, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = INF,
                obj: float = 0.0, name: str | None = None) -> int:
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        elif kind != CONTINUOUS:
            raise ValueError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ValueError(f"variable lower bound {lb} exceeds upper bound {ub}")
        ref = len(self._obj)
        self._obj.append(float(obj))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._integrality.append(1 if kind == BINARY else 0)
        self._var_names.append(name or f"x{ref}")
        return ref

    def add_vars(self, n: int, **kwargs) -> list[int]:
        return [self.add_var(**kwargs) for _ in range(n)]

    def set_obj_coeff(self, ref: int, coeff: float) -> None:
        self._obj[ref] = float(coeff)

    def add_obj_coeff(self, ref: int, coeff: float) -> None:
        self._obj[ref] += float(coeff)

    def add_constr(self, terms, sense: str, rhs: float, name: str | None = None) -> int:
        """Add ``sum(coeff * var) sense rhs``; ``terms`` is (var, coeff) pairs."""
        if sense not in _SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        idx: list[int] = []
        coef: list[float] = []
        nvars = len(self._obj)
        for ref, c in terms:
            if not 0 <= ref < nvars:
                raise ValueError(f"constraint references unknown variable {ref}")
            if c != 0.0:
                idx.append(int(ref))
                coef.append(float(c))
        rhs = float(rhs)
        if sense in (_LE, "<"):
            lo, hi = -INF, rhs
        elif sense in (_GE, ">"):
            lo, hi = rhs, INF
        else:
            lo = hi = rhs
        row = len(self._rows)
        self._rows.append((idx, coef))
        self._row_lb.append(lo)
        self._row_ub.append(hi)
        self._row_names.append(name or f"c{row}")
        return row

    # ------------------------------------------------------------------
    def solve(self, options: SolveOptions | None = None, engine: str | None = None) -> SolveResult:
        options = options or SolveOptions()
        engine = engine or default_engine()
        try:
            fn = _ENGINES[engine]
        except KeyError:
            raise SolverError(f"unknown solver engine {engine!r}; available: {sorted(_ENGINES)}")
        return fn(self, options)

    # ------------------------------------------------------------------
    def _matrix(self) -> sparse.csr_matrix:
        nrows, ncols = len(self._rows), len(self._obj)
        data, ri, ci = [], [], []
        for r, (idx, coef) in enumerate(self._rows):
            ri.extend([r] * len(idx))
            ci.extend(idx)
            data.extend(coef)
        return sparse.csr_matrix((data, (ri, ci)), shape=(nrows, ncols))

    def write_lp(self, path: str, sense: str = MIN) -> None:
        """Dump the model in CPLEX LP text format for external inspection."""
        def term(c, n, first):
            s = "" if first else (" + " if c >= 0 else " - ")
            if not first:
                c = abs(c)
            return f"{s}{c:.17g} {n}"

        lines = [f"\\ model: {self.name}"]
        if self.obj_offset:
            lines.append(f"\\ objective offset (not representable in LP format): {self.obj_offset!r}")
        lines.append("Minimize" if sense == MIN else "Maximize")
        obj_terms = [(i, c) for i, c in enumerate(self._obj) if c != 0.0]
        expr = "".join(term(c, self._var_names[i], k == 0) for k, (i, c) in enumerate(obj_terms))
        if not expr:
            expr = "0 " + (self._var_names[0] if self._var_names else "x0")
        lines.append(" obj: " + expr)
        lines.append("Subject To")
        for r, (idx, coef) in enumerate(self._rows):
            expr = ""
            for k, (i, c) in enumerate(zip(idx, coef)):
                expr += term(c, self._var_names[i], k == 0)
            if not expr:
                expr = "0 " + (self._var_names[0] if self._var_names else "x0")
            lo, hi = self._row_lb[r], self._row_ub[r]
            nm = self._row_names[r]
            if lo == hi:
                lines.append(f" {nm}: {expr} = {lo:.17g}")
            elif hi < INF and lo == -INF:
                lines.append(f" {nm}: {expr} <= {hi:.17g}")
            elif lo > -INF and hi == INF:
                lines.append(f" {nm}: {expr} >= {lo:.17g}")
            else:  # range row: split
                lines.append(f" {nm}_lo: {expr} >= {lo:.17g}")
                lines.append(f" {nm}_hi: {expr} <= {hi:.17g}")
        lines.append("Bounds")
        for i, nm in enumerate(self._var_names):
            lo, ub = self._lb[i], self._ub[i]
            if lo == -INF and ub == INF:
                lines.append(f" {nm} free")
            elif ub == INF:
                lines.append(f" {lo:.17g} <= {nm}")
            elif lo == -INF:
                lines.append(f" -inf <= {nm} <= {ub:.17g}")
            else:
                lines.append(f" {lo:.17g} <= {nm} <= {ub:.17g}")
        binaries = [self._var_names[i] for i, k in enumerate(self._integrality) if k]
        if binaries:
            lines.append("Binaries")
            lines.append(" " + " ".join(binaries))
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# HiGHS backend via scipy.optimize.milp
# ----------------------------------------------------------------------

def _solve_highs(model: Model, options: SolveOptions) -> SolveResult:
    n = model.num_vars
    if n == 0:
        return SolveResult(OPTIMAL, model.obj_offset, model.obj_offset, np.zeros(0), gap=0.0)
    c = np.asarray(model._obj, dtype=float)
    flip = -1.0 if options.sense == MAX else 1.0
    integrality = np.asarray(model._integrality, dtype=np.uint8)
    bounds = Bounds(np.asarray(model._lb), np.asarray(model._ub))
    constraints = []
    if model.num_constrs:
        constraints.append(LinearConstraint(model._matrix(),
                                            np.asarray(model._row_lb),
                                            np.asarray(model._row_ub)))
    highs_opts: dict = {"mip_rel_gap": options.relative_gap, "presolve": True}
    if options.time_limit is not None:
        highs_opts["time_limit"] = max(float(options.time_limit), 0.01)
    res = milp(c=flip * c, constraints=constraints, integrality=integrality,
               bounds=bounds, options=highs_opts)

    is_mip = bool(integrality.any())
    off = model.obj_offset
    if res.status == 0:
        obj = flip * float(res.fun) + off
        if is_mip and res.mip_dual_bound is not None:
            bound = flip * float(res.mip_dual_bound) + off
            gap = float(res.mip_gap) if res.mip_gap is not None else 0.0
        else:
            bound, gap = obj, 0.0
        status = GAP_REACHED if (is_mip and gap > 1e-9) else OPTIMAL
        return SolveResult(status, obj, bound, np.asarray(res.x, dtype=float),
                           gap=gap, message=res.message)
    if res.status == 1:  # iteration/time limit; incumbent may be absent
        values = np.asarray(res.x, dtype=float) if res.x is not None else None
        obj = flip * float(res.fun) + off if res.fun is not None else flip * INF
        if res.mip_dual_bound is not None:
            bound = flip * float(res.mip_dual_bound) + off
        else:
            bound = -flip * INF
        return SolveResult(TIME_LIMIT, obj, bound, values, message=res.message)
    if res.status == 2:
        return SolveResult(INFEASIBLE, flip * INF, flip * INF, None, message=res.message)
    if res.status == 3:
        return SolveResult(UNBOUNDED, -flip * INF, -flip * INF, None, message=res.message)
    # status 4: HiGHS could not distinguish infeasible from unbounded, or an
    # internal error occurred; never return a silent wrong answer.
    raise SolverError(f"backend failure on model {model.name!r}: {res.message}")


_ENGINES = {"highs": _solve_highs}
_default_engine = "highs"


def register_engine(name: str, fn) -> None:
    _ENGINES[name] = fn


def default_engine() -> str:
    return os.environ.get("DDRO_SOLVER", _default_engine)


def set_default_engine(name: str) -> None:
    global _default_engine
    if name not in _ENGINES:
        raise SolverError(f"unknown solver engine {name!r}; available: {sorted(_ENGINES)}")
    _default_engine = name
