"""Linear programs: representation, solve entry point and KKT verification.

Duals follow the Lagrangian convention ``c.x + sum_r lam_r (a_r.x - b_r)`` of
the minimisation form, so a binding ``<=`` row carries a nonnegative dual, a
binding ``>=`` row a nonpositive one, and equality rows are free.  For a
maximisation problem the same statement holds for the negated objective,
which makes the dual of a ``<=`` row the usual nonnegative shadow price.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

TAU_FEAS = 1e-7
TAU_DUAL = 1e-6
TAU_COMP = 1e-6

RELATIONS = ("<=", ">=", "=")

_SENSE_SIGN = {"min": 1.0, "max": -1.0}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Sparse LP ``opt c.x + offset`` s.t. ``A x (<=|>=|=) b``, ``lo <= x <= up``."""

    col_tags: tuple
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    matrix: sp.csr_matrix
    relations: tuple
    rhs: np.ndarray
    row_tags: tuple
    sense: str = "min"
    offset: float = 0.0

    def __post_init__(self):
        n = len(self.col_tags)
        m = len(self.row_tags)
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        object.__setattr__(self, "objective", _frozen(self.objective))
        object.__setattr__(self, "rhs", _frozen(self.rhs))
        mat = sp.csr_matrix(self.matrix, dtype=float, shape=(m, n))
        mat.sum_duplicates()
        mat.eliminate_zeros()
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "col_tags", tuple(self.col_tags))
        object.__setattr__(self, "row_tags", tuple(self.row_tags))
        object.__setattr__(self, "relations", tuple(self.relations))
        if self.sense not in _SENSE_SIGN:
            raise ValueError(f"unknown objective sense {self.sense!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,) or self.objective.shape != (n,):
            raise ValueError("column data lengths disagree with the column tags")
        if self.rhs.shape != (m,) or len(self.relations) != m:
            raise ValueError("row data lengths disagree with the row tags")
        if len(set(self.col_tags)) != n:
            raise ValueError("column tags must be unique")
        if len(set(self.row_tags)) != m:
            raise ValueError("row tags must be unique")
        bad = [r for r in self.relations if r not in RELATIONS]
        if bad:
            raise ValueError(f"unknown row relation {bad[0]!r}")
        if not (np.all(np.isfinite(self.objective)) and np.all(np.isfinite(mat.data))
                and np.all(np.isfinite(self.rhs)) and math.isfinite(self.offset)):
            raise ValueError("objective, matrix and right-hand side must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        crossed = np.flatnonzero(self.lower > self.upper)
        if crossed.size:
            j = crossed[0]
            raise ValueError(f"column {self.col_tags[j]!r} has lower bound above upper bound")

    @property
    def num_cols(self) -> int:
        return len(self.col_tags)

    @property
    def num_rows(self) -> int:
        return len(self.row_tags)

    def col_index(self, tag: str) -> int:
        return self._col_lookup()[tag]

    def row_index(self, tag: str) -> int:
        return self._row_lookup()[tag]

    def _col_lookup(self) -> dict:
        cache = self.__dict__.get("_cols")
        if cache is None:
            cache = {t: j for j, t in enumerate(self.col_tags)}
            object.__setattr__(self, "_cols", cache)
        return cache

    def _row_lookup(self) -> dict:
        cache = self.__dict__.get("_rows")
        if cache is None:
            cache = {t: r for r, t in enumerate(self.row_tags)}
            object.__setattr__(self, "_rows", cache)
        return cache

    def min_objective(self) -> np.ndarray:
        """Cost vector of the equivalent minimisation problem."""
        return _SENSE_SIGN[self.sense] * self.objective

    def evaluate(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float)) + self.offset

    def row_activity(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def violations(self, x) -> np.ndarray:
        """Per-row infeasibility (0 when satisfied)."""
        act = self.row_activity(x)
        out = np.zeros(self.num_rows)
        for r, rel in enumerate(self.relations):
            if rel == "<=":
                out[r] = max(0.0, act[r] - self.rhs[r])
            elif rel == ">=":
                out[r] = max(0.0, self.rhs[r] - act[r])
            else:
                out[r] = abs(act[r] - self.rhs[r])
        return out

    def with_bounds(self, lower=None, upper=None) -> "LinearProgram":
        return LinearProgram(
            self.col_tags,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.objective, self.matrix, self.relations, self.rhs,
            self.row_tags, self.sense, self.offset,
        )


class ModelBuilder:
    """Incremental construction of a :class:`LinearProgram`.

    Columns and rows are addressed by their tags; ``add_row`` takes a mapping
    (or pair list) from column index to coefficient.
    """

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.col_tags: list = []
        self.lower: list = []
        self.upper: list = []
        self.cost: list = []
        self.binary: list = []
        self.row_tags: list = []
        self.relations: list = []
        self.rhs: list = []
        self._rows_i: list = []
        self._rows_j: list = []
        self._rows_v: list = []
        self._col_index: dict = {}
        self.offset = 0.0

    def add_var(self, tag: str, lower: float = 0.0, upper: float = math.inf,
                cost: float = 0.0, binary: bool = False) -> int:
        if tag in self._col_index:
            raise ValueError(f"duplicate column tag {tag!r}")
        if binary:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        j = len(self.col_tags)
        self._col_index[tag] = j
        self.col_tags.append(tag)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        self.binary.append(bool(binary))
        return j

    def var(self, tag: str) -> int:
        return self._col_index[tag]

    def add_cost(self, j: int, value: float) -> None:
        self.cost[j] += float(value)

    def add_row(self, tag: str, coefs, relation: str, rhs: float) -> int:
        if relation not in RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        r = len(self.row_tags)
        for j, v in items:
            if v != 0.0:
                self._rows_i.append(r)
                self._rows_j.append(int(j))
                self._rows_v.append(float(v))
        self.row_tags.append(tag)
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        return r

    def build(self) -> LinearProgram:
        m, n = len(self.row_tags), len(self.col_tags)
        mat = sp.csr_matrix((self._rows_v, (self._rows_i, self._rows_j)), shape=(m, n))
        return LinearProgram(tuple(self.col_tags), self.lower, self.upper, self.cost,
                             mat, tuple(self.relations), self.rhs, tuple(self.row_tags),
                             self.sense, self.offset)

    def binary_columns(self) -> tuple:
        return tuple(j for j, b in enumerate(self.binary) if b)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0
    basis: object = field(default=None, repr=False)
    ray: np.ndarray | None = None
    message: str = ""


@dataclass(frozen=True)
class KktVerdict:
    passed: bool
    stationarity: float
    primal: float
    dual_sign: float
    complementarity: float
    duality_gap: float
    worst: dict

    tol: float = TAU_DUAL

    @property
    def failed_families(self) -> list:
        return [k for k, (v, _) in self.worst.items() if not v <= self.tol]


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Objective of the Lagrangian dual at the reported multipliers (original sense).

    A reduced cost facing an infinite bound is charged at the primal value;
    the sign check of :func:`check_kkt` reports such cases separately.
    """
    lam = np.asarray(sol.duals, dtype=float)
    rc = np.asarray(sol.reduced_costs, dtype=float)
    x = np.asarray(sol.x, dtype=float)
    bound = np.where(rc > 0.0, lp.lower, lp.upper)
    bound = np.where(np.isfinite(bound), bound, x)
    val = -float(lam @ lp.rhs) + float(rc @ np.where(rc != 0.0, bound, 0.0))
    return _SENSE_SIGN[lp.sense] * val + lp.offset


def check_kkt(lp: LinearProgram, sol: LpSolution, tol: float = TAU_DUAL) -> KktVerdict:
    """Verify first-order optimality of ``sol`` for ``lp``.

    Reports the worst residual of each condition family: stationarity
    ``c + A'lam - rc = 0``, primal feasibility, sign of row duals and reduced
    costs, complementarity of duals with row slacks and bound distances, and
    the primal-dual objective gap.
    """
    if sol.status != "optimal":
        raise ValueError("KKT check needs an optimal solution")
    x = np.asarray(sol.x, dtype=float)
    lam = np.asarray(sol.duals, dtype=float)
    rc = np.asarray(sol.reduced_costs, dtype=float)
    if x.shape != (lp.num_cols,) or rc.shape != (lp.num_cols,) or lam.shape != (lp.num_rows,):
        raise ValueError("solution dimensions do not match the linear program")

    worst = {}

    def note(family, value, where):
        prev = worst.get(family)
        if prev is None or value > prev[0]:
            worst[family] = (float(value), where)

    c = lp.min_objective()
    stat = c + lp.matrix.T @ lam - rc
    j = int(np.argmax(np.abs(stat))) if stat.size else 0
    note("stationarity", abs(stat[j]) if stat.size else 0.0, lp.col_tags[j] if stat.size else None)

    viol = lp.violations(x)
    below = np.maximum(lp.lower - x, 0.0)
    above = np.maximum(x - lp.upper, 0.0)
    note("primal", 0.0, None)
    if viol.size:
        r = int(np.argmax(viol))
        note("primal", viol[r], lp.row_tags[r])
    bnd = np.maximum(below, above)
    if bnd.size:
        j = int(np.argmax(bnd))
        note("primal", bnd[j], lp.col_tags[j])

    act = lp.row_activity(x)
    slack = lp.rhs - act
    note("dual_sign", 0.0, None)
    note("complementarity", 0.0, None)
    for r, rel in enumerate(lp.relations):
        if rel == "<=":
            note("dual_sign", max(0.0, -lam[r]), lp.row_tags[r])
            note("complementarity", abs(lam[r] * slack[r]), lp.row_tags[r])
        elif rel == ">=":
            note("dual_sign", max(0.0, lam[r]), lp.row_tags[r])
            note("complementarity", abs(lam[r] * slack[r]), lp.row_tags[r])
    for j in range(lp.num_cols):
        d = rc[j]
        if d > 0.0:
            dist = x[j] - lp.lower[j] if math.isfinite(lp.lower[j]) else math.inf
        elif d < 0.0:
            dist = lp.upper[j] - x[j] if math.isfinite(lp.upper[j]) else math.inf
        else:
            continue
        if math.isinf(dist):
            note("dual_sign", abs(d), lp.col_tags[j])
        else:
            note("complementarity", abs(d * dist), lp.col_tags[j])

    primal_obj = lp.evaluate(x)
    gap = abs(primal_obj - dual_objective(lp, sol))
    note("duality_gap", gap if math.isfinite(gap) else math.inf, None)

    ok = all(v <= tol for v, _ in worst.values())
    verdict = KktVerdict(
        passed=ok,
        stationarity=worst["stationarity"][0],
        primal=worst["primal"][0],
        dual_sign=worst["dual_sign"][0],
        complementarity=worst["complementarity"][0],
        duality_gap=worst["duality_gap"][0],
        worst=worst,
        tol=tol,
    )
    return verdict


def solve_lp(lp: LinearProgram, **options) -> LpSolution:
    """Solve ``lp`` with the bounded-variable revised simplex method."""
    from .simplex import solve

    return solve(lp, **options)
