"""Mixed-binary linear programs solved by LP-based branch and bound."""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .lp import TAU_FEAS, LinearProgram
from . import simplex

log = logging.getLogger(__name__)

INT_TOL = 1e-6


class InfeasibleStart(ValueError):
    """A warm-start point violates a row, a bound or integrality."""

    def __init__(self, tag: str, amount: float):
        super().__init__(f"starting point violates {tag!r} by {amount:.3g}")
        self.tag = tag
        self.amount = amount


@dataclass(frozen=True, eq=False)
class MilpProblem:
    lp: LinearProgram
    binaries: tuple
    start: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "binaries", tuple(sorted(int(j) for j in self.binaries)))
        for j in self.binaries:
            lo, up = self.lp.lower[j], self.lp.upper[j]
            if lo < 0.0 or up > 1.0:
                raise ValueError(f"binary column {self.lp.col_tags[j]!r} must have bounds inside [0, 1]")
        if self.start is not None:
            s = np.array(self.start, dtype=float)
            s.setflags(write=False)
            if s.shape != (self.lp.num_cols,):
                raise ValueError("starting point dimension does not match the columns")
            object.__setattr__(self, "start", s)


@dataclass(frozen=True, eq=False)
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_iterations: int = 0
    seconds: float = 0.0


@dataclass
class NodeRecord:
    """One line of the optional search log."""

    node: int
    depth: int
    bound: float
    branch_tag: str | None
    incumbent: bool


def relative_gap(objective: float, bound: float) -> float:
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return math.inf
    return abs(objective - bound) / max(1.0, abs(objective))


def first_violation(p: MilpProblem, point, tol: float = TAU_FEAS):
    """Return ``(tag, amount)`` of the first violated requirement, or None."""
    lp = p.lp
    x = np.asarray(point, dtype=float)
    for j in range(lp.num_cols):
        if x[j] < lp.lower[j] - tol:
            return lp.col_tags[j], lp.lower[j] - x[j]
        if x[j] > lp.upper[j] + tol:
            return lp.col_tags[j], x[j] - lp.upper[j]
    viol = lp.violations(x)
    bad = np.flatnonzero(viol > tol * np.maximum(1.0, np.abs(lp.rhs)))
    if bad.size:
        r = int(bad[0])
        return lp.row_tags[r], float(viol[r])
    for j in p.binaries:
        frac = abs(x[j] - round(x[j]))
        if frac > INT_TOL:
            return lp.col_tags[j], frac
    return None


def warm_start_from(p: MilpProblem, point) -> MilpProblem:
    """Return ``p`` seeded with the incumbent ``point``.

    Raises :class:`InfeasibleStart` naming the first violated row or column.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (p.lp.num_cols,):
        raise ValueError("starting point dimension does not match the columns")
    bad = first_violation(p, x)
    if bad is not None:
        raise InfeasibleStart(*bad)
    return replace(p, start=x)


def _most_fractional(x, binaries):
    best, best_j = INT_TOL, None
    for j in binaries:
        f = abs(x[j] - math.floor(x[j] + 0.5))
        if f > best + 1e-12:
            best, best_j = f, j
    return best_j


def solve_milp(p: MilpProblem, gap_tol: float = 1e-6, node_limit: int = 1_000_000,
               time_limit: float = math.inf,
               on_node: Callable[[NodeRecord], None] | None = None) -> MilpSolution:
    """Branch and bound over the binary columns of ``p``.

    Best-bound node selection with depth-first plunging: after a node is
    branched, its child in the direction of the rounded LP value is processed
    next.  Children reuse the parent basis and are re-optimised with the dual
    simplex method.
    """
    t0 = time.perf_counter()
    lp = p.lp
    sign = 1.0 if lp.sense == "min" else -1.0
    binaries = p.binaries
    lo0 = np.array(lp.lower)
    up0 = np.array(lp.upper)
    for j in binaries:
        lo0[j] = math.ceil(lo0[j] - INT_TOL)
        up0[j] = math.floor(up0[j] + INT_TOL)
    engine = simplex.Engine(lp)

    inc_x = None
    inc_val = math.inf      # minimisation-form objective
    if p.start is not None:
        bad = first_violation(p, p.start)
        if bad is not None:
            raise InfeasibleStart(*bad)
        inc_x = np.array(p.start)
        inc_val = sign * lp.evaluate(inc_x)

    counter = 0
    heap: list = []         # (bound, creation index, depth, fixes, basis, tag)
    nodes = 0
    iters = 0
    root_bound = -math.inf
    status = None
    dive = None
    pruned = math.inf       # least bound discarded only because of the gap tolerance

    def cutoff(bound):
        nonlocal pruned
        if not math.isfinite(inc_val):
            return False
        if bound >= inc_val - 1e-9:
            return True
        if bound >= inc_val - gap_tol * max(1.0, abs(inc_val)):
            pruned = min(pruned, bound)
            return True
        return False

    def push(bound, depth, fixes, basis, tag):
        nonlocal counter
        heapq.heappush(heap, (bound, counter, depth, fixes, basis, tag))
        counter += 1

    push(-math.inf, 0, (), None, None)
    exhausted = True
    while heap or dive is not None:
        if nodes >= node_limit or time.perf_counter() - t0 > time_limit:
            exhausted = False
            break
        if dive is not None:
            bound, _, depth, fixes, basis, tag = dive
            dive = None
        else:
            bound, _, depth, fixes, basis, tag = heapq.heappop(heap)
        if cutoff(bound):
            continue
        lo = lo0.copy()
        up = up0.copy()
        for j, v in fixes:
            lo[j] = up[j] = v
        nodes += 1
        res = engine.solve(lo, up, basis)
        iters += res.iterations
        if res.status != "optimal":
            if on_node:
                on_node(NodeRecord(nodes, depth, math.inf, tag, False))
            if res.status == "unbounded" and depth == 0:
                status = "unbounded"
                break
            continue
        val = res.min_objective + (sign * lp.offset)
        if depth == 0:
            root_bound = val
        if cutoff(val):
            if on_node:
                on_node(NodeRecord(nodes, depth, val, tag, False))
            continue
        x = res.x
        j = _most_fractional(x, binaries)
        if j is None:
            xr = np.array(x)
            for b in binaries:
                xr[b] = round(xr[b])
            if binaries and np.max(np.abs(xr[list(binaries)] - x[list(binaries)])) > 1e-9:
                # near-integral: re-solve with the binaries pinned so that
                # big-M rows cannot leak through the integrality tolerance
                plo, pup = lo.copy(), up.copy()
                plo[list(binaries)] = pup[list(binaries)] = xr[list(binaries)]
                pol = engine.solve(plo, pup, res.basis)
                iters += pol.iterations
                if pol.status == "optimal":
                    xr = np.array(pol.x)
                    xr[list(binaries)] = plo[list(binaries)]
                    val = pol.min_objective + sign * lp.offset
            if val >= inc_val:
                if on_node:
                    on_node(NodeRecord(nodes, depth, val, tag, False))
                continue
            inc_x, inc_val = xr, val
            log.debug("node %d: incumbent %.6f", nodes, sign * inc_val)
            if on_node:
                on_node(NodeRecord(nodes, depth, val, tag, True))
            continue
        if on_node:
            on_node(NodeRecord(nodes, depth, val, tag, False))
        down = fixes + ((j, 0.0),)
        upf = fixes + ((j, 1.0),)
        first, second = (upf, down) if x[j] >= 0.5 else (down, upf)
        t = lp.col_tags[j]
        push(val, depth + 1, second, res.basis, t)
        dive = (val, -1, depth + 1, first, res.basis, t)

    if status == "unbounded":
        return MilpSolution("unbounded", None, -sign * math.inf, -sign * math.inf, math.inf,
                            nodes, iters, time.perf_counter() - t0)

    open_bounds = [h[0] for h in heap]
    if dive is not None:
        open_bounds.append(dive[0])
    best_bound = min(open_bounds + [inc_val, pruned])
    if not exhausted and best_bound == -math.inf:
        best_bound = root_bound
    elapsed = time.perf_counter() - t0
    if inc_x is None:
        st = "infeasible" if exhausted else "infeasible-undecided"
        return MilpSolution(st, None, math.inf * sign, sign * best_bound, math.inf,
                            nodes, iters, elapsed)
    obj = sign * inc_val
    bnd = sign * best_bound
    gap = relative_gap(obj, bnd)
    st = "optimal" if gap <= gap_tol else "feasible-gap"
    return MilpSolution(st, inc_x, obj, bnd, gap, nodes, iters, elapsed)
