"""Bounded-variable revised simplex with an explicit basis inverse.

Every row ``r`` gets a logical column ``s_r`` so that ``A x + s = b``; the
slack bounds encode the row relation.  A further block of artificial
columns is switched on only during phase 1 of a cold start.  Warm starts
from a dual feasible basis (the branch-and-bound case) run the dual simplex
method instead.

Pricing is Dantzig's rule with lowest-index tie-breaking; after a run of
degenerate pivots both methods fall back to Bland's rule until progress
resumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg.blas import dger as _dger

from .lp import LinearProgram, LpSolution

AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, -1

PIVOT_TOL = 1e-7
PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
REFACTOR_EVERY = 64
STALL_LIMIT = 40


def _rank_one(a, x, y):
    """``a - outer(x, y)`` in place for Fortran-ordered ``a``."""
    return _dger(-1.0, x, y, a=a, overwrite_a=1)


class NumericalTrouble(RuntimeError):
    """Pivoting stalled or the basis became numerically singular."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (basis condition estimate {condition:.3g})")
        self.condition = condition


@dataclass
class EngineResult:
    status: str
    x: np.ndarray | None
    min_objective: float
    y: np.ndarray | None
    d: np.ndarray | None
    basis: tuple | None
    iterations: int
    ray: np.ndarray | None = None


class Engine:
    """Reusable simplex workspace for one constraint matrix.

    Bounds may change between calls to :meth:`solve` (branch and bound), the
    matrix, costs and right-hand side may not.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        m, n = lp.num_rows, lp.num_cols
        self.m, self.n = m, n
        A = np.zeros((m, n + 2 * m))
        A[:, :n] = lp.matrix.toarray()
        A[:, n:n + m] = np.eye(m)
        A[:, n + m:] = np.eye(m)
        self.A = A
        self.At = sparse.csr_matrix(A.T)
        self.b = np.array(lp.rhs, dtype=float)
        cost = np.zeros(n + 2 * m)
        cost[:n] = lp.min_objective()
        self.cost = cost
        slo = np.empty(m)
        sup = np.empty(m)
        for r, rel in enumerate(lp.relations):
            if rel == "<=":
                slo[r], sup[r] = 0.0, math.inf
            elif rel == ">=":
                slo[r], sup[r] = -math.inf, 0.0
            else:
                slo[r], sup[r] = 0.0, 0.0
        self.slack_lo, self.slack_up = slo, sup
        self.Binv = None
        self._last_basis = None

    # -- public ---------------------------------------------------------

    def solve(self, lower=None, upper=None, basis=None, max_iter=None) -> EngineResult:
        lp = self.lp
        m, n = self.m, self.n
        lo = np.concatenate([lp.lower if lower is None else lower, self.slack_lo, np.zeros(m)])
        up = np.concatenate([lp.upper if upper is None else upper, self.slack_up, np.zeros(m)])
        if np.any(lo > up + PRIMAL_TOL):
            return EngineResult("infeasible", None, math.inf, None, None, None, 0)
        self.lo, self.up = lo, up
        self.iters = 0
        limit = max_iter or 50 * (m + n) + 1000
        if basis is not None:
            # a warm start gets a short budget; a stalled one restarts cold
            self.max_iter = min(limit, 5 * (m + n) + 500)
            try:
                status = self._warm(basis)
            except NumericalTrouble:
                status = None
            if status is not None:
                return self._result(status)
            self.iters = 0
        self.max_iter = limit
        status = self._cold_start()
        return self._result(status)

    def _warm(self, basis):
        if not self._reuse_or_load(basis):
            return None
        d = self._reduced_costs()
        if self._dual_feasible(d):
            # None: the ratio test ran dry without a certificate; phase one decides
            status = self._dual_simplex()
            if status == "optimal":
                # bounds may admit improving moves after degenerate dual steps
                status = self._primal_simplex(self.cost)
            return status
        if self._primal_feasible():
            return self._primal_simplex(self.cost)
        return None

    # -- basis bookkeeping ----------------------------------------------

    def _nonbasic_value(self, j, st):
        if st == AT_LOWER:
            return self.lo[j]
        if st == AT_UPPER:
            return self.up[j]
        return 0.0

    def _place(self, j):
        """Initial nonbasic status of column j: the finite bound nearest zero."""
        lo, up = self.lo[j], self.up[j]
        if math.isfinite(lo) and math.isfinite(up):
            return AT_LOWER if abs(lo) <= abs(up) else AT_UPPER
        if math.isfinite(lo):
            return AT_LOWER
        if math.isfinite(up):
            return AT_UPPER
        return FREE_ZERO

    def _fix_status(self, j, st):
        if st == AT_LOWER and not math.isfinite(self.lo[j]):
            return self._place(j)
        if st == AT_UPPER and not math.isfinite(self.up[j]):
            return self._place(j)
        if st == FREE_ZERO and (math.isfinite(self.lo[j]) or math.isfinite(self.up[j])):
            return self._place(j)
        return st

    def _reuse_or_load(self, basis) -> bool:
        if basis is getattr(self, "_last_basis", None) and self.Binv is not None:
            # continuing from the factorisation this engine just produced
            head, status, _ = basis
            self.head = np.array(head, dtype=int)
            self.status = np.array(status, dtype=int)
            for j in np.flatnonzero(self.status != BASIC):
                self.status[j] = self._fix_status(j, self.status[j])
            self._recompute_x()
            return True
        return self._load_basis(basis)

    def _set_signs(self, signs):
        m, n = self.m, self.n
        self.A[np.arange(m), n + m + np.arange(m)] = signs
        self.At.data[self.At.indptr[n + m:n + 2 * m]] = signs

    def _set_sign(self, r, sign):
        j = self.n + self.m + r
        self.A[r, j] = sign
        self.At.data[self.At.indptr[j]] = sign

    def _load_basis(self, basis) -> bool:
        head, status, signs = basis
        head = np.array(head, dtype=int)
        status = np.array(status, dtype=int)
        if head.shape != (self.m,) or status.shape != (self.n + 2 * self.m,):
            return False
        m, n = self.m, self.n
        self._set_signs(signs)
        self.head = head
        self.status = status
        for j in range(self.n + 2 * self.m):
            if status[j] != BASIC:
                status[j] = self._fix_status(j, status[j])
        try:
            self._refactor()
        except NumericalTrouble:
            return False
        return True

    def _refactor(self):
        """Invert the basis, exploiting its unit (slack and artificial) columns.

        With structural positions ``S`` and rows ``R`` not covered by a unit
        column, only ``A[R, S]`` needs a dense inverse ``X``; the unit rows
        follow by substitution.
        """
        m, n = self.m, self.n
        head = self.head
        unit = head >= n
        S = np.flatnonzero(~unit)
        U = np.flatnonzero(unit)
        urow = (head[U] - n) % m
        sign = self.A[urow, head[U]]
        covered = np.zeros(m, dtype=bool)
        covered[urow] = True
        R = np.flatnonzero(~covered)
        if R.size != S.size or np.unique(urow).size != urow.size:
            raise NumericalTrouble("singular basis", math.inf)
        Binv = np.zeros((m, m), order="F")
        if S.size:
            core = self.A[np.ix_(R, head[S])]
            try:
                X = np.linalg.inv(core)
            except np.linalg.LinAlgError:
                raise NumericalTrouble("singular basis", math.inf) from None
            if not np.all(np.isfinite(X)):
                raise NumericalTrouble("singular basis", math.inf)
            Binv[np.ix_(S, R)] = X
            Binv[np.ix_(U, R)] = -(sign[:, None] * (self.A[np.ix_(urow, head[S])] @ X))
        Binv[U, urow] = sign
        self.Binv = Binv
        self._since_refactor = 0
        self._recompute_x()

    def _recompute_x(self):
        x = np.zeros(self.n + 2 * self.m)
        for j in np.flatnonzero(self.status != BASIC):
            x[j] = self._nonbasic_value(j, self.status[j])
        rhs = self.b - self.A @ x
        x[self.head] = self.Binv @ rhs
        self.x = x

    def _condition(self):
        try:
            return float(np.linalg.cond(self.A[:, self.head]))
        except np.linalg.LinAlgError:
            return math.inf

    def _reduced_costs(self, cost=None):
        cost = self.cost if cost is None else cost
        y = cost[self.head] @ self.Binv
        d = cost - self.At @ y
        d[self.head] = 0.0
        self._y = y
        return d

    def _primal_feasible(self):
        xb = self.x[self.head]
        lo, up = self.lo[self.head], self.up[self.head]
        return bool(np.all(xb >= lo - self._ptol(lo)) and np.all(xb <= up + self._ptol(up)))

    @staticmethod
    def _ptol(bound):
        return PRIMAL_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(bound), bound, 0.0)))

    def _dual_feasible(self, d):
        st = self.status
        movable = self.lo < self.up
        bad = ((st == AT_LOWER) & (d < -DUAL_TOL) & movable) | \
              ((st == AT_UPPER) & (d > DUAL_TOL) & movable) | \
              ((st == FREE_ZERO) & (np.abs(d) > DUAL_TOL))
        return not bool(np.any(bad))

    def _pivot(self, r, j, col, out_status):
        """Column j replaces basic position r; ``col`` is ``Binv @ A[:, j]``."""
        out = self.head[r]
        self.status[out] = out_status
        self.x[out] = self._nonbasic_value(out, out_status)
        piv = col[r]
        row = self.Binv[r] / piv
        self.Binv = _rank_one(self.Binv, col, row)
        self.Binv[r] = row
        self.head[r] = j
        self.status[j] = BASIC
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def _tick(self):
        self.iters += 1
        if self.iters > self.max_iter:
            raise NumericalTrouble("iteration limit reached without convergence", self._condition())

    # -- cold start -------------------------------------------------------

    def _cold_start(self):
        m, n = self.m, self.n
        total = n + 2 * m
        self._set_signs(np.ones(m))
        self.status = np.array([self._place(j) for j in range(total)], dtype=int)
        self.head = np.arange(n, n + m)
        self.status[self.head] = BASIC
        x = np.zeros(total)
        for j in range(n):
            x[j] = self._nonbasic_value(j, self.status[j])
        resid = self.b - self.A[:, :n] @ x[:n]
        need = []
        for r in range(m):
            s = n + r
            v = resid[r]
            if self.slack_lo[r] - PRIMAL_TOL <= v <= self.slack_up[r] + PRIMAL_TOL:
                continue
            # slack goes to the nearest bound, an artificial takes the rest
            target = self.slack_lo[r] if v < self.slack_lo[r] else self.slack_up[r]
            self.status[s] = AT_LOWER if target == self.lo[s] else AT_UPPER
            a = n + m + r
            self._set_sign(r, 1.0 if v - target > 0 else -1.0)
            self.head[r] = a
            self.status[a] = BASIC
            need.append(a)
        self.Binv = None
        self._refactor()
        if need:
            phase1 = np.zeros(total)
            phase1[need] = 1.0
            saved_up = self.up.copy()
            self.up[need] = math.inf
            status = self._primal_simplex(phase1)
            infeas = float(np.sum(self.x[need]))
            self.up = saved_up
            if status != "optimal" or infeas > PRIMAL_TOL * max(1.0, float(np.max(np.abs(self.b)))):
                return "infeasible"
            # artificials are now fixed at zero; any still basic are degenerate
            for a in need:
                if self.status[a] != BASIC:
                    self.status[a] = AT_LOWER
            self._recompute_x()
        return self._primal_simplex(self.cost)

    # -- primal simplex ---------------------------------------------------

    def _primal_simplex(self, cost):
        lo, up = self.lo, self.up
        stall = 0
        best = math.inf
        while True:
            self._tick()
            d = self._reduced_costs(cost)
            st = self.status
            movable = lo < up
            cand = ((st == AT_LOWER) & (d < -DUAL_TOL) & movable) | \
                   ((st == AT_UPPER) & (d > DUAL_TOL) & movable) | \
                   ((st == FREE_ZERO) & (np.abs(d) > DUAL_TOL))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "optimal"
            bland = stall >= STALL_LIMIT
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if d[j] < 0 else -1.0
            col = self.Binv @ self.A[:, j]
            # Harris ratio test over basic variables, then the entering bound flip
            xb = self.x[self.head]
            lob, upb = lo[self.head], up[self.head]
            move = direction * col
            leave, leave_to, theta = self._harris(move, xb, lob, upb, bland)
            flip = up[j] - lo[j] if st[j] != FREE_ZERO else math.inf
            if flip <= theta:
                theta, leave = flip, -1
            if not math.isfinite(theta):
                ray = np.zeros(self.n + 2 * self.m)
                ray[j] = direction
                ray[self.head] = -move
                self._ray = ray
                return "unbounded"
            obj_before = float(cost @ self.x)
            self.x[j] += direction * theta
            self.x[self.head] -= theta * move
            if leave < 0:
                st[j] = AT_UPPER if st[j] == AT_LOWER else AT_LOWER
                self.x[j] = self._nonbasic_value(j, st[j])
            else:
                self._pivot(leave, j, col, leave_to)
            obj = float(cost @ self.x)
            if obj < min(best, obj_before) - 1e-12 * max(1.0, abs(obj)):
                best = obj
                stall = 0
            else:
                stall += 1

    def _harris(self, move, xb, lob, upb, bland):
        """Two-pass ratio test; returns ``(row, bound status, step)``."""
        big = np.abs(move) > PIVOT_TOL
        dec = big & (move > 0) & np.isfinite(lob)
        inc = big & (move < 0) & np.isfinite(upb)
        rows = np.flatnonzero(dec | inc)
        if rows.size == 0:
            return -1, None, math.inf
        mv = move[rows]
        dist = np.where(mv > 0, xb[rows] - lob[rows], upb[rows] - xb[rows])
        dist = np.maximum(dist, 0.0)
        tol = self._ptol(np.where(mv > 0, lob[rows], upb[rows]))
        relaxed = (dist + tol) / np.abs(mv)
        cap = relaxed.min()
        ok = np.flatnonzero(dist / np.abs(mv) <= cap)
        mags = np.abs(mv[ok])
        if bland:
            # lowest basic index among candidates with an acceptable pivot
            good = ok[mags >= 1e-3 * mags.max()]
            k = good[np.argmin(self.head[rows[good]])]
        else:
            k = ok[np.argmax(mags)]
        r = int(rows[k])
        step = float(dist[k] / abs(mv[k]))
        return r, (AT_LOWER if mv[k] > 0 else AT_UPPER), step

    # -- dual simplex -----------------------------------------------------

    def _dual_simplex(self):
        lo, up = self.lo, self.up
        stall = 0
        best = -math.inf
        fresh = False
        while True:
            self._tick()
            xb = self.x[self.head]
            lob, upb = lo[self.head], up[self.head]
            below = lob - xb
            above = xb - upb
            infeas = np.maximum(below, above)
            tol = self._ptol(np.where(below > above, lob, upb))
            rows = np.flatnonzero(infeas > tol)
            if rows.size == 0:
                return "optimal"
            bland = stall >= STALL_LIMIT
            if bland:
                r = int(rows[np.argmin(self.head[rows])])
            else:
                r = int(rows[np.argmax(infeas[rows])])
            to_lower = below[r] > above[r]
            d = self._reduced_costs()
            alpha = self.At @ self.Binv[r]
            st = self.status
            movable = lo < up
            if to_lower:
                # leaving variable must increase
                elig = ((st == AT_LOWER) & (alpha < -PIVOT_TOL) & movable) | \
                       ((st == AT_UPPER) & (alpha > PIVOT_TOL) & movable)
            else:
                elig = ((st == AT_LOWER) & (alpha > PIVOT_TOL) & movable) | \
                       ((st == AT_UPPER) & (alpha < -PIVOT_TOL) & movable)
            elig |= (st == FREE_ZERO) & (np.abs(alpha) > PIVOT_TOL)
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                if not fresh:
                    # the violation may be drift; refactor and price again
                    try:
                        self._refactor()
                    except NumericalTrouble:
                        return None
                    fresh = True
                    continue
                return "infeasible" if self._row_certifies(r, to_lower, alpha) else None
            fresh = False
            mags = np.abs(alpha[idx])
            dj = np.abs(d[idx])
            cap = ((dj + DUAL_TOL) / mags).min()
            ties = idx[dj / mags <= cap]
            tmag = np.abs(alpha[ties])
            if bland:
                j = int(ties[tmag >= 1e-3 * tmag.max()][0])
            else:
                j = int(ties[np.argmax(tmag)])
            col = self.Binv @ self.A[:, j]
            target = lob[r] if to_lower else upb[r]
            delta = (xb[r] - target) / col[r]
            self.x[j] += delta
            self.x[self.head] -= delta * col
            self._pivot(r, j, col, AT_LOWER if to_lower else AT_UPPER)
            dobj = float(self.cost @ self.x)
            if dobj > best + 1e-12 * max(1.0, abs(dobj)):
                best = dobj
                stall = 0
            else:
                stall += 1

    def _row_certifies(self, r, to_lower, alpha):
        """Whether row ``r`` of the (fresh) basis inverse proves the bounds inconsistent.

        ``x_B[r] = const - alpha . x_N``; if even the best nonbasic bounds
        cannot bring it back inside its own bound the node is infeasible.
        Entries of ``alpha`` at round-off level count as zero.
        """
        head = self.head
        nb = self.status != BASIC
        noise = 1e-11 * max(1.0, float(np.abs(alpha).max(initial=0.0)))
        a = np.where(nb & (np.abs(alpha) > noise), alpha, 0.0)
        if not to_lower:
            a = -a
        lo, up, x = self.lo, self.up, self.x
        with np.errstate(invalid="ignore"):
            gain = np.where(a > 0, a * (x - lo), np.where(a < 0, a * (x - up), 0.0))
        gain = gain[np.abs(a) > 0]
        if not np.all(np.isfinite(gain)):
            return False
        reach = x[head[r]] + gain.sum() if to_lower else x[head[r]] - gain.sum()
        j = head[r]
        target = lo[j] if to_lower else up[j]
        tol = 1e-6 * max(1.0, abs(target), float(np.abs(gain).max(initial=0.0)))
        return reach < target - tol if to_lower else reach > target + tol

    # -- results ----------------------------------------------------------

    def _result(self, status) -> EngineResult:
        n, m = self.n, self.m
        basis = None
        if hasattr(self, "head"):
            signs = self.A[np.arange(m), n + m + np.arange(m)].copy()
            basis = (self.head.copy(), self.status.copy(), signs)
        self._last_basis = basis
        if status == "optimal":
            d = self._reduced_costs()
            x = self.x[:n].copy()
            # snap nonbasic columns exactly onto their bounds
            return EngineResult("optimal", x, float(self.cost[:n] @ x), self._y.copy(),
                                d[:n].copy(), basis, self.iters)
        if status == "unbounded":
            return EngineResult("unbounded", self.x[:n].copy(), -math.inf, None, None, basis,
                                self.iters, ray=self._ray[:n].copy())
        return EngineResult("infeasible", None, math.inf, None, None, basis, self.iters)


def solve(lp: LinearProgram, basis=None, max_iter=None) -> LpSolution:
    """Solve ``lp`` and package primal values, row duals and reduced costs."""
    eng = Engine(lp)
    res = eng.solve(basis=basis, max_iter=max_iter)
    m, n = lp.num_rows, lp.num_cols
    if res.status == "optimal":
        lam = -res.y
        return LpSolution("optimal", res.x, lam, res.d, lp.evaluate(res.x), res.iterations,
                          res.basis)
    if res.status == "unbounded":
        obj = -math.inf if lp.sense == "min" else math.inf
        return LpSolution("unbounded", res.x, np.zeros(m), np.zeros(n), obj, res.iterations,
                          res.basis, ray=res.ray)
    obj = math.inf if lp.sense == "min" else -math.inf
    return LpSolution("infeasible", np.full(n, np.nan), np.zeros(m), np.zeros(n), obj,
                      res.iterations, res.basis)
