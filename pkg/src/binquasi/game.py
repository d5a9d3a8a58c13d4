"""Binary games with compensation and their single-MILP reformulation.

Each player ``i`` controls binaries ``x_i`` and box-bounded continuous
variables ``y_i`` subject to ``a_i x_i + A_i y_i <= b_i`` and minimises

    f_i = c0 + cx . x_i + (r + D x_i) . y_rivals + (q + Q y_rivals) . y_i

For every binary state the optimality conditions in ``y_i`` are written
as stationarity rows plus disjunctive complementarity rows.  The payoff of
a state is linear in the state's multipliers,

    f_i(s) = c0 + cx . s + (r + D s) . y_rivals - lam . (b - a s),

so incentive rows comparing states stay linear.  A switch value ``kappa``
and a compensation ``zeta`` per state make the incentive row an equation,
and the commitment binary gates which state is realised.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .disjunctive import TaggedBuilder
from .lp import TAU_DUAL, LinearProgram, ModelBuilder, solve_lp
from .milp import MilpProblem

SAFETY = 1.1
DEFAULT_DUAL_BOUND = 1000.0
CASES = ("I", "II", "III", "IV", "V")


class AssumptionError(ValueError):
    """A player or game violates the structural assumptions of the method."""


class InvariantViolation(RuntimeError):
    """A solution breaks a sign pattern that every accepted solution must have."""


def _vec(v, n, what):
    a = np.zeros(n) if v is None else np.array(v, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise AssumptionError(f"{what} must have length {n}")
    if not np.all(np.isfinite(a)):
        raise AssumptionError(f"{what} must be finite")
    return a


def _mat(v, shape, what):
    a = np.zeros(shape) if v is None else np.array(v, dtype=float).reshape(shape)
    if not np.all(np.isfinite(a)):
        raise AssumptionError(f"{what} must be finite")
    return a


@dataclass(frozen=True, eq=False)
class PlayerSpec:
    """One player: binaries, boxed continuous variables, affine rows, split payoff.

    ``states`` optionally restricts the binary assignments compared in the
    incentive rows (default: all ``2^m``).
    """

    name: str
    binaries: tuple
    continuous: tuple
    lower: np.ndarray
    upper: np.ndarray
    a: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    cost_x: np.ndarray | None = None
    cost_y: np.ndarray | None = None
    constant: float = 0.0
    states: tuple | None = None

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("binaries", tuple(str(s) for s in self.binaries))
        set_("continuous", tuple(str(s) for s in self.continuous))
        m, n = len(self.binaries), len(self.continuous)
        if m == 0:
            raise AssumptionError(f"player {self.name!r} needs at least one binary variable")
        names = self.binaries + self.continuous
        if len(set(names)) != len(names):
            raise AssumptionError(f"player {self.name!r} has duplicate variable names")
        lo, up = _vec(self.lower, n, "lower"), _vec(self.upper, n, "upper")
        if np.any(lo > up):
            raise AssumptionError(f"player {self.name!r}: lower bound above upper bound")
        k = 0 if self.b is None else np.size(self.b)
        set_("lower", lo)
        set_("upper", up)
        set_("b", _vec(self.b, k, "b"))
        set_("a", _mat(self.a, (k, m), "a"))
        set_("A", _mat(self.A, (k, n), "A"))
        set_("cost_x", _vec(self.cost_x, m, "cost_x"))
        set_("cost_y", _vec(self.cost_y, n, "cost_y"))
        set_("constant", float(self.constant))
        if self.states is not None:
            st = tuple(tuple(int(v) for v in s) for s in self.states)
            if len(st) < 2 or any(len(s) != m or set(s) - {0, 1} for s in st):
                raise AssumptionError(f"player {self.name!r}: states must be >= 2 binary "
                                      f"vectors of length {m}")
            if len(set(st)) != len(st):
                raise AssumptionError(f"player {self.name!r}: duplicate states")
            set_("states", st)

    @property
    def num_binaries(self) -> int:
        return len(self.binaries)

    @property
    def num_continuous(self) -> int:
        return len(self.continuous)

    def state_list(self) -> tuple:
        if self.states is not None:
            return self.states
        return tuple(itertools.product((0, 1), repeat=self.num_binaries))

    def rows(self):
        """Rows ``(a, A, b, labels)`` including the box as ``y <= up`` and ``-y <= -lo``."""
        n, m = self.num_continuous, self.num_binaries
        eye = np.eye(n)
        a = np.vstack([self.a, np.zeros((2 * n, m))])
        A = np.vstack([self.A, eye, -eye])
        b = np.concatenate([self.b, self.upper, -self.lower])
        labels = [f"row{r}" for r in range(len(self.b))]
        labels += [f"{v}:up" for v in self.continuous] + [f"{v}:lo" for v in self.continuous]
        return a, A, b, labels


@dataclass(frozen=True, eq=False)
class BinaryGame:
    """Players plus the coupling between them and the operator's objective.

    ``coupling[(i, v)]`` maps rival variables ``(j, w)`` to the coefficient of
    ``y_jw`` in the gradient of player ``i``'s payoff in its own ``v``.
    ``rival_terms[i]`` adds ``coef * y_jw`` to ``f_i``; ``cross_terms[(i, s)]``
    adds ``coef * x_is * y_jw``.  ``F`` maps ``(player, variable)`` to a cost
    in the operator objective, ``G`` gives the positive weight on each
    player's compensation.
    """

    players: tuple
    coupling: dict = field(default_factory=dict)
    rival_terms: dict = field(default_factory=dict)
    cross_terms: dict = field(default_factory=dict)
    F: dict = field(default_factory=dict)
    F_constant: float = 0.0
    G: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        names = [p.name for p in self.players]
        if len(set(names)) != len(names):
            raise AssumptionError("player names must be unique")
        idx = {p.name: p for p in self.players}

        def check_ref(ref, kind, where):
            j, w = ref
            if j not in idx:
                raise AssumptionError(f"{where}: unknown player {j!r}")
            pool = idx[j].continuous if kind == "y" else idx[j].binaries + idx[j].continuous
            if w not in pool:
                raise AssumptionError(f"{where}: {j!r} has no variable {w!r}")

        for (i, v), refs in self.coupling.items():
            check_ref((i, v), "y", "coupling")
            for ref in refs:
                check_ref(ref, "y", "coupling")
                if ref[0] == i:
                    raise AssumptionError(
                        f"coupling of {i!r} on its own {ref[1]!r} makes its payoff "
                        "nonlinear in its own variables")
        for i, refs in self.rival_terms.items():
            if i not in idx:
                raise AssumptionError(f"rival_terms: unknown player {i!r}")
            for ref in refs:
                check_ref(ref, "y", "rival_terms")
        for (i, s), refs in self.cross_terms.items():
            if i not in idx or s not in idx[i].binaries:
                raise AssumptionError(f"cross_terms: {i!r} has no binary {s!r}")
            for ref in refs:
                check_ref(ref, "y", "cross_terms")
                if ref[0] == i:
                    raise AssumptionError("cross terms may only reference rivals")
        for ref in self.F:
            check_ref(ref, "any", "F")
        for p in self.players:
            if self.G.get(p.name, 1.0) <= 0.0:
                raise AssumptionError(f"compensation weight of {p.name!r} must be positive")

    def player(self, name: str) -> PlayerSpec:
        for p in self.players:
            if p.name == name:
                return p
        raise KeyError(name)

    def weight(self, name: str) -> float:
        return float(self.G.get(name, 1.0))

    def total_binaries(self) -> int:
        return sum(p.num_binaries for p in self.players)

    # -- numeric evaluation (used by the oracle) --------------------------

    def gradient(self, i: str, y: dict) -> np.ndarray:
        """Gradient of ``f_i`` in its own continuous variables at rivals' ``y``."""
        p = self.player(i)
        g = p.cost_y.copy()
        for k, v in enumerate(p.continuous):
            for (j, w), coef in self.coupling.get((i, v), {}).items():
                g[k] += coef * y[j][self.player(j).continuous.index(w)]
        return g

    def payoff(self, i: str, x_i, y_i, y: dict) -> float:
        """``f_i`` with own ``(x_i, y_i)`` and everyone else's ``y``."""
        p = self.player(i)
        x_i = np.asarray(x_i, dtype=float)
        val = p.constant + p.cost_x @ x_i + self.gradient(i, y) @ np.asarray(y_i, dtype=float)
        for (j, w), coef in self.rival_terms.get(i, {}).items():
            val += coef * y[j][self.player(j).continuous.index(w)]
        for s, name in enumerate(p.binaries):
            for (j, w), coef in self.cross_terms.get((i, name), {}).items():
                val += coef * x_i[s] * y[j][self.player(j).continuous.index(w)]
        return float(val)

    def player_lp(self, i: str, state, y: dict) -> LinearProgram:
        """Player ``i``'s own LP at binary ``state`` given rivals' ``y``."""
        p = self.player(i)
        mb = ModelBuilder("min")
        grad = self.gradient(i, y)
        for k, v in enumerate(p.continuous):
            mb.add_var(v, p.lower[k], p.upper[k], grad[k])
        s = np.asarray(state, dtype=float)
        for r in range(len(p.b)):
            mb.add_row(f"row{r}", {k: p.A[r, k] for k in range(p.num_continuous)}, "<=",
                       p.b[r] - p.a[r] @ s)
        return mb.build()

    def best_response(self, i: str, state, y: dict):
        """``(y_i, payoff, LpSolution)`` of player ``i`` at ``state``; None if infeasible."""
        lp = self.player_lp(i, state, y)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            return None
        return sol.x, self.payoff(i, state, sol.x, y), sol


def probe_player(game: BinaryGame, name: str, y: dict | None = None) -> None:
    """Raise :class:`AssumptionError` if some state leaves ``name`` without a feasible point."""
    p = game.player(name)
    if y is None:
        y = {q.name: (q.lower + q.upper) / 2 for q in game.players}
    for s in p.state_list():
        if game.best_response(name, s, y) is None:
            raise AssumptionError(f"player {name!r} has an empty feasible set at state {s}")


# -- optimality conditions per state --------------------------------------

@dataclass(frozen=True, eq=False)
class StateKkt:
    """Optimality conditions of one player at one binary state.

    Stationarity: ``grad + A' lam = 0`` with ``grad = cost_y + coupling``.
    Complementarity: ``0 <= rhs - A y  _|_  lam >= 0`` per row, where
    ``rhs = b - a s``.  ``slack_bound`` is the largest slack over the box.
    """

    player: str
    state: tuple
    grad: np.ndarray
    A: np.ndarray
    rhs: np.ndarray
    labels: tuple
    slack_bound: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    continuous: tuple

    @property
    def num_stationarity(self) -> int:
        return self.A.shape[1]

    @property
    def num_pairs(self) -> int:
        return self.A.shape[0]

    def to_milp(self, dual_bound: float = DEFAULT_DUAL_BOUND):
        """The conditions alone as a disjunctive feasibility MILP.

        Returns ``(problem, y_columns, lam_columns)``.
        """
        tb = TaggedBuilder(ModelBuilder("min"))
        ycols, lcols = _emit_kkt(tb, self, "", {}, dual_bound)
        lp = tb.builder.build()
        return MilpProblem(lp, tb.builder.binary_columns()), ycols, lcols


def build_state_kkt(p: PlayerSpec, state, gradient=None) -> StateKkt:
    """Optimality conditions of ``p`` with its binaries fixed at ``state``.

    ``gradient`` overrides the constant own-cost vector (e.g. to include
    rivals' fixed contributions).
    """
    s = tuple(int(v) for v in state)
    if len(s) != p.num_binaries or set(s) - {0, 1}:
        raise AssumptionError(f"state {state!r} does not match the {p.num_binaries} "
                              f"binaries of {p.name!r}")
    a, A, b, labels = p.rows()
    rhs = b - a @ np.array(s, dtype=float)
    # least possible row activity over the box
    low = np.where(A > 0, A * p.lower, A * p.upper).sum(axis=1)
    slack_bound = rhs - low
    # empty feasible set at this state
    mb = ModelBuilder("min")
    for k, v in enumerate(p.continuous):
        mb.add_var(v, p.lower[k], p.upper[k])
    for r in range(len(p.b)):
        mb.add_row(labels[r], {k: A[r, k] for k in range(p.num_continuous)}, "<=", rhs[r])
    if solve_lp(mb.build()).status != "optimal":
        raise AssumptionError(f"player {p.name!r} has an empty feasible set at state {s}")
    grad = p.cost_y.copy() if gradient is None else np.array(gradient, dtype=float)
    return StateKkt(p.name, s, grad, A, rhs, tuple(labels), np.maximum(slack_bound, 0.0),
                    p.lower.copy(), p.upper.copy(), p.continuous)


def _emit_kkt(tb: TaggedBuilder, kkt: StateKkt, prefix: str, rival_grad: dict,
              dual_bound: float):
    """Write one state's conditions; ``rival_grad[k]`` maps columns to gradient terms."""
    n = kkt.num_stationarity
    tag = f"{prefix}{kkt.player}[{''.join(map(str, kkt.state))}]"
    ycols = [tb.var(f"{tag}.y~.{v}", kkt.lower[k], kkt.upper[k])
             for k, v in enumerate(kkt.continuous)]
    lcols = [tb.var(f"{tag}.lam.{lab}", 0.0, dual_bound) for lab in kkt.labels]
    for k in range(n):
        row = dict(rival_grad.get(k, {}))
        for r in range(kkt.num_pairs):
            if kkt.A[r, k] != 0.0:
                row[lcols[r]] = row.get(lcols[r], 0.0) + kkt.A[r, k]
        tb.row("state-kkt:stationarity", f"{tag}.stat.{kkt.continuous[k]}", row, "=",
               -kkt.grad[k])
    box = len(kkt.labels) - 2 * n
    for r in range(kkt.num_pairs):
        slack = {ycols[k]: -kkt.A[r, k] for k in range(n) if kkt.A[r, k] != 0.0}
        # box rows are already column bounds of the state copy
        tb.complementarity("state-kkt", f"{tag}.comp.{kkt.labels[r]}", slack, kkt.rhs[r],
                           lcols[r], max(kkt.slack_bound[r], 1e-9), dual_bound,
                           enforce_slack=r < box)
    return ycols, lcols


# -- big constants ------------------------------------------------------

def _payoff_range(game: BinaryGame, p: PlayerSpec) -> float:
    """Width of ``f_p`` over the linearised feasible set (rivals over their boxes)."""
    mb = ModelBuilder("min")
    xs = [mb.add_var(f"x.{s}", 0.0, 1.0, c) for s, c in zip(p.binaries, p.cost_x)]
    ys = [mb.add_var(f"y.{v}", p.lower[k], p.upper[k], p.cost_y[k])
          for k, v in enumerate(p.continuous)]
    for r in range(len(p.b)):
        row = {xs[s]: p.a[r, s] for s in range(p.num_binaries)}
        row.update({ys[k]: p.A[r, k] for k in range(p.num_continuous)})
        mb.add_row(f"row{r}", row, "<=", p.b[r])
    rivals: dict = {}

    def rival(j, w):
        if (j, w) not in rivals:
            q = game.player(j)
            k = q.continuous.index(w)
            rivals[j, w] = mb.add_var(f"r.{j}.{w}", q.lower[k], q.upper[k])
        return rivals[j, w]

    for (j, w), coef in game.rival_terms.get(p.name, {}).items():
        mb.add_cost(rival(j, w), coef)
    lp = mb.build()
    lo_sol = solve_lp(lp)
    hi_sol = solve_lp(LinearProgram(lp.col_tags, lp.lower, lp.upper, -lp.objective,
                                    lp.matrix, lp.relations, lp.rhs, lp.row_tags))
    if lo_sol.status != "optimal" or hi_sol.status != "optimal":
        raise AssumptionError(f"payoff range of {p.name!r} is unbounded; declare explicit bounds")
    width = -hi_sol.objective - lo_sol.objective
    # bilinear terms: interval arithmetic over the boxes
    for k, v in enumerate(p.continuous):
        for (j, w), coef in game.coupling.get((p.name, v), {}).items():
            q = game.player(j)
            kk = q.continuous.index(w)
            corners = [coef * a * b for a in (q.lower[kk], q.upper[kk])
                       for b in (p.lower[k], p.upper[k])]
            width += max(corners) - min(corners)
    for (i, s), refs in game.cross_terms.items():
        if i != p.name:
            continue
        for (j, w), coef in refs.items():
            q = game.player(j)
            kk = q.continuous.index(w)
            corners = [coef * a * b for a in (0.0, 1.0) for b in (q.lower[kk], q.upper[kk])]
            width += max(corners) - min(corners)
    return width


def compute_bigK(game: BinaryGame) -> dict:
    """Per-player constant exceeding the spread of ``y_i`` and of ``f_i``, times 1.1."""
    out = {}
    for p in game.players:
        y_range = float(np.max(p.upper - p.lower)) if p.num_continuous else 0.0
        f_range = _payoff_range(game, p)
        k = SAFETY * max(y_range, f_range)
        if not math.isfinite(k):
            raise AssumptionError(f"big constant of {p.name!r} is not finite")
        out[p.name] = max(k, SAFETY * 1e-6)
    return out


# -- the assembled model ------------------------------------------------

@dataclass(frozen=True, eq=False)
class MopbqeModel:
    """The assembled equilibrium-selection MILP.

    ``families`` maps every row tag to the constraint family it belongs to;
    ``kappa`` and ``zeta`` map player (and state or period) keys to columns.
    """

    problem: MilpProblem
    families: dict
    kappa: dict
    zeta: dict
    big_k: dict
    dual_bound: float
    meta: dict = field(default_factory=dict)

    @property
    def lp(self):
        return self.problem.lp

    def binary_count(self) -> int:
        return len(self.problem.binaries)

    def provenance(self) -> str:
        from .disjunctive import provenance_dump
        return provenance_dump(self.lp, self.families)

    def duals_at_bound(self, x, tol: float = 1e-6) -> list:
        """Tags of multiplier columns sitting at the assumed dual bound."""
        cols = self.meta.get("dual_columns", ())
        return [self.lp.col_tags[j] for j in cols if x[j] >= self.dual_bound - tol]


def _payoff_expr(game: BinaryGame, p: PlayerSpec, state, kkt: StateKkt, lcols, ycols_all):
    """Linear payoff of ``p`` at ``state`` as ``(coefs, constant)``."""
    s = np.array(state, dtype=float)
    coefs: dict = {}
    const = p.constant + p.cost_x @ s
    for (j, w), coef in game.rival_terms.get(p.name, {}).items():
        col = ycols_all[j][game.player(j).continuous.index(w)]
        coefs[col] = coefs.get(col, 0.0) + coef
    for k, name in enumerate(p.binaries):
        if not s[k]:
            continue
        for (j, w), coef in game.cross_terms.get((p.name, name), {}).items():
            col = ycols_all[j][game.player(j).continuous.index(w)]
            coefs[col] = coefs.get(col, 0.0) + coef
    for r, lam in enumerate(lcols):
        if kkt.rhs[r] != 0.0:
            coefs[lam] = coefs.get(lam, 0.0) - kkt.rhs[r]
    return coefs, const


def _axpy(out: dict, coefs: dict, scale: float) -> dict:
    for j, v in coefs.items():
        out[j] = out.get(j, 0.0) + scale * v
    return out


def build_mopbqe(game: BinaryGame, big_k: dict | float | None = None,
                 dual_bound: float = DEFAULT_DUAL_BOUND) -> MopbqeModel:
    """Assemble optimality conditions, incentive, gating and translation rows.

    Players with one binary use the switch-value form with four nonnegative
    variables per player; players with several binaries get one selector
    binary per state and one incentive row per ordered pair of states.
    """
    if big_k is None:
        big_k = compute_bigK(game)
    elif not isinstance(big_k, dict):
        big_k = {p.name: float(big_k) for p in game.players}
    tb = TaggedBuilder(ModelBuilder("min"))
    xcols, ycols = {}, {}
    for p in game.players:
        xcols[p.name] = [tb.var(f"{p.name}.x.{s}", 0, 1, binary=True) for s in p.binaries]
    for p in game.players:
        ycols[p.name] = [tb.var(f"{p.name}.y.{v}", p.lower[k], p.upper[k])
                         for k, v in enumerate(p.continuous)]
    kappa, zeta, dual_cols, state_cols = {}, {}, [], {}
    for p in game.players:
        K = big_k[p.name]
        rival_grad = {}
        for k, v in enumerate(p.continuous):
            for (j, w), coef in game.coupling.get((p.name, v), {}).items():
                col = ycols[j][game.player(j).continuous.index(w)]
                rival_grad.setdefault(k, {})[col] = coef
        payoffs, tildes = {}, {}
        for s in p.state_list():
            kkt = build_state_kkt(p, s)
            yt, lam = _emit_kkt(tb, kkt, "", rival_grad, dual_bound)
            dual_cols += lam
            tildes[s] = yt
            payoffs[s] = _payoff_expr(game, p, s, kkt, lam, ycols)
            state_cols[p.name, s] = (yt, lam)
        w = game.weight(p.name)
        x = xcols[p.name]
        if p.num_binaries == 1 and p.states is None:
            k1 = tb.var(f"{p.name}.kappa[1]", 0.0)
            k0 = tb.var(f"{p.name}.kappa[0]", 0.0)
            z1 = tb.var(f"{p.name}.zeta[1]", 0.0, cost=w)
            z0 = tb.var(f"{p.name}.zeta[0]", 0.0, cost=w)
            (c1, v1), (c0, v0) = payoffs[(1,)], payoffs[(0,)]
            row = _axpy(_axpy({k1: 1.0, z1: -1.0, k0: -1.0, z0: 1.0}, c1, 1.0), c0, -1.0)
            tb.row("incentive", f"{p.name}.incentive", row, "=", v0 - v1)
            tb.row("gating", f"{p.name}.gate[1]", {k1: 1.0, z1: 1.0, x[0]: -K}, "<=", 0.0)
            tb.row("gating", f"{p.name}.gate[0]", {k0: 1.0, z0: 1.0, x[0]: K}, "<=", K)
            kappa[p.name, 1], kappa[p.name, 0] = k1, k0
            zeta[p.name, 1], zeta[p.name, 0] = z1, z0
            sel = {(1,): ({x[0]: 1.0}, 0.0), (0,): ({x[0]: -1.0}, 1.0)}
        else:
            z = tb.var(f"{p.name}.zeta", 0.0, cost=w)
            zeta[p.name] = z
            states = p.state_list()
            sig = {s: tb.var(f"{p.name}.sel[{''.join(map(str, s))}]", 0, 1, binary=True)
                   for s in states}
            tb.row("selection", f"{p.name}.one-state", {sig[s]: 1.0 for s in states}, "=", 1.0)
            for k, col in enumerate(x):
                row = {col: 1.0}
                for s in states:
                    if s[k]:
                        row[sig[s]] = -1.0
                tb.row("selection", f"{p.name}.state.{p.binaries[k]}", row, "=", 0.0)
            for s in states:
                cs, vs = payoffs[s]
                for t in states:
                    if t == s:
                        continue
                    ct, vt = payoffs[t]
                    row = _axpy(_axpy({z: -1.0, sig[s]: K}, cs, 1.0), ct, -1.0)
                    tb.row("incentive", f"{p.name}.incentive[{''.join(map(str, s))}>"
                           f"{''.join(map(str, t))}]", row, "<=", K + vt - vs)
            sel = {s: ({sig[s]: 1.0}, 0.0) for s in states}
        # realised y equals the state copy of the selected state
        for s, yt in tildes.items():
            on, base = sel[s]
            label = "".join(map(str, s))
            for k, v in enumerate(p.continuous):
                yk = ycols[p.name][k]
                # |y - y~| <= K (1 - selected)
                up = _axpy({yk: 1.0, yt[k]: -1.0}, on, K)
                tb.row("translation", f"{p.name}.translate[{label}].{v}.up", up, "<=",
                       K - K * base)
                dn = _axpy({yk: -1.0, yt[k]: 1.0}, on, K)
                tb.row("translation", f"{p.name}.translate[{label}].{v}.lo", dn, "<=",
                       K - K * base)
    for (i, v), coef in game.F.items():
        p = game.player(i)
        col = xcols[i][p.binaries.index(v)] if v in p.binaries else \
            ycols[i][p.continuous.index(v)]
        tb.builder.add_cost(col, coef)
    tb.builder.offset = float(game.F_constant)
    lp = tb.builder.build()
    meta = {"game": game, "x": xcols, "y": ycols, "states": state_cols,
            "dual_columns": tuple(dual_cols), "pairs": tb.pairs}
    return MopbqeModel(MilpProblem(lp, tb.builder.binary_columns()), dict(tb.families),
                       kappa, zeta, dict(big_k), float(dual_bound), meta)


# -- reading solutions --------------------------------------------------

def state_payoffs(model: MopbqeModel, x) -> dict:
    """Payoff of every player in every state, recomputed from the solution's
    realised continuous variables (each state's best response re-solved)."""
    game = model.meta["game"]
    y = {p.name: np.array([x[j] for j in model.meta["y"][p.name]]) for p in game.players}
    out = {}
    for p in game.players:
        for s in p.state_list():
            br = game.best_response(p.name, s, y)
            out[p.name, s] = math.inf if br is None else br[1]
    return out


def realized_state(model: MopbqeModel, x, name: str) -> tuple:
    return tuple(int(round(x[j])) for j in model.meta["x"][name])


def classify_solution(model: MopbqeModel, x, tol: float = TAU_DUAL) -> dict:
    """Incentive-alignment case per player from the switch-value and compensation signs.

    I: committed to 1 and would lose by switching; II: the same for 0;
    III: kept at 1 against its preference (compensated); IV: kept at 0
    against its preference; V: indifferent.
    """
    x = np.asarray(x, dtype=float)
    game = model.meta["game"]
    out = {}
    pay = None
    for p in game.players:
        s = realized_state(model, x, p.name)
        scale = tol * max(1.0, model.big_k[p.name])
        if (p.name, 1) in model.kappa:
            vals = {k: (x[model.kappa[p.name, k]], x[model.zeta[p.name, k]]) for k in (0, 1)}
            for k, (kap, zet) in vals.items():
                if kap > scale and zet > scale:
                    raise InvariantViolation(
                        f"{p.name}: switch value {kap:.6g} and compensation {zet:.6g} "
                        f"both positive in state {k}")
            kap, zet = vals[s[0]]
            if zet > scale:
                out[p.name] = "III" if s[0] == 1 else "IV"
            elif kap > scale:
                out[p.name] = "I" if s[0] == 1 else "II"
            else:
                out[p.name] = "V"
            continue
        if pay is None:
            pay = state_payoffs(model, x)
        own = pay[p.name, s]
        best_alt = min(pay[p.name, t] for t in p.state_list() if t != s)
        zet = x[model.zeta[p.name]]
        switch = best_alt - own
        if zet > scale and switch > scale:
            raise InvariantViolation(f"{p.name}: switch value and compensation both positive")
        on = any(s)
        if zet > scale or switch < -scale:
            out[p.name] = "III" if on else "IV"
        elif switch > scale:
            out[p.name] = "I" if on else "II"
        else:
            out[p.name] = "V"
    return out
