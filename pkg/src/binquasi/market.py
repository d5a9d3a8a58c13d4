"""Nodal power market with unit commitment as a binary game between generators.

Generators choose an on/off schedule and a dispatch level at given nodal
prices; a network operator clears demand and DC load flow.  The market game
is assembled as one MILP with the operator's and the generators' optimality
conditions, per-schedule incentive rows and compensation payments.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
import scipy.sparse as sp

from .disjunctive import TaggedBuilder
from .game import MopbqeModel
from .lp import TAU_DUAL, TAU_FEAS, ModelBuilder
from .milp import MilpProblem

RULES = ("game-theoretic", "no-loss", "no-loss-active")

HAND_SET_BIG_K = 1000.0
DEFAULT_DUAL_BOUND = 1000.0
ANGLE_LIMIT = math.pi
OPTION_GUARD = 16


@dataclass(frozen=True)
class Line:
    name: str
    start: str
    end: str
    susceptance: float
    capacity: float


@dataclass(frozen=True)
class Generator:
    name: str
    node: str
    cost: float
    startup: float
    shutdown: float
    gmin: float
    gmax: float
    initial: int


@dataclass(frozen=True)
class Load:
    name: str
    node: str
    utility: tuple
    dmax: tuple


@dataclass(frozen=True)
class MarketInstance:
    nodes: tuple
    lines: tuple
    generators: tuple
    loads: tuple
    periods: tuple
    slack: str | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "periods", tuple(self.periods))
        if self.slack is None and self.nodes:
            object.__setattr__(self, "slack", self.nodes[0])
        validate_instance(self)

    @property
    def slack_index(self) -> int:
        return self.nodes.index(self.slack)

    def node_index(self, name: str) -> int:
        return self.nodes.index(name)

    def generator(self, name: str) -> Generator:
        for g in self.generators:
            if g.name == name:
                return g
        raise KeyError(name)


class InstanceError(ValueError):
    """Semantic problem with a market instance; ``where`` locates the field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def validate_instance(inst: MarketInstance) -> None:
    if not inst.nodes:
        raise InstanceError("nodes", "at least one node is required")
    if len(set(inst.nodes)) != len(inst.nodes):
        raise InstanceError("nodes", "node names must be unique")
    if not inst.periods:
        raise InstanceError("periods", "at least one period is required")
    if inst.slack not in inst.nodes:
        raise InstanceError("slack", f"unknown slack node {inst.slack!r}")
    if not inst.generators:
        raise InstanceError("generators", "at least one generator is required")
    known = set(inst.nodes)
    names = set()
    for k, ln in enumerate(inst.lines):
        where = f"lines[{k}]"
        for end in (ln.start, ln.end):
            if end not in known:
                raise InstanceError(where, f"unknown node {end!r}")
        if ln.start == ln.end:
            raise InstanceError(where, "line endpoints must differ")
        if not ln.susceptance > 0:
            raise InstanceError(where, "susceptance must be positive")
        if not ln.capacity >= 0:
            raise InstanceError(where, "thermal limit must be nonnegative")
        if ln.name in names:
            raise InstanceError(where, f"duplicate name {ln.name!r}")
        names.add(ln.name)
    for k, g in enumerate(inst.generators):
        where = f"generators[{k}]"
        if g.node not in known:
            raise InstanceError(where, f"unknown node {g.node!r}")
        if g.name in names:
            raise InstanceError(where, f"duplicate name {g.name!r}")
        names.add(g.name)
        if not 0 <= g.gmin <= g.gmax:
            raise InstanceError(where, "need 0 <= gmin <= gmax")
        if min(g.cost, g.startup, g.shutdown) < 0:
            raise InstanceError(where, "costs must be nonnegative")
        if g.initial not in (0, 1):
            raise InstanceError(where, "initial status must be 0 or 1")
    for k, d in enumerate(inst.loads):
        where = f"loads[{k}]"
        if d.node not in known:
            raise InstanceError(where, f"unknown node {d.node!r}")
        if d.name in names:
            raise InstanceError(where, f"duplicate name {d.name!r}")
        names.add(d.name)
        if len(d.utility) != len(inst.periods) or len(d.dmax) != len(inst.periods):
            raise InstanceError(where, "utility and dmax need one value per period")
        if any(v < 0 for v in d.dmax):
            raise InstanceError(where, "dmax must be nonnegative")


def build_network_matrices(inst: MarketInstance):
    """Node-to-node susceptance matrix ``B`` and line-to-node transfer matrix ``H``.

    Flows are ``H @ angles`` and net nodal withdrawals from the network are
    ``B @ angles``; ``B = H' A`` with ``A`` the line-node incidence.
    """
    n, nl = len(inst.nodes), len(inst.lines)
    inc = np.zeros((nl, n))
    b = np.zeros(nl)
    for k, ln in enumerate(inst.lines):
        inc[k, inst.node_index(ln.start)] = 1.0
        inc[k, inst.node_index(ln.end)] = -1.0
        b[k] = ln.susceptance
    if n > 1:
        adj = sp.csr_matrix(np.abs(inc.T) @ np.abs(inc))
        ncomp, labels = connected_components(adj, directed=False)
        if ncomp > 1:
            groups = [[inst.nodes[i] for i in range(n) if labels[i] == c] for c in range(ncomp)]
            raise InstanceError("lines", f"network is disconnected: components {groups}")
    H = b[:, None] * inc
    B = inc.T @ H
    return B, H


@dataclass(frozen=True)
class DispatchOption:
    schedule: tuple
    active: tuple
    cost: float


def commitment_cost(g: Generator, schedule) -> float:
    prev = g.initial
    total = 0.0
    for s in schedule:
        if s > prev:
            total += g.startup
        elif s < prev:
            total += g.shutdown
        prev = s
    return total


def enumerate_dispatch_options(inst: MarketInstance, gen, guard: int = OPTION_GUARD) -> list:
    """All ``2^|T|`` on/off schedules of a generator with their commitment costs."""
    g = inst.generator(gen) if isinstance(gen, str) else gen
    nt = len(inst.periods)
    if nt > guard:
        raise ValueError(
            f"{2 ** nt} schedules exceed the enumeration guard ({guard} periods); "
            "pass a restricted option list instead")
    out = []
    for bits in itertools.product((0, 1), repeat=nt):
        out.append(DispatchOption(bits, tuple(t for t in range(nt) if bits[t]),
                                  commitment_cost(g, bits)))
    return out


def market_big_k(inst: MarketInstance, dual_bound: float = DEFAULT_DUAL_BOUND) -> dict:
    """Certified switch-value bound per generator given a bound on all duals.

    Short-run profit in a period is at most ``dual_bound * gmax`` in absolute
    value, so compensation never exceeds twice the horizon's profit range
    plus all commitment costs.
    """
    nt = len(inst.periods)
    out = {}
    for g in inst.generators:
        swing = 2 * nt * dual_bound * g.gmax + nt * (g.startup + g.shutdown)
        out[g.name] = 1.1 * swing
    return out


def build_market_game(inst: MarketInstance, rule: str = "game-theoretic", *,
                      big_k: float | dict | None = None,
                      dual_bound: float = DEFAULT_DUAL_BOUND,
                      comp_weight: float = 1.0,
                      options: dict | None = None,
                      duality_rows: bool = True) -> MopbqeModel:
    """Assemble the market equilibrium-selection MILP for one compensation rule.

    ``big_k`` gates the signed profit variables and (for the active-only
    rule) compensation; it defaults to the hand-set 1000.  ``dual_bound`` is
    the assumed bound on prices and multipliers used by the disjunctive rows.
    ``options`` may restrict the schedules compared in the incentive rows.
    ``duality_rows`` adds the per-period strong-duality identity of the
    dispatch problem, which the optimality conditions already imply.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    if comp_weight < 0:
        raise ValueError("compensation weight must be non-negative")
    B, H = build_network_matrices(inst)
    if big_k is None:
        big_k = HAND_SET_BIG_K
    if not isinstance(big_k, dict):
        big_k = {g.name: float(big_k) for g in inst.generators}
    M = float(dual_bound)
    T = range(len(inst.periods))
    N = range(len(inst.nodes))
    slack = inst.slack_index
    tb = TaggedBuilder(ModelBuilder("min"))
    cols: dict = {}

    def name(*parts):
        return ".".join(str(p) for p in parts)

    # columns: commitment first so branching sees them early
    for t in T:
        tt = inst.periods[t]
        for g in inst.generators:
            cols["x", t, g.name] = tb.var(name("x", tt, g.name), 0, 1, binary=True)
    for t in T:
        tt = inst.periods[t]
        for g in inst.generators:
            k = big_k[g.name]
            cols["y", t, g.name] = tb.var(name("y", tt, g.name), 0, g.gmax, cost=g.cost)
            cols["y_on", t, g.name] = tb.var(name("y_on", tt, g.name), g.gmin, g.gmax)
            cols["z_on", t, g.name] = tb.var(name("z_on", tt, g.name), 0, 1, cost=g.startup)
            cols["z_off", t, g.name] = tb.var(name("z_off", tt, g.name), 0, 1, cost=g.shutdown)
            cols["alpha", t, g.name] = tb.var(name("alpha", tt, g.name), 0, M)
            cols["beta", t, g.name] = tb.var(name("beta", tt, g.name), 0, M)
            cols["kappa_on", t, g.name] = tb.var(name("kappa_on", tt, g.name), -k, k)
            cols["kappa_off", t, g.name] = tb.var(name("kappa_off", tt, g.name), -k, k)
        for d in inst.loads:
            cols["d", t, d.name] = tb.var(name("d", tt, d.name), 0, d.dmax[t], cost=-d.utility[t])
            cols["nu", t, d.name] = tb.var(name("nu", tt, d.name), 0, M)
        for n in N:
            nn = inst.nodes[n]
            cols["p", t, nn] = tb.var(name("p", tt, nn), -M, M)
            lim = 0.0 if n == slack else ANGLE_LIMIT
            cols["delta", t, nn] = tb.var(name("delta", tt, nn), -lim, lim)
            if n != slack:
                cols["xi_up", t, nn] = tb.var(name("xi_up", tt, nn), 0, M)
                cols["xi_lo", t, nn] = tb.var(name("xi_lo", tt, nn), 0, M)
        for ln in inst.lines:
            cols["mu_up", t, ln.name] = tb.var(name("mu_up", tt, ln.name), 0, M)
            cols["mu_lo", t, ln.name] = tb.var(name("mu_lo", tt, ln.name), 0, M)
        cols["gamma", t] = tb.var(name("gamma", tt), -math.inf, math.inf)
    for g in inst.generators:
        cols["zeta", g.name] = tb.var(name("zeta", g.name), 0, math.inf, cost=comp_weight)

    c = lambda *key: cols[key]

    for t in T:
        tt = inst.periods[t]
        # network operator: balance, demand, flows, angles
        for n in N:
            nn = inst.nodes[n]
            row = {}
            for d in inst.loads:
                if d.node == nn:
                    row[c("d", t, d.name)] = 1.0
            for g in inst.generators:
                if g.node == nn:
                    row[c("y", t, g.name)] = -1.0
            for m in N:
                if B[n, m] != 0.0:
                    row[c("delta", t, inst.nodes[m])] = B[n, m]
            tb.row("operator:balance", name("balance", tt, nn), row, "=", 0.0)
        for d in inst.loads:
            nn = d.node
            # reduced cost of demand: -u + p + nu >= 0, complementary to d
            tb.complementarity(
                "operator:demand", name("demand", tt, d.name),
                {c("p", t, nn): 1.0, c("nu", t, d.name): 1.0}, -d.utility[t],
                c("d", t, d.name), slack_bound=M + max(0.0, -d.utility[t]) + M,
                dual_bound=d.dmax[t])
            tb.complementarity(
                "operator:demand-cap", name("demand_cap", tt, d.name),
                {c("d", t, d.name): -1.0}, d.dmax[t], c("nu", t, d.name),
                slack_bound=d.dmax[t], dual_bound=M, enforce_slack=False)
        for l, ln in enumerate(inst.lines):
            flow = {c("delta", t, inst.nodes[n]): H[l, n] for n in N if H[l, n] != 0.0}
            neg = {j: -v for j, v in flow.items()}
            tb.complementarity("operator:flow-limit", name("flow_up", tt, ln.name), neg,
                               ln.capacity, c("mu_up", t, ln.name), 2 * ln.capacity, M)
            tb.complementarity("operator:flow-limit", name("flow_lo", tt, ln.name), flow,
                               ln.capacity, c("mu_lo", t, ln.name), 2 * ln.capacity, M)
        for n in N:
            if n == slack:
                continue
            nn = inst.nodes[n]
            dl = c("delta", t, nn)
            tb.complementarity("operator:angle-limit", name("angle_up", tt, nn), {dl: -1.0},
                               ANGLE_LIMIT, c("xi_up", t, nn), 2 * ANGLE_LIMIT, M,
                               enforce_slack=False)
            tb.complementarity("operator:angle-limit", name("angle_lo", tt, nn), {dl: 1.0},
                               ANGLE_LIMIT, c("xi_lo", t, nn), 2 * ANGLE_LIMIT, M,
                               enforce_slack=False)
        tb.row("operator:reference-angle", name("reference", tt),
               {c("delta", t, inst.nodes[slack]): 1.0}, "=", 0.0)
        # stationarity of the operator in the angles
        for n in N:
            nn = inst.nodes[n]
            row = {}
            for m in N:
                if B[m, n] != 0.0:
                    row[c("p", t, inst.nodes[m])] = B[m, n]
            for l, ln in enumerate(inst.lines):
                if H[l, n] != 0.0:
                    row[c("mu_up", t, ln.name)] = H[l, n]
                    row[c("mu_lo", t, ln.name)] = -H[l, n]
            if n == slack:
                row[c("gamma", t)] = 1.0
            else:
                row[c("xi_up", t, nn)] = 1.0
                row[c("xi_lo", t, nn)] = -1.0
            tb.row("operator:stationarity", name("angle_stat", tt, nn), row, "=", 0.0)

        # generators
        for g in inst.generators:
            gi = g.name
            x, y, yon = c("x", t, gi), c("y", t, gi), c("y_on", t, gi)
            al, be = c("alpha", t, gi), c("beta", t, gi)
            kon, koff = c("kappa_on", t, gi), c("kappa_off", t, gi)
            k = big_k[gi]
            tb.row("generator:stationarity", name("gen_stat", tt, gi),
                   {be: 1.0, al: -1.0, c("p", t, g.node): -1.0}, "=", -g.cost)
            span = g.gmax - g.gmin
            tb.complementarity("generator:min-output", name("gmin", tt, gi), {yon: 1.0},
                               -g.gmin, al, span, M, enforce_slack=False)
            tb.complementarity("generator:max-output", name("gmax", tt, gi), {yon: -1.0},
                               g.gmax, be, span, M, enforce_slack=False)
            # start-ups minus shut-downs equal the change in commitment
            row = {x: 1.0, c("z_on", t, gi): -1.0, c("z_off", t, gi): 1.0}
            if t == 0:
                rhs = float(g.initial)
            else:
                row[c("x", t - 1, gi)] = -1.0
                rhs = 0.0
            tb.row("generator:transition", name("transition", tt, gi), row, "=", rhs)
            tb.row("generator:profit", name("profit", tt, gi),
                   {be: g.gmax, al: -g.gmin, kon: -1.0, koff: 1.0}, "=", 0.0)
            tb.row("generator:gating", name("gate_on_up", tt, gi), {kon: 1.0, x: -k}, "<=", 0.0)
            tb.row("generator:gating", name("gate_on_lo", tt, gi), {kon: -1.0, x: -k}, "<=", 0.0)
            tb.row("generator:gating", name("gate_off_up", tt, gi), {koff: 1.0, x: k}, "<=", k)
            tb.row("generator:gating", name("gate_off_lo", tt, gi), {koff: -1.0, x: k}, "<=", k)
            tb.row("generator:translation", name("dispatch_cap", tt, gi), {y: 1.0, x: -g.gmax},
                   "<=", 0.0)
            tb.row("generator:translation", name("dispatch_lo", tt, gi),
                   {y: 1.0, yon: -1.0, x: -g.gmax}, ">=", -g.gmax)
            tb.row("generator:translation", name("dispatch_up", tt, gi),
                   {y: 1.0, yon: -1.0, x: g.gmax}, "<=", g.gmax)

        if duality_rows:
            # strong duality of the period's dispatch problem
            row = {}
            for g in inst.generators:
                row[c("kappa_on", t, g.name)] = 1.0
                row[c("y", t, g.name)] = row.get(c("y", t, g.name), 0.0) + g.cost
            for d in inst.loads:
                row[c("d", t, d.name)] = -d.utility[t]
                row[c("nu", t, d.name)] = d.dmax[t]
            for ln in inst.lines:
                row[c("mu_up", t, ln.name)] = ln.capacity
                row[c("mu_lo", t, ln.name)] = ln.capacity
            for n in N:
                if n != slack:
                    row[c("xi_up", t, inst.nodes[n])] = ANGLE_LIMIT
                    row[c("xi_lo", t, inst.nodes[n])] = ANGLE_LIMIT
            tb.row("operator:strong-duality", name("duality", tt), row, "=", 0.0)

    # incentive / compensation rows over the horizon
    opt_lists = {}
    for g in inst.generators:
        gi = g.name
        realized = {}
        for t in T:
            realized[c("kappa_on", t, gi)] = 1.0
            realized[c("z_on", t, gi)] = -g.startup
            realized[c("z_off", t, gi)] = -g.shutdown
        realized[c("zeta", gi)] = 1.0
        if rule == "game-theoretic":
            opts = (options or {}).get(gi) or enumerate_dispatch_options(inst, g)
            opt_lists[gi] = opts
            for phi in opts:
                row = dict(realized)
                for t in phi.active:
                    row[c("beta", t, gi)] = row.get(c("beta", t, gi), 0.0) - g.gmax
                    row[c("alpha", t, gi)] = row.get(c("alpha", t, gi), 0.0) + g.gmin
                label = "".join(str(s) for s in phi.schedule)
                tb.row("incentive", name("incentive", gi, label), row, ">=", -phi.cost)
        else:
            tb.row("incentive:no-loss", name("no_loss", gi), realized, ">=", 0.0)
            if rule == "no-loss-active":
                row = {c("zeta", gi): 1.0}
                for t in T:
                    row[c("x", t, gi)] = -big_k[gi]
                tb.row("incentive:active-only", name("active_only", gi), row, "<=", 0.0)

    lp = tb.builder.build()
    problem = MilpProblem(lp, tb.builder.binary_columns())
    kappa = {(g.name, t): (cols["kappa_on", t, g.name], cols["kappa_off", t, g.name])
             for g in inst.generators for t in T}
    zeta = {g.name: cols["zeta", g.name] for g in inst.generators}
    meta = {"instance": inst, "rule": rule, "columns": cols, "options": opt_lists,
            "comp_weight": comp_weight, "pairs": tb.pairs}
    return MopbqeModel(problem, dict(tb.families), kappa, zeta, dict(big_k), M, meta)


# -- reading and settling solutions --------------------------------------

_PER_GEN = ("x", "y", "y_on", "z_on", "z_off", "alpha", "beta", "kappa_on", "kappa_off")
_PER_LOAD = ("d", "nu")
_PER_NODE = ("p", "delta")
_PER_LINE = ("mu_up", "mu_lo")


@dataclass(frozen=True, eq=False)
class MarketSolution:
    """Primal and dual values of a market outcome, arrays indexed ``[period, unit]``."""

    instance: MarketInstance
    x: np.ndarray
    y: np.ndarray
    z_on: np.ndarray
    z_off: np.ndarray
    d: np.ndarray
    delta: np.ndarray
    p: np.ndarray
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    nu: np.ndarray | None = None
    mu_up: np.ndarray | None = None
    mu_lo: np.ndarray | None = None
    xi_up: np.ndarray | None = None
    xi_lo: np.ndarray | None = None
    gamma: np.ndarray | None = None
    kappa_on: np.ndarray | None = None
    kappa_off: np.ndarray | None = None
    zeta: np.ndarray | None = None

    def schedule(self, gen: str) -> tuple:
        k = [g.name for g in self.instance.generators].index(gen)
        return tuple(int(round(v)) for v in self.x[:, k])

    def flows(self) -> np.ndarray:
        _, H = build_network_matrices(self.instance)
        return self.delta @ H.T

    def balance_residual(self) -> np.ndarray:
        """Per period and node: demand minus generation plus network withdrawal."""
        inst = self.instance
        B, _ = build_network_matrices(inst)
        res = self.delta @ B.T
        for k, d in enumerate(inst.loads):
            res[:, inst.node_index(d.node)] += self.d[:, k]
        for k, g in enumerate(inst.generators):
            res[:, inst.node_index(g.node)] -= self.y[:, k]
        return res


def extract_solution(model: MopbqeModel, x) -> MarketSolution:
    inst = model.meta["instance"]
    cols = model.meta["columns"]
    x = np.asarray(x, dtype=float)
    T = range(len(inst.periods))

    def grid(key, names):
        return np.array([[x[cols[key, t, n]] if (key, t, n) in cols else 0.0 for n in names]
                         for t in T])

    gens = [g.name for g in inst.generators]
    loads = [d.name for d in inst.loads]
    lines = [ln.name for ln in inst.lines]
    vals = {k: grid(k, gens) for k in _PER_GEN}
    vals.update({k: grid(k, loads) for k in _PER_LOAD})
    vals.update({k: grid(k, inst.nodes) for k in _PER_NODE + ("xi_up", "xi_lo")})
    vals.update({k: grid(k, lines) for k in _PER_LINE})
    vals["x"] = np.round(vals["x"])
    vals.pop("y_on")
    return MarketSolution(inst, gamma=np.array([x[cols["gamma", t]] for t in T]),
                          zeta=np.array([x[cols["zeta", g]] for g in gens]), **vals)


@dataclass(frozen=True)
class Rents:
    profits: dict
    generator_profit: float
    consumer_surplus: float
    congestion_rent: float
    gross_welfare: float
    compensation: float
    objective: float


def settle(inst: MarketInstance, sol: MarketSolution, comp_weight: float = 1.0) -> Rents:
    """Profits at nodal prices, consumer surplus, merchandising surplus and welfare."""
    gen_node = [inst.node_index(g.node) for g in inst.generators]
    load_node = [inst.node_index(d.node) for d in inst.loads]
    pg = sol.p[:, gen_node]
    pd = sol.p[:, load_node]
    cost = np.array([g.cost for g in inst.generators])
    c_on = np.array([g.startup for g in inst.generators])
    c_off = np.array([g.shutdown for g in inst.generators])
    commit = (sol.z_on * c_on).sum(axis=0) + (sol.z_off * c_off).sum(axis=0)
    prof = ((pg - cost) * sol.y).sum(axis=0) - commit
    util = np.array([d.utility for d in inst.loads]).T
    surplus = float(((util - pd) * sol.d).sum())
    rent = float((pd * sol.d).sum() - (pg * sol.y).sum())
    welfare = float((util * sol.d).sum() - (cost * sol.y).sum() - commit.sum())
    comp = 0.0 if sol.zeta is None else float(sol.zeta.sum())
    return Rents({g.name: float(v) for g, v in zip(inst.generators, prof)}, float(prof.sum()),
                 surplus, rent, welfare, comp, welfare - comp_weight * comp)


def period_profit(g: Generator, price: float) -> float:
    """Best short-run profit of a committed unit at ``price``."""
    return max((price - g.cost) * g.gmax, (price - g.cost) * g.gmin)


def deviation_matrix(inst: MarketInstance, prices: np.ndarray, guard: int = OPTION_GUARD) -> dict:
    """Profit of every generator under every schedule at fixed nodal prices.

    Returns ``{generator: {schedule: profit}}``; committed periods earn the
    best output-level profit at the prevailing price.
    """
    out = {}
    for g in inst.generators:
        n = inst.node_index(g.node)
        row = {}
        for phi in enumerate_dispatch_options(inst, g, guard):
            row[phi.schedule] = sum(period_profit(g, prices[t, n]) for t in phi.active) - phi.cost
        out[g.name] = row
    return out


def minimal_compensation(inst: MarketInstance, sol: MarketSolution) -> dict:
    """Smallest payment per generator removing every profitable schedule change."""
    dev = deviation_matrix(inst, sol.p)
    out = {}
    for g in inst.generators:
        row = dev[g.name]
        out[g.name] = max(0.0, max(row.values()) - row[sol.schedule(g.name)])
    return out


def classify_market(inst: MarketInstance, sol: MarketSolution, tol: float = 1e-6) -> dict:
    """Incentive-alignment case per generator (see :func:`binquasi.game.classify_solution`)."""
    dev = deviation_matrix(inst, sol.p)
    out = {}
    for k, g in enumerate(inst.generators):
        own = sol.schedule(g.name)
        row = dev[g.name]
        alts = {phi: v for phi, v in row.items() if phi != own}
        best_phi = max(alts, key=lambda phi: (alts[phi], phi))
        gain = alts[best_phi] - row[own]
        zeta = 0.0 if sol.zeta is None else sol.zeta[k]
        if zeta > tol or gain > tol:
            out[g.name] = "III" if sum(own) > sum(best_phi) else "IV"
        elif gain < -tol:
            out[g.name] = "I" if any(own) else "II"
        else:
            out[g.name] = "V"
    return out


def duals_at_bound(model: MopbqeModel, x, tol: float = 1e-6) -> list:
    """Multiplier columns pinned at the assumed dual bound (the bound may be too tight)."""
    cols = model.meta["columns"]
    M = model.dual_bound
    hits = []
    for key, j in cols.items():
        if key[0] in ("alpha", "beta", "nu", "mu_up", "mu_lo", "xi_up", "xi_lo", "p"):
            if abs(x[j]) >= M - tol:
                hits.append(model.lp.col_tags[j])
    return hits
