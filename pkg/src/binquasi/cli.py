"""Command line front end: solve a market instance and render the result tables.

    binquasi solve INSTANCE --rule {game-theoretic,no-loss,no-loss-active,all}
                   [--oracle] [--oracle-budget N] [--gap TOL] [--comp-weight W]
                   [--emit-model PATH] [--out DIR] [--format {md,csv}]

Log verbosity is read from ``BINQUASI_LOG`` (``DEBUG``, ``INFO``, ...).
Exit codes: 0 optimal, 2 stopped at a limit (with or without an
incumbent), 3 infeasible, 4 the enumeration disagrees with the model,
1 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .instance import InstanceFileError, load_instance
from .lpfile import emit_model
from .market import (RULES, MarketInstance, MarketSolution, Rents, build_market_game,
                     classify_market, deviation_matrix, extract_solution, settle)
from .milp import solve_milp
from .oracle import BudgetExceeded, enumerate_quasi_equilibria, write_report

log = logging.getLogger("binquasi")

LOG_ENV = "BINQUASI_LOG"
EXIT_OK, EXIT_USAGE, EXIT_GAP, EXIT_INFEASIBLE, EXIT_ORACLE = 0, 1, 2, 3, 4
RULE_TITLES = {"no-loss": "No-loss rule", "game-theoretic": "Game-theoretic",
               "no-loss-active": "No-loss & active"}


@dataclass
class RunConfig:
    instance: str | Path | MarketInstance
    rules: tuple = ("game-theoretic",)
    gap_tol: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = math.inf
    comp_weight: float = 1.0
    oracle: bool = False
    oracle_budget: int = 20
    out_dir: str | Path | None = None
    formats: tuple = ("md",)
    emit_model: str | Path | None = None

    def __post_init__(self):
        if isinstance(self.rules, str):
            self.rules = (self.rules,)
        self.rules = tuple(RULES if "all" in self.rules else self.rules)
        if not self.rules:
            raise ValueError("select at least one rule")
        bad = [r for r in self.rules if r not in RULES]
        if bad:
            raise ValueError(f"unknown rule(s) {bad}; expected {RULES} or 'all'")
        if self.comp_weight < 0:
            raise ValueError("compensation weight must be non-negative")
        if self.gap_tol < 0:
            raise ValueError("gap tolerance must be non-negative")


@dataclass
class EquilibriumReport:
    rule: str
    status: str
    objective: float
    bound: float
    gap: float
    nodes: int
    seconds: float
    binaries: int
    solution: MarketSolution | None = None
    rents: Rents | None = None
    cases: dict = field(default_factory=dict)
    deviations: dict = field(default_factory=dict)
    oracle: str | None = None         # None, "verified" or "mismatch: ..."
    oracle_best: float | None = None


@dataclass
class RunResult:
    instance: MarketInstance
    reports: list
    tables: dict
    exit_code: int


def solve_rule(inst: MarketInstance, rule: str, config: RunConfig) -> EquilibriumReport:
    model = build_market_game(inst, rule, comp_weight=config.comp_weight)
    if config.emit_model is not None:
        path = Path(config.emit_model)
        if len(config.rules) > 1:
            path = path.with_name(f"{path.stem}.{rule}{path.suffix or '.lp'}")
        emit_model(model, path, f"{inst.name or 'market'} {rule}")
        log.info("wrote %s", path)
    res = solve_milp(model.problem, gap_tol=config.gap_tol, node_limit=config.node_limit,
                     time_limit=config.time_limit)
    log.info("%s: %s objective %.6g after %d nodes (%.1fs)", rule, res.status,
             res.objective, res.nodes, res.seconds)
    rep = EquilibriumReport(rule, res.status, -res.objective, -res.bound, res.gap, res.nodes,
                            res.seconds, model.binary_count())
    if res.x is not None:
        sol = extract_solution(model, res.x)
        rep.solution = sol
        rep.rents = settle(inst, sol, config.comp_weight)
        rep.cases = classify_market(inst, sol)
        rep.deviations = deviation_matrix(inst, sol.p)
        hits = model.duals_at_bound(res.x) if hasattr(model, "duals_at_bound") else []
        if hits:
            log.warning("%s: multipliers at the assumed bound: %s", rule, ", ".join(hits[:5]))
    if config.oracle:
        try:
            en = enumerate_quasi_equilibria(inst, rule=rule, budget=config.oracle_budget,
                                            comp_weight=config.comp_weight,
                                            dual_bound=model.dual_bound)
        except BudgetExceeded as exc:
            rep.oracle = f"skipped: {exc}"
        else:
            best = -en.best.objective if en.best is not None else None
            rep.oracle_best = best
            if best is None and res.x is None:
                rep.oracle = "verified"
            elif best is None or res.x is None or \
                    abs(best - rep.objective) > 1e-6 * max(1.0, abs(best)):
                rep.oracle = f"mismatch: enumeration best {best}, model {rep.objective}"
            else:
                rep.oracle = "verified"
            if config.out_dir is not None:
                write_report(en, Path(config.out_dir) / f"oracle-{rule}.csv")
    return rep


def run(config: RunConfig) -> RunResult:
    inst = config.instance
    if not isinstance(inst, MarketInstance):
        inst = load_instance(inst)
    if config.out_dir is not None:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    if config.emit_model is not None:
        Path(config.emit_model).parent.mkdir(parents=True, exist_ok=True)
    reports = [solve_rule(inst, rule, config) for rule in config.rules]
    tables = render_tables(inst, reports, config.formats)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        for name, text in tables.items():
            (out / name).write_text(text)
    return RunResult(inst, reports, tables, exit_code(reports))


def exit_code(reports) -> int:
    if any(r.oracle and r.oracle.startswith("mismatch") for r in reports):
        return EXIT_ORACLE
    if any(r.status in ("infeasible", "unbounded") for r in reports):
        return EXIT_INFEASIBLE
    if any(r.status != "optimal" for r in reports):
        return EXIT_GAP
    return EXIT_OK


# -- tables ---------------------------------------------------------------

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, tuple):
        return "(" + ",".join(str(s) for s in v) + ")"
    if isinstance(v, float):
        v = round(v, 6) + 0.0
        return f"{v:g}" if abs(v) < 1e15 else f"{v:.6g}"
    return str(v)


def schedule_order(nt: int) -> list:
    """Schedules ordered by the number of committed periods, earlier periods first."""
    all_s = list(itertools.product((0, 1), repeat=nt))
    return sorted(all_s, key=lambda s: (sum(s), tuple(-b for b in s)))


def rents_table(inst, reports) -> tuple:
    """Commitment, profit and compensation per generator, then rents by group."""
    head = ["generator", "x_init"]
    for r in reports:
        head += [f"{r.rule} x", f"{r.rule} profit", f"{r.rule} zeta"]
    rows = []
    for k, g in enumerate(inst.generators):
        row = [g.name, str(g.initial)]
        for r in reports:
            if r.solution is None:
                row += ["", "", ""]
                continue
            row += [_fmt(r.solution.schedule(g.name)), _fmt(r.rents.profits[g.name]),
                    _fmt(float(r.solution.zeta[k]))]
        rows.append(row)
    for label, attr, extra in (("Generator profit", "generator_profit", True),
                               ("Consumer surplus", "consumer_surplus", False),
                               ("Congestion rent", "congestion_rent", False),
                               ("Total welfare", "gross_welfare", True),
                               ("Operator objective", "objective", False)):
        row = [label, ""]
        for r in reports:
            if r.rents is None:
                row += ["", "", ""]
                continue
            row += ["", _fmt(getattr(r.rents, attr)),
                    _fmt(r.rents.compensation) if extra else ""]
        rows.append(row)
    return head, rows


def dispatch_table(inst, reports) -> tuple:
    """Nodal prices, generation and load per period, then total dispatch."""
    head = ["", "unit"]
    for r in reports:
        head += [f"{r.rule} {t}" for t in inst.periods]
    rows = []
    nt = len(inst.periods)

    def block(label, names, getter):
        for i, name in enumerate(names):
            row = [label if i == 0 else "", name]
            for r in reports:
                row += [_fmt(float(getter(r.solution)[t, i])) if r.solution is not None else ""
                        for t in range(nt)]
            rows.append(row)

    block("Price", inst.nodes, lambda s: s.p)
    block("Generation", [g.name for g in inst.generators], lambda s: s.y)
    block("Load", [d.name for d in inst.loads], lambda s: s.d)
    row = ["Total dispatch", ""]
    for r in reports:
        row += [_fmt(float(r.solution.y[t].sum())) if r.solution is not None else ""
                for t in range(nt)]
    rows.append(row)
    return head, rows


def deviation_table(inst, reports, mark="**") -> tuple:
    """Profit under every schedule at the outcome's prices; the outcome is marked."""
    order = schedule_order(len(inst.periods))
    head = ["generator"]
    for r in reports:
        head += [f"{r.rule} {_fmt(s)}" for s in order] + [f"{r.rule} zeta"]
    rows = []
    for k, g in enumerate(inst.generators):
        row = [g.name]
        for r in reports:
            if r.solution is None:
                row += [""] * (len(order) + 1)
                continue
            own = r.solution.schedule(g.name)
            for s in order:
                cell = _fmt(r.deviations[g.name][s])
                row.append(f"{mark}{cell}{mark}" if s == own and mark else cell)
            row.append(_fmt(float(r.solution.zeta[k])))
        rows.append(row)
    return head, rows


def summary_table(reports) -> tuple:
    head = ["rule", "status", "objective", "bound", "gap", "nodes", "seconds", "binaries",
            "oracle"]
    rows = [[r.rule, r.status, _fmt(r.objective), _fmt(r.bound), _fmt(r.gap), str(r.nodes),
             f"{r.seconds:.2f}", str(r.binaries), r.oracle or ""] for r in reports]
    return head, rows


def to_markdown(head, rows) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(head)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    out = [line(head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def to_csv(head, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


def render_tables(inst, reports, formats=("md",)) -> dict:
    """File name to rendered text; depends on the reports only."""
    out = {}
    for fmt in formats:
        mark = "**" if fmt == "md" else ""
        tabs = {"summary": summary_table(reports), "rents": rents_table(inst, reports),
                "dispatch": dispatch_table(inst, reports),
                "deviations": deviation_table(inst, reports, mark)}
        for name, (head, rows) in tabs.items():
            out[f"{name}.{fmt}"] = to_markdown(head, rows) if fmt == "md" else to_csv(head, rows)
    return out


# -- entry point ------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="binquasi",
                                 description="Binary quasi-equilibria of nodal markets.")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", help="solve an instance under one or more compensation rules")
    sp.add_argument("instance")
    sp.add_argument("--rule", action="append", choices=RULES + ("all",),
                    help="compensation rule (repeatable); default game-theoretic")
    sp.add_argument("--oracle", action="store_true",
                    help="cross-check against full enumeration of commitment profiles")
    sp.add_argument("--oracle-budget", type=int, default=20, metavar="N",
                    help="largest number of binaries to enumerate (default 20)")
    sp.add_argument("--gap", type=float, default=1e-6, metavar="TOL")
    sp.add_argument("--node-limit", type=int, default=1_000_000)
    sp.add_argument("--time-limit", type=float, default=math.inf)
    sp.add_argument("--comp-weight", type=float, default=1.0, metavar="W")
    sp.add_argument("--emit-model", metavar="PATH")
    sp.add_argument("--out", metavar="DIR")
    sp.add_argument("--format", action="append", choices=("md", "csv"))
    return ap


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        config = RunConfig(args.instance, tuple(args.rule or ("game-theoretic",)), args.gap,
                           args.node_limit, args.time_limit, args.comp_weight, args.oracle,
                           args.oracle_budget, args.out, tuple(args.format or ("md",)),
                           args.emit_model)
        result = run(config)
    except (InstanceFileError, ValueError, OSError) as exc:
        print(f"binquasi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out is None:
        for name, text in result.tables.items():
            print(f"## {name}\n\n{text}")
    for r in result.reports:
        if r.oracle and r.oracle.startswith("mismatch"):
            print(f"binquasi: {r.rule}: {r.oracle}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
