"""Shared fixtures for the test modules: solved reference cases and small random games."""
import functools

import numpy as np

from binquasi.game import BinaryGame, PlayerSpec
from binquasi.instance import six_node_instance
from binquasi.market import build_market_game, extract_solution, settle
from binquasi.milp import solve_milp

ACCEPTANCE: dict = {}

REFERENCE_ZETA = {
    "game-theoretic": {"g3": 15.0, "g4": 65.0, "g9": 5.0},
    "no-loss": {"g3": 300.0, "g4": 160.0},
    "no-loss-active": {"g3": 525.0, "g4": 335.0, "g5": 50.0},
}


def record(criterion: int, ok: bool, detail: str = "") -> bool:
    """Remember the outcome of an acceptance criterion for the session summary."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def solved(rule: str, big_k=None):
    """(instance, model, MILP solution, MarketSolution, Rents) of the 6-node case."""
    inst = six_node_instance()
    model = build_market_game(inst, rule, big_k=big_k)
    res = solve_milp(model.problem)
    sol = extract_solution(model, res.x)
    return inst, model, res, sol, settle(inst, sol)


def random_game(seed: int, players: int = 2, coupled: bool = True) -> BinaryGame:
    """Players with one on/off binary and one bounded output, optionally price-coupled."""
    rng = np.random.default_rng(seed)
    specs = []
    for k in range(players):
        cap = float(rng.integers(1, 5))
        specs.append(PlayerSpec(
            f"p{k}", ["x"], ["y"], [0.0], [cap],
            a=[[-cap]], A=[[1.0]], b=[0.0],
            cost_x=[float(rng.integers(-3, 4))], cost_y=[float(rng.integers(-4, 3))],
            constant=float(rng.integers(-2, 3))))
    coupling = {}
    if coupled:
        for i in range(players):
            for j in range(players):
                if i != j and rng.random() < 0.7:
                    coupling.setdefault((f"p{i}", "y"), {})[(f"p{j}", "y")] = \
                        float(rng.integers(-2, 3)) / 2
    F = {}
    for s in specs:
        F[s.name, "x"] = float(rng.integers(-3, 4))
        F[s.name, "y"] = float(rng.integers(-3, 3))
    return BinaryGame(specs, coupling=coupling, F=F)
