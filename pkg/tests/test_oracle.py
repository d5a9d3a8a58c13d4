import csv

import numpy as np
import pytest

from binquasi.game import AssumptionError, BinaryGame, PlayerSpec
from binquasi.instance import random_instance, six_node_instance
from binquasi.market import build_market_game, market_big_k
from binquasi.milp import solve_milp, warm_start_from
from binquasi.oracle import (BudgetExceeded, certify_prices, check_theorems,
                             enumerate_quasi_equilibria, planner_point,
                             two_stage_social_planner, verify_equilibrium, write_report)

from support import solved

GT_SCHEDULE = {"g5": (1, 1), "g6": (1, 1), "g7": (1, 1), "g8": (1, 1), "g9": (1, 1)}


def schedules(inst, on):
    return {g.name: on.get(g.name, (0, 0)) for g in inst.generators}


def test_single_player_dominance():
    p = PlayerSpec("a", ["x"], ["y"], [0.0], [1.0], cost_x=[-2.0])
    res = enumerate_quasi_equilibria(BinaryGame([p]))
    assert res.profiles == 2
    assert res.best.profile == ((1,),)
    assert res.best.compensation == {"a": 0.0}
    assert res.best.nash


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        enumerate_quasi_equilibria(six_node_instance(), budget=16)


def test_unknown_held_generator():
    with pytest.raises(ValueError):
        enumerate_quasi_equilibria(six_node_instance(), hold_off=("g42",))


def test_one_period_market_by_hand():
    inst = random_instance(3)
    res = enumerate_quasi_equilibria(inst, top_k=2 ** 14)
    assert res.profiles == 2 ** (len(inst.generators) * len(inst.periods))
    objs = [o.objective for o in res.ranked]
    assert objs == sorted(objs)
    keys = [(round(o.objective, 9), o.profile) for o in res.ranked]
    assert keys == sorted(keys)


def test_report_file(tmp_path):
    res = enumerate_quasi_equilibria(random_instance(5), top_k=4)
    path = tmp_path / "report.csv"
    write_report(res, path)
    rows = list(csv.DictReader(path.open()))
    assert [r["profile"] for r in rows] == [o.bits() for o in res.ranked]
    assert set(rows[0]) == {"profile", "F", "compensation", "objective", "nash", "exact"}


@pytest.mark.slow
def test_market_verdicts():
    inst, _, _, sol, _ = solved("no-loss")
    v = verify_equilibrium(inst, sol)
    assert v.kind == "rejected"
    assert v.witness[0] == "g9" and v.witness[1] == (1, 1)
    assert v.witness[2] == pytest.approx(95.0)
    inst, _, _, sol, _ = solved("game-theoretic")
    v = verify_equilibrium(inst, sol)
    assert v.kind == "quasi"
    got = {k: c for k, c in v.compensation.items() if c > 1e-9}
    assert got == pytest.approx({"g3": 15.0, "g4": 65.0, "g9": 5.0})


def test_two_stage_baseline():
    plan = two_stage_social_planner(six_node_instance())
    assert plan.welfare == pytest.approx(3100.0, abs=1e-4)
    comp = {k: c for k, c in plan.compensation.items() if c > 1e-9}
    assert comp == pytest.approx({"g9": 95.0, "g3": 40.0}, abs=1e-4)
    assert plan.objective == pytest.approx(2965.0, abs=1e-4)


def test_planner_needs_aggregate_objective():
    p = PlayerSpec("a", ["x"], ["y"], [0.0], [1.0], cost_x=[1.0])
    with pytest.raises(AssumptionError):
        two_stage_social_planner(BinaryGame([p], F={("a", "x"): 5.0}))


def test_generic_planner():
    p = PlayerSpec("a", ["x"], ["y"], [0.0], [1.0], a=[[-1.0]], A=[[1.0]], b=[0.0],
                   cost_x=[1.0], cost_y=[-3.0])
    q = PlayerSpec("b", ["x"], ["y"], [0.0], [1.0], cost_x=[2.0])
    game = BinaryGame([p, q], F={("a", "x"): 1.0, ("a", "y"): -3.0, ("b", "x"): 2.0})
    plan = two_stage_social_planner(game)
    assert plan.schedules == {"a": (1,), "b": (0,)}
    assert plan.welfare == pytest.approx(2.0)
    assert plan.total_compensation == pytest.approx(0.0)


def test_price_certification():
    inst = six_node_instance()
    sched = schedules(inst, GT_SCHEDULE)
    ok, pinned, free = certify_prices(inst, sched, [[16.5, 17, 16, 26, 26.5, 27],
                                                    [12.8, 11.6, 14, 20, 18.8, 17.6]])
    assert ok and free == pytest.approx(85.0)
    ok, pinned, _ = certify_prices(inst, sched, [[16.5, 17, 16, 26, 26, 27],
                                                 [12.8, 11.6, 14, 20, 18.8, 17.6]])
    assert not ok


@pytest.mark.slow
def test_theorems_on_reference_instance():
    inst, model, res, *_ = solved("game-theoretic")
    plan = two_stage_social_planner(inst)
    checks = {c.name: c for c in check_theorems(inst, model_solution=(model, res), planner=plan)}
    assert checks["equilibrium-beats-compensated-planner"].holds
    assert checks["equilibrium-beats-compensated-planner"].slack == pytest.approx(10.0)
    assert checks["optimum-is-quasi-equilibrium"].holds
    assert checks["zero-compensation-is-nash"].holds is None
    assert checks["uncompensated-planner-bounds-equilibrium"].holds is None


def test_theorems_bind_without_compensation():
    M = 200.0
    found = 0
    for seed in range(60):
        inst = random_instance(seed)
        plan = two_stage_social_planner(inst, dual_bound=M)
        if plan.total_compensation > 1e-9:
            continue
        found += 1
        model = build_market_game(inst, big_k=market_big_k(inst, M), dual_bound=M)
        res = solve_milp(warm_start_from(model.problem, planner_point(model, plan)))
        checks = {c.name: c for c in check_theorems(inst, model_solution=(model, res),
                                                    planner=plan, dual_bound=M)}
        for name in ("uncompensated-planner-bounds-equilibrium",
                     "equilibrium-beats-compensated-planner"):
            assert checks[name].holds
            assert checks[name].slack == pytest.approx(0.0, abs=1e-6)
        if found == 5:
            break
    assert found == 5


@pytest.mark.slow
def test_reduced_enumeration_matches_model():
    res = enumerate_quasi_equilibria(six_node_instance(), hold_off=("g1", "g2"), top_k=3)
    assert res.profiles == 2 ** 14
    assert res.best.objective == pytest.approx(-2975.0, abs=1e-4)
    assert res.best.bits() == "00|00|00|00|11|11|11|11|11"
    zeta = {k: v for k, v in res.best.compensation.items() if v > 1e-9}
    assert zeta == pytest.approx({"g3": 15.0, "g4": 65.0, "g9": 5.0})
    assert res.best.exact
    assert np.allclose(res.best.prices[0], [16.5, 17, 16, 26, 26.5, 27])
