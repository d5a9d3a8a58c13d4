import math

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from binquasi.game import BinaryGame, PlayerSpec, build_mopbqe
from binquasi.instance import six_node_instance
from binquasi.lp import ModelBuilder, solve_lp
from binquasi.lpfile import (LpFormatError, dumps_lp, emit_model, family_of, loads_lp,
                             lp_name, read_lp)
from binquasi.market import build_market_game


def by_name(lp):
    """Column-name keyed view of a program, independent of column order."""
    A = lp.matrix.tocsr()
    rows = {}
    for r, tag in enumerate(lp.row_tags):
        seg = slice(A.indptr[r], A.indptr[r + 1])
        coefs = {lp.col_tags[j]: v for j, v in zip(A.indices[seg], A.data[seg]) if v}
        rows[tag] = (coefs, lp.relations[r], float(lp.rhs[r]))
    cols = {t: (float(lp.lower[j]), float(lp.upper[j]), float(lp.objective[j]))
            for j, t in enumerate(lp.col_tags)}
    return rows, cols


def renamed(lp):
    rows, cols = by_name(lp)
    rows = {lp_name(t): ({lp_name(c): v for c, v in coefs.items()}, rel, rhs)
            for t, (coefs, rel, rhs) in rows.items()}
    return rows, {lp_name(t): v for t, v in cols.items()}


def highs(lp, binaries):
    A = lp.matrix.toarray()
    lo = np.where([r in (">=", "=") for r in lp.relations], lp.rhs, -np.inf)
    up = np.where([r in ("<=", "=") for r in lp.relations], lp.rhs, np.inf)
    integrality = np.zeros(lp.num_cols)
    integrality[list(binaries)] = 1
    res = milp(lp.min_objective(), constraints=LinearConstraint(A, lo, up),
               bounds=Bounds(lp.lower, lp.upper), integrality=integrality,
               options={"mip_rel_gap": 1e-9})
    assert res.success, res.message
    return lp.evaluate(res.x)


def small_model():
    mb = ModelBuilder("max")
    a = mb.add_var("a[1]", 0, 1, 3.0, binary=True)
    b = mb.add_var("b-2", -math.inf, math.inf, -1.0)
    c = mb.add_var("c", 1.5, 4.0, 2.0)
    mb.add_row("cap:x", {a: 2.0, b: 1.0, c: 1.0}, "<=", 6.0)
    mb.add_row("floor", {b: 1.0}, ">=", -2.0)
    mb.add_row("tie", {a: 1.0, c: -1.0}, "=", -1.0)
    mb.offset = 7.25
    return mb.build(), mb.binary_columns()


def test_round_trip_by_name():
    lp, bins = small_model()
    text = dumps_lp(lp, bins)
    back, back_bins = loads_lp(text)
    assert back.sense == "max" and back.offset == 7.25
    assert renamed(lp) == by_name(back)
    assert {back.col_tags[j] for j in back_bins} == {lp_name(lp.col_tags[j]) for j in bins}
    assert solve_lp(back).objective == pytest.approx(solve_lp(lp).objective)


def test_names_are_legal():
    for tag in ("x[1]", "a:b", "3y", "e1", "c-d", "p^2", "q r"):
        name = lp_name(tag)
        assert not name[0].isdigit() and name[0] not in ".eE"
        assert all(ch not in name for ch in " :[]-^")


def test_parses_hand_written_file():
    text = """\\ a comment
Maximize
 obj: 2 x + 3 y
   - z
Subject To
 c1: x + y
   + z <= 10
 c2: x - y >= -2
 -x + 2 z = 3
Bounds
 0 <= x <= 4
 y <= 5
 z free
Generals
 y
End
"""
    lp, bins = loads_lp(text)
    assert lp.col_tags == ("x", "y", "z")
    assert lp.row_tags == ("c1", "c2", "r2")
    assert lp.relations == ("<=", ">=", "=")
    assert list(lp.upper) == [4.0, 5.0, math.inf]
    assert lp.lower[2] == -math.inf
    assert bins == ()


def test_bad_files_rejected():
    with pytest.raises(LpFormatError):
        loads_lp("x + y <= 3\nEnd\n")
    with pytest.raises(LpFormatError):
        loads_lp("Minimize\n obj: x\nSubject To\n c: x + y\nEnd\n")


def test_generic_model_families(tmp_path):
    p = PlayerSpec("a", ["x"], ["y"], [0.0], [1.0], a=[[-1.0]], A=[[1.0]], b=[0.0],
                   cost_x=[-1.0])
    model = build_mopbqe(BinaryGame([p]))
    path = tmp_path / "one.lp"
    emit_model(model, path)
    lp, _ = read_lp(path)
    fams = {family_of(t) for t in lp.row_tags}
    assert fams == {lp_name(f) for f in (
        "state-kkt:stationarity", "state-kkt:feasibility", "state-kkt:complementarity",
        "incentive", "gating", "translation")}


def test_market_model_file(tmp_path):
    model = build_market_game(six_node_instance(), "game-theoretic")
    path = tmp_path / "six.lp"
    emit_model(model, path)
    lp, bins = read_lp(path)
    assert len(bins) == 122
    assert all(family_of(t) for t in lp.row_tags)
    assert renamed(model.lp)[1] == by_name(lp)[1]


@pytest.mark.slow
def test_external_solver_agrees(tmp_path):
    model = build_market_game(six_node_instance(), "game-theoretic")
    path = tmp_path / "six.lp"
    emit_model(model, path)
    lp, bins = read_lp(path)
    assert highs(lp, bins) == pytest.approx(-2975.0, abs=1e-4)
