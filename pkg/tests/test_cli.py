import subprocess
import sys

import numpy as np
import pytest
import yaml

from binquasi import cli
from binquasi.cli import EquilibriumReport, RunConfig, exit_code, main, render_tables, run
from binquasi.instance import (InstanceFileError, bundled_instance_path, dumps_instance,
                               load_instance, loads_instance, random_instance, save_instance)
from binquasi.market import build_network_matrices

TOY = """
schema: binquasi-market/1
name: toy
periods: [t1]
nodes:
- {name: a}
lines: []
generators:
- {name: g, node: a, c_G: 10, c_on: 30, c_off: 0, g_min: 5, g_max: 20, x_init: 0}
loads:
- {name: d, node: a}
timeseries:
  u_D: {d: [25]}
  d_max: {d: [15]}
"""


def toy_file(tmp_path, text=TOY):
    path = tmp_path / "toy.yaml"
    path.write_text(text)
    return path


def test_bundled_instance():
    inst = load_instance(bundled_instance_path())
    assert len(inst.nodes) == 6 and len(inst.generators) == 9 and len(inst.loads) == 4
    caps = sorted(ln.capacity for ln in inst.lines)
    assert caps[:2] == [20.0, 20.0] and set(caps[2:]) == {300.0}


def test_instance_round_trip(tmp_path):
    for inst in (load_instance(bundled_instance_path()), random_instance(11)):
        path = tmp_path / "copy.yaml"
        save_instance(inst, path)
        assert load_instance(path) == inst


def test_empty_generator_list_rejected():
    doc = yaml.safe_load(TOY)
    doc["generators"] = []
    with pytest.raises(InstanceFileError) as err:
        loads_instance(yaml.safe_dump(doc))
    assert "generators" in str(err.value)


def test_unknown_node_located():
    with pytest.raises(InstanceFileError) as err:
        loads_instance(TOY.replace("node: a, c_G", "node: zz, c_G"), "toy.yaml")
    assert err.value.line == 9
    assert "zz" in str(err.value)


def test_schema_checked():
    with pytest.raises(InstanceFileError):
        loads_instance(TOY.replace("binquasi-market/1", "binquasi-market/9"))
    with pytest.raises(InstanceFileError):
        loads_instance("nodes: [a\n")


def test_large_instance_loads(tmp_path):
    rng = np.random.default_rng(0)
    nodes = [f"n{k}" for k in range(48)]
    edges = [(int(rng.integers(k)), k) for k in range(1, 48)]
    while len(edges) < 79:
        a, b = sorted(rng.choice(48, 2, replace=False).tolist())
        if (a, b) not in edges:
            edges.append((a, b))
    periods = [f"d{d}h{2 * h:02d}" for d in range(7) for h in range(12)]
    doc = {
        "schema": "binquasi-market/1", "name": "synthetic", "periods": periods,
        "nodes": [{"name": n} for n in nodes],
        "lines": [{"name": f"l{k}", "from": nodes[a], "to": nodes[b], "susceptance": 100.0,
                   "f_max": float(rng.integers(100, 1000))} for k, (a, b) in enumerate(edges)],
        "generators": [{"name": f"g{k}", "node": nodes[int(rng.integers(48))],
                        "c_G": float(rng.integers(5, 80)), "c_on": 1000.0, "c_off": 200.0,
                        "g_min": 50.0, "g_max": 400.0, "x_init": int(rng.integers(2))}
                       for k in range(64)],
        "loads": [{"name": f"d{k}", "node": n} for k, n in enumerate(nodes)],
        "timeseries": {
            "u_D": {f"d{k}": [100.0] * len(periods) for k in range(48)},
            "d_max": {f"d{k}": rng.uniform(50, 300, len(periods)).round(1).tolist()
                      for k in range(48)},
        },
    }
    path = tmp_path / "big.yaml"
    path.write_text(yaml.safe_dump(doc))
    inst = load_instance(path)
    assert (len(inst.nodes), len(inst.generators), len(inst.lines), len(inst.periods)) == \
        (48, 64, 79, 84)
    B, H = build_network_matrices(inst)
    assert B.shape == (48, 48) and H.shape == (79, 48)
    assert loads_instance(dumps_instance(inst)) == inst


def test_toy_with_oracle(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["solve", str(toy_file(tmp_path)), "--oracle", "--out", str(out),
                 "--format", "md", "--format", "csv"])
    assert code == 0
    summary = (out / "summary.csv").read_text()
    assert "verified" in summary
    assert (out / "oracle-game-theoretic.csv").exists()
    for name in ("summary", "rents", "dispatch", "deviations"):
        assert (out / f"{name}.md").exists() and (out / f"{name}.csv").exists()


def test_usage_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.yaml")]) == 1
    assert "cannot read" in capsys.readouterr().err
    assert main(["solve", str(toy_file(tmp_path)), "--rule", "bogus"]) == 1
    assert main([]) == 1
    assert main(["solve", str(toy_file(tmp_path)), "--comp-weight", "-1"]) == 1


def test_emit_model(tmp_path):
    path = tmp_path / "m" / "toy.lp"
    assert main(["solve", str(toy_file(tmp_path)), "--rule", "all", "--emit-model", str(path),
                 "--out", str(tmp_path / "o")]) == 0
    for rule in ("game-theoretic", "no-loss", "no-loss-active"):
        assert (tmp_path / "m" / f"toy.{rule}.lp").exists()


def test_node_limit_exit_code():
    res = run(RunConfig(bundled_instance_path(), node_limit=20))
    assert res.reports[0].status in ("feasible-gap", "infeasible-undecided")
    assert res.exit_code == 2


def fake(status, oracle=None):
    return EquilibriumReport("game-theoretic", status, 0.0, 0.0, 0.0, 1, 0.0, 0, oracle=oracle)


def test_exit_code_table():
    assert exit_code([fake("optimal")]) == 0
    assert exit_code([fake("optimal"), fake("feasible-gap")]) == 2
    assert exit_code([fake("infeasible-undecided")]) == 2
    assert exit_code([fake("infeasible"), fake("feasible-gap")]) == 3
    assert exit_code([fake("optimal", "mismatch: x"), fake("infeasible")]) == 4


def test_oracle_mismatch_is_fatal(tmp_path, monkeypatch, capsys):
    real = cli.enumerate_quasi_equilibria

    def skewed(*args, **kw):
        res = real(*args, **kw)
        best = res.ranked[0]
        res.ranked[0] = type(best)(**{**best.__dict__, "objective": best.objective - 1.0})
        return res

    monkeypatch.setattr(cli, "enumerate_quasi_equilibria", skewed)
    assert main(["solve", str(toy_file(tmp_path)), "--oracle"]) == 4
    assert "mismatch" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig("x", rules=())
    with pytest.raises(ValueError):
        RunConfig("x", gap_tol=-1.0)
    assert RunConfig("x", rules="all").rules == ("game-theoretic", "no-loss", "no-loss-active")


def test_rendering_is_idempotent(tmp_path):
    res = run(RunConfig(toy_file(tmp_path), rules="all", formats=("md", "csv")))
    again = render_tables(res.instance, res.reports, ("md", "csv"))
    assert again == res.tables


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "binquasi", "solve", str(toy_file(tmp_path))],
                          capture_output=True, text=True, env={"BINQUASI_LOG": "INFO",
                                                               "PATH": ""})
    assert proc.returncode == 0
    assert "## summary.md" in proc.stdout
    assert "INFO binquasi" in proc.stderr


@pytest.mark.slow
def test_six_node_tables(tmp_path):
    res = run(RunConfig(bundled_instance_path(), rules=("game-theoretic", "no-loss-active")))
    assert res.exit_code == 0
    gt, nla = res.reports
    assert gt.objective == pytest.approx(2975.0, abs=1e-4)
    assert gt.solution.y.sum(axis=1) == pytest.approx([240.0, 190.0])
    assert nla.solution.schedule("g3") == (1, 1) and nla.solution.schedule("g4") == (1, 0)
    assert gt.binaries == 122
    dispatch = res.tables["dispatch.md"]
    assert "| Total dispatch |" in dispatch and "240" in dispatch
