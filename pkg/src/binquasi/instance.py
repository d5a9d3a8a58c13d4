"""Reading and writing market instance files.

An instance file is a YAML document with a versioned ``schema`` header and
the sections ``nodes``, ``lines``, ``generators``, ``loads`` and
``timeseries``.  Field names follow the usual unit-commitment notation::

    schema: binquasi-market/1
    periods: [t1, t2]
    nodes: [{name: n1, slack: true}, {name: n2}]
    lines: [{name: l1, from: n1, to: n2, susceptance: 500, f_max: 300}]
    generators:
      - {name: g1, node: n1, c_G: 24, c_on: 100, c_off: 500,
         g_min: 25, g_max: 50, x_init: 0}
    loads: [{name: d1, node: n2}]
    timeseries:
      u_D: {d1: [25, 20]}
      d_max: {d1: [100, 50]}
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .market import Generator, InstanceError, Line, Load, MarketInstance

SCHEMA = "binquasi-market/1"
SUPPORTED = (SCHEMA,)


class InstanceFileError(ValueError):
    """Parse or semantic error with a location inside the instance file."""

    def __init__(self, source: str, line: int | None, field: str, message: str):
        loc = f"{source}:{line}" if line is not None else source
        super().__init__(f"{loc}: {field}: {message}" if field else f"{loc}: {message}")
        self.line = line
        self.field = field


def _marks(node, path="", out=None):
    """Map dotted field paths to 1-based line numbers."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            sub = f"{path}.{k.value}" if path else str(k.value)
            _marks(v, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _marks(v, f"{path}[{i}]", out)
    return out


def _line_of(marks, field):
    while field:
        if field in marks:
            return marks[field]
        cut = max(field.rfind("."), field.rfind("["))
        field = field[:cut] if cut > 0 else ""
    return marks.get("")


def loads_instance(text: str, source: str = "<string>") -> MarketInstance:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise InstanceFileError(source, line, "", f"parse error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise InstanceFileError(source, 1, "", "document must be a mapping")
    marks = _marks(root)

    def fail(field, message):
        raise InstanceFileError(source, _line_of(marks, field), field, message)

    schema = data.get("schema")
    if schema not in SUPPORTED:
        fail("schema", f"unrecognised schema version {schema!r}; expected {SCHEMA!r}")

    def need(rec, key, where, kind=float):
        if not isinstance(rec, dict):
            fail(where, "entry must be a mapping")
        if key not in rec:
            fail(where, f"missing field {key!r}")
        val = rec[key]
        try:
            if kind is float:
                if isinstance(val, bool):
                    raise TypeError
                return float(val)
            if kind is int:
                if isinstance(val, bool) or int(val) != val:
                    raise TypeError
                return int(val)
            return str(val)
        except (TypeError, ValueError):
            fail(f"{where}.{key}", f"expected {kind.__name__}, got {val!r}")

    periods = data.get("periods")
    if not isinstance(periods, list) or not periods:
        fail("periods", "a non-empty list of period labels is required")
    periods = [str(p) for p in periods]
    nt = len(periods)

    nodes, slack = [], None
    for k, rec in enumerate(data.get("nodes") or []):
        where = f"nodes[{k}]"
        nodes.append(need(rec, "name", where, str))
        if rec.get("slack"):
            if slack is not None:
                fail(where, "more than one slack node")
            slack = nodes[-1]

    lines = []
    for k, rec in enumerate(data.get("lines") or []):
        where = f"lines[{k}]"
        lines.append(Line(need(rec, "name", where, str), need(rec, "from", where, str),
                          need(rec, "to", where, str), need(rec, "susceptance", where),
                          need(rec, "f_max", where)))

    gens = []
    for k, rec in enumerate(data.get("generators") or []):
        where = f"generators[{k}]"
        gens.append(Generator(need(rec, "name", where, str), need(rec, "node", where, str),
                              need(rec, "c_G", where), need(rec, "c_on", where),
                              need(rec, "c_off", where), need(rec, "g_min", where),
                              need(rec, "g_max", where), need(rec, "x_init", where, int)))

    series = data.get("timeseries") or {}
    if not isinstance(series, dict):
        fail("timeseries", "must be a mapping")
    loads = []
    for k, rec in enumerate(data.get("loads") or []):
        where = f"loads[{k}]"
        name = need(rec, "name", where, str)
        cols = {}
        for key in ("u_D", "d_max"):
            vals = (series.get(key) or {}).get(name)
            field = f"timeseries.{key}.{name}"
            if not isinstance(vals, list) or len(vals) != nt:
                fail(field if vals is not None else "timeseries",
                     f"{key} of load {name!r} needs {nt} values, one per period")
            try:
                cols[key] = tuple(float(v) for v in vals)
            except (TypeError, ValueError):
                fail(field, "values must be numbers")
        loads.append(Load(name, need(rec, "node", where, str), cols["u_D"], cols["d_max"]))

    try:
        return MarketInstance(nodes, lines, gens, loads, periods, slack=slack,
                              name=str(data.get("name", "")))
    except InstanceError as exc:
        fail(exc.where, str(exc).split(": ", 1)[1])


def load_instance(path) -> MarketInstance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceFileError(str(path), None, "", f"cannot read file: {exc.strerror}") from None
    return loads_instance(text, str(path))


def dumps_instance(inst: MarketInstance) -> str:
    doc = {
        "schema": SCHEMA,
        "name": inst.name,
        "periods": list(inst.periods),
        "nodes": [{"name": n, **({"slack": True} if n == inst.slack else {})} for n in inst.nodes],
        "lines": [{"name": l.name, "from": l.start, "to": l.end,
                   "susceptance": l.susceptance, "f_max": l.capacity} for l in inst.lines],
        "generators": [{"name": g.name, "node": g.node, "c_G": g.cost, "c_on": g.startup,
                        "c_off": g.shutdown, "g_min": g.gmin, "g_max": g.gmax,
                        "x_init": g.initial} for g in inst.generators],
        "loads": [{"name": d.name, "node": d.node} for d in inst.loads],
        "timeseries": {
            "u_D": {d.name: list(d.utility) for d in inst.loads},
            "d_max": {d.name: list(d.dmax) for d in inst.loads},
        },
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def save_instance(inst: MarketInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def bundled_instance_path(name: str = "six_node") -> Path:
    return Path(__file__).with_name("data") / f"{name}.yaml"


def six_node_instance() -> MarketInstance:
    return load_instance(bundled_instance_path("six_node"))


def random_instance(rng, max_binaries: int = 14, nodes=(2, 3), periods=(1, 2)) -> MarketInstance:
    """Small random market for property tests.

    ``rng`` is a ``numpy.random.Generator`` or a seed.  Costs, capacities and
    utilities are drawn so that congestion and unit minimums bind often.
    """
    import numpy as np

    rng = np.random.default_rng(rng)
    nn = int(rng.integers(nodes[0], nodes[1] + 1))
    nt = int(rng.integers(periods[0], periods[1] + 1))
    ng = int(rng.integers(2, max(2, min(5, max_binaries // nt)) + 1))
    names = [f"n{k + 1}" for k in range(nn)]
    pairs = [(k, k + 1) for k in range(nn - 1)]
    if nn == 3 and rng.random() < 0.5:
        pairs.append((0, 2))
    lines = [Line(f"l{k + 1}", names[a], names[b], float(rng.choice([100.0, 250.0, 500.0])),
                  float(rng.choice([15.0, 30.0, 60.0, 200.0]))) for k, (a, b) in enumerate(pairs)]
    gens = []
    for k in range(ng):
        gmin = float(rng.choice([0.0, 5.0, 10.0, 20.0]))
        gens.append(Generator(f"g{k + 1}", names[int(rng.integers(nn))],
                              float(rng.integers(5, 40)), float(rng.choice([0.0, 20.0, 100.0])),
                              float(rng.choice([0.0, 10.0, 50.0])), gmin,
                              gmin + float(rng.choice([10.0, 25.0, 50.0])),
                              int(rng.integers(0, 2))))
    loads = []
    for k in range(int(rng.integers(1, 3))):
        loads.append(Load(f"d{k + 1}", names[int(rng.integers(nn))],
                          tuple(float(rng.integers(15, 60)) for _ in range(nt)),
                          tuple(float(rng.choice([20.0, 40.0, 80.0])) for _ in range(nt))))
    return MarketInstance(names, lines, gens, loads, [f"t{k + 1}" for k in range(nt)],
                          slack=names[0], name="random")
