"""Reading and writing the CPLEX LP text format.

Row names are ``family|tag`` so that every row in an emitted file can be
traced to the part of the model that produced it.  Characters the format
does not allow in names are mapped to close substitutes.
"""
from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np
from scipy import sparse

from .lp import LinearProgram

_SUBST = str.maketrans({":": "/", "-": "_", "[": "(", "]": ")", " ": "_", "+": "p",
                        "*": "x", "<": "lt", ">": "gt", "=": "eq", "^": "_"})
_OK = re.compile(r"[A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]+")
_REL = {"<=": "<=", ">=": ">=", "=": "="}
_CONST = "\\ objective constant:"


def lp_name(tag: str) -> str:
    """A legal LP-format name for ``tag``."""
    name = str(tag).translate(_SUBST)
    name = "".join(ch if _OK.fullmatch(ch) else "_" for ch in name)
    if not name or name[0].isdigit() or name[0] in ".eE":
        name = "_" + name
    return name


def _unique(names):
    seen: dict = {}
    out = []
    for n in names:
        k = seen.get(n, 0)
        seen[n] = k + 1
        out.append(n if k == 0 else f"{n}~{k}")
    return out


def _num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _terms(pairs, width=80):
    lines, cur = [], ""
    for k, (coef, name) in enumerate(pairs):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        piece = f"{sign} {name}" if mag == 1.0 else f"{sign} {_num(mag)} {name}"
        if k == 0 and sign == "+":
            piece = piece[2:]
        if cur and len(cur) + len(piece) + 1 > width:
            lines.append(cur)
            cur = piece
        else:
            cur = f"{cur} {piece}" if cur else piece
    lines.append(cur)
    return lines


def dumps_lp(lp: LinearProgram, binaries=(), families: dict | None = None,
             title: str = "") -> str:
    """Render ``lp`` as LP text.  ``families`` maps row tags to family names."""
    cols = _unique([lp_name(t) for t in lp.col_tags])
    fam = families or {}
    rows = _unique([lp_name(f"{fam[t]}|{t}" if t in fam else t) for t in lp.row_tags])
    out = []
    if title:
        out.append(f"\\ {title}")
    if lp.offset:
        out.append(f"{_CONST} {_num(lp.offset)}")
    out.append("Minimize" if lp.sense == "min" else "Maximize")
    obj = [(c, cols[j]) for j, c in enumerate(lp.objective) if c != 0.0] or [(0.0, cols[0])]
    body = _terms(obj)
    out.append(" obj: " + body[0])
    out.extend("   " + b for b in body[1:])
    out.append("Subject To")
    A = lp.matrix.tocsr()
    for r in range(lp.num_rows):
        seg = slice(A.indptr[r], A.indptr[r + 1])
        pairs = [(v, cols[j]) for j, v in zip(A.indices[seg], A.data[seg]) if v != 0.0]
        if not pairs:
            pairs = [(0.0, cols[0])]
        body = _terms(pairs)
        body[-1] += f" {_REL[lp.relations[r]]} {_num(lp.rhs[r])}"
        out.append(f" {rows[r]}: " + body[0])
        out.extend("   " + b for b in body[1:])
    out.append("Bounds")
    bset = set(binaries)
    for j in range(lp.num_cols):
        lo, up = lp.lower[j], lp.upper[j]
        if j in bset and lo == 0.0 and up == 1.0:
            continue
        n = cols[j]
        if lo == -math.inf and up == math.inf:
            out.append(f" {n} free")
        elif lo == up:
            out.append(f" {n} = {_num(lo)}")
        elif lo == 0.0 and up == math.inf:
            continue
        else:
            out.append(f" {_num(lo)} <= {n} <= {_num(up)}")
    if bset:
        out.append("Binaries")
        names = [cols[j] for j in sorted(bset)]
        for k in range(0, len(names), 8):
            out.append(" " + " ".join(names[k:k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(path, lp: LinearProgram, binaries=(), families=None, title: str = "") -> None:
    Path(path).write_text(dumps_lp(lp, binaries, families, title))


def emit_model(model, path, title: str = "") -> None:
    """Write an equilibrium-selection model with its row families."""
    write_lp(path, model.lp, model.problem.binaries, model.families,
             title or f"{model.binary_count()} binary columns")


def family_of(row_name: str) -> str | None:
    """Family part of an emitted row name, or None for untagged rows."""
    return row_name.split("|", 1)[0] if "|" in row_name else None


class LpFormatError(ValueError):
    pass


_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "minimum": "obj", "min": "obj",
    "maximize": "obj", "maximise": "obj", "maximum": "obj", "max": "obj",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_TOKEN = re.compile(r"\s*(<=|>=|=<|=>|=|<|>|[+-]|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?![^\s+\-<>=])"
                    r"|[^\s+\-<>=]+)")


def _tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        out.append(m.group(1))
        pos = m.end()
    return out


def _number(tok):
    try:
        return float(tok)
    except ValueError:
        return None


def _linear(tokens, where):
    """Parse ``[+|-] [coef] name ...`` into a list of (coef, name)."""
    terms, sign, coef = [], 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -sign if tok == "-" else sign
            continue
        v = _number(tok)
        if v is not None and coef is None:
            coef = v
            continue
        if v is not None:
            raise LpFormatError(f"{where}: two numbers in a row")
        terms.append((sign * (1.0 if coef is None else coef), tok))
        sign, coef = 1.0, None
    if coef is not None:
        terms.append((sign * coef, None))
    return terms


def loads_lp(text: str) -> tuple:
    """Parse LP text; returns ``(LinearProgram, binary column indices)``."""
    offset = 0.0
    sense = "min"
    section = None
    chunks: dict = {"obj": [], "rows": [], "bounds": [], "bin": [], "gen": []}
    for raw in text.splitlines():
        if raw.startswith(_CONST):
            offset = float(raw[len(_CONST):])
            continue
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "obj":
                sense = "max" if key.startswith("max") else "min"
            if section == "end":
                break
            continue
        if section is None:
            raise LpFormatError(f"text before the objective section: {line!r}")
        chunks[section].append(line)

    cols: dict = {}

    def col(name):
        if name not in cols:
            cols[name] = len(cols)
        return cols[name]

    obj_text = " ".join(chunks["obj"])
    head = obj_text.split(":", 1)
    if len(head) == 2 and " " not in head[0].strip():
        obj_text = head[1]
    cost: dict = {}
    for c, name in _linear(_tokens(obj_text), "objective"):
        if name is None:
            offset += c
        else:
            cost[col(name)] = cost.get(col(name), 0.0) + c

    # constraints may span lines; a row ends at its right-hand side
    rows, buf = [], []
    for line in chunks["rows"]:
        buf.append(line)
        toks = _tokens(" ".join(buf))
        if any(t in ("<=", ">=", "=<", "=>", "=", "<", ">") for t in toks) and \
                _number(toks[-1]) is not None:
            rows.append(" ".join(buf))
            buf = []
    if buf:
        raise LpFormatError(f"unterminated constraint: {' '.join(buf)!r}")
    row_tags, rel, rhs, data, ri, ci = [], [], [], [], [], []
    for k, text_row in enumerate(rows):
        name = f"r{k}"
        if ":" in text_row:
            head, rest = text_row.split(":", 1)
            if head.strip() and " " not in head.strip():
                name, text_row = head.strip(), rest
        toks = _tokens(text_row)
        op = next(i for i, t in enumerate(toks) if t in ("<=", ">=", "=<", "=>", "=", "<", ">"))
        relation = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(toks[op], toks[op])
        val = _number("".join(toks[op + 1:]))
        if val is None:
            raise LpFormatError(f"row {name}: bad right-hand side")
        terms = _linear(toks[:op], f"row {name}")
        r = len(row_tags)
        row_tags.append(name)
        rel.append(relation)
        shift = 0.0
        for c, v in terms:
            if v is None:
                shift += c
            elif c != 0.0:
                data.append(c)
                ri.append(r)
                ci.append(col(v))
        rhs.append(val - shift)

    bounds: dict = {}
    for line in chunks["bounds"]:
        toks = line.split()
        low = line.lower()
        if len(toks) == 2 and toks[1].lower() == "free":
            bounds[toks[0]] = (-math.inf, math.inf)
            col(toks[0])
            continue
        parts = re.split(r"\s*(<=|>=|=)\s*", line.strip())
        if len(parts) == 5 and parts[1] == parts[3] == "<=":
            bounds[parts[2]] = (_bound(parts[0]), _bound(parts[4]))
        elif len(parts) == 3:
            a, op, b = parts
            if _number(a) is None and a.lower() not in ("inf", "-inf", "+inf", "infinity",
                                                          "-infinity"):
                name, val, flip = a, _bound(b), False
            else:
                name, val, flip = b, _bound(a), True
            lo, up = bounds.get(name, (0.0, math.inf))
            if op == "=":
                lo = up = val
            elif (op == "<=") != flip:
                up = val
            else:
                lo = val
            bounds[name] = (lo, up)
        else:
            raise LpFormatError(f"cannot read bound {low!r}")
        col(parts[2] if len(parts) == 5 else name)
    binaries = []
    for line in chunks["bin"]:
        for name in line.split():
            binaries.append(col(name))
            bounds.setdefault(name, (0.0, 1.0))
            lo, up = bounds[name]
            bounds[name] = (max(lo, 0.0), min(up, 1.0))
    for line in chunks["gen"]:
        for name in line.split():
            col(name)

    names = sorted(cols, key=cols.get)
    n = len(names)
    lower = np.array([bounds.get(nm, (0.0, math.inf))[0] for nm in names])
    upper = np.array([bounds.get(nm, (0.0, math.inf))[1] for nm in names])
    objective = np.zeros(n)
    for j, c in cost.items():
        objective[j] = c
    matrix = sparse.csr_matrix((data, (ri, ci)), shape=(len(row_tags), n))
    lp = LinearProgram(tuple(names), lower, upper, objective, matrix, tuple(rel),
                       np.array(rhs, dtype=float), tuple(row_tags), sense, offset)
    return lp, tuple(sorted(set(binaries)))


def _bound(tok: str) -> float:
    t = tok.strip().lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(t)


def read_lp(path) -> tuple:
    return loads_lp(Path(path).read_text())
