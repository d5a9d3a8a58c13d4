"""Disjunctive (big-M) rendering of complementarity pairs and model provenance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .lp import ModelBuilder


@dataclass
class TaggedBuilder:
    """A :class:`ModelBuilder` that also records the family of every row."""

    builder: ModelBuilder
    families: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def row(self, family: str, tag: str, coefs, relation: str, rhs: float) -> int:
        r = self.builder.add_row(tag, coefs, relation, rhs)
        self.families[tag] = family
        return r

    def var(self, tag: str, lower=0.0, upper=math.inf, cost=0.0, binary=False) -> int:
        return self.builder.add_var(tag, lower, upper, cost, binary)

    def complementarity(self, family: str, tag: str, slack: dict, constant: float,
                        dual: int, slack_bound: float, dual_bound: float,
                        enforce_slack: bool = True) -> int:
        """Add ``0 <= constant + slack.x  _|_  dual >= 0`` as disjunctive rows.

        ``slack_bound`` and ``dual_bound`` are valid upper bounds on the two
        sides; a fresh binary ``u`` switches between ``slack <= M u`` and
        ``dual <= M (1 - u)``.  Returns the binary column.
        """
        if not (math.isfinite(slack_bound) and math.isfinite(dual_bound)):
            raise ValueError(f"complementarity {tag!r} needs finite bounds on both sides")
        u = self.var(f"{tag}:switch", 0.0, 1.0, binary=True)
        if enforce_slack:
            self.row(family + ":feasibility", f"{tag}:feas", slack, ">=", -constant)
        lhs = dict(slack)
        lhs[u] = lhs.get(u, 0.0) - slack_bound
        self.row(family + ":complementarity", f"{tag}:slack-off", lhs, "<=", -constant)
        self.row(family + ":complementarity", f"{tag}:dual-off", {dual: 1.0, u: dual_bound},
                 "<=", dual_bound)
        self.pairs.append((tag, dict(slack), constant, dual, u))
        return u


def provenance_dump(lp, families: dict) -> str:
    """One line per row: tag, family, relation and right-hand side."""
    width = max((len(t) for t in lp.row_tags), default=0)
    lines = []
    for r, tag in enumerate(lp.row_tags):
        lines.append(f"{tag:<{width}}  {families.get(tag, '?'):<40}  {lp.relations[r]:>2} {lp.rhs[r]:g}")
    return "\n".join(lines) + "\n"
