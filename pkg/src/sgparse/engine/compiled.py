"""Grammar compilation into matcher objects and branch probability tables."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from ..grammar.ast import (
    Action, Alt, CatalogRef, Epsilon, Grammar, Ref, Seq, Terminal,
)
from .derivation import Derivation, make


class LeftRecursionError(RuntimeError):
    pass


class GrammarError(ValueError):
    """Raised when a grammar fails validation; ``diagnostics`` lists why."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def branch_probabilities(grammar: Grammar, counts: Optional[dict] = None) -> Grammar:
    """Attach per-Alt branch probabilities to ``grammar``.

    For each alternation the source is, in order of preference: ``counts``
    (keyed ``(definition, alt_index, branch)``, or ``(definition, branch)``
    for the first Alt of a definition), declared weights, uniform.
    """
    table = {}
    for (name, idx), alt in grammar.alts.items():
        k = len(alt.branches)
        row = None
        if counts:
            got = []
            found = False
            for b in range(k):
                key = (name, idx, b)
                if key in counts:
                    found = True
                    got.append(counts[key])
                elif idx == 0 and (name, b) in counts:
                    found = True
                    got.append(counts[(name, b)])
                else:
                    got.append(0)
            if found:
                if any(c < 0 for c in got):
                    raise ValueError(f"negative count for alternation {name}#{idx}")
                total = sum(got)
                if total == 0:
                    raise ValueError(f"all counts are zero for alternation {name}#{idx}")
                row = tuple(c / total for c in got)
        if row is None and alt.weights is not None:
            total = sum(alt.weights)
            row = tuple(w / total for w in alt.weights)
        if row is None:
            row = tuple(1.0 / k for _ in range(k))
        table[(name, idx)] = row
    return dataclasses.replace(grammar, probs=table)


def probability_table(grammar: Grammar) -> dict:
    if grammar.probs is not None:
        return grammar.probs
    return branch_probabilities(grammar).probs


# -- matchers ----------------------------------------------------------------
#
# Each matcher's match(rt, pos) returns a list of (end, Derivation).  ``rt``
# is the per-call runtime holding tokens, catalogs, memo table and cap.


class CTerm:
    __slots__ = ("text", "words", "n")

    def __init__(self, text: str):
        self.text = text
        self.words = list(text.split())
        self.n = len(self.words)

    def match(self, rt, pos):
        if rt.tokens[pos:pos + self.n] == self.words:
            return [(pos + self.n, make("term", pos, pos + self.n, name=self.text))]
        return []


class CEps:
    __slots__ = ()

    def match(self, rt, pos):
        return [(pos, make("eps", pos, pos))]


class CAction:
    __slots__ = ("fun",)

    def __init__(self, fun):
        self.fun = fun

    def match(self, rt, pos):
        return [(pos, make("action", pos, pos, payload=self.fun))]


class CCatalog:
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def match(self, rt, pos):
        if pos >= len(rt.tokens):
            return []
        cat = rt.catalogs.get(self.name)
        if cat is None:
            raise KeyError(f"no catalog named {self.name!r}")
        return [
            (end, make("catalog", pos, end, name=self.name, entity=ent, factor=p))
            for end, ent, p in cat.lookup(rt.tokens, pos)
        ]


class CRef:
    __slots__ = ("name", "args")

    def __init__(self, name: str, args: tuple):
        self.name = name
        self.args = args

    def match(self, rt, pos):
        body = rt.call(self.name, pos)
        return [
            (end, make("ref", pos, end, (d,), name=self.name, payload=self.args))
            for end, d in body
        ]


class CSeq:
    __slots__ = ("items",)

    def __init__(self, items):
        self.items = items

    def match(self, rt, pos):
        # partial = (end, children, prob, size)
        partials = [(pos, (), 1.0, 1)]
        for item in self.items:
            by_start: dict = {}
            nxt = []
            for end, children, p, s in partials:
                got = by_start.get(end)
                if got is None:
                    got = by_start[end] = item.match(rt, end)
                for e2, d in got:
                    nxt.append((e2, children + (d,), p * d.prob, s + d.size))
            if not nxt:
                return []
            partials = rt.prune(nxt, key=lambda t: (t[0], -t[2], t[3]))
        return [
            (end, _seq(pos, end, children, p, s))
            for end, children, p, s in partials
        ]


def _seq(start, end, children, prob, size):
    return Derivation("seq", start, end, children, prob=prob, size=size)


class CAlt:
    __slots__ = ("alt_id", "branches", "probs")

    def __init__(self, alt_id, branches, probs):
        self.alt_id = alt_id
        self.branches = branches
        self.probs = probs

    def match(self, rt, pos):
        out = []
        for i, branch in enumerate(self.branches):
            f = self.probs[i]
            if f <= 0.0:
                continue
            for end, d in branch.match(rt, pos):
                out.append((end, make("alt", pos, end, (d,), factor=f, alt=self.alt_id, choice=i)))
        return out


@dataclass(frozen=True)
class CDef:
    name: str
    params: tuple
    body: object


def compile_grammar(grammar: Grammar) -> dict[str, CDef]:
    probs = probability_table(grammar)
    out = {}
    for d in grammar.definitions:
        counter = [0]
        out[d.name] = CDef(d.name, d.params, _compile(d.body, d.name, counter, probs))
    return out


def _compile(e, name, counter, probs):
    if isinstance(e, Terminal):
        return CTerm(e.text)
    if isinstance(e, Epsilon):
        return CEps()
    if isinstance(e, Action):
        return CAction(e.fun)
    if isinstance(e, CatalogRef):
        return CCatalog(e.name)
    if isinstance(e, Ref):
        return CRef(e.name, e.args)
    if isinstance(e, Seq):
        return CSeq([_compile(i, name, counter, probs) for i in e.items])
    if isinstance(e, Alt):
        # preorder numbering, matching grammar.alts
        alt_id = (name, counter[0])
        counter[0] += 1
        branches = [_compile(b, name, counter, probs) for b in e.branches]
        return CAlt(alt_id, branches, probs[alt_id])
    raise TypeError(f"unknown machine expression {e!r}")
