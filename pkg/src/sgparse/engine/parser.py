"""Memoized probabilistic top-down parser."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..grammar.ast import Grammar
from ..grammar.check import validate
from ..semtree import SemTree, linearize
from .actions import ActionError, replay, to_exr
from .compiled import GrammarError, LeftRecursionError, compile_grammar
from .derivation import Derivation, make
from .top import TopError, value_to_top

log = logging.getLogger(__name__)

DEFAULT_CAP = 64


class NoParse(LookupError):
    pass


@dataclass(frozen=True)
class ParseItem:
    exr: Optional[SemTree]
    derivation: Derivation
    prob: float


@dataclass
class ParseResult:
    """Ranked parses, best first."""

    items: list = field(default_factory=list)
    # True when the ambiguity cap dropped derivations somewhere
    truncated: bool = False
    action_failures: int = 0

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __bool__(self):
        return bool(self.items)

    def best(self) -> ParseItem:
        if not self.items:
            raise NoParse("no derivation covers the input")
        return self.items[0]


class _Runtime:
    def __init__(self, defs, catalogs, tokens, memo: bool, cap: Optional[int]):
        self.defs = defs
        self.catalogs = catalogs
        self.tokens = tokens
        self.memo = {} if memo else None
        self.active: set = set()
        self.cap = cap
        self.truncated = False

    def call(self, name: str, pos: int):
        key = (name, pos)
        memo = self.memo
        if memo is not None:
            hit = memo.get(key)
            if hit is not None:
                return hit
        if key in self.active:
            raise LeftRecursionError(f"{name!r} re-entered at token {pos} without consuming input")
        self.active.add(key)
        try:
            found = self.defs[name].body.match(self, pos)
        finally:
            self.active.discard(key)
        found = self.prune(found, key=lambda t: (t[0], -t[1].prob, t[1].size))
        if memo is not None:
            memo[key] = found
        return found

    def prune(self, items: list, key) -> list:
        """Stable sort by ``key`` (end first) and keep ``cap`` per end."""
        items.sort(key=key)
        if self.cap is None:
            return items
        out = []
        last_end = None
        kept = 0
        for it in items:
            if it[0] != last_end:
                last_end = it[0]
                kept = 0
            if kept < self.cap:
                out.append(it)
                kept += 1
            else:
                self.truncated = True
        return out


class Parser:
    """Parse token sequences with a fixed grammar and catalogs.

    ``cap`` bounds the derivations kept per (definition, start, end); pass
    ``None`` for no bound.  ``memo=False`` disables the memo table, which
    only exists to check that memoization does not change results.
    """

    def __init__(self, grammar: Grammar, catalogs: Optional[dict] = None, *,
                 cap: Optional[int] = DEFAULT_CAP, memo: bool = True,
                 on_action_error: str = "raise", check: bool = True):
        if on_action_error not in ("raise", "skip"):
            raise ValueError("on_action_error must be 'raise' or 'skip'")
        if cap is not None and cap < 1:
            raise ValueError("cap must be positive")
        self.catalogs = dict(catalogs or {})
        if check:
            problems = validate(grammar, self.catalogs)
            if problems:
                raise GrammarError(problems)
        self.grammar = grammar
        self.defs = compile_grammar(grammar)
        self.cap = cap
        self.memo = memo
        self.on_action_error = on_action_error

    def derivations(self, tokens: Sequence[str]) -> tuple[list, bool]:
        """All full-span derivations of the start machine, and the truncation flag."""
        tokens = list(tokens)
        rt = _Runtime(self.defs, self.catalogs, tokens, self.memo, self.cap)
        found = rt.call(self.grammar.start, 0)
        n = len(tokens)
        out = [
            make("ref", 0, end, (d,), name=self.grammar.start, payload=())
            for end, d in found if end == n
        ]
        if rt.truncated:
            log.warning("ambiguity cap %s reached while parsing %r", self.cap, " ".join(tokens))
        return out, rt.truncated

    def parse(self, tokens: Sequence[str], top_k: Optional[int] = 10,
              replay: bool = True) -> ParseResult:
        if top_k is not None and top_k < 1:
            raise ValueError("top_k must be positive")
        ders, truncated = self.derivations(tokens)
        ranked = []
        failures = 0
        for d in ders:
            exr = None
            if replay:
                try:
                    exr = self.exr(d)
                except ActionError:
                    if self.on_action_error == "raise":
                        raise
                    failures += 1
                    continue
            ranked.append((d, exr, linearize(exr) if exr is not None else ""))
        ranked.sort(key=lambda t: (-t[0].prob, t[0].size, t[2]))
        if top_k is not None:
            ranked = ranked[:top_k]
        items = [ParseItem(exr, d, d.prob) for d, exr, _ in ranked]
        return ParseResult(items, truncated, failures)

    def exr(self, d: Derivation) -> SemTree:
        return to_exr(replay(d, self.defs))

    def top(self, d: Derivation, tokens: Sequence[str]):
        return derivation_to_top(d, self.grammar, tokens, defs=self.defs, catalogs=self.catalogs)


def parse(grammar: Grammar, catalogs: Optional[dict], tokens: Sequence[str],
          top_k: Optional[int] = 10, **options) -> ParseResult:
    replay_actions = options.pop("replay", True)
    return Parser(grammar, catalogs, **options).parse(tokens, top_k, replay=replay_actions)


def derivation_to_top(d: Derivation, grammar: Grammar, tokens: Sequence[str], defs=None,
                      catalogs: Optional[dict] = None):
    """TOP tree for a full derivation of ``tokens``.

    With ``catalogs`` the catalog matches are checked against the tokens too.
    """
    if d.start != 0 or d.end != len(tokens):
        raise TopError(f"derivation spans {d.span} but the input has {len(tokens)} tokens")
    for node in d.walk():
        if node.kind == "term" and list(tokens[node.start:node.end]) != node.name.split():
            raise TopError(f"terminal {node.name!r} does not match tokens at {node.start}")
        if node.kind == "catalog" and catalogs is not None:
            cat = catalogs.get(node.name)
            phrase = list(tokens[node.start:node.end])
            if cat is None or node.entity not in dict(cat.match_phrase(phrase)):
                raise TopError(f"{' '.join(phrase)!r} is not a {node.name} alias of {node.entity}")
    if defs is None:
        defs = compile_grammar(grammar)
    root = replay(d, defs)
    return value_to_top(root, list(tokens))
