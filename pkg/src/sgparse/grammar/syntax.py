"""Lexer, parser and pretty-printer for ``.sg`` grammar files.

Concrete syntax::

    def push(t) = fun S => t::S
    def succ = fun n::S => n+1::S
    def S = push(0) + "a" * S * "b" * succ

``+`` is alternation, ``*`` is juxtaposition and binds tighter, ``id`` is the
empty string, quoted strings are terminals (a multi-word terminal matches
consecutive tokens) and ``catalog("NAME")`` matches any alias of a catalog.
A branch may carry a weight: ``"a" [3] + "b" [1]``.  ``#`` starts a comment.

The body of a ``fun`` extends as far as possible, so an action used inside a
larger machine expression should be parenthesized.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .ast import (
    Action, Alt, CatalogRef, Definition, EAdd, ECall, ECons, ECtor, EInt,
    ENil, EStr, ESym, EVar, Epsilon, FunClause, Grammar, PCons, PInt, PNil,
    PVar, PWild, Ref, Seq, Terminal,
)

KEYWORDS = {"def", "id", "fun", "catalog"}


class GrammarSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Tok:
    kind: str   # keyword text, punctuation text, "ident", "str", "num", "eof"
    value: object
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>=>|::|[=+*(),\[\]])
    """,
    re.VERBOSE,
)


def lex(source: str) -> list[Tok]:
    toks: list[Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise GrammarSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "str":
            toks.append(Tok("str", json.loads(text), line, col))
        elif kind == "num":
            value = float(text) if any(c in text for c in ".eE") else int(text)
            toks.append(Tok("num", value, line, col))
        elif kind == "ident":
            toks.append(Tok(text if text in KEYWORDS else "ident", text, line, col))
        elif kind == "punct":
            toks.append(Tok(text, text, line, col))
        pos = m.end()
    toks.append(Tok("eof", None, line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.toks = lex(source)
        self.i = 0
        self.scope: set[str] = set()

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: Optional[Tok] = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        raise GrammarSyntaxError(f"{message}, found {found}", tok.line, tok.col)

    def take(self, kind: str) -> Tok:
        tok = self.tok
        if tok.kind != kind:
            self.error(f"expected {kind!r}")
        self.i += 1
        return tok

    def accept(self, kind: str) -> Optional[Tok]:
        if self.tok.kind == kind:
            self.i += 1
            return self.toks[self.i - 1]
        return None

    # -- definitions -----------------------------------------------------

    def grammar(self, start: Optional[str]) -> Grammar:
        defs: list[Definition] = []
        seen: dict[str, Tok] = {}
        while self.tok.kind != "eof":
            head = self.tok
            d = self.definition()
            if d.name in seen:
                raise GrammarSyntaxError(
                    f"duplicate definition {d.name!r}", head.line, head.col
                )
            seen[d.name] = head
            defs.append(d)
        if not defs:
            self.error("expected 'def'")
        return Grammar(tuple(defs), start or defs[-1].name)

    def definition(self) -> Definition:
        kw = self.take("def")
        name = self.take("ident").value
        params: list[str] = []
        if self.accept("("):
            if self.tok.kind != ")":
                params.append(self.take("ident").value)
                while self.accept(","):
                    params.append(self.take("ident").value)
            self.take(")")
        self.take("=")
        self.scope = set(params)
        body = self.alternation()
        if self.tok.kind not in ("def", "eof"):
            self.error("unexpected token in definition")
        return Definition(name, tuple(params), body, loc=(kw.line, kw.col))

    # -- machine expressions ---------------------------------------------

    def alternation(self):
        first = self.tok
        branches = [self.sequence()]
        weights = [self.weight()]
        while self.accept("+"):
            branches.append(self.sequence())
            weights.append(self.weight())
        if len(branches) == 1:
            if weights[0] is not None:
                self.error("weight on a single branch")
            return branches[0]
        if all(w is None for w in weights):
            ws = None
        else:
            ws = tuple(1.0 if w is None else w for w in weights)
        return Alt(tuple(branches), ws, loc=(first.line, first.col))

    def weight(self) -> Optional[float]:
        if not self.accept("["):
            return None
        tok = self.take("num")
        self.take("]")
        return float(tok.value)

    def sequence(self):
        first = self.tok
        items = [self.atom()]
        while self.accept("*"):
            items.append(self.atom())
        if len(items) == 1:
            return items[0]
        return Seq(tuple(items), loc=(first.line, first.col))

    def atom(self):
        tok = self.tok
        loc = (tok.line, tok.col)
        if self.accept("id"):
            return Epsilon(loc=loc)
        if self.accept("str"):
            if not tok.value.split():
                self.error("empty terminal", tok)
            return Terminal(tok.value, loc=loc)
        if self.accept("catalog"):
            self.take("(")
            name = self.take("str").value
            self.take(")")
            return CatalogRef(name, loc=loc)
        if self.accept("fun"):
            return Action(self.fun_clause(), loc=loc)
        if self.accept("ident"):
            args: tuple = ()
            if self.accept("("):
                args = self.expr_list(")")
            return Ref(tok.value, args, loc=loc)
        if self.accept("("):
            inner = self.alternation()
            self.take(")")
            return inner
        self.error("expected a machine expression")

    # -- actions ---------------------------------------------------------

    def fun_clause(self) -> FunClause:
        patterns = [self.pattern()]
        while self.accept(","):
            patterns.append(self.pattern())
        self.take("=>")
        outer = self.scope
        self.scope = outer | {v for p in patterns for v in pattern_vars(p)}
        body = self.expr()
        self.scope = outer
        return FunClause(tuple(patterns), body)

    def pattern(self):
        head = self.pattern_atom()
        if self.accept("::"):
            return PCons(head, self.pattern())
        return head

    def pattern_atom(self):
        tok = self.tok
        if self.accept("ident"):
            return PWild() if tok.value == "_" else PVar(tok.value)
        if self.accept("num"):
            if not isinstance(tok.value, int):
                self.error("integer pattern expected", tok)
            return PInt(tok.value)
        if self.accept("["):
            self.take("]")
            return PNil()
        if self.accept("("):
            p = self.pattern()
            self.take(")")
            return p
        self.error("expected a pattern")

    def expr(self):
        head = self.sum()
        if self.accept("::"):
            return ECons(head, self.expr())
        return head

    def sum(self):
        left = self.expr_atom()
        while self.accept("+"):
            left = EAdd(left, self.expr_atom())
        return left

    def expr_atom(self):
        tok = self.tok
        if self.accept("num"):
            if not isinstance(tok.value, int):
                self.error("integer expected", tok)
            return EInt(tok.value)
        if self.accept("str"):
            return EStr(tok.value)
        if self.accept("["):
            self.take("]")
            return ENil()
        if self.accept("ident"):
            name = tok.value
            if self.accept("("):
                args = self.expr_list(")")
                return ECtor(name, args) if name[0].isupper() else ECall(name, args)
            if name in self.scope or not name[0].isupper():
                return EVar(name)
            return ESym(name)
        if self.accept("("):
            e = self.expr()
            self.take(")")
            return e
        self.error("expected an expression")

    def expr_list(self, close: str) -> tuple:
        items = []
        if self.tok.kind != close:
            items.append(self.expr())
            while self.accept(","):
                items.append(self.expr())
        self.take(close)
        return tuple(items)


def pattern_vars(p) -> list[str]:
    if isinstance(p, PVar):
        return [p.name]
    if isinstance(p, PCons):
        return pattern_vars(p.head) + pattern_vars(p.tail)
    return []


def parse_grammar(source: str, start: Optional[str] = None) -> Grammar:
    """Parse grammar source. The entry machine defaults to the last definition."""
    g = _Parser(source).grammar(start)
    if start is not None and start not in g.defs:
        raise GrammarSyntaxError(f"start machine {start!r} is not defined", 1, 1)
    return g


def load_grammar(path, start: Optional[str] = None) -> Grammar:
    with open(path, encoding="utf-8") as f:
        return parse_grammar(f.read(), start)


# -- rendering ---------------------------------------------------------------

def render(grammar: Grammar) -> str:
    return "\n".join(render_definition(d) for d in grammar.definitions) + "\n"


def render_definition(d: Definition) -> str:
    params = f"({', '.join(d.params)})" if d.params else ""
    return f"def {d.name}{params} = {render_machine(d.body)}"


def render_machine(e, ctx: str = "top") -> str:
    if isinstance(e, Alt):
        parts = []
        for i, b in enumerate(e.branches):
            s = render_machine(b, "alt")
            if e.weights is not None:
                s += f" [{e.weights[i]!r}]"
            parts.append(s)
        s = " + ".join(parts)
        return f"({s})" if ctx in ("alt", "seq") else s
    if isinstance(e, Seq):
        s = " * ".join(render_machine(i, "seq") for i in e.items)
        return f"({s})" if ctx == "seq" else s
    if isinstance(e, Action):
        s = render_fun(e.fun)
        return s if ctx == "top" else f"({s})"
    if isinstance(e, Epsilon):
        return "id"
    if isinstance(e, Terminal):
        return json.dumps(e.text, ensure_ascii=False)
    if isinstance(e, CatalogRef):
        return f"catalog({json.dumps(e.name, ensure_ascii=False)})"
    if isinstance(e, Ref):
        if not e.args:
            return e.name
        return f"{e.name}({', '.join(render_expr(a) for a in e.args)})"
    raise TypeError(f"not a machine expression: {e!r}")


def render_fun(f: FunClause) -> str:
    pats = ", ".join(render_pattern(p) for p in f.patterns)
    return f"fun {pats} => {render_expr(f.body)}"


def render_pattern(p, nested: bool = False) -> str:
    if isinstance(p, PCons):
        s = f"{render_pattern(p.head, True)}::{render_pattern(p.tail)}"
        return f"({s})" if nested else s
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PWild):
        return "_"
    if isinstance(p, PInt):
        return str(p.value)
    if isinstance(p, PNil):
        return "[]"
    raise TypeError(f"not a pattern: {p!r}")


# precedence levels: 1 = cons, 2 = sum, 3 = atom
def render_expr(e, prec: int = 1) -> str:
    if isinstance(e, ECons):
        s = f"{render_expr(e.head, 2)}::{render_expr(e.tail, 1)}"
        return f"({s})" if prec > 1 else s
    if isinstance(e, EAdd):
        s = f"{render_expr(e.left, 2)} + {render_expr(e.right, 3)}"
        return f"({s})" if prec > 2 else s
    if isinstance(e, EInt):
        return str(e.value)
    if isinstance(e, EStr):
        return json.dumps(e.value, ensure_ascii=False)
    if isinstance(e, ENil):
        return "[]"
    if isinstance(e, (EVar, ESym)):
        return e.name
    if isinstance(e, (ECtor, ECall)):
        return f"{e.name}({', '.join(render_expr(a) for a in e.args)})"
    raise TypeError(f"not an action expression: {e!r}")
