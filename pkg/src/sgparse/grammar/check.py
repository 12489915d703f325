"""Static checks run before a grammar is handed to the top-down engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .ast import (
    Action, Alt, CatalogRef, EAdd, ECall, ECons, ECtor, EVar, Epsilon,
    Grammar, Ref, Seq, Terminal, iter_nodes,
)
from .syntax import pattern_vars

BUILTINS = {"rev": 1, "append": 2, "len": 1}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    definition: Optional[str] = None
    loc: Optional[tuple[int, int]] = None

    def __str__(self) -> str:
        where = f"{self.loc[0]}:{self.loc[1]}: " if self.loc else ""
        return f"{where}{self.code}: {self.message}"


def validate(grammar: Grammar, catalogs: Optional[dict] = None) -> list[Diagnostic]:
    """Return a list of problems; an empty list means the grammar is usable."""
    out: list[Diagnostic] = []
    defs = grammar.defs
    if grammar.start not in defs:
        out.append(Diagnostic("missing-start", f"start machine {grammar.start!r} is not defined"))
    for d in grammar.definitions:
        for node in iter_nodes(d.body):
            if isinstance(node, Ref):
                target = defs.get(node.name)
                if target is None:
                    out.append(Diagnostic(
                        "unresolved-reference", f"{node.name!r} is not defined", d.name, node.loc))
                elif len(target.params) != len(node.args):
                    out.append(Diagnostic(
                        "arity-mismatch",
                        f"{node.name!r} takes {len(target.params)} argument(s), given {len(node.args)}",
                        d.name, node.loc))
                for arg in node.args:
                    _check_expr(arg, set(d.params), d.name, node.loc, out)
            elif isinstance(node, CatalogRef):
                if catalogs is not None and node.name not in catalogs:
                    out.append(Diagnostic(
                        "unknown-catalog", f"no catalog named {node.name!r}", d.name, node.loc))
            elif isinstance(node, Action):
                bound = set(d.params)
                for p in node.fun.patterns:
                    bound.update(pattern_vars(p))
                _check_expr(node.fun.body, bound, d.name, node.loc, out)
            elif isinstance(node, Alt) and node.weights is not None:
                if any(w <= 0 for w in node.weights):
                    out.append(Diagnostic(
                        "bad-weights", "branch weights must be positive", d.name, node.loc))
    for name in left_recursive(grammar):
        out.append(Diagnostic(
            "left-recursion",
            f"{name!r} can reach itself without consuming input",
            name, defs[name].loc))
    return out


def _check_expr(e, bound: set, where: str, loc, out: list) -> None:
    if isinstance(e, EVar):
        if e.name not in bound:
            out.append(Diagnostic("unbound-variable", f"variable {e.name!r} is not bound", where, loc))
    elif isinstance(e, (EAdd,)):
        _check_expr(e.left, bound, where, loc, out)
        _check_expr(e.right, bound, where, loc, out)
    elif isinstance(e, ECons):
        _check_expr(e.head, bound, where, loc, out)
        _check_expr(e.tail, bound, where, loc, out)
    elif isinstance(e, (ECtor, ECall)):
        if isinstance(e, ECall):
            arity = BUILTINS.get(e.name)
            if arity is None:
                out.append(Diagnostic("unknown-function", f"no function named {e.name!r}", where, loc))
            elif arity != len(e.args):
                out.append(Diagnostic(
                    "arity-mismatch", f"{e.name!r} takes {arity} argument(s)", where, loc))
        for a in e.args:
            _check_expr(a, bound, where, loc, out)


def nullable_set(grammar: Grammar) -> set[str]:
    """Definitions that can succeed without consuming a token."""
    nullable: set[str] = set()
    changed = True
    while changed:
        changed = False
        for d in grammar.definitions:
            if d.name not in nullable and _nullable(d.body, nullable):
                nullable.add(d.name)
                changed = True
    return nullable


def _nullable(e, nullable: set) -> bool:
    if isinstance(e, (Epsilon, Action)):
        return True
    if isinstance(e, (Terminal, CatalogRef)):
        return False
    if isinstance(e, Ref):
        return e.name in nullable
    if isinstance(e, Seq):
        return all(_nullable(i, nullable) for i in e.items)
    if isinstance(e, Alt):
        return any(_nullable(b, nullable) for b in e.branches)
    raise TypeError(e)


def _left_corners(e, nullable: set, acc: set) -> None:
    """Collect Refs reachable at the left edge of ``e``."""
    if isinstance(e, Ref):
        acc.add(e.name)
    elif isinstance(e, Alt):
        for b in e.branches:
            _left_corners(b, nullable, acc)
    elif isinstance(e, Seq):
        for item in e.items:
            _left_corners(item, nullable, acc)
            if not _nullable(item, nullable):
                break


def left_recursive(grammar: Grammar) -> list[str]:
    """Names N that reach N through a path of nullable prefixes."""
    nullable = nullable_set(grammar)
    edges = {}
    for d in grammar.definitions:
        acc: set[str] = set()
        _left_corners(d.body, nullable, acc)
        edges[d.name] = {n for n in acc if n in grammar.defs}
    out = []
    for d in grammar.definitions:
        seen: set[str] = set()
        stack = list(edges[d.name])
        while stack:
            n = stack.pop()
            if n == d.name:
                out.append(d.name)
                break
            if n in seen:
                continue
            seen.add(n)
            stack.extend(edges[n])
    return out
