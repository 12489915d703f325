"""Replaying semantic actions of a derivation over the semantic stack.

Stack cells are :class:`Value` objects.  Each value carries the token span
it was built from, which is what lets a TOP tree be recovered later.  The
stack itself is a tuple with the top cell first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..grammar.ast import (
    EAdd, ECall, ECons, ECtor, EInt, ENil, EStr, ESym, EVar,
    PCons, PInt, PNil, PVar, PWild,
)
from ..semtree import Literal, Tree
from .derivation import Derivation


class ActionError(RuntimeError):
    pass


class StackNotSingleton(ActionError):
    pass


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Node:
    label: str
    children: tuple  # of Value


class Value:
    """A stack cell: ``data`` is int, str, Sym, Node or a tuple (list)."""

    __slots__ = ("data", "span")

    def __init__(self, data, span: Optional[tuple] = None):
        self.data = data
        self.span = span

    def __repr__(self):
        return f"Value({self.data!r}, span={self.span})"


def entity_data(entity: str):
    return int(entity) if entity.isdigit() else Sym(entity)


# -- pattern matching and evaluation ----------------------------------------

def _bind(p, v: Value, env: dict) -> bool:
    if isinstance(p, PVar):
        env[p.name] = v
        return True
    if isinstance(p, PWild):
        return True
    if isinstance(p, PInt):
        return type(v.data) is int and v.data == p.value
    if isinstance(p, PNil):
        return v.data == ()
    if isinstance(p, PCons):
        if not isinstance(v.data, tuple) or not v.data:
            return False
        return _bind(p.head, v.data[0], env) and _bind(p.tail, Value(v.data[1:]), env)
    raise TypeError(p)


def _hull(values) -> Optional[tuple]:
    lo = hi = None
    for v in values:
        if v.span is None:
            continue
        s, e = v.span
        lo = s if lo is None else min(lo, s)
        hi = e if hi is None else max(hi, e)
    return None if lo is None else (lo, hi)


def _splice(values, out: list) -> None:
    for v in values:
        if isinstance(v.data, tuple):
            _splice(v.data, out)
        else:
            out.append(v)


def _list(v: Value, what: str) -> tuple:
    if not isinstance(v.data, tuple):
        raise ActionError(f"{what} expects a list, got {v.data!r}")
    return v.data


def _eval(e, env: dict, fresh: set) -> Value:
    if isinstance(e, EVar):
        try:
            return env[e.name]
        except KeyError:
            raise ActionError(f"unbound variable {e.name!r}") from None
    if isinstance(e, EInt):
        return Value(e.value)
    if isinstance(e, EStr):
        return Value(e.value)
    if isinstance(e, ENil):
        return Value(())
    if isinstance(e, ESym):
        return Value(Sym(e.name))
    if isinstance(e, ECons):
        head = _eval(e.head, env, fresh)
        tail = _eval(e.tail, env, fresh)
        return Value((head,) + _list(tail, "::"))
    if isinstance(e, EAdd):
        a = _eval(e.left, env, fresh)
        b = _eval(e.right, env, fresh)
        if type(a.data) is not int or type(b.data) is not int:
            raise ActionError(f"+ expects integers, got {a.data!r} and {b.data!r}")
        return Value(a.data + b.data)
    if isinstance(e, ECtor):
        kids: list = []
        _splice([_eval(a, env, fresh) for a in e.args], kids)
        v = Value(Node(e.name, tuple(kids)), _hull(kids))
        fresh.add(id(v))
        return v
    if isinstance(e, ECall):
        args = [_eval(a, env, fresh) for a in e.args]
        if e.name == "rev":
            return Value(tuple(reversed(_list(args[0], "rev"))))
        if e.name == "append":
            return Value(_list(args[0], "append") + _list(args[1], "append"))
        if e.name == "len":
            return Value(len(_list(args[0], "len")))
        raise ActionError(f"unknown function {e.name!r}")
    raise TypeError(e)


def _place(v: Value, fresh: set, frame: int, pos: int) -> None:
    """Give the outermost constructors built by an action their final span."""
    if id(v) in fresh and isinstance(v.data, Node):
        if v.span is None:
            v.span = (frame, pos)
        else:
            v.span = (min(v.span[0], frame), max(v.span[1], pos))
        return
    if isinstance(v.data, tuple):
        for c in v.data:
            _place(c, fresh, frame, pos)


def apply_fun(fun, stack: tuple, env: dict, frame: int, pos: int) -> tuple:
    local = dict(env)
    pats = fun.patterns
    if len(pats) == 1:
        if not _bind(pats[0], Value(stack), local):
            raise ActionError(f"pattern does not match stack of depth {len(stack)}")
        fresh: set = set()
        result = _eval(fun.body, local, fresh)
        _place(result, fresh, frame, pos)
        return _list(result, "single-pattern action")
    n = len(pats)
    if len(stack) < n:
        raise ActionError(f"action needs {n} stack cells, stack has {len(stack)}")
    # last pattern matches the top cell
    for p, cell in zip(pats, reversed(stack[:n])):
        if not _bind(p, cell, local):
            raise ActionError("pattern does not match stack cell")
    fresh = set()
    result = _eval(fun.body, local, fresh)
    _place(result, fresh, frame, pos)
    return (result,) + stack[n:]


# -- replay ------------------------------------------------------------------

def replay(d: Derivation, defs: dict) -> Value:
    """Run the actions of ``d`` over an empty stack; return the single cell."""
    stack = _run(d, (), {}, d.start, defs)
    if len(stack) != 1:
        raise StackNotSingleton(f"replay left {len(stack)} stack cells, expected 1")
    return stack[0]


def _run(d: Derivation, stack: tuple, env: dict, frame: int, defs: dict) -> tuple:
    kind = d.kind
    if kind == "action":
        return apply_fun(d.payload, stack, env, frame, d.start)
    if kind == "catalog":
        return (Value(entity_data(d.entity), (d.start, d.end)),) + stack
    if kind == "ref":
        params = defs[d.name].params
        args = d.payload or ()
        callee = {p: _eval(a, env, set()) for p, a in zip(params, args)}
        return _run(d.children[0], stack, callee, d.start, defs)
    for c in d.children:
        stack = _run(c, stack, env, frame, defs)
    return stack


def to_exr(v: Value):
    """Convert a final stack value to a semantic tree."""
    data = v.data
    if isinstance(data, Node):
        return Tree(data.label, tuple(_leaves(data.children)))
    if isinstance(data, tuple):
        raise ActionError("final stack value is a list, not a tree")
    if isinstance(data, Sym):
        return Literal(data.name)
    if isinstance(data, str):
        return Literal(data, quoted=True)
    return Literal(data)


def _leaves(children):
    for c in children:
        data = c.data
        if isinstance(data, Node):
            yield Tree(data.label, tuple(_leaves(data.children)))
        elif isinstance(data, Sym):
            # multi-word ids such as "2 LITER" linearize as several atoms
            for part in data.name.split():
                yield Literal(int(part)) if part.isdigit() else Literal(part)
        elif isinstance(data, str):
            yield Literal(data, quoted=True)
        elif isinstance(data, tuple):
            yield from _leaves(data)
        else:
            yield Literal(data)
