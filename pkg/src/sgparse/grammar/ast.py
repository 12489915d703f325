"""AST for grammar source files.

Machine expressions describe what a non-terminal consumes; action
expressions describe how a ``fun`` clause rewrites the semantic stack.
Source locations are carried as ``loc=(line, column)`` and never take part
in equality, so re-parsing rendered source gives an equal AST.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

Loc = Optional[tuple[int, int]]


def _loc():
    return field(default=None, compare=False, repr=False)


# -- patterns ----------------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PWild:
    pass


@dataclass(frozen=True)
class PInt:
    value: int


@dataclass(frozen=True)
class PNil:
    pass


@dataclass(frozen=True)
class PCons:
    head: "Pattern"
    tail: "Pattern"


Pattern = Union[PVar, PWild, PInt, PNil, PCons]


# -- action expressions ------------------------------------------------------

@dataclass(frozen=True)
class EInt:
    value: int


@dataclass(frozen=True)
class EStr:
    value: str


@dataclass(frozen=True)
class ENil:
    pass


@dataclass(frozen=True)
class EVar:
    name: str


@dataclass(frozen=True)
class ESym:
    """Constant symbol, i.e. a nullary constructor such as ``HAM``."""
    name: str


@dataclass(frozen=True)
class EAdd:
    left: "ActionExpr"
    right: "ActionExpr"


@dataclass(frozen=True)
class ECons:
    head: "ActionExpr"
    tail: "ActionExpr"


@dataclass(frozen=True)
class ECtor:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class ECall:
    name: str
    args: tuple = ()


ActionExpr = Union[EInt, EStr, ENil, EVar, ESym, EAdd, ECons, ECtor, ECall]


@dataclass(frozen=True)
class FunClause:
    patterns: tuple
    body: ActionExpr


# -- machine expressions -----------------------------------------------------

@dataclass(frozen=True)
class Epsilon:
    loc: Loc = _loc()


@dataclass(frozen=True)
class Terminal:
    text: str
    loc: Loc = _loc()

    @cached_property
    def words(self) -> tuple[str, ...]:
        return tuple(self.text.split())


@dataclass(frozen=True)
class Ref:
    name: str
    args: tuple = ()
    loc: Loc = _loc()


@dataclass(frozen=True)
class CatalogRef:
    name: str
    loc: Loc = _loc()


@dataclass(frozen=True)
class Action:
    fun: FunClause
    loc: Loc = _loc()


@dataclass(frozen=True)
class Seq:
    items: tuple
    loc: Loc = _loc()

    def __post_init__(self):
        if len(self.items) < 2:
            raise ValueError("sequence needs at least two items")


@dataclass(frozen=True)
class Alt:
    branches: tuple
    weights: Optional[tuple] = None
    loc: Loc = _loc()

    def __post_init__(self):
        if len(self.branches) < 2:
            raise ValueError("alternation needs at least two branches")
        if self.weights is not None and len(self.weights) != len(self.branches):
            raise ValueError("weight count does not match branch count")


MachineExpr = Union[Epsilon, Terminal, Ref, CatalogRef, Action, Seq, Alt]


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple
    body: MachineExpr
    loc: Loc = _loc()


# Alternations are addressed as (definition name, preorder index of the Alt
# inside that definition's body).
AltId = tuple[str, int]


@dataclass(frozen=True)
class Grammar:
    definitions: tuple
    start: str
    # branch probabilities keyed by AltId; filled by branch_probabilities()
    probs: Optional[dict] = field(default=None, compare=False, repr=False)

    @cached_property
    def defs(self) -> dict[str, Definition]:
        return {d.name: d for d in self.definitions}

    @cached_property
    def alts(self) -> dict[AltId, Alt]:
        out = {}
        for d in self.definitions:
            for i, alt in enumerate(iter_alts(d.body)):
                out[(d.name, i)] = alt
        return out


def iter_alts(expr: MachineExpr):
    """Alt nodes of ``expr`` in preorder."""
    if isinstance(expr, Alt):
        yield expr
        for b in expr.branches:
            yield from iter_alts(b)
    elif isinstance(expr, Seq):
        for item in expr.items:
            yield from iter_alts(item)


def iter_nodes(expr: MachineExpr):
    yield expr
    if isinstance(expr, Alt):
        for b in expr.branches:
            yield from iter_nodes(b)
    elif isinstance(expr, Seq):
        for item in expr.items:
            yield from iter_nodes(item)
