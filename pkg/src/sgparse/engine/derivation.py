"""Derivation trees recorded by the parser and the sampler."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

KINDS = ("ref", "alt", "seq", "term", "catalog", "eps", "action")


@dataclass(frozen=True)
class Derivation:
    """One node of a derivation.

    ``prob`` is the product of ``factor`` over the whole subtree and ``size``
    the number of nodes in it; both are filled in by :func:`make`.
    ``payload`` holds the call arguments of a ``ref`` node and the
    ``FunClause`` of an ``action`` node.
    """

    kind: str
    start: int
    end: int
    children: tuple = ()
    name: Optional[str] = None      # definition, catalog or terminal text
    alt: Optional[tuple] = None     # AltId of an alt node
    choice: Optional[int] = None    # chosen branch of an alt node
    entity: Optional[str] = None    # matched entity of a catalog node
    factor: float = 1.0
    prob: float = 1.0
    size: int = 1
    payload: object = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    def walk(self) -> Iterator["Derivation"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def trace(self) -> tuple:
        """Hashable summary of the choices made, used to compare derivations."""
        sub = tuple(c.trace() for c in self.children)
        if self.kind == "alt":
            return ("alt", self.alt, self.choice, self.start, self.end, sub)
        if self.kind == "catalog":
            return ("catalog", self.name, self.entity, self.start, self.end)
        return (self.kind, self.name, self.start, self.end, sub)


def make(kind, start, end, children=(), factor=1.0, **kw) -> Derivation:
    prob = factor
    size = 1
    for c in children:
        prob *= c.prob
        size += c.size
    return Derivation(kind, start, end, tuple(children), factor=factor, prob=prob, size=size, **kw)


def recompute_prob(d: Derivation) -> float:
    """Product of all factors, recomputed from scratch."""
    p = d.factor
    for c in d.children:
        p *= recompute_prob(c)
    return p


def check_spans(d: Derivation, n: Optional[int] = None) -> None:
    """Raise ValueError unless child spans partition every parent span."""
    if n is not None and not (0 <= d.start <= d.end <= n):
        raise ValueError(f"span {d.span} outside [0, {n}]")
    pos = d.start
    for c in d.children:
        if c.start != pos:
            raise ValueError(f"{d.kind} child starts at {c.start}, expected {pos}")
        check_spans(c, n)
        pos = c.end
    if d.children and pos != d.end:
        raise ValueError(f"{d.kind} children end at {pos}, parent at {d.end}")
    if d.kind == "seq" and not d.children:
        raise ValueError("empty seq")


def count_branches(derivations: Iterable[Derivation]) -> Counter:
    """Branch usage counts keyed by (definition, alt index, branch)."""
    counts: Counter = Counter()
    for d in derivations:
        for node in d.walk():
            if node.kind == "alt":
                counts[(node.alt[0], node.alt[1], node.choice)] += 1
    return counts
