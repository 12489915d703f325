"""Recovering a TOP tree from the spans recorded while replaying actions.

A constructor covers the tokens consumed by the definition call that built
it, widened to cover its arguments.  Leaf slots wrap exactly their span;
composite constructors interleave their children with the tokens in the
gaps.  Zero-width constructors (defaults inserted without consuming input,
such as an implied ``NUMBER``) have no surface form and are left out.
"""

from __future__ import annotations

from typing import Optional, Sequence

from ..semtree import Token, Tree
from .actions import Node, Value


class TopError(ValueError):
    """The derivation does not determine a projective TOP tree."""


def value_to_top(root: Value, tokens: Sequence[str]) -> Tree:
    if not isinstance(root.data, Node):
        raise TopError(f"final value {root.data!r} is not a constructor")
    out = _build(root, (0, len(tokens)), tokens)
    if out is None:
        return Tree(root.data.label, ())
    return out


def _build(v: Value, span: tuple, tokens: Sequence[str]) -> Optional[Tree]:
    node: Node = v.data
    s, e = span
    kids = [c for c in node.children if isinstance(c.data, Node)]
    if not kids:
        if s == e:
            return None
        return Tree(node.label, tuple(Token(t) for t in tokens[s:e]))
    placed = [c for c in kids if c.span is not None and c.span[0] < c.span[1]]
    placed.sort(key=lambda c: c.span[0])
    out = []
    pos = s
    for c in placed:
        cs, ce = c.span
        if cs < pos or ce > e:
            raise TopError(
                f"{c.data.label} span {c.span} overlaps a sibling or leaves "
                f"{node.label} span {span}")
        out.extend(Token(t) for t in tokens[pos:cs])
        sub = _build(c, c.span, tokens)
        if sub is not None:
            out.append(sub)
        pos = ce
    out.extend(Token(t) for t in tokens[pos:e])
    if not out:
        return None
    return Tree(node.label, tuple(out))
