"""Semantic trees shared by the EXR, TOP and TOP-Decoupled notations.

A tree is built from three node classes:

* :class:`Tree` -- a semantic constructor such as ``PIZZAORDER``;
* :class:`Literal` -- a resolved value (entity id, integer or quoted string);
* :class:`Token` -- an utterance token, only present in TOP-style trees.

All nodes are frozen dataclasses, so trees are hashable values and can be
shared freely between threads.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from typing import Iterator, Union

CONSTRUCTOR_RE = re.compile(r"[A-Z][A-Z0-9_]*")


class TreeSyntaxError(ValueError):
    """Malformed linearized tree; ``offset`` is the character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class NotTopError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    text: str


@dataclass(frozen=True)
class Literal:
    # int for numbers, str for entity ids; quoted=True marks a resolved
    # surface string (rendered with double quotes).
    value: Union[int, str]
    quoted: bool = False


@dataclass(frozen=True)
class Tree:
    label: str
    children: tuple = ()

    def __post_init__(self):
        if not CONSTRUCTOR_RE.fullmatch(self.label):
            raise ValueError(f"bad constructor name {self.label!r}")
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    def __str__(self) -> str:
        return linearize(self)


Leaf = Union[Token, Literal]
SemTree = Union[Tree, Token, Literal]


def is_leaf(node: SemTree) -> bool:
    return not isinstance(node, Tree)


def is_leaf_slot(node: SemTree) -> bool:
    """A constructor whose children are all leaves (an entity slot)."""
    return (
        isinstance(node, Tree)
        and bool(node.children)
        and all(not isinstance(c, Tree) for c in node.children)
    )


def walk(node: SemTree) -> Iterator[SemTree]:
    """Preorder traversal."""
    yield node
    if isinstance(node, Tree):
        for child in node.children:
            yield from walk(child)


def tokens_of(node: SemTree) -> list[str]:
    """Left-to-right texts of the Token leaves."""
    return [n.text for n in walk(node) if isinstance(n, Token)]


def contains_tokens(node: SemTree) -> bool:
    return any(isinstance(n, Token) for n in walk(node))


def depth(node: SemTree) -> int:
    if not isinstance(node, Tree) or not node.children:
        return 1
    return 1 + max(depth(c) for c in node.children)


# -- tokenization ------------------------------------------------------------

def tokenize(utterance: str, lowercase: bool = False) -> list[str]:
    if lowercase:
        utterance = utterance.lower()
    return utterance.split()


# -- linearization -----------------------------------------------------------

@dataclass(frozen=True)
class Natural:
    pass


@dataclass(frozen=True)
class RandomOrder:
    seed: int = 0


@dataclass(frozen=True)
class SortedLexicographic:
    pass


OrderingPolicy = Union[Natural, RandomOrder, SortedLexicographic]
NATURAL = Natural()
SORTED = SortedLexicographic()


def _leaf_text(node: Leaf) -> str:
    if isinstance(node, Token):
        return node.text
    if node.quoted:
        return json.dumps(node.value, ensure_ascii=False)
    return str(node.value)


def linearize(tree: SemTree, policy: OrderingPolicy = NATURAL) -> str:
    if not isinstance(policy, Natural):
        tree = reorder(tree, policy)
    parts: list[str] = []
    _emit(tree, parts)
    return "".join(parts)


def _emit(node: SemTree, out: list[str]) -> None:
    if not isinstance(node, Tree):
        out.append(_leaf_text(node))
        return
    out.append("(" + node.label)
    for child in node.children:
        out.append(" ")
        _emit(child, out)
    out.append(")")


_LEX_RE = re.compile(r'\s*(?:(\()|(\))|("(?:[^"\\]|\\.)*")|([^\s()]+))')
_INT_RE = re.compile(r"-?\d+")


def _is_upper_symbol(text: str) -> bool:
    return text == text.upper() and any(c.isalpha() for c in text)


def _classify(atom: tuple[str, bool], in_slot: bool, kind: str) -> Leaf:
    text, quoted = atom
    if kind == "top":
        return Token(text)
    if quoted:
        return Literal(json.loads(text), quoted=True)
    if _INT_RE.fullmatch(text):
        return Literal(int(text))
    if kind == "exr" or (in_slot and _is_upper_symbol(text)):
        return Literal(text)
    return Token(text)


def parse_linearized(text: str, kind: str = "auto") -> SemTree:
    """Parse ``(LABEL child ...)`` text back into a tree.

    ``kind`` controls how bare atoms become leaves:

    ``"auto"``
        integers become integer literals, all-uppercase atoms directly
        under a leaf slot become entity ids, everything else is a token;
    ``"exr"``
        every atom is a literal;
    ``"top"``
        every atom is a token.
    """
    if kind not in ("auto", "exr", "top"):
        raise ValueError(f"unknown kind {kind!r}")
    tree, pos = _parse_at(text, 0, kind)
    rest = text[pos:]
    if rest.strip():
        raise TreeSyntaxError("trailing garbage", pos + len(rest) - len(rest.lstrip()))
    return tree


def _next(text: str, pos: int):
    m = _LEX_RE.match(text, pos)
    if m is None:
        return None, len(text), len(text)
    return m, m.start(m.lastindex), m.end()


def _atom(m) -> tuple[str, bool]:
    if m.group(3) is not None:
        return m.group(3), True
    return m.group(4), False


def _parse_at(text: str, pos: int, kind: str):
    m, start, end = _next(text, pos)
    if m is None:
        raise TreeSyntaxError("unexpected end of input", len(text))
    if m.group(1) is None:
        if m.group(2):
            raise TreeSyntaxError("unexpected ')'", start)
        # a bare atom at the top level is a single leaf
        return _classify(_atom(m), False, kind), end
    m, start, pos = _next(text, end)
    if m is None:
        raise TreeSyntaxError("unbalanced parenthesis", len(text))
    label = m.group(4)
    if label is None or not CONSTRUCTOR_RE.fullmatch(label):
        if m.group(2):
            raise TreeSyntaxError("empty constructor", start)
        raise TreeSyntaxError("expected constructor name", start)
    children: list = []
    atoms: list[int] = []
    while True:
        m, start, end = _next(text, pos)
        if m is None:
            raise TreeSyntaxError("unbalanced parenthesis", len(text))
        if m.group(2):
            pos = end
            break
        if m.group(1):
            child, pos = _parse_at(text, start, kind)
            children.append(child)
        else:
            atoms.append(len(children))
            children.append(_atom(m))
            pos = end
    in_slot = len(atoms) == len(children)
    for i in atoms:
        children[i] = _classify(children[i], in_slot, kind)
    return Tree(label, tuple(children)), pos


# -- sibling order -----------------------------------------------------------

def _canon(node: SemTree) -> tuple[SemTree, str]:
    if not isinstance(node, Tree):
        return node, _leaf_text(node)
    pairs = [_canon(c) for c in node.children]
    # type rank keeps Token("X") and Literal("X") apart deterministically
    pairs.sort(key=lambda p: (p[1], isinstance(p[0], Token)))
    children = tuple(p[0] for p in pairs)
    text = "(" + " ".join([node.label] + [p[1] for p in pairs]) + ")"
    return Tree(node.label, children), text


def canonicalize(tree: SemTree) -> SemTree:
    """Sort children at every level by their canonical linearization."""
    return _canon(tree)[0]


def unordered_equal(a: SemTree, b: SemTree) -> bool:
    return canonicalize(a) == canonicalize(b)


def reorder(tree: SemTree, policy: OrderingPolicy) -> SemTree:
    """Permute siblings at every level. Only valid for EXR trees."""
    if contains_tokens(tree):
        raise NotTopError("cannot reorder a tree that contains utterance tokens")
    if isinstance(policy, Natural):
        return tree
    if isinstance(policy, SortedLexicographic):
        return canonicalize(tree)
    if isinstance(policy, RandomOrder):
        return _shuffle(tree, random.Random(policy.seed))
    raise TypeError(f"unknown ordering policy {policy!r}")


def _shuffle(node: SemTree, rng: random.Random) -> SemTree:
    if not isinstance(node, Tree):
        return node
    children = [_shuffle(c, rng) for c in node.children]
    rng.shuffle(children)
    return Tree(node.label, tuple(children))


# -- decoupling --------------------------------------------------------------

def decouple(top: SemTree) -> SemTree:
    """Drop every utterance token that is not the child of a leaf slot."""
    if not isinstance(top, Tree):
        return top
    if is_leaf_slot(top):
        return top
    kept = []
    for child in top.children:
        if isinstance(child, Tree):
            kept.append(decouple(child))
        elif isinstance(child, Literal):
            raise NotTopError(
                f"literal {_leaf_text(child)} under non-slot constructor {top.label}"
            )
    return Tree(top.label, tuple(kept))


def strip_root(tree: Tree, label: str = "ORDER") -> str:
    """Linearize the root's children without the root constructor."""
    if not isinstance(tree, Tree) or tree.label != label:
        return linearize(tree)
    return " ".join(linearize(c) for c in tree.children)


def restore_root(text: str, label: str = "ORDER", kind: str = "auto") -> SemTree:
    text = text.strip()
    if text.startswith(f"({label} ") or text == f"({label})":
        return parse_linearized(text, kind)
    return parse_linearized(f"({label} {text})" if text else f"({label})", kind)
