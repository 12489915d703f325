"""BIO label views of TOP trees for pipeline taggers.

Two views are produced per utterance: intent segmentation over the whole
utterance, and flattened entity labels over each intent span.  A nested slot
is flattened by its constructor path below the intent, e.g. ``NOT`` over
``TOPPING`` becomes ``NEG_TOPPING``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from .semtree import Token, Tree

OTHER = "Other"
DEFAULT_INTENTS = ("PIZZAORDER", "DRINKORDER")


class LabelError(ValueError):
    pass


class UnsupportedStructure(LabelError):
    pass


class LossyFlattening(LabelError):
    pass


@dataclass(frozen=True)
class LabeledSequence:
    tokens: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.tokens) != len(self.labels):
            raise LabelError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")


@dataclass(frozen=True)
class FlattenMap:
    """Constructor paths below an intent mapped to flat labels.

    Single-constructor paths map to their own name unless listed.
    """

    paths: dict = field(default_factory=lambda: {
        ("NOT", "TOPPING"): "NEG_TOPPING",
        ("NOT", "STYLE"): "NEG_STYLE",
        ("COMPLEX_TOPPING", "QUANTITY"): "COMPLEX_TOPPING_QUANTITY",
        ("COMPLEX_TOPPING", "TOPPING"): "COMPLEX_TOPPING_TOPPING",
    })

    def __post_init__(self):
        labels = list(self.paths.values())
        if len(set(labels)) != len(labels):
            raise ValueError("flatten map is not injective")
        for path in self.paths:
            if not 1 <= len(path) <= 2:
                raise ValueError(f"flatten map paths must have length 1 or 2, got {path}")

    @classmethod
    def from_dict(cls, doc: dict) -> "FlattenMap":
        """``{"NOT/TOPPING": "NEG_TOPPING", ...}``"""
        return cls({tuple(k.split("/")): v for k, v in doc.items()})

    def label(self, path: tuple) -> str:
        if path in self.paths:
            return self.paths[path]
        if len(path) == 1:
            return path[0]
        raise LossyFlattening(f"constructor path {'/'.join(path)} has no flat label")

    def path(self, label: str) -> tuple:
        for p, lab in self.paths.items():
            if lab == label:
                return p
        return (label,)


DEFAULT_FLATTEN = FlattenMap()


def _bio(name: str, n: int) -> list[str]:
    return [f"B-{name}"] + [f"I-{name}"] * (n - 1)


def _count_tokens(node) -> int:
    if isinstance(node, Token):
        return 1
    if isinstance(node, Tree):
        return sum(_count_tokens(c) for c in node.children)
    return 0


def _check_no_intent(node, intents):
    for c in node.children:
        if isinstance(c, Tree):
            if c.label in intents:
                raise UnsupportedStructure(f"intent {c.label} nested inside {node.label}")
            _check_no_intent(c, intents)


def intent_spans(top: Tree, intents=DEFAULT_INTENTS) -> list[tuple[int, int, Tree]]:
    """(start, end, subtree) for each intent, left to right."""
    out = []
    pos = 0

    def visit(node):
        nonlocal pos
        for c in node.children:
            if isinstance(c, Token):
                pos += 1
            elif isinstance(c, Tree):
                if c.label in intents:
                    _check_no_intent(c, intents)
                    n = _count_tokens(c)
                    out.append((pos, pos + n, c))
                    pos += n
                else:
                    visit(c)

    visit(top)
    return out


def _tokens(top: Tree) -> list[str]:
    out = []

    def visit(node):
        for c in node.children:
            if isinstance(c, Token):
                out.append(c.text)
            elif isinstance(c, Tree):
                visit(c)

    visit(top)
    return out


def top_to_intent_labels(top: Tree, intents=DEFAULT_INTENTS) -> LabeledSequence:
    tokens = _tokens(top)
    labels = [OTHER] * len(tokens)
    for s, e, node in intent_spans(top, intents):
        if e > s:
            labels[s:e] = _bio(node.label, e - s)
    return LabeledSequence(tokens, labels)


def _ner(intent: Tree, fmap: FlattenMap) -> tuple[list[str], list[str]]:
    tokens, labels = [], []

    def visit(node, path):
        for c in node.children:
            if isinstance(c, Token):
                tokens.append(c.text)
                labels.append(OTHER)
            elif isinstance(c, Tree):
                sub = path + (c.label,)
                if all(not isinstance(g, Tree) for g in c.children):
                    words = [g.text for g in c.children if isinstance(g, Token)]
                    if words:
                        tokens.extend(words)
                        labels.extend(_bio(fmap.label(sub), len(words)))
                else:
                    if len(sub) >= 2:
                        raise LossyFlattening(f"constructor path {'/'.join(sub)} is too deep to flatten")
                    visit(c, sub)

    visit(intent, ())
    return tokens, labels


def top_to_ner_labels(top: Tree, intent_span: tuple, fmap: FlattenMap = DEFAULT_FLATTEN,
                      intents=DEFAULT_INTENTS) -> LabeledSequence:
    """Flat entity labels for the tokens of the intent at ``intent_span``."""
    for s, e, node in intent_spans(top, intents):
        if (s, e) == tuple(intent_span[:2]):
            return LabeledSequence(*_ner(node, fmap))
    raise LabelError(f"no intent spans tokens {tuple(intent_span[:2])}")


def top_to_labels(top: Tree, fmap: FlattenMap = DEFAULT_FLATTEN, intents=DEFAULT_INTENTS):
    """Intent labels plus one entity-label sequence per intent span."""
    is_seq = top_to_intent_labels(top, intents)
    ner = [LabeledSequence(*_ner(node, fmap)) for _, _, node in intent_spans(top, intents)]
    return is_seq, ner


def repair(labels: Iterable[str]) -> list[str]:
    """Turn every I-X that does not follow B-X or I-X into Other.

    Each tag is checked against the already repaired previous tag, so the
    output is always well formed and a second pass changes nothing.
    """
    out: list[str] = []
    for lab in labels:
        if lab.startswith("I-"):
            prev = out[-1] if out else OTHER
            if prev not in (f"B-{lab[2:]}", lab):
                lab = OTHER
        out.append(lab)
    return out


def repair_sequence(seq: LabeledSequence) -> LabeledSequence:
    return LabeledSequence(seq.tokens, repair(seq.labels))


def is_well_formed(labels: Iterable[str]) -> bool:
    return list(labels) == repair(labels)


def _segments(labels) -> list[tuple[str, int, int]]:
    """(name or None, start, end) runs of a BIO sequence."""
    segs = []
    for i, lab in enumerate(labels):
        if lab == OTHER:
            segs.append((None, i, i + 1))
        elif lab.startswith("B-"):
            segs.append((lab[2:], i, i + 1))
        elif lab.startswith("I-"):
            name = lab[2:]
            if not segs or segs[-1][0] != name:
                raise LabelError(f"{lab} at position {i} does not continue a {name} span")
            segs[-1] = (name, segs[-1][1], i + 1)
        else:
            raise LabelError(f"bad label {lab!r} at position {i}")
    return segs


def _intent_tree(name: str, tokens, labels, fmap: FlattenMap) -> Tree:
    children: list = []
    group: Optional[list] = None   # [parent label, [child trees]]
    for slot, s, e in _segments(labels):
        words = tuple(Token(t) for t in tokens[s:e])
        if slot is None:
            group = None
            children.extend(words)
            continue
        path = fmap.path(slot)
        leaf = Tree(path[-1], words)
        if len(path) == 1:
            group = None
            children.append(leaf)
            continue
        parent = path[0]
        if group is not None and group[0] == parent and all(k.label != leaf.label for k in group[1]):
            group[1].append(leaf)
            children[-1] = Tree(parent, tuple(group[1]))
        else:
            group = [parent, [leaf]]
            children.append(Tree(parent, (leaf,)))
    return Tree(name, tuple(children))


def labels_to_top(tokens, is_labels, ner_labels, fmap: FlattenMap = DEFAULT_FLATTEN,
                  root: str = "ORDER") -> Tree:
    """Rebuild a TOP tree from intent labels and per-intent entity labels."""
    tokens = list(tokens)
    is_labels = list(is_labels)
    if len(tokens) != len(is_labels):
        raise LabelError(f"{len(tokens)} tokens but {len(is_labels)} intent labels")
    ner_labels = [list(x.labels) if isinstance(x, LabeledSequence) else list(x) for x in ner_labels]
    children: list = []
    k = 0
    for name, s, e in _segments(is_labels):
        if name is None:
            children.append(Token(tokens[s]))
            continue
        if k >= len(ner_labels):
            raise LabelError("fewer entity label sequences than intent spans")
        ner = ner_labels[k]
        k += 1
        if len(ner) != e - s:
            raise LabelError(f"intent span {s}:{e} has {e - s} tokens but {len(ner)} entity labels")
        children.append(_intent_tree(name, tokens[s:e], ner, fmap))
    if k != len(ner_labels):
        raise LabelError("more entity label sequences than intent spans")
    return Tree(root, tuple(children))


# -- CoNLL ---------------------------------------------------------------------

def write_conll(seqs: Iterable[LabeledSequence], f: TextIO) -> int:
    n = 0
    for seq in seqs:
        for t, lab in zip(seq.tokens, seq.labels):
            f.write(f"{t}\t{lab}\n")
        f.write("\n")
        n += 1
    return n


def read_conll(f: TextIO) -> list[LabeledSequence]:
    """Sequences separated by blank lines; an empty sequence is one blank line."""
    seqs = []
    tokens, labels = [], []
    for lineno, line in enumerate(f, 1):
        line = line.rstrip("\n\r")
        if not line.strip():
            seqs.append(LabeledSequence(tokens, labels))
            tokens, labels = [], []
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise LabelError(f"line {lineno}: expected token<TAB>label")
        tokens.append(cols[0])
        labels.append(cols[1])
    if tokens:
        seqs.append(LabeledSequence(tokens, labels))
    return seqs
