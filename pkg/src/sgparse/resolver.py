"""Rule-based entity resolution from TOP-style trees to EXR."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from .catalog import Catalog
from .semtree import Literal, Token, Tree, parse_linearized

log = logging.getLogger(__name__)


class MissPolicy(str, Enum):
    FAIL = "fail"
    DROP_SLOT = "drop_slot"
    KEEP_SURFACE = "keep_surface"


class ResolutionError(LookupError):
    def __init__(self, slot: str, phrase: str):
        super().__init__(f"no {slot} entity for phrase {phrase!r}")
        self.slot = slot
        self.phrase = phrase


class ResolverConfigError(ValueError):
    pass


DEFAULT_SLOTS = {
    "NUMBER": "NUMBER", "SIZE": "SIZE", "STYLE": "STYLE", "TOPPING": "TOPPING",
    "QUANTITY": "QUANTITY", "DRINKTYPE": "DRINKTYPE", "VOLUME": "VOLUME",
    "CONTAINERTYPE": "CONTAINERTYPE",
}
DEFAULT_STRUCTURAL = ("ORDER", "PIZZAORDER", "DRINKORDER", "NOT", "COMPLEX_TOPPING")


@dataclass(frozen=True)
class ResolverConfig:
    slot_to_catalog: dict = field(default_factory=lambda: dict(DEFAULT_SLOTS))
    # constructors that never resolve; their own tokens are dropped
    structural: tuple = DEFAULT_STRUCTURAL
    # leaf slots kept as quoted surface strings without lookup
    pass_through: tuple = ()
    default_slots: tuple = (
        ("PIZZAORDER", Tree("NUMBER", (Literal(1),))),
        ("DRINKORDER", Tree("NUMBER", (Literal(1),))),
    )
    miss_policy: MissPolicy = MissPolicy.FAIL
    lowercase: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "ResolverConfig":
        known = {"slot_to_catalog", "structural", "pass_through", "default_slots", "miss_policy", "lowercase"}
        extra = set(doc) - known
        if extra:
            raise ResolverConfigError(f"unknown resolver config keys: {', '.join(sorted(extra))}")
        kw = {}
        if "slot_to_catalog" in doc:
            kw["slot_to_catalog"] = dict(doc["slot_to_catalog"])
        for key in ("structural", "pass_through"):
            if key in doc:
                kw[key] = tuple(doc[key])
        if "default_slots" in doc:
            try:
                kw["default_slots"] = tuple(
                    (intent, parse_linearized(text, kind="exr")) for intent, text in doc["default_slots"])
            except (ValueError, TypeError) as e:
                raise ResolverConfigError(f"bad default_slots entry: {e}") from None
        if "miss_policy" in doc:
            try:
                kw["miss_policy"] = MissPolicy(doc["miss_policy"])
            except ValueError:
                raise ResolverConfigError(
                    f"miss_policy must be one of {[m.value for m in MissPolicy]}") from None
        if "lowercase" in doc:
            kw["lowercase"] = bool(doc["lowercase"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ResolverConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ResolverConfigError(f"cannot read resolver config {path}: {e}") from None
        if not isinstance(doc, dict):
            raise ResolverConfigError("resolver config must be a JSON object")
        return cls.from_dict(doc)

    def with_policy(self, policy) -> "ResolverConfig":
        return replace(self, miss_policy=MissPolicy(policy))


def entity_leaves(entity: str) -> tuple:
    """Literal leaves for an entity id; ``"2 LITER"`` gives two atoms."""
    return tuple(Literal(int(p)) if p.isdigit() else Literal(p) for p in entity.split())


class Resolver:
    def __init__(self, catalogs: dict, config: Optional[ResolverConfig] = None):
        self.catalogs = catalogs
        self.config = config or ResolverConfig()
        missing = sorted({c for c in self.config.slot_to_catalog.values() if c not in catalogs})
        if missing:
            raise ResolverConfigError(f"resolver config names missing catalog(s): {', '.join(missing)}")
        self._intents = {intent for intent, _ in self.config.default_slots}

    def resolve(self, tree: Tree) -> Tree:
        out = self._node(tree, is_root=True)
        if out is None:
            return Tree(tree.label, ())
        return out

    def lookup(self, slot: str, phrase: list[str]) -> Optional[str]:
        cat: Catalog = self.catalogs[self.config.slot_to_catalog[slot]]
        hits = cat.match_phrase(phrase)
        if not hits:
            return None
        best_p = hits[0][1]
        tied = [e for e, p in hits if p == best_p]
        if len(tied) > 1:
            log.info("alias %r ties between %s; choosing %s", " ".join(phrase), tied, min(tied))
        return min(tied)

    def _slot(self, node: Tree) -> Optional[Tree]:
        tokens = [c.text for c in node.children if isinstance(c, Token)]
        if not tokens:
            # already resolved
            return node
        if self.config.lowercase:
            tokens = [t.lower() for t in tokens]
        phrase = " ".join(tokens)
        if node.label in self.config.pass_through:
            return Tree(node.label, (Literal(phrase, quoted=True),))
        entity = self.lookup(node.label, tokens)
        if entity is not None:
            return Tree(node.label, entity_leaves(entity))
        policy = self.config.miss_policy
        if policy is MissPolicy.FAIL:
            raise ResolutionError(node.label, phrase)
        if policy is MissPolicy.DROP_SLOT:
            return None
        return Tree(node.label, (Literal(phrase, quoted=True),))

    def _node(self, node: Tree, is_root: bool = False) -> Optional[Tree]:
        cfg = self.config
        label = node.label
        has_subtrees = any(isinstance(c, Tree) for c in node.children)
        if label in cfg.slot_to_catalog or label in cfg.pass_through:
            if has_subtrees:
                raise ResolverConfigError(f"slot {label} has nested constructors")
            return self._slot(node)
        if label not in cfg.structural and not has_subtrees and node.children:
            if any(isinstance(c, Token) for c in node.children):
                raise ResolverConfigError(f"leaf slot {label} is neither mapped to a catalog nor pass-through")
        kids = []
        for c in node.children:
            if isinstance(c, Tree):
                r = self._node(c)
                if r is not None:
                    kids.append(r)
            elif isinstance(c, Literal):
                kids.append(c)
        emptied = has_subtrees and not kids
        for intent, default in cfg.default_slots:
            if label == intent and not any(isinstance(k, Tree) and k.label == default.label for k in kids):
                kids.insert(0, default)
        if emptied and not is_root and label not in self._intents:
            return None
        return Tree(label, tuple(kids))


def resolve(tree: Tree, catalogs: dict, config: Optional[ResolverConfig] = None) -> Tree:
    return Resolver(catalogs, config).resolve(tree)


def extend_catalogs(catalogs: dict, extra: dict) -> dict:
    """Merged copy of ``catalogs`` with ``extra`` entries per catalog name."""
    out = dict(catalogs)
    for name, entries in extra.items():
        entries = list(entries)
        if not entries:
            continue
        base = out.get(name)
        out[name] = base.merged(entries) if base is not None else Catalog(name, entries)
    return out
