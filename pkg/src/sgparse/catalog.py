"""Entity catalogs: alias phrases mapped to entity ids with a probability.

Catalog files are UTF-8 TSV with three columns::

    ricotta             RICOTTA_CHEESE  0.5
    ricotta cheese      RICOTTA_CHEESE  0.5

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import os
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence


class CatalogError(ValueError):
    pass


class Catalog:
    """Immutable alias table with a prefix index over token sequences.

    The index is a hashed token trie: every alias and every proper prefix of
    an alias is stored under its space-joined token string, so a lookup walks
    forward one token at a time and stops as soon as the prefix is unknown.
    Lookup cost therefore depends on the match length, not catalog size.
    """

    def __init__(self, name: str, entries: Iterable[tuple] = ()):
        self.name = name
        self._entries: list[tuple[tuple[str, ...], str, float]] = []
        self._by_alias: dict[str, list[tuple[str, float]]] = {}
        self._prefixes: set[str] = set()
        seen: dict[tuple[str, str], float] = {}
        for alias, entity, prob in entries:
            alias = tuple(alias.split()) if isinstance(alias, str) else tuple(alias)
            if not alias:
                raise CatalogError(f"{name}: empty alias for {entity}")
            if not 0.0 < prob <= 1.0:
                raise CatalogError(f"{name}: probability {prob} out of range (0, 1]")
            key = " ".join(alias)
            if (key, entity) in seen:
                raise CatalogError(f"{name}: duplicate alias {key!r} for {entity}")
            seen[(key, entity)] = prob
            self._entries.append((alias, entity, prob))
            self._by_alias.setdefault(key, []).append((entity, prob))
            for i in range(1, len(alias)):
                self._prefixes.add(" ".join(alias[:i]))

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"Catalog({self.name!r}, {len(self)} entries)"

    @property
    def entries(self) -> list[tuple[tuple[str, ...], str, float]]:
        return list(self._entries)

    def lookup(self, tokens: Sequence[str], start: int = 0) -> list[tuple[int, str, float]]:
        """All aliases matching ``tokens[start:end]``.

        Returns ``(end, entity, prob)`` sorted by descending end, then
        descending probability.
        """
        out = []
        key = ""
        for end in range(start + 1, len(tokens) + 1):
            key = tokens[end - 1] if end == start + 1 else key + " " + tokens[end - 1]
            hits = self._by_alias.get(key)
            if hits:
                out.extend((end, e, p) for e, p in hits)
            if key not in self._prefixes:
                break
        out.sort(key=lambda m: (-m[0], -m[2], m[1]))
        return out

    def match_phrase(self, phrase: Sequence[str]) -> list[tuple[str, float]]:
        """Entities whose alias is exactly ``phrase``, best first."""
        hits = self._by_alias.get(" ".join(phrase), [])
        return sorted(hits, key=lambda h: (-h[1], h[0]))

    def entities(self) -> list[str]:
        return sorted({e for _, e, _ in self._entries})

    def aliases(self, entity: str) -> list[tuple[tuple[str, ...], float]]:
        return [(a, p) for a, e, p in self._entries if e == entity]

    def alias_table(self) -> dict[str, list[tuple[tuple[str, ...], float]]]:
        table = defaultdict(list)
        for a, e, p in self._entries:
            table[e].append((a, p))
        return dict(table)

    def stats(self) -> tuple[int, float]:
        """(number of unique entities, average aliases per entity)."""
        n = len({e for _, e, _ in self._entries})
        return n, (len(self._entries) / n if n else 0.0)

    def merged(self, extra: Iterable[tuple]) -> "Catalog":
        """A new catalog with ``extra`` entries added.

        Re-adding an existing (alias, entity) pair is allowed only with the
        same probability.
        """
        known = {(" ".join(a), e): p for a, e, p in self._entries}
        added = []
        for alias, entity, prob in extra:
            alias = tuple(alias.split()) if isinstance(alias, str) else tuple(alias)
            key = (" ".join(alias), entity)
            if key in known:
                if known[key] != prob:
                    raise CatalogError(
                        f"{self.name}: conflicting probability for {key[0]!r} -> {entity}: "
                        f"{known[key]} vs {prob}")
                continue
            known[key] = prob
            added.append((alias, entity, prob))
        return Catalog(self.name, self._entries + added)


def read_catalog_lines(lines: Iterable[str], source: str, lowercase: bool = True) -> list[tuple]:
    entries = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise CatalogError(f"{source}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
        alias, entity, prob_text = cols
        try:
            prob = float(prob_text)
        except ValueError:
            raise CatalogError(f"{source}:{lineno}: bad probability {prob_text!r}") from None
        if not 0.0 < prob <= 1.0:
            raise CatalogError(f"{source}:{lineno}: probability {prob} out of range (0, 1]")
        if lowercase:
            alias = alias.lower()
        if not alias.split():
            raise CatalogError(f"{source}:{lineno}: empty alias")
        entries.append((alias, entity.strip(), prob))
    return entries


def load_catalog(path, name: Optional[str] = None, lowercase: bool = True) -> Catalog:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        entries = read_catalog_lines(f, str(path), lowercase)
    try:
        return Catalog(name or path.stem, entries)
    except CatalogError as e:
        raise CatalogError(f"{path}: {e}") from None


def load_catalog_dir(directory, lowercase: bool = True) -> dict[str, Catalog]:
    """Load every ``*.tsv`` in ``directory``; the file stem is the catalog name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CatalogError(f"catalog directory not found: {directory}")
    return {
        p.stem: load_catalog(p, lowercase=lowercase)
        for p in sorted(directory.glob("*.tsv"))
    }


def read_extra_entities(path, lowercase: bool = True) -> dict[str, list[tuple]]:
    """Extra entries for several catalogs.

    ``path`` is either a directory of per-catalog TSVs or one TSV with a
    leading catalog-name column.
    """
    path = Path(path)
    if path.is_dir():
        return {n: c.entries for n, c in load_catalog_dir(path, lowercase).items()}
    out: dict[str, list[tuple]] = defaultdict(list)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise CatalogError(f"{path}:{lineno}: expected 4 tab-separated columns")
            (entry,) = read_catalog_lines(["\t".join(cols[1:])], f"{path}:{lineno}", lowercase)
            out[cols[0]].append(entry)
    return dict(out)


def default_catalog_dir() -> Optional[str]:
    return os.environ.get("SGPARSE_CATALOG_DIR")
