"""Sampling utterances with their EXR and TOP trees from a grammar."""

from __future__ import annotations

import json
import random
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine.actions import replay, to_exr
from .engine.compiled import (
    CAction, CAlt, CCatalog, CEps, CRef, CSeq, CTerm, compile_grammar,
)
from .engine.derivation import Derivation, make
from .engine.top import value_to_top
from .grammar.ast import Grammar
from .semtree import (
    NATURAL, Natural, OrderingPolicy, RandomOrder, SemTree, Tree, decouple,
    linearize, reorder, strip_root, walk,
)


class SamplingError(RuntimeError):
    pass


class DatasetWriteError(OSError):
    def __init__(self, message: str, written: int):
        super().__init__(message)
        self.written = written


class _Reject(Exception):
    def __init__(self, reason: str):
        self.reason = reason


@dataclass(frozen=True)
class SampleConstraints:
    seed: int = 0
    max_depth: int = 64
    max_tokens: int = 64
    # (definition, branch) for the definition's first Alt, or
    # (definition, alt index, branch)
    branch_mask: frozenset = frozenset()
    filters: tuple = ()
    max_retries: int = 1000

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        unknown = [f for f in self.filters if f not in FILTERS]
        if unknown:
            raise ValueError(f"unknown filter(s): {', '.join(unknown)}; known: {', '.join(sorted(FILTERS))}")
        object.__setattr__(self, "branch_mask", frozenset(self.branch_mask))
        object.__setattr__(self, "filters", tuple(self.filters))


@dataclass(frozen=True)
class Sample:
    tokens: list
    exr: SemTree
    top: Optional[Tree]
    derivation: Derivation


# -- filters -----------------------------------------------------------------

def _affirmed_and_negated(tree: SemTree):
    affirmed, negated = set(), set()

    def visit(node, parent):
        if not isinstance(node, Tree):
            return
        if node.label == "TOPPING":
            (negated if parent == "NOT" else affirmed).add(node.children)
        for c in node.children:
            visit(c, node.label)

    visit(tree, None)
    return affirmed, negated


def conflict_filter(sample: Sample) -> bool:
    """Reject a topping that is both requested and negated."""
    affirmed, negated = _affirmed_and_negated(sample.exr)
    return bool(affirmed & negated)


def duplicate_filter(sample: Sample) -> bool:
    """Reject an intent that names the same slot value twice."""
    for node in walk(sample.exr):
        if isinstance(node, Tree):
            seen = Counter(c for c in node.children if isinstance(c, Tree) and c.label != "NUMBER")
            if any(v > 1 for v in seen.values()):
                return True
    return False


FILTERS: dict[str, Callable[[Sample], bool]] = {
    "conflict": conflict_filter,
    "duplicate": duplicate_filter,
}


# -- sampling ----------------------------------------------------------------

def _normalize_mask(mask, grammar: Grammar) -> set:
    out = set()
    for key in mask:
        if len(key) == 2:
            key = (key[0], 0, key[1])
        name, idx, b = key
        alt = grammar.alts.get((name, idx))
        if alt is None or not 0 <= b < len(alt.branches):
            raise ValueError(f"branch mask entry {key} does not name a branch")
        out.add((name, idx, b))
    for (name, idx), alt in grammar.alts.items():
        if all((name, idx, b) in out for b in range(len(alt.branches))):
            raise ValueError(f"branch mask disables every branch of {name}#{idx}")
    return out


class Sampler:
    def __init__(self, grammar: Grammar, catalogs: Optional[dict], constraints: SampleConstraints):
        self.grammar = grammar
        self.catalogs = dict(catalogs or {})
        self.constraints = constraints
        self.defs = compile_grammar(grammar)
        self.mask = _normalize_mask(constraints.branch_mask, grammar)
        self._alias_tables = {}
        self._filters = [(name, FILTERS[name]) for name in constraints.filters]

    def _aliases(self, name: str):
        table = self._alias_tables.get(name)
        if table is None:
            cat = self.catalogs.get(name)
            if cat is None:
                raise SamplingError(f"no catalog named {name!r}")
            table = sorted(cat.alias_table().items())
            if not table:
                raise SamplingError(f"catalog {name!r} is empty")
            self._alias_tables[name] = table
        return table

    def _gen(self, node, out: list, depth: int, rng: random.Random) -> Derivation:
        c = self.constraints
        pos = len(out)
        if isinstance(node, CTerm):
            out.extend(node.words)
            if len(out) > c.max_tokens:
                raise _Reject("max-tokens")
            return make("term", pos, len(out), name=node.text)
        if isinstance(node, CSeq):
            kids = [self._gen(i, out, depth, rng) for i in node.items]
            return make("seq", pos, len(out), kids)
        if isinstance(node, CAlt):
            name, idx = node.alt_id
            choices = [
                i for i, p in enumerate(node.probs)
                if p > 0 and (name, idx, i) not in self.mask
            ]
            if not choices:
                raise SamplingError(f"no enabled branch with positive probability in {name}#{idx}")
            i = rng.choices(choices, weights=[node.probs[i] for i in choices])[0]
            d = self._gen(node.branches[i], out, depth, rng)
            return make("alt", pos, len(out), (d,), factor=node.probs[i], alt=node.alt_id, choice=i)
        if isinstance(node, CRef):
            if depth >= c.max_depth:
                raise _Reject("max-depth")
            d = self._gen(self.defs[node.name].body, out, depth + 1, rng)
            return make("ref", pos, len(out), (d,), name=node.name, payload=node.args)
        if isinstance(node, CCatalog):
            table = self._aliases(node.name)
            entity, aliases = table[rng.randrange(len(table))]
            alias, p = rng.choices(aliases, weights=[a[1] for a in aliases])[0]
            out.extend(alias)
            if len(out) > c.max_tokens:
                raise _Reject("max-tokens")
            return make("catalog", pos, len(out), name=node.name, entity=entity, factor=p)
        if isinstance(node, CAction):
            return make("action", pos, pos, payload=node.fun)
        if isinstance(node, CEps):
            return make("eps", pos, pos)
        raise TypeError(node)

    def sample(self, rng: Optional[random.Random] = None) -> Sample:
        if rng is None:
            rng = random.Random(self.constraints.seed)
        reasons: Counter = Counter()
        root = CRef(self.grammar.start, ())
        for _ in range(self.constraints.max_retries):
            out: list = []
            try:
                d = self._gen(root, out, 0, rng)
            except _Reject as r:
                reasons[r.reason] += 1
                continue
            value = replay(d, self.defs)
            exr = to_exr(value)
            top = value_to_top(value, out) if isinstance(exr, Tree) else None
            s = Sample(out, exr, top, d)
            rejected = next((n for n, f in self._filters if f(s)), None)
            if rejected:
                reasons[rejected] += 1
                continue
            return s
        worst = reasons.most_common(1)[0][0] if reasons else "unknown"
        raise SamplingError(
            f"no sample accepted after {self.constraints.max_retries} attempts; "
            f"binding constraint: {worst} ({dict(reasons)})")


def sample(grammar: Grammar, catalogs: Optional[dict], constraints: SampleConstraints,
           rng: Optional[random.Random] = None) -> Sample:
    return Sampler(grammar, catalogs, constraints).sample(rng)


def record_rng(seed: int, index: int) -> random.Random:
    """Independent stream for record ``index``; string seeds hash stably."""
    return random.Random(f"{seed}/{index}")


# -- datasets ----------------------------------------------------------------

@dataclass
class _Job:
    grammar: Grammar
    catalogs: dict
    constraints: SampleConstraints
    strip_order: bool = False
    ordering: OrderingPolicy = field(default_factory=Natural)


_WORKER: dict = {}


def _render_subtree(tree, strip: bool) -> str:
    return strip_root(tree) if strip else linearize(tree)


def make_record(sampler: Sampler, index: int, strip_order=False, ordering=NATURAL) -> dict:
    rng = record_rng(sampler.constraints.seed, index)
    s = sampler.sample(rng)
    exr = s.exr
    if isinstance(ordering, RandomOrder):
        exr = reorder(exr, RandomOrder(rng.getrandbits(64)))
    elif not isinstance(ordering, Natural):
        exr = reorder(exr, ordering)
    return {
        "id": str(index),
        "src": " ".join(s.tokens),
        "exr": _render_subtree(exr, strip_order),
        "top": _render_subtree(s.top, strip_order),
        "top_decoupled": _render_subtree(decouple(s.top), strip_order),
    }


def _worker_init(job: _Job):
    _WORKER["sampler"] = Sampler(job.grammar, job.catalogs, job.constraints)
    _WORKER["job"] = job


def _worker_record(index: int) -> str:
    job = _WORKER["job"]
    rec = make_record(_WORKER["sampler"], index, job.strip_order, job.ordering)
    return json.dumps(rec, ensure_ascii=False)


def generate_dataset(grammar: Grammar, catalogs: Optional[dict], n: int,
                     constraints: SampleConstraints, sink, *, strip_order: bool = False,
                     ordering: OrderingPolicy = NATURAL, workers: int = 1,
                     progress: bool = False) -> int:
    """Write ``n`` JSONL records to the text stream ``sink``; return the count.

    Record ``i`` depends only on (seed, i), so output is identical for any
    worker count.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    job = _Job(grammar, dict(catalogs or {}), constraints, strip_order, ordering)
    written = 0

    def emit(line: str):
        nonlocal written
        try:
            sink.write(line + "\n")
        except OSError as e:
            raise DatasetWriteError(f"write failed after {written} records: {e}", written) from e
        written += 1
        if progress and written % 1000 == 0:
            print(f"generated {written}/{n}", file=sys.stderr)

    if workers <= 1:
        _worker_init(job)
        for i in range(n):
            emit(_worker_record(i))
    else:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(job,)) as pool:
            for line in pool.map(_worker_record, range(n), chunksize=64):
                emit(line)
    return written
