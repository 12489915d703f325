"""Exact-match scoring, error-subset reports, dataset statistics."""

from __future__ import annotations

import logging
import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

from .semtree import (
    Literal, NotTopError, SemTree, Tree, TreeSyntaxError, decouple,
    is_leaf_slot, linearize, parse_linearized, restore_root, tokenize, unordered_equal, walk,
)

log = logging.getLogger(__name__)

DEFAULT_INTENTS = ("PIZZAORDER", "DRINKORDER")


class Mode(str, Enum):
    EXR = "exr"
    TOP = "top"
    TOP_DROP_TOKENS = "top_drop_tokens"


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    id: str
    gold: SemTree
    pred: Optional[SemTree]
    correct: bool
    src: Optional[str] = None
    error: Optional[str] = None

    def __post_init__(self):
        if self.correct and self.pred is None:
            raise ValueError("a correct record needs a prediction")


@dataclass
class RunSummary:
    em: Optional[float]
    n: int
    correct: int
    records: list = field(default_factory=list)
    subset_em: Optional[float] = None
    subset_n: Optional[int] = None

    def to_dict(self, per_record: bool = True) -> dict:
        doc = {"em": self.em, "n": self.n, "correct": self.correct}
        if self.subset_n is not None:
            doc["subset"] = {"em": self.subset_em, "n": self.subset_n}
        if per_record:
            doc["records"] = [
                {"id": r.id, "correct": r.correct,
                 "pred": linearize(r.pred) if r.pred is not None else None,
                 **({"error": r.error} if r.error else {})}
                for r in self.records
            ]
        return doc


def _kind(mode: Mode) -> str:
    return "exr" if mode is Mode.EXR else "top"


def as_tree(x: Union[str, SemTree, None], mode: Mode, root: Optional[str] = "ORDER") -> Optional[SemTree]:
    """Parse a linearized tree, restoring a stripped root constructor."""
    if x is None or not isinstance(x, str):
        return x
    if root:
        return restore_root(x, root, _kind(mode))
    return parse_linearized(x, _kind(mode))


def trees_match(gold: SemTree, pred: SemTree, mode: Mode) -> bool:
    if mode is Mode.TOP_DROP_TOKENS:
        return unordered_equal(decouple(gold), decouple(pred))
    return unordered_equal(gold, pred)


def em_score(preds: dict, golds: dict, mode: Union[Mode, str] = Mode.EXR,
             root: Optional[str] = "ORDER", srcs: Optional[dict] = None) -> RunSummary:
    """Exact match of ``preds`` against ``golds`` (both keyed by id).

    Values may be trees or linearized strings.  Predictions that are missing,
    unparseable or ill-formed for the mode count as incorrect.
    """
    mode = Mode(mode)
    if set(preds) != set(golds):
        missing = sorted(set(golds) - set(preds))[:5]
        extra = sorted(set(preds) - set(golds))[:5]
        raise EvalError(f"prediction and gold ids differ (missing {missing}, unexpected {extra})")
    records = []
    correct = 0
    for rid in golds:
        gold = as_tree(golds[rid], mode, root)
        if mode is Mode.TOP_DROP_TOKENS:
            decouple(gold)  # gold must be TOP; let NotTopError propagate
        pred, err, ok = None, None, False
        try:
            pred = as_tree(preds[rid], mode, root)
            if pred is None:
                err = "no prediction"
            else:
                ok = trees_match(gold, pred, mode)
        except (TreeSyntaxError, NotTopError, ValueError) as e:
            err = f"malformed prediction: {e}"
            pred = None
        correct += ok
        records.append(EvalRecord(rid, gold, pred, ok, (srcs or {}).get(rid), err))
    n = len(records)
    return RunSummary(correct / n if n else None, n, correct, records)


def subset_report(base: RunSummary, model: RunSummary) -> RunSummary:
    """Model EM restricted to the ids the base system got wrong."""
    base_ids = {r.id for r in base.records}
    model_by_id = {r.id: r for r in model.records}
    if base_ids != set(model_by_id):
        raise EvalError("base and model results cover different ids")
    subset = [model_by_id[r.id] for r in base.records if not r.correct]
    k = sum(r.correct for r in subset)
    em = k / len(subset) if subset else None
    return RunSummary(em, len(subset), k, subset, subset_em=em, subset_n=len(subset))


def aggregate_runs(values: Iterable[float]) -> tuple[float, float]:
    """Mean and standard error (sample stdev over sqrt n)."""
    xs = list(values)
    if len(xs) < 2:
        raise EvalError("aggregate_runs needs at least two values")
    return statistics.fmean(xs), statistics.stdev(xs) / math.sqrt(len(xs))


def format_mean_stderr(mean: float, stderr: float, percent: bool = True) -> str:
    scale = 100.0 if percent else 1.0
    return f"{mean * scale:.2f} ± {stderr * scale:.2f}"


# -- dataset statistics ------------------------------------------------------

@dataclass
class DatasetStats:
    n_utts: int
    unique_entities: int
    avg_entities_per_utt: float
    avg_intents_per_utt: float
    parser_accuracy: Optional[float] = None
    skipped: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def slot_values(tree: SemTree) -> list[tuple]:
    """(label, literal values) for every leaf slot of an EXR tree."""
    out = []
    for node in walk(tree):
        if is_leaf_slot(node):
            out.append((node.label, tuple(c.value for c in node.children if isinstance(c, Literal))))
    return out


def dataset_stats(records, intents=DEFAULT_INTENTS, parser=None, skipped: int = 0,
                  root: str = "ORDER") -> DatasetStats:
    """Counts over records with an ``exr`` field (dicts or DatasetRecord).

    Entities are leaf-slot occurrences, unique entities the distinct slot
    values, intents the occurrences of ``intents``.  With ``parser`` the
    top-1 parse of each ``src`` is scored against the EXR.
    """
    n = 0
    n_entities = 0
    n_intents = 0
    values = set()
    hits = 0
    intents = set(intents)
    for rec in records:
        get = rec.get if isinstance(rec, dict) else (lambda k, r=rec: getattr(r, k, None))
        exr_text = get("exr")
        try:
            if exr_text is None:
                raise EvalError("record has no exr")
            exr = restore_root(exr_text, root, "exr")
        except (ValueError, TypeError) as e:
            log.warning("skipped record %s: %s", get("id"), e)
            skipped += 1
            continue
        n += 1
        slots = slot_values(exr)
        n_entities += len(slots)
        values.update(v for _, v in slots)
        n_intents += sum(1 for node in walk(exr) if isinstance(node, Tree) and node.label in intents)
        if parser is not None:
            result = parser.parse(tokenize(get("src") or "", lowercase=True), top_k=1)
            if result and unordered_equal(result[0].exr, exr):
                hits += 1
    return DatasetStats(
        n_utts=n,
        unique_entities=len(values),
        avg_entities_per_utt=n_entities / n if n else 0.0,
        avg_intents_per_utt=n_intents / n if n else 0.0,
        parser_accuracy=(hits / n if n else None) if parser is not None else None,
        skipped=skipped,
    )
