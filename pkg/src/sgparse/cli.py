"""Command-line interface.

Exit codes: 0 when the command ran (individual records may still fail),
2 for configuration or usage errors, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from importlib import resources
from pathlib import Path
from typing import Optional

from .catalog import CatalogError, load_catalog_dir, read_extra_entities
from .engine import GrammarError, Parser
from .evalkit import EvalError, Mode, dataset_stats, em_score, subset_report
from .flatlabels import (
    FlattenMap, LabelError, labels_to_top, read_conll, repair_sequence,
    top_to_labels, write_conll,
)
from .grammar import GrammarSyntaxError, load_grammar
from .records import RecordError, iter_records, load_field_map, read_predictions
from .resolver import (
    ResolutionError, ResolverConfig, ResolverConfigError, Resolver, extend_catalogs,
)
from .sampler import SampleConstraints, SamplingError, generate_dataset
from .semtree import (
    NATURAL, SORTED, RandomOrder, TreeSyntaxError, decouple, linearize,
    parse_linearized, restore_root, strip_root, tokenize,
)

SCHEMA_VERSION = 1
CATALOG_ENV = "SGPARSE_CATALOG_DIR"
log = logging.getLogger("sgparse")


class ConfigError(Exception):
    """Bad flags, files or configuration: exit code 2."""


def demo_path(*parts) -> Path:
    return Path(str(resources.files("sgparse").joinpath("data", "demo", *parts)))


# -- shared loaders ------------------------------------------------------------

def _catalogs(path: Optional[str]):
    path = path or os.environ.get(CATALOG_ENV) or str(demo_path("catalogs"))
    try:
        return load_catalog_dir(path)
    except CatalogError as e:
        raise ConfigError(str(e)) from None


def _grammar(path: Optional[str], start: Optional[str] = None):
    path = path or str(demo_path("pizza.sg"))
    try:
        return load_grammar(path, start=start)
    except FileNotFoundError:
        raise ConfigError(f"grammar file not found: {path}") from None
    except GrammarSyntaxError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parser(args, catalogs=None):
    grammar = _grammar(args.grammar, getattr(args, "start", None))
    catalogs = catalogs if catalogs is not None else _catalogs(args.catalog_dir)
    try:
        return Parser(grammar, catalogs, cap=args.cap)
    except GrammarError as e:
        for d in e.diagnostics:
            print(f"{args.grammar or 'pizza.sg'}:{d}", file=sys.stderr)
        raise ConfigError("grammar failed validation") from None


@contextmanager
def _open_out(path: Optional[str]):
    if not path or path == "-":
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8") as f:
        yield f


def _read_lines(path: Optional[str]) -> list[str]:
    if not path or path == "-":
        return sys.stdin.read().splitlines()
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None


def _is_jsonl(lines: list[str]) -> bool:
    first = next((ln for ln in lines if ln.strip()), "")
    return first.lstrip().startswith("{")


def _load_records(path: str, field_map_spec: Optional[str] = None, skipped=None):
    if not Path(path).exists():
        raise ConfigError(f"dataset not found: {path}")
    try:
        fmap = load_field_map(field_map_spec)
    except (RecordError, json.JSONDecodeError) as e:
        raise ConfigError(str(e)) from None
    return list(iter_records(path, fmap, skipped))


# -- parse -----------------------------------------------------------------------

_PARSE_WORKER: dict = {}


def _parse_init(parser, emit, top_k, lowercase):
    _PARSE_WORKER.update(parser=parser, emit=emit, top_k=top_k, lowercase=lowercase)


def _parse_line(item) -> dict:
    i, line = item
    w = _PARSE_WORKER
    parser: Parser = w["parser"]
    tokens = tokenize(line, lowercase=w["lowercase"])
    rec = {"line": i, "src": line, "exr": None, "results": []}
    if w["emit"] in ("top", "both"):
        rec["top"] = None
        rec["top_decoupled"] = None
    try:
        result = parser.parse(tokens, top_k=w["top_k"])
    except Exception as e:  # per-record failure, reported in the record
        rec["error"] = f"{type(e).__name__}: {e}"
        return rec
    for k, item in enumerate(result):
        out = {"prob": item.prob}
        if w["emit"] in ("exr", "both"):
            out["exr"] = linearize(item.exr)
        if w["emit"] in ("top", "both"):
            try:
                top = parser.top(item.derivation, tokens)
                out["top"] = linearize(top)
                out["top_decoupled"] = linearize(decouple(top))
            except Exception as e:
                out["top_error"] = str(e)
        rec["results"].append(out)
    if result:
        best = rec["results"][0]
        rec["exr"] = linearize(result[0].exr)
        if "top" in best:
            rec["top"] = best["top"]
            rec["top_decoupled"] = best["top_decoupled"]
    rec["truncated"] = result.truncated
    return rec


def cmd_parse(args) -> int:
    parser = _parser(args)
    lines = _read_lines(args.input)
    items = list(enumerate(lines))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers, initializer=_parse_init,
                                 initargs=(parser, args.emit, args.top_k, not args.keep_case)) as pool:
            records = list(pool.map(_parse_line, items, chunksize=16))
    else:
        _parse_init(parser, args.emit, args.top_k, not args.keep_case)
        records = [_parse_line(it) for it in items]
    with _open_out(args.out) as f:
        for rec in records:
            if args.format == "json":
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            else:
                parts = []
                if args.emit in ("exr", "both"):
                    parts.append(rec["exr"] or "NO_PARSE")
                if args.emit in ("top", "both"):
                    parts.append(rec.get("top") or "NO_PARSE")
                f.write("\t".join(parts) + "\n")
    return 0


# -- generate --------------------------------------------------------------------

def _ordering(name: str, seed: int):
    if name == "natural":
        return NATURAL
    if name == "sorted":
        return SORTED
    return RandomOrder(seed)


def _mask(specs) -> frozenset:
    out = set()
    for spec in specs or ():
        parts = spec.split(":")
        try:
            if len(parts) == 2:
                out.add((parts[0], int(parts[1])))
            elif len(parts) == 3:
                out.add((parts[0], int(parts[1]), int(parts[2])))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"bad --mask {spec!r}; use NAME:BRANCH or NAME:ALT:BRANCH") from None
    return frozenset(out)


def cmd_generate(args) -> int:
    if args.n < 1:
        raise ConfigError("-n must be at least 1")
    grammar = _grammar(args.grammar, args.start)
    catalogs = _catalogs(args.catalog_dir)
    filters = tuple(f for f in (args.filters or "").split(",") if f)
    try:
        constraints = SampleConstraints(
            seed=args.seed, max_depth=args.max_depth, max_tokens=args.max_tokens,
            branch_mask=_mask(args.mask), filters=filters, max_retries=args.max_retries)
        Parser(grammar, catalogs)  # validates
    except GrammarError as e:
        for d in e.diagnostics:
            print(str(d), file=sys.stderr)
        raise ConfigError("grammar failed validation") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    with _open_out(args.out) as f:
        try:
            n = generate_dataset(grammar, catalogs, args.n, constraints, f,
                                 strip_order=args.strip_order,
                                 ordering=_ordering(args.order, args.seed),
                                 workers=args.workers, progress=args.progress)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    print(f"wrote {n} records", file=sys.stderr)
    return 0


# -- convert --------------------------------------------------------------------

def _tree_inputs(path: str, field: str, field_map: Optional[str]):
    """(id, linearized tree, is_jsonl) triples from a JSONL dataset or a text file."""
    lines = _read_lines(path)
    if _is_jsonl(lines):
        recs = _load_records(path, field_map)
        out = []
        for r in recs:
            text = getattr(r, field) or (r.top_decoupled if field == "top" else None)
            out.append((r.id, text))
        return out, True
    return [(str(i), ln.strip() or None) for i, ln in enumerate(lines)], False


def _flatten_map(path: Optional[str]) -> FlattenMap:
    if not path:
        return FlattenMap()
    try:
        return FlattenMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, ValueError, AttributeError) as e:
        raise ConfigError(f"bad flatten map {path}: {e}") from None


def cmd_convert(args) -> int:
    fmap = _flatten_map(args.flatten_map)
    src, dst = args.from_, args.to
    if src == "labels":
        if dst != "top":
            raise ConfigError("--from labels only converts --to top")
        return _labels_to_top(args, fmap)
    if dst not in ("decoupled", "labels"):
        raise ConfigError(f"cannot convert {src} to {dst}")
    items, jsonl = _tree_inputs(args.input, "top", args.field_map)
    if dst == "labels":
        if not args.out or args.out == "-":
            raise ConfigError("--to labels needs --out PREFIX")
        is_seqs, ner_seqs = [], []
        for rid, text in items:
            try:
                tree = restore_root(text, args.root, "top")
                is_seq, ner = top_to_labels(tree, fmap)
            except (TreeSyntaxError, LabelError, ValueError, TypeError) as e:
                log.warning("record %s skipped: %s", rid, e)
                continue
            is_seqs.append(is_seq)
            ner_seqs.extend(ner)
        with open(args.out + ".is.conll", "w", encoding="utf-8") as f:
            write_conll(is_seqs, f)
        with open(args.out + ".ner.conll", "w", encoding="utf-8") as f:
            write_conll(ner_seqs, f)
        print(f"wrote {len(is_seqs)} utterances, {len(ner_seqs)} intent spans", file=sys.stderr)
        return 0
    with _open_out(args.out) as f:
        for rid, text in items:
            out, err = None, None
            try:
                out = linearize(decouple(parse_linearized(text, "top")))
            except (TreeSyntaxError, ValueError, TypeError) as e:
                err = str(e)
                log.warning("record %s: %s", rid, e)
            if jsonl:
                doc = {"id": rid, "top_decoupled": out}
                if err:
                    doc["error"] = err
                f.write(json.dumps(doc, ensure_ascii=False) + "\n")
            else:
                f.write((out or "") + "\n")
    return 0


def _labels_to_top(args, fmap) -> int:
    prefix = args.input
    try:
        with open(prefix + ".is.conll", encoding="utf-8") as f:
            is_seqs = read_conll(f)
        with open(prefix + ".ner.conll", encoding="utf-8") as f:
            ner_seqs = read_conll(f)
    except FileNotFoundError as e:
        raise ConfigError(f"label file not found: {e.filename}") from None
    except LabelError as e:
        raise ConfigError(str(e)) from None
    k = 0
    with _open_out(args.out) as f:
        for seq in is_seqs:
            if args.repair:
                seq = repair_sequence(seq)
            n_spans = sum(1 for lab in seq.labels if lab.startswith("B-"))
            spans = ner_seqs[k:k + n_spans]
            k += n_spans
            if args.repair:
                spans = [repair_sequence(s) for s in spans]
            try:
                tree = labels_to_top(seq.tokens, seq.labels, spans, fmap, root=args.root)
                f.write(linearize(tree) + "\n")
            except LabelError as e:
                log.warning("utterance %r: %s", " ".join(seq.tokens), e)
                f.write("\n")
    return 0


# -- resolve --------------------------------------------------------------------

def cmd_resolve(args) -> int:
    if args.catalog_dir and not Path(args.catalog_dir).is_dir():
        raise ConfigError(f"catalog directory not found: {args.catalog_dir}")
    catalogs = _catalogs(args.catalog_dir)
    try:
        config = ResolverConfig.load(args.config) if args.config else ResolverConfig.load(demo_path("resolver.json"))
        if args.miss_policy:
            config = config.with_policy(args.miss_policy)
        if args.extra_entities:
            if not Path(args.extra_entities).exists():
                raise ConfigError(f"extra entities not found: {args.extra_entities}")
            catalogs = extend_catalogs(catalogs, read_extra_entities(args.extra_entities))
        resolver = Resolver(catalogs, config)
    except (ResolverConfigError, CatalogError) as e:
        raise ConfigError(str(e)) from None
    items, jsonl = _tree_inputs(args.input, args.field, args.field_map)
    failed = 0
    with _open_out(args.out) as f:
        for rid, text in items:
            out, err = None, None
            try:
                tree = restore_root(text, args.root, "top")
                exr = resolver.resolve(tree)
                out = strip_root(exr, args.root) if args.strip_order else linearize(exr)
            except (ResolutionError, ResolverConfigError, TreeSyntaxError, ValueError, TypeError) as e:
                err = str(e)
                failed += 1
            if (args.format or ("json" if jsonl else "text")) == "json":
                doc = {"id": rid, "exr": out}
                if err:
                    doc["error"] = err
                f.write(json.dumps(doc, ensure_ascii=False) + "\n")
            else:
                f.write((out or "") + "\n")
    if failed:
        print(f"{failed} of {len(items)} records failed to resolve", file=sys.stderr)
    return 0


# -- eval / stats ---------------------------------------------------------------

def _golds(args, mode: Mode):
    field = args.gold_field or ("exr" if mode is Mode.EXR else "top")
    recs = _load_records(args.gold, args.field_map)
    golds = {}
    for r in recs:
        value = getattr(r, field)
        if value is None:
            raise ConfigError(f"gold record {r.id} has no {field} field")
        golds[r.id] = value
    return golds, {r.id: r.src for r in recs}


def _preds(path: str):
    if not Path(path).exists():
        raise ConfigError(f"prediction file not found: {path}")
    try:
        return read_predictions(path)
    except RecordError as e:
        raise ConfigError(str(e)) from None


def cmd_eval(args) -> int:
    mode = Mode(args.mode)
    golds, srcs = _golds(args, mode)
    try:
        summary = em_score(_preds(args.pred), golds, mode, root=args.root, srcs=srcs)
        report = {"schema_version": SCHEMA_VERSION, "mode": mode.value, "overall": summary.to_dict(False)}
        if args.subset_of:
            base = em_score(_preds(args.subset_of), golds, mode, root=args.root)
            sub = subset_report(base, summary)
            report["subset"] = {"base": args.subset_of, "em": sub.em, "n": sub.n, "base_em": base.em}
    except EvalError as e:
        raise ConfigError(str(e)) from None
    report["records"] = summary.to_dict(True)["records"]
    text = json.dumps(report, ensure_ascii=False, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.format == "json":
        print(text if not args.out else json.dumps({k: v for k, v in report.items() if k != "records"}))
    else:
        print(f"EM {summary.em:.4f} ({summary.correct}/{summary.n})" if summary.n else "EM n/a (0 records)")
        if "subset" in report:
            s = report["subset"]
            em = "n/a" if s["em"] is None else f"{s['em']:.4f}"
            print(f"subset EM {em} over {s['n']} records the base system missed")
    return 0


def cmd_stats(args) -> int:
    parser = _parser(args) if args.grammar else None
    report = {"schema_version": SCHEMA_VERSION, "datasets": {}}
    for path in args.dataset:
        skipped: list = []
        recs = _load_records(path, args.field_map, skipped)
        stats = dataset_stats(recs, intents=tuple(args.intents.split(",")), parser=parser,
                              skipped=len(skipped), root=args.root)
        report["datasets"][path] = stats.to_dict()
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        for path, s in report["datasets"].items():
            acc = "" if s["parser_accuracy"] is None else f"  parser EM {s['parser_accuracy']:.4f}"
            print(f"{path}: {s['n_utts']} utterances, {s['unique_entities']} unique entities, "
                  f"{s['avg_entities_per_utt']:.2f} entities/utt, {s['avg_intents_per_utt']:.2f} intents/utt"
                  f"{acc}  (skipped {s['skipped']})")
    return 0


# -- argument parsing -------------------------------------------------------------

def _add_grammar_flags(p, grammar_required=False):
    p.add_argument("--grammar", required=grammar_required,
                   help="grammar file (.sg); defaults to the bundled demo grammar")
    p.add_argument("--start", help="start definition (default: last definition)")
    p.add_argument("--catalog-dir", help=f"directory of catalog TSVs (default: ${CATALOG_ENV} or bundled demo)")
    p.add_argument("--cap", type=int, default=64, help="max derivations kept per definition, start and end")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgparse", description="Grammar-based semantic parsing toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse utterances, one per input line")
    _add_grammar_flags(p)
    p.add_argument("--input", help="input file (default stdin)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--emit", choices=["exr", "top", "both"], default="exr")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--keep-case", action="store_true", help="do not lowercase input")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("generate", help="sample a synthetic dataset")
    _add_grammar_flags(p)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters", default="conflict", help="comma-separated filter names")
    p.add_argument("--mask", action="append", help="disable a branch: NAME:BRANCH or NAME:ALT:BRANCH")
    p.add_argument("--max-depth", type=int, default=64)
    p.add_argument("--max-tokens", type=int, default=64)
    p.add_argument("--max-retries", type=int, default=1000)
    p.add_argument("--strip-order", action="store_true", help="drop the leading ORDER constructor")
    p.add_argument("--order", choices=["natural", "random", "sorted"], default="natural",
                   help="sibling order of exported EXR")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("convert", help="convert between TOP, TOP-Decoupled and BIO labels")
    p.add_argument("--from", dest="from_", choices=["top", "decoupled", "labels"], default="top")
    p.add_argument("--to", choices=["decoupled", "labels", "top"], required=True)
    p.add_argument("--input", help="JSONL dataset, text file of trees, or label file prefix")
    p.add_argument("--out", help="output file, or prefix for --to labels")
    p.add_argument("--flatten-map", help="JSON object mapping PARENT/CHILD paths to flat labels")
    p.add_argument("--field-map", help="JSON file or src=dst,... mapping dataset keys")
    p.add_argument("--repair", action="store_true", help="repair solitary I- labels before rebuilding")
    p.add_argument("--root", default="ORDER")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("resolve", help="entity-resolve TOP or TOP-Decoupled trees to EXR")
    p.add_argument("--catalog-dir")
    p.add_argument("--config", help="resolver config JSON (default: bundled)")
    p.add_argument("--extra-entities", help="TSV (catalog, alias, entity, prob) or directory of catalog TSVs")
    p.add_argument("--miss-policy", choices=["fail", "drop_slot", "keep_surface"])
    p.add_argument("--input")
    p.add_argument("--field", choices=["top", "top_decoupled"], default="top")
    p.add_argument("--field-map")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "text"],
                   help="output format (default: json for JSONL input, text otherwise)")
    p.add_argument("--strip-order", action="store_true")
    p.add_argument("--root", default="ORDER")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("eval", help="exact-match evaluation")
    p.add_argument("--pred", required=True, help="JSONL {id, pred} or one tree per line")
    p.add_argument("--gold", required=True, help="JSONL dataset")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="exr")
    p.add_argument("--gold-field", choices=["exr", "top", "top_decoupled"])
    p.add_argument("--subset-of", help="base-system predictions; report EM on the ids it misses")
    p.add_argument("--field-map")
    p.add_argument("--root", default="ORDER")
    p.add_argument("--out", help="write the full JSON report here")
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset", required=True, action="append")
    p.add_argument("--grammar", help="also report top-1 parser EM with this grammar")
    p.add_argument("--start")
    p.add_argument("--catalog-dir")
    p.add_argument("--cap", type=int, default=64)
    p.add_argument("--intents", default="PIZZAORDER,DRINKORDER")
    p.add_argument("--field-map")
    p.add_argument("--root", default="ORDER")
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SamplingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
