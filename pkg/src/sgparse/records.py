"""JSONL dataset records and prediction files."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, Optional

log = logging.getLogger(__name__)

FIELDS = ("id", "src", "exr", "top", "top_decoupled")

# key suffixes recognised when no explicit field map is given, so that keys
# such as "dev.TOP-DECOUPLED" land on top_decoupled
_SUFFIXES = [
    ("top_decoupled", "top_decoupled"), ("top-decoupled", "top_decoupled"),
    ("decoupled", "top_decoupled"), ("exr", "exr"), ("top", "top"),
    ("src", "src"), ("utterance", "src"), ("text", "src"), ("id", "id"),
]


class RecordError(ValueError):
    pass


@dataclass
class DatasetRecord:
    id: str
    src: str
    exr: Optional[str] = None
    top: Optional[str] = None
    top_decoupled: Optional[str] = None

    def __post_init__(self):
        if self.exr is None and self.top is None and self.top_decoupled is None:
            raise RecordError(f"record {self.id}: needs at least one of exr, top, top_decoupled")

    def to_json(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(doc, ensure_ascii=False)


def guess_field(key: str) -> Optional[str]:
    k = key.lower().rsplit(".", 1)[-1]
    if k in FIELDS:
        return k
    for suffix, name in _SUFFIXES:
        if k.endswith(suffix):
            return name
    return None


def map_fields(doc: dict, field_map: Optional[dict] = None) -> dict:
    out = {}
    for key, value in doc.items():
        name = field_map.get(key) if field_map else None
        if name is None:
            name = guess_field(key)
        if name in FIELDS and name not in out:
            out[name] = value
    return out


def load_field_map(spec: Optional[str]) -> Optional[dict]:
    """Field map from a JSON file path or an inline ``a=b,c=d`` string."""
    if not spec:
        return None
    p = Path(spec)
    if p.exists():
        doc = json.loads(p.read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise RecordError("field map file must hold a JSON object")
        return {str(k): str(v) for k, v in doc.items()}
    out = {}
    for part in spec.split(","):
        if "=" not in part:
            raise RecordError(f"bad field map entry {part!r}; expected source=target")
        src, dst = part.split("=", 1)
        out[src.strip()] = dst.strip()
    return out


def iter_records(path, field_map: Optional[dict] = None, skipped: Optional[list] = None
                 ) -> Iterator[DatasetRecord]:
    """Records of a JSONL file; malformed lines are logged and collected in ``skipped``."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if not isinstance(doc, dict):
                    raise RecordError("not a JSON object")
                fields = map_fields(doc, field_map)
                fields.setdefault("id", str(lineno - 1))
                fields["id"] = str(fields["id"])
                if "src" not in fields:
                    raise RecordError("no src field")
                yield DatasetRecord(**fields)
            except (json.JSONDecodeError, RecordError, TypeError) as e:
                log.warning("%s:%d: skipped record: %s", path, lineno, e)
                if skipped is not None:
                    skipped.append((lineno, str(e)))


def read_records(path, field_map: Optional[dict] = None) -> list[DatasetRecord]:
    return list(iter_records(path, field_map))


def read_predictions(path, field: str = "pred") -> dict[str, Optional[str]]:
    """Predictions keyed by id.

    JSONL lines carry ``{"id": ..., "pred": ...}``; any other file is read as
    one linearized tree per line with the 0-based line index as id.  An
    empty line or a null ``pred`` is a missing prediction.
    """
    out: dict[str, Optional[str]] = {}
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    first = next((ln for ln in lines if ln.strip()), "")
    if first.lstrip().startswith("{"):
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                rid = str(doc["id"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise RecordError(f"{path}:{lineno}: bad prediction line: {e}") from None
            if rid in out:
                raise RecordError(f"{path}:{lineno}: duplicate id {rid}")
            out[rid] = doc.get(field)
        return out
    for i, line in enumerate(lines):
        out[str(i)] = line.strip() or None
    return out
