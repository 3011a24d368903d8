"""HTTP request records and labeled corpora on disk (JSONL and CSV)."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyCorpus, MalformedRecord


class ClassLabel(enum.Enum):
    NORMAL = "normal"
    ATTACK = "attack"
    UNLABELED = None

    @classmethod
    def parse(cls, raw: object) -> "ClassLabel":
        if raw is None:
            return cls.UNLABELED
        if not isinstance(raw, str):
            raise ValueError(f"label must be a string or null, got {raw!r}")
        key = raw.strip().lower()
        try:
            return _LABEL_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown label {raw!r}") from None

    def to_json(self) -> str | None:
        return self.value


_LABEL_ALIASES = {
    "": ClassLabel.UNLABELED,
    "normal": ClassLabel.NORMAL,
    "valid": ClassLabel.NORMAL,
    "attack": ClassLabel.ATTACK,
    "anomalous": ClassLabel.ATTACK,
    "anomaly": ClassLabel.ATTACK,
}

_WS = re.compile(r"\s")


@dataclass(frozen=True)
class RawRequest:
    method: str
    target: str
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""
    label: ClassLabel = ClassLabel.UNLABELED
    category: str | None = None

    def __post_init__(self):
        if not self.method or _WS.search(self.method):
            raise ValueError(f"invalid method {self.method!r}")
        object.__setattr__(self, "headers", merge_headers(self.headers))

    def with_label(self, label: ClassLabel) -> "RawRequest":
        return RawRequest(self.method, self.target, self.headers, self.body, label, self.category)


@dataclass(frozen=True)
class Corpus:
    requests: tuple[RawRequest, ...]
    source_name: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self) -> Iterator[RawRequest]:
        return iter(self.requests)

    def labels(self) -> list[ClassLabel]:
        return [r.label for r in self.requests]

    def relabel(self, label: ClassLabel) -> "Corpus":
        return Corpus(tuple(r.with_label(label) for r in self.requests), self.source_name)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for req in self.requests:
            h.update(dumps_request(req).encode("ascii"))
            h.update(b"\n")
        return h.hexdigest()


def merge_headers(pairs: Iterable[tuple[str, str]]) -> tuple[tuple[str, str], ...]:
    """Combine headers whose names collide case-insensitively.

    The first spelling and position win; later values are appended with ", ".
    """
    merged: dict[str, list] = {}
    for name, value in pairs:
        key = name.casefold()
        if key in merged:
            merged[key][1] = f"{merged[key][1]}, {value}"
        else:
            merged[key] = [name, value]
    return tuple((n, v) for n, v in merged.values())


# Bodies are bytes; JSON strings carry them through surrogateescape so that
# invalid UTF-8 shows up as \udcXX escapes and decodes back byte-for-byte.
def encode_body(body: bytes) -> str:
    return body.decode("utf-8", "surrogateescape")


def decode_body(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


def request_to_record(req: RawRequest) -> dict:
    rec = {
        "method": req.method,
        "target": req.target,
        "headers": dict(req.headers),
        "body": encode_body(req.body),
        "label": req.label.to_json(),
    }
    if req.category is not None:
        rec["category"] = req.category
    return rec


def dumps_request(req: RawRequest) -> str:
    return json.dumps(request_to_record(req), ensure_ascii=True)


class _Pairs(list):
    pass


def _pairs_hook(pairs):
    return _Pairs(pairs)


def _record_to_request(obj, line: int) -> RawRequest:
    if not isinstance(obj, _Pairs):
        raise MalformedRecord(line, "record is not a JSON object")
    rec = dict(obj)
    method, target = rec.get("method"), rec.get("target")
    if not isinstance(method, str) or not isinstance(target, str):
        raise MalformedRecord(line, "method and target must be strings")

    raw_headers = rec.get("headers") or []
    if isinstance(raw_headers, _Pairs):
        header_pairs = list(raw_headers)
    elif isinstance(raw_headers, list):
        try:
            header_pairs = [(n, v) for n, v in raw_headers]
        except (TypeError, ValueError):
            raise MalformedRecord(line, "headers list must hold [name, value] pairs") from None
    else:
        raise MalformedRecord(line, "headers must be an object or a list of pairs")
    if not all(isinstance(n, str) and isinstance(v, str) for n, v in header_pairs):
        raise MalformedRecord(line, "header names and values must be strings")

    body = rec.get("body") or ""
    if not isinstance(body, str):
        raise MalformedRecord(line, "body must be a string")
    category = rec.get("category")
    if category is not None and not isinstance(category, str):
        raise MalformedRecord(line, "category must be a string")
    try:
        return RawRequest(
            method=method,
            target=target,
            headers=tuple(header_pairs),
            body=decode_body(body),
            label=ClassLabel.parse(rec.get("label")),
            category=category,
        )
    except (ValueError, UnicodeEncodeError) as exc:
        raise MalformedRecord(line, str(exc)) from None


def parse_jsonl_line(text: str, line: int) -> RawRequest:
    try:
        obj = json.loads(text, object_pairs_hook=_pairs_hook)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line, exc.msg) from None
    return _record_to_request(obj, line)


def iter_jsonl(lines: Iterable[str]) -> Iterator[tuple[int, RawRequest]]:
    """Yield (line number, request) for every non-blank line."""
    for lineno, text in enumerate(lines, start=1):
        if text.strip():
            yield lineno, parse_jsonl_line(text, lineno)


_HEAD_BODY_SPLIT = re.compile(r"\r?\n\r?\n")
_LINE_SPLIT = re.compile(r"\r?\n")


def parse_http_text(blob: str, line: int = 0) -> tuple[str, str, tuple[tuple[str, str], ...], bytes]:
    """Split a raw HTTP request blob into method, target, headers and body."""
    blob = blob.lstrip("\r\n")
    parts = _HEAD_BODY_SPLIT.split(blob, maxsplit=1)
    head = parts[0]
    body = parts[1] if len(parts) > 1 else ""
    head_lines = _LINE_SPLIT.split(head)
    request_line = head_lines[0].split()
    if len(request_line) < 2:
        raise MalformedRecord(line, "request line needs a method and a target")
    method, target = request_line[0], request_line[1]
    headers = []
    for hl in head_lines[1:]:
        if not hl.strip():
            continue
        name, sep, value = hl.partition(":")
        if not sep or not name.strip():
            raise MalformedRecord(line, f"bad header line {hl!r}")
        headers.append((name.strip(), value.strip()))
    return method, target, merge_headers(headers), body.encode("utf-8", "surrogateescape")


def _load_csv(fh: io.TextIOBase) -> list[RawRequest]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        return []
    cols = [c.strip().lower() for c in header]
    if "raw_request" not in cols:
        raise MalformedRecord(1, "CSV header row must name a raw_request column")
    req_col = cols.index("raw_request")
    label_col = cols.index("label") if "label" in cols else None
    out = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) <= req_col:
            raise MalformedRecord(line, "missing raw_request field")
        method, target, headers, body = parse_http_text(row[req_col], line)
        raw_label = row[label_col] if label_col is not None and label_col < len(row) else None
        try:
            out.append(RawRequest(method, target, headers, body, ClassLabel.parse(raw_label)))
        except ValueError as exc:
            raise MalformedRecord(line, str(exc)) from None
    return out


def load_corpus(path: str | Path, format: str | None = None) -> Corpus:
    """Read a corpus file; ``format`` defaults to the file suffix (jsonl or csv)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            requests = _load_csv(fh)
    elif fmt in ("jsonl", "json", "ndjson"):
        with open(path, encoding="utf-8") as fh:
            requests = [req for _, req in iter_jsonl(fh)]
    else:
        raise ValueError(f"unsupported corpus format {fmt!r}")
    if not requests:
        raise EmptyCorpus(f"{path} holds no records")
    return Corpus(tuple(requests), source_name=path.stem)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    if not corpus.requests:
        raise EmptyCorpus("refusing to write an empty corpus")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for req in corpus.requests:
            fh.write(dumps_request(req))
            fh.write("\n")
