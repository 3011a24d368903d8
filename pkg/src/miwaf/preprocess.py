"""Request canonicalization: header filter, percent decode, UTF-8, percent decode, lowercase."""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import unquote, unquote_to_bytes

from .request_model import RawRequest

DEFAULT_DENYLIST = frozenset({"host", "date", "content-length", "connection"})


@dataclass(frozen=True)
class HeaderFilter:
    mode: str = "denylist"
    names: frozenset[str] = field(default=DEFAULT_DENYLIST)

    def __post_init__(self):
        if self.mode not in ("allowlist", "denylist"):
            raise ValueError(f"unknown header filter mode {self.mode!r}")
        names = frozenset(n.strip().casefold() for n in self.names if n.strip())
        if self.mode == "allowlist" and not names:
            raise ValueError("an allowlist needs at least one header name")
        object.__setattr__(self, "names", names)

    @classmethod
    def denylist(cls, names) -> "HeaderFilter":
        return cls("denylist", frozenset(names))

    @classmethod
    def allowlist(cls, names) -> "HeaderFilter":
        return cls("allowlist", frozenset(names))

    def keeps(self, name: str) -> bool:
        hit = name.casefold() in self.names
        return hit if self.mode == "allowlist" else not hit

    def to_dict(self) -> dict:
        return {"mode": self.mode, "names": sorted(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "HeaderFilter":
        return cls(d["mode"], frozenset(d["names"]))


@dataclass(frozen=True)
class PreprocessConfig:
    header_filter: HeaderFilter = field(default_factory=HeaderFilter)
    include_body: bool = True

    def to_dict(self) -> dict:
        return {"header_filter": self.header_filter.to_dict(), "include_body": self.include_body}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(HeaderFilter.from_dict(d["header_filter"]), bool(d["include_body"]))


def percent_decode_bytes(data: bytes | str) -> bytes:
    """Replace each valid %XX triple by its byte; anything else passes through."""
    if isinstance(data, str):
        data = data.encode("utf-8", "surrogatepass")
    return unquote_to_bytes(data)


def utf8_decode_lossy(data: bytes) -> str:
    return data.decode("utf-8", "replace")


def percent_decode(s: str) -> str:
    """Percent-decode a text string; decoded bytes are read as UTF-8 with U+FFFD for bad sequences.

    '+' is left alone and malformed escapes such as ``%G1`` or a trailing ``%`` are kept verbatim.
    """
    return unquote(s, encoding="utf-8", errors="replace")


# str.lower() applies two non-simple rules: U+0130 expands to "i" + U+0307,
# and capital sigma becomes final sigma at word ends. Pin both to the simple mapping.
_SIMPLE_LOWER = str.maketrans({"\u0130": "i", "\u03a3": "\u03c3"})


def lowercase(s: str) -> str:
    return s.translate(_SIMPLE_LOWER).lower()


def canonicalize_part(part: bytes | str) -> str:
    text = utf8_decode_lossy(percent_decode_bytes(part))
    return lowercase(percent_decode(text))


def canonicalize(req: RawRequest, cfg: PreprocessConfig | None = None) -> str:
    """Canonical lowercase text for one request.

    Method, target, kept ``name: value`` headers and (optionally) the body are
    each decoded on their own and joined with single spaces.
    """
    cfg = cfg or PreprocessConfig()
    parts: list[bytes | str] = [req.method, req.target]
    parts.extend(f"{name}: {value}" for name, value in req.headers if cfg.header_filter.keeps(name))
    if cfg.include_body and req.body:
        parts.append(req.body)
    return " ".join(canonicalize_part(p) for p in parts)
