"""Whitespace tokenization and the sorted token dictionary."""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from pathlib import Path

from .errors import EmptyCorpus
from .preprocess import PreprocessConfig, canonicalize
from .request_model import Corpus

DICT_FORMAT_HEADER = "# miwaf-dictionary v1"

_SEPARATORS = re.compile(r"[ \t\r\n]+")


def tokenize(text: str) -> list[str]:
    """Maximal runs of characters other than space, tab, CR and LF."""
    return [t for t in _SEPARATORS.split(text) if t]


def corpus_tokens(corpus: Corpus, cfg: PreprocessConfig | None = None) -> list[list[str]]:
    return [tokenize(canonicalize(req, cfg)) for req in corpus]


class TokenDictionary(Sequence):
    """Lexicographically ordered set of unique tokens with a token -> position index."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens: tuple[str, ...] = tuple(sorted(set(tokens)))
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __contains__(self, token) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenDictionary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"TokenDictionary({len(self.tokens)} tokens)"

    def dumps(self) -> str:
        lines = [DICT_FORMAT_HEADER]
        lines.extend(escape_token(t) for t in self.tokens)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TokenDictionary":
        lines = text.split("\n")
        if not lines or lines[0] != DICT_FORMAT_HEADER:
            raise ValueError("not a dictionary file (missing format header)")
        return cls(unescape_token(line) for line in lines[1:] if line)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TokenDictionary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def escape_token(token: str) -> str:
    return token.encode("unicode_escape").decode("ascii")


def unescape_token(line: str) -> str:
    return line.encode("ascii").decode("unicode_escape")


def build_dictionary(attacks: Corpus, normals: Corpus, cfg: PreprocessConfig | None = None) -> TokenDictionary:
    if not attacks.requests or not normals.requests:
        raise EmptyCorpus("dictionary construction needs both an attack and a normal corpus")
    seen: set[str] = set()
    for corpus in (attacks, normals):
        for tokens in corpus_tokens(corpus, cfg):
            seen.update(tokens)
    return TokenDictionary(seen)
