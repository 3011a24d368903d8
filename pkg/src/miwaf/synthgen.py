"""Seeded synthetic corpora: benign request templates with optional injected payloads."""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from urllib.parse import quote

from .request_model import ClassLabel, Corpus, RawRequest

FAMILIES = ("sqli", "xss", "cmdi", "traversal")


@dataclass(frozen=True)
class Template:
    method: str
    path: str
    params: tuple[str, ...]
    in_body: bool = False


DEFAULT_TEMPLATES = (
    Template("GET", "/shop/item", ("id", "cat")),
    Template("GET", "/shop/search", ("page", "q")),
    Template("GET", "/news/article", ("lang", "id")),
    Template("GET", "/user/profile", ("user",)),
    Template("POST", "/login", ("user", "pass"), in_body=True),
    Template("POST", "/cart/add", ("qty", "id"), in_body=True),
)

VALUE_POOLS = {
    "id": [str(i) for i in range(1, 41)],
    "cat": ["books", "music", "garden", "toys", "kitchen", "sports"],
    "page": [str(i) for i in range(1, 11)],
    "q": ["lamp", "chair", "red shoes", "coffee mug", "desk", "garden hose", "usb cable", "notebook"],
    "lang": ["en", "es", "fr", "de", "pt"],
    "user": ["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi"],
    "pass": ["hunter2", "correcthorse", "s3cret", "letmein1", "qwerty99"],
    "qty": [str(i) for i in range(1, 6)],
}

USER_AGENTS = (
    "Mozilla/5.0 (X11; Linux x86_64) Firefox/128.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Chrome/126.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_5) Safari/605.1.15",
)

ACCEPTS = ("text/html", "application/json", "*/*")


@dataclass(frozen=True)
class SynthSpec:
    n_normal: int = 1000
    n_attack: int = 100
    templates: tuple[Template, ...] = DEFAULT_TEMPLATES
    families: tuple[str, ...] = FAMILIES
    seed: int = 0
    # Every request gets an "X-Trace" header drawn from this many shared tokens.
    noise_tokens: int = 0
    # When set, attacks inject tokens from this list instead of the payload files.
    payload_vocab: tuple[str, ...] | None = None
    tokens_per_attack: int = 2
    double_encode_rate: float = 0.2

    def __post_init__(self):
        if self.n_normal < 0 or self.n_attack < 0:
            raise ValueError("counts must be non-negative")
        if not self.templates:
            raise ValueError("at least one template is required")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown payload families {sorted(unknown)}")
        if self.n_attack and not self.families and not self.payload_vocab:
            raise ValueError("attacks requested but no payload source given")


def load_payloads(family: str) -> list[str]:
    text = resources.files("miwaf").joinpath("data").joinpath("payloads").joinpath(f"{family}.txt").read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def _encode(value: str) -> str:
    return quote(value, safe="")


def _render(tpl: Template, values: dict[str, str], rng: random.Random, noise: str | None, double: bool):
    pairs = []
    for name in tpl.params:
        enc = _encode(values[name])
        if double:
            enc = _encode(enc)
        pairs.append(f"{name}={enc}")
    query = "&".join(pairs)
    headers = [
        ("User-Agent", rng.choice(USER_AGENTS)),
        ("Accept", rng.choice(ACCEPTS)),
        ("Host", "shop.example.org"),
    ]
    if noise is not None:
        headers.append(("X-Trace", noise))
    if tpl.in_body:
        headers.append(("Content-Type", "application/x-www-form-urlencoded"))
        return RawRequest(tpl.method, tpl.path, tuple(headers), query.encode("ascii"))
    return RawRequest(tpl.method, f"{tpl.path}?{query}", tuple(headers))


def _benign_values(tpl: Template, rng: random.Random) -> dict[str, str]:
    return {name: rng.choice(VALUE_POOLS[name]) for name in tpl.params}


def generate(spec: SynthSpec) -> Corpus:
    """Build ``n_normal`` benign requests followed by ``n_attack`` injected ones.

    Each record draws from its own RNG keyed on (seed, kind, index), so the
    output for a given index does not depend on generation order.
    """
    payloads = {fam: load_payloads(fam) for fam in spec.families}
    out = []
    for i in range(spec.n_normal + spec.n_attack):
        is_attack = i >= spec.n_normal
        rng = random.Random(f"{spec.seed}:{'attack' if is_attack else 'normal'}:{i}")
        tpl = rng.choice(spec.templates)
        values = _benign_values(tpl, rng)
        noise = f"nz{rng.randrange(spec.noise_tokens)}" if spec.noise_tokens else None
        double = False
        category = None
        if is_attack:
            if spec.payload_vocab:
                payload = " ".join(rng.sample(list(spec.payload_vocab), spec.tokens_per_attack))
                category = "vocab"
            else:
                category = rng.choice(spec.families)
                payload = rng.choice(payloads[category])
            # Payload rides on the last parameter, separated from the benign value by a space.
            last = tpl.params[-1]
            values[last] = f"{values[last]} {payload}"
            double = rng.random() < spec.double_encode_rate
        req = _render(tpl, values, rng, noise, double)
        label = ClassLabel.ATTACK if is_attack else ClassLabel.NORMAL
        out.append(RawRequest(req.method, req.target, req.headers, req.body, label, category))
    return Corpus(tuple(out), source_name=f"synth-{spec.seed}")


def split_by_label(corpus: Corpus) -> tuple[Corpus, Corpus]:
    """(normals, attacks) of a generated corpus."""
    normals = tuple(r for r in corpus if r.label is ClassLabel.NORMAL)
    attacks = tuple(r for r in corpus if r.label is ClassLabel.ATTACK)
    return Corpus(normals, corpus.source_name + "-normal"), Corpus(attacks, corpus.source_name + "-attack")
