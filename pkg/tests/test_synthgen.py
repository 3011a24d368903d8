from urllib.parse import unquote

import pytest

from miwaf.preprocess import canonicalize
from miwaf.request_model import ClassLabel
from miwaf.synthgen import FAMILIES, SynthSpec, generate, load_payloads, split_by_label


def test_counts_and_labels():
    corpus = generate(SynthSpec(30, 12, seed=1))
    normals, attacks = split_by_label(corpus)
    assert len(normals) == 30 and len(attacks) == 12
    assert {r.category for r in attacks} <= set(FAMILIES)
    assert all(r.category is None for r in normals)


def test_seeded_output_is_stable():
    a = generate(SynthSpec(20, 5, seed=4))
    assert a == generate(SynthSpec(20, 5, seed=4))
    assert a != generate(SynthSpec(20, 5, seed=5))


def test_prefix_independent_of_size():
    small = generate(SynthSpec(10, 0, seed=2))
    big = generate(SynthSpec(25, 0, seed=2))
    assert small.requests == big.requests[:10]


@pytest.mark.parametrize("family", FAMILIES)
def test_payload_files(family):
    lines = load_payloads(family)
    assert lines
    assert all("%" not in line for line in lines)


def test_attack_payload_survives_canonicalization():
    corpus = generate(SynthSpec(0, 40, families=("xss",), seed=3, double_encode_rate=0.5))
    payloads = [p.lower() for p in load_payloads("xss")]
    for req in corpus:
        text = canonicalize(req)
        assert any(p in text for p in payloads)


def test_vocab_and_noise():
    vocab = tuple(f"tok{i}" for i in range(10))
    corpus = generate(SynthSpec(5, 5, seed=0, payload_vocab=vocab, noise_tokens=3, tokens_per_attack=3))
    for req in corpus:
        assert dict(req.headers)["X-Trace"] in {"nz0", "nz1", "nz2"}
    for req in corpus:
        if req.label is ClassLabel.ATTACK:
            target = unquote(unquote(req.target + req.body.decode()))
            assert sum(t in target.split() for t in vocab) == 3


def test_bad_spec():
    with pytest.raises(ValueError):
        SynthSpec(1, 1, families=("nope",))
    with pytest.raises(ValueError):
        SynthSpec(-1, 0)
