import math
import random

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import mutual_info_score

from miwaf.errors import LengthMismatch, OutOfRange, SingleClass
from miwaf.feature_select import (
    PLUGIN_BINARY,
    PLUGIN_BINNED,
    FeatureRanking,
    entropy,
    mi_binary,
    mi_discrete,
    mi_from_counts,
    rank_features,
    select_top,
)
from miwaf.request_model import ClassLabel
from miwaf.vectorizer import FeatureMatrix

A, N = ClassLabel.ATTACK, ClassLabel.NORMAL


def mi_oracle(x, y):
    """H(X) + H(Y) - H(X,Y), written out with math.log."""
    n = len(x)

    def h(items):
        counts = {}
        for it in items:
            counts[it] = counts.get(it, 0) + 1
        return -sum(c / n * math.log(c / n) for c in counts.values())

    return max(h(x) + h(y) - h(list(zip(x, y))), 0.0)


def test_hand_case_balanced_perfect():
    assert mi_binary([1, 1, 0, 0], [1, 1, 0, 0]) == pytest.approx(math.log(2), abs=1e-12)


def test_hand_case_independent():
    assert mi_binary([1, 0, 1, 0], [1, 1, 0, 0]) == pytest.approx(0.0, abs=1e-12)


def test_hand_case_skewed():
    # x=[1,1,1,0], y=[1,1,0,0]
    expected = 0.5 * math.log(4 / 3) + 0.25 * math.log(2 / 3) + 0.25 * math.log(2)
    assert mi_binary([1, 1, 1, 0], [1, 1, 0, 0]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.21576155433883565, abs=1e-15)


def test_mismatched_lengths():
    with pytest.raises(LengthMismatch):
        mi_binary([1, 0], [1])


def test_entropy_bound_and_sklearn_agreement():
    rng = random.Random(2)
    for _ in range(50):
        n = rng.randint(1, 40)
        x = [rng.randint(0, 1) for _ in range(n)]
        y = [rng.randint(0, 1) for _ in range(n)]
        mi = mi_binary(x, y)
        assert mi == pytest.approx(mutual_info_score(x, y), abs=1e-12)
        assert mi <= min(entropy(x), entropy(y)) + 1e-12


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_mi_properties(pairs):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    mi = mi_binary(x, y)
    assert mi >= 0
    assert mi == pytest.approx(mi_binary(y, x), abs=1e-12)
    assert mi == pytest.approx(mi_oracle(x, y), abs=1e-12)
    assert mi <= math.log(2) + 1e-12


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=60))
def test_discrete_matches_oracle(pairs):
    x = [p[0] for p in pairs]
    y = [p[1] for p in pairs]
    assert mi_discrete(x, y) == pytest.approx(mi_oracle(x, y), abs=1e-12)


def test_vectorized_counts_match_scalar():
    tables = np.array([[3, 1, 0, 4], [0, 0, 2, 2], [5, 5, 5, 5]]).T
    got = mi_from_counts(*tables)
    for k, (n11, n10, n01, n00) in enumerate(tables.T):
        x = [1] * (n11 + n10) + [0] * (n01 + n00)
        y = [1] * n11 + [0] * n10 + [1] * n01 + [0] * n00
        assert got[k] == pytest.approx(mi_oracle(x, y), abs=1e-12)


def matrix(rows, vocab):
    return FeatureMatrix(sp.csr_matrix(np.asarray(rows, dtype=float)), vocab)


def test_rank_order_and_ties():
    # "b" and "a" identical and perfectly predictive; "c" constant.
    m = matrix([[1, 1, 1], [2, 1, 1], [0, 0, 1], [0, 0, 1]], ["b", "a", "c"])
    r = rank_features(m, [A, A, N, N])
    assert r.tokens == ["a", "b", "c"]
    assert [e.rank for e in r.entries] == [1, 2, 3]
    assert r.entries[0].mi_score == pytest.approx(math.log(2), abs=1e-12)
    assert r.entries[2].mi_score == 0.0


def test_rank_needs_both_classes():
    with pytest.raises(SingleClass):
        rank_features(matrix([[1], [0]], ["a"]), [N, N])


def test_rank_rejects_unlabeled():
    with pytest.raises(ValueError):
        rank_features(matrix([[1], [0]], ["a"]), [A, ClassLabel.UNLABELED])


def test_binned_estimator_sees_counts():
    # Presence is identical, but counts separate the classes.
    m = matrix([[5], [6], [1], [1]], ["t"])
    labels = [A, A, N, N]
    assert rank_features(m, labels, PLUGIN_BINARY).entries[0].mi_score == 0.0
    assert rank_features(m, labels, PLUGIN_BINNED).entries[0].mi_score > 0.0


def test_select_top_bounds():
    r = rank_features(matrix([[1, 0], [0, 1]], ["a", "b"]), [A, N])
    assert select_top(r, 1) == ["a"]
    for bad in (0, 3):
        with pytest.raises(OutOfRange):
            select_top(r, bad)


@given(st.lists(st.lists(st.integers(0, 3), min_size=4, max_size=4), min_size=2, max_size=12), st.randoms(use_true_random=False))
def test_ranking_invariants(rows, rnd):
    labels = [A if i % 2 else N for i in range(len(rows))]
    vocab = ["w", "x", "y", "z"]
    r = rank_features(matrix(rows, vocab), labels)
    scores = [e.mi_score for e in r.entries]
    assert scores == sorted(scores, reverse=True)
    assert sorted(r.tokens) == vocab
    assert FeatureRanking.loads(r.dumps()) == r
    # Row order does not matter.
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    r2 = rank_features(matrix([rows[i] for i in perm], vocab), [labels[i] for i in perm])
    assert r2.dumps() == r.dumps()


def test_file_round_trip_with_provenance(tmp_path):
    r = rank_features(matrix([[1, 0], [0, 1]], ["a\tb", "é"]), [A, N])
    r.save(tmp_path / "r.tsv", {"dictionary_hash": "abc"})
    text = (tmp_path / "r.tsv").read_text()
    assert text.startswith(f"# estimator_id={PLUGIN_BINARY}\n# dictionary_hash=abc\n")
    again = FeatureRanking.load(tmp_path / "r.tsv")
    assert again.tokens == r.tokens
    assert again.dumps({"dictionary_hash": "abc"}) == text
