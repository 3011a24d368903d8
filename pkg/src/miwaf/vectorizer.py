"""Bag-of-words counts and TF-IDF weights over a fixed vocabulary."""

from __future__ import annotations

import csv
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimMismatch, EmptyCorpus

SCALINGS = ("none", "binary", "l2")


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")
        if any(v == 0 or v < 0 for v in self.values):
            raise ValueError("stored values must be positive")

    @classmethod
    def from_dense(cls, dense) -> "SparseVector":
        arr = np.asarray(dense, dtype=float)
        nz = np.flatnonzero(arr)
        return cls(arr.shape[0], tuple(int(i) for i in nz), tuple(float(v) for v in arr[nz]))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.indices)] = self.values
        return out

    def sq_distance(self, other: "SparseVector") -> float:
        if self.dim != other.dim:
            raise DimMismatch(f"dimension {self.dim} != {other.dim}")
        a = dict(zip(self.indices, self.values))
        b = dict(zip(other.indices, other.values))
        return float(sum((a.get(k, 0.0) - b.get(k, 0.0)) ** 2 for k in a.keys() | b.keys()))


class FeatureMatrix:
    """One row per request over ``vocab``; backed by a CSR matrix."""

    def __init__(self, data: sp.csr_matrix, vocab: Sequence[str]):
        data = sp.csr_matrix(data, dtype=float)
        if data.shape[1] != len(vocab):
            raise DimMismatch(f"matrix has {data.shape[1]} columns for {len(vocab)} tokens")
        data.eliminate_zeros()
        data.sort_indices()
        self.data = data
        self.vocab = tuple(vocab)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __len__(self) -> int:
        return self.data.shape[0]

    def row(self, i: int) -> SparseVector:
        lo, hi = self.data.indptr[i], self.data.indptr[i + 1]
        return SparseVector(
            self.data.shape[1],
            tuple(int(j) for j in self.data.indices[lo:hi]),
            tuple(float(v) for v in self.data.data[lo:hi]),
        )

    @property
    def rows(self) -> list[SparseVector]:
        return [self.row(i) for i in range(len(self))]

    def dense(self) -> np.ndarray:
        return self.data.toarray()

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.vocab)
            for r in self.dense():
                w.writerow([repr(float(v)) for v in r])


def _vocab_index(vocab: Sequence[str]) -> dict[str, int]:
    index = getattr(vocab, "index", None)
    if isinstance(index, dict):
        return index
    return {t: i for i, t in enumerate(vocab)}


def bow_vector(tokens: Sequence[str], vocab: Sequence[str]) -> SparseVector:
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    index = _vocab_index(vocab)
    counts = Counter(index[t] for t in tokens if t in index)
    keys = sorted(counts)
    return SparseVector(len(vocab), tuple(keys), tuple(float(counts[k]) for k in keys))


def count_matrix(corpus_tokens: Sequence[Sequence[str]], vocab: Sequence[str]) -> sp.csr_matrix:
    index = _vocab_index(vocab)
    indptr, cols, vals = [0], [], []
    for tokens in corpus_tokens:
        counts = Counter(index[t] for t in tokens if t in index)
        for j in sorted(counts):
            cols.append(j)
            vals.append(counts[j])
        indptr.append(len(cols))
    return sp.csr_matrix(
        (np.asarray(vals, dtype=float), np.asarray(cols, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(corpus_tokens), len(vocab)),
    )


def bow_matrix(corpus_tokens: Sequence[Sequence[str]], vocab: Sequence[str]) -> FeatureMatrix:
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    return FeatureMatrix(count_matrix(corpus_tokens, vocab), list(vocab))


def idf(counts: sp.csr_matrix) -> np.ndarray:
    """ln(n_docs / df) per column; columns with df = 0 get 0."""
    n_docs = counts.shape[0]
    df = np.bincount(counts.indices, minlength=counts.shape[1]).astype(float)
    out = np.zeros(counts.shape[1])
    present = df > 0
    out[present] = np.log(n_docs / df[present])
    return out


def tfidf_matrix(corpus_tokens: Sequence[Sequence[str]], vocab: Sequence[str]) -> FeatureMatrix:
    """Raw TF-IDF: count / document length times ln(n_docs / df). No smoothing, no row normalization."""
    if len(corpus_tokens) == 0:
        raise EmptyCorpus("cannot vectorize an empty corpus")
    counts = count_matrix(corpus_tokens, vocab)
    doc_len = np.array([len(t) for t in corpus_tokens], dtype=float)
    inv_len = np.divide(1.0, doc_len, out=np.zeros_like(doc_len), where=doc_len > 0)
    tf = sp.diags(inv_len) @ counts
    weighted = tf @ sp.diags(idf(counts))
    return FeatureMatrix(sp.csr_matrix(weighted), list(vocab))


def scale_rows(matrix: FeatureMatrix, mode: str = "none") -> FeatureMatrix:
    if mode not in SCALINGS:
        raise ValueError(f"unknown vector scaling {mode!r}")
    if mode == "none":
        return matrix
    data = matrix.data.copy()
    if mode == "binary":
        data.data = np.ones_like(data.data)
    else:
        norms = np.sqrt(np.asarray(data.multiply(data).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        data = sp.diags(inv) @ data
    return FeatureMatrix(sp.csr_matrix(data), matrix.vocab)
