"""Mutual-information ranking of dictionary tokens against the class label."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import LengthMismatch, OutOfRange, SingleClass
from .request_model import ClassLabel
from .vectorizer import FeatureMatrix

PLUGIN_BINARY = "plugin-binary-presence/nats"
PLUGIN_BINNED = "plugin-equalfreq-k4+zero/nats"
ESTIMATORS = (PLUGIN_BINARY, PLUGIN_BINNED)


def _xlogx_ratio(joint: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """joint * ln(joint / (px * py)) elementwise with 0 ln 0 = 0."""
    out = np.zeros(np.broadcast(joint, px, py).shape)
    joint, px, py = np.broadcast_arrays(joint, px, py)
    mask = joint > 0
    out[mask] = joint[mask] * np.log(joint[mask] / (px[mask] * py[mask]))
    return out


def mi_from_counts(n11, n10, n01, n00) -> np.ndarray:
    """Plug-in MI (nats) from 2x2 contingency counts n[x][y]; vectorized over columns."""
    n11, n10, n01, n00 = (np.asarray(a, dtype=float) for a in (n11, n10, n01, n00))
    n = n11 + n10 + n01 + n00
    px1, px0 = (n11 + n10) / n, (n01 + n00) / n
    py1, py0 = (n11 + n01) / n, (n10 + n00) / n
    mi = (
        _xlogx_ratio(n11 / n, px1, py1)
        + _xlogx_ratio(n10 / n, px1, py0)
        + _xlogx_ratio(n01 / n, px0, py1)
        + _xlogx_ratio(n00 / n, px0, py0)
    )
    # Rounding can leave tiny negatives on independent tables.
    return np.maximum(mi, 0.0)


def mi_binary(x: Sequence[int], y: Sequence[int]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    if len(x) == 0:
        raise ValueError("mi_binary needs at least one observation")
    xa = np.asarray(x, dtype=bool)
    ya = np.asarray(y, dtype=bool)
    n11 = np.count_nonzero(xa & ya)
    n10 = np.count_nonzero(xa & ~ya)
    n01 = np.count_nonzero(~xa & ya)
    n00 = len(xa) - n11 - n10 - n01
    return float(mi_from_counts(n11, n10, n01, n00))


def mi_discrete(x: Sequence[int], y: Sequence[int]) -> float:
    """Plug-in MI (nats) for arbitrary discrete codes."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    _, xi = np.unique(np.asarray(x), return_inverse=True)
    _, yi = np.unique(np.asarray(y), return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= len(xi)
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    return max(float(_xlogx_ratio(joint, px, py).sum()), 0.0)


def entropy(x: Sequence[int]) -> float:
    _, counts = np.unique(np.asarray(x), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class RankEntry:
    token: str
    mi_score: float
    rank: int


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[RankEntry, ...]
    estimator_id: str = PLUGIN_BINARY

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def tokens(self) -> list[str]:
        return [e.token for e in self.entries]

    def dumps(self, provenance: dict[str, str] | None = None) -> str:
        lines = [f"# estimator_id={self.estimator_id}"]
        for key, value in (provenance or {}).items():
            lines.append(f"# {key}={value}")
        lines.append("rank\ttoken\tmi_score")
        for e in self.entries:
            lines.append(f"{e.rank}\t{_escape(e.token)}\t{e.mi_score:.12g}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, provenance: dict[str, str] | None = None) -> None:
        Path(path).write_text(self.dumps(provenance), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "FeatureRanking":
        estimator = PLUGIN_BINARY
        entries = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key == "estimator_id":
                    estimator = value
                continue
            if not line or line.startswith("rank\t"):
                continue
            rank, token, score = line.split("\t")
            entries.append(RankEntry(_unescape(token), float(score), int(rank)))
        return cls(tuple(entries), estimator)

    @classmethod
    def load(cls, path: str | Path) -> "FeatureRanking":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _escape(token: str) -> str:
    return token.encode("unicode_escape").decode("ascii")


def _unescape(text: str) -> str:
    return text.encode("ascii").decode("unicode_escape")


def _binary_labels(labels: Sequence[ClassLabel]) -> np.ndarray:
    if any(lab is ClassLabel.UNLABELED for lab in labels):
        raise ValueError("unlabeled rows cannot take part in MI ranking")
    y = np.array([lab is ClassLabel.ATTACK for lab in labels], dtype=bool)
    if y.all() or not y.any():
        raise SingleClass("MI ranking needs both Normal and Attack rows")
    return y


def _presence_scores(data: sp.csr_matrix, y: np.ndarray) -> np.ndarray:
    present = data.copy()
    present.data = (present.data > 0).astype(float)
    present.eliminate_zeros()
    csc = present.tocsc()
    n = len(y)
    n_x1 = np.diff(csc.indptr).astype(float)
    n11 = np.asarray(csc[y].sum(axis=0)).ravel() if y.any() else np.zeros(csc.shape[1])
    n10 = n_x1 - n11
    n_y1 = float(y.sum())
    n01 = n_y1 - n11
    n00 = n - n11 - n10 - n01
    return mi_from_counts(n11, n10, n01, n00)


def _binned_codes(column: np.ndarray, k: int = 4) -> np.ndarray:
    codes = np.zeros(len(column), dtype=int)
    nz = column > 0
    if nz.any():
        edges = np.quantile(column[nz], np.linspace(0, 1, k + 1)[1:-1])
        codes[nz] = 1 + np.searchsorted(edges, column[nz], side="right")
    return codes


def _binned_scores(data: sp.csr_matrix, y: np.ndarray) -> np.ndarray:
    csc = data.tocsc()
    scores = np.zeros(csc.shape[1])
    for j in range(csc.shape[1]):
        lo, hi = csc.indptr[j], csc.indptr[j + 1]
        if lo == hi:
            continue
        col = np.zeros(csc.shape[0])
        col[csc.indices[lo:hi]] = csc.data[lo:hi]
        scores[j] = mi_discrete(_binned_codes(col), y)
    return scores


def rank_features(
    matrix: FeatureMatrix, labels: Sequence[ClassLabel], estimator_id: str = PLUGIN_BINARY
) -> FeatureRanking:
    """Score every column by MI with the label and sort (score desc, token asc)."""
    if len(labels) != matrix.shape[0]:
        raise LengthMismatch(f"{matrix.shape[0]} rows but {len(labels)} labels")
    y = _binary_labels(labels)
    if estimator_id == PLUGIN_BINARY:
        scores = _presence_scores(matrix.data, y)
    elif estimator_id == PLUGIN_BINNED:
        scores = _binned_scores(matrix.data, y)
    else:
        raise ValueError(f"unknown estimator {estimator_id!r}")
    # Scores are kept at serialized precision so near-ties (equal up to rounding
    # noise) order by token and a reloaded ranking equals the in-memory one.
    rounded = [float(f"{s:.12g}") for s in scores]
    keyed = sorted(zip(matrix.vocab, rounded), key=lambda ts: (-ts[1], ts[0]))
    entries = tuple(RankEntry(tok, s, r) for r, (tok, s) in enumerate(keyed, start=1))
    return FeatureRanking(entries, estimator_id)


def select_top(ranking: FeatureRanking, n: int) -> list[str]:
    if not 1 <= n <= len(ranking):
        raise OutOfRange(f"n={n} outside 1..{len(ranking)}")
    return [e.token for e in ranking.entries[:n]]
