"""Detection metrics, ROC sweep, F-hat model selection and operating-point choice.

Attack is the positive class throughout: a request is flagged when its
decision value is below the threshold theta.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ocsvm
from .errors import EmptySet, Infeasible, MiwafError, NoLabeledData, SingleClass
from .request_model import ClassLabel

log = logging.getLogger(__name__)

F_HAT_FORMULA = "r^2/q"
DEFAULT_NU_GRID = (0.01, 0.05, 0.1, 0.2)
DEFAULT_GAMMA_GRID = (0.1, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def acc(self) -> float:
        return _ratio(self.tp + self.tn, self.total)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    """(decision values, is_attack) for the labeled items."""
    vals, attack = [], []
    for value, label in scores:
        if label is ClassLabel.UNLABELED:
            continue
        vals.append(float(value))
        attack.append(label is ClassLabel.ATTACK)
    return np.asarray(vals, dtype=float), np.asarray(attack, dtype=bool)


def confusion(scores: Sequence[tuple[float, ClassLabel]], theta: float) -> ConfusionCounts:
    vals, attack = _split_scores(scores)
    if len(vals) == 0:
        raise NoLabeledData("no Normal/Attack items to evaluate")
    flagged = vals < theta
    tp = int(np.count_nonzero(flagged & attack))
    fp = int(np.count_nonzero(flagged & ~attack))
    fn = int(np.count_nonzero(~flagged & attack))
    tn = int(np.count_nonzero(~flagged & ~attack))
    return ConfusionCounts(tp, fp, tn, fn)


@dataclass(frozen=True)
class RocPoint:
    theta: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: float

    def dumps(self) -> str:
        lines = ["theta,tpr,fpr"]
        lines.extend(f"{p.theta!r},{p.tpr!r},{p.fpr!r}" for p in self.points)
        lines.append(f"# auc={self.auc!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "RocCurve":
        points, auc = [], None
        for line in text.splitlines():
            if line.startswith("# auc="):
                auc = float(line.split("=", 1)[1])
            elif line and not line.startswith(("#", "theta")):
                t, tp, fp = (float(v) for v in line.split(","))
                points.append(RocPoint(t, tp, fp))
        if auc is None:
            raise ValueError("ROC file lacks an auc line")
        return cls(tuple(points), auc)


def roc(scores: Sequence[tuple[float, ClassLabel]]) -> RocCurve:
    """ROC over every distinct decision value; ties are grouped into one step."""
    vals, attack = _split_scores(scores)
    n_pos = int(attack.sum())
    n_neg = len(attack) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both Normal and Attack items")
    distinct, inverse = np.unique(vals, return_inverse=True)
    pos_at = np.bincount(inverse, weights=attack.astype(float), minlength=len(distinct))
    neg_at = np.bincount(inverse, weights=(~attack).astype(float), minlength=len(distinct))
    # Threshold k sits just above distinct[k-1]: everything at or below it is flagged.
    tpr = np.concatenate([[0.0], np.cumsum(pos_at) / n_pos])
    fpr = np.concatenate([[0.0], np.cumsum(neg_at) / n_neg])
    tpr[-1] = fpr[-1] = 1.0
    thetas = np.concatenate([[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = tuple(RocPoint(float(t), float(a), float(b)) for t, a, b in zip(thetas, tpr, fpr))
    return RocCurve(points, auc)


def auc_pairwise(scores: Sequence[tuple[float, ClassLabel]]) -> float:
    """Fraction of (attack, normal) pairs where the attack scores lower; ties count 1/2."""
    vals, attack = _split_scores(scores)
    a, n = vals[attack], vals[~attack]
    if len(a) == 0 or len(n) == 0:
        raise SingleClass("AUC needs both Normal and Attack items")
    less = (a[:, None] < n[None, :]).sum()
    ties = (a[:, None] == n[None, :]).sum()
    return float((less + 0.5 * ties) / (len(a) * len(n)))


def pick_theta(curve: RocCurve, policy: str = "max_youden", fpr_cap: float | None = None) -> float:
    """Operating threshold from a ROC curve.

    ``max_youden`` maximizes tpr - fpr; ``fpr_cap`` maximizes tpr subject to
    fpr <= cap. Ties go to the smaller fpr, then the smaller theta.
    """
    pts = curve.points
    if policy == "max_youden":
        best = min(pts, key=lambda p: (-(p.tpr - p.fpr), p.fpr, p.theta))
    elif policy == "fpr_cap":
        if fpr_cap is None or fpr_cap < 0:
            raise Infeasible(f"fpr cap {fpr_cap!r} admits no point")
        ok = [p for p in pts if p.fpr <= fpr_cap]
        if not ok:
            raise Infeasible(f"no ROC point with fpr <= {fpr_cap}")
        best = min(ok, key=lambda p: (-p.tpr, p.fpr, p.theta))
    else:
        raise ValueError(f"unknown theta policy {policy!r}")
    return best.theta


def f_hat(model: ocsvm.OcsvmModel, validation_normals, unlabeled_mix) -> float:
    """r^2 / q: r = accepted share of known normals, q = accepted share of the unlabeled mix."""
    vn = model.decision_many(validation_normals)
    um = model.decision_many(unlabeled_mix)
    if len(vn) == 0 or len(um) == 0:
        raise EmptySet("F-hat needs validation normals and an unlabeled mix")
    r = float(np.mean(vn >= model.theta))
    q = float(np.mean(um >= model.theta))
    return r * r / q if q > 0 else 0.0


@dataclass(frozen=True)
class GridCell:
    nu: float
    gamma: float
    f_hat: float


@dataclass(frozen=True)
class GridSearchResult:
    table: tuple[GridCell, ...]
    best: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "f_hat_formula": F_HAT_FORMULA,
            "best": {"nu": self.best[0], "gamma": self.best[1]},
            "table": [{"nu": c.nu, "gamma": c.gamma, "f_hat": c.f_hat} for c in self.table],
        }


def grid_search(
    train_normals,
    validation_normals,
    unlabeled_mix,
    nu_grid: Sequence[float] = DEFAULT_NU_GRID,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    tol: float = 1e-4,
    max_iter: int | None = None,
) -> GridSearchResult:
    """Train one model per (nu, gamma) and score each by F-hat at theta = 0.

    A cell whose training fails is recorded with f_hat = -1.
    """
    if not nu_grid or not gamma_grid:
        raise EmptySet("grids must be non-empty")
    table = []
    for nu in sorted(nu_grid):
        for gamma in sorted(gamma_grid):
            try:
                model = ocsvm.train(train_normals, nu, gamma, tol=tol, max_iter=max_iter)
                score = f_hat(model, validation_normals, unlabeled_mix)
            except (MiwafError, ValueError) as exc:
                log.warning("grid cell nu=%g gamma=%g failed: %s", nu, gamma, exc)
                score = -1.0
            table.append(GridCell(float(nu), float(gamma), score))
    best = min(table, key=lambda c: (-c.f_hat, c.nu, c.gamma))
    return GridSearchResult(tuple(table), (best.nu, best.gamma))


def metrics_record(scores, theta: float, n_features: int, curve: RocCurve | None = None) -> dict:
    """Table-shaped summary: acc, tpr, fpr, auc, theta, n_features plus raw counts."""
    curve = curve or roc(scores)
    cm = confusion(scores, theta)
    return {
        "n_features": n_features,
        "theta": theta,
        "acc": cm.acc,
        "tpr": cm.tpr,
        "fpr": cm.fpr,
        "auc": curve.auc,
        "tp": cm.tp,
        "fp": cm.fp,
        "tn": cm.tn,
        "fn": cm.fn,
    }


def dumps_metrics(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=False) + "\n"
