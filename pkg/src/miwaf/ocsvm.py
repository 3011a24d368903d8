"""nu-one-class SVM with an RBF kernel, trained by SMO on the dual.

Dual problem (alphas scaled to sum to one)::

    minimize   1/2 * a^T Q a,   Q_ij = exp(-gamma * |x_i - x_j|^2)
    subject to 0 <= a_i <= 1 / (nu * m),  sum(a) = 1

Decision function: f(x) = sum_i a_i K(x_i, x) - rho.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateInput, DimMismatch, NonConvergence
from .preprocess import PreprocessConfig
from .request_model import ClassLabel
from .vectorizer import SparseVector

log = logging.getLogger(__name__)

MODEL_FORMAT = "miwaf-ocsvm"
MODEL_VERSION = 1
ALPHA_EPS = 1e-12
# Curvature floor for duplicate points (Q_ii + Q_jj - 2 Q_ij == 0).
TAU = 1e-12


@dataclass(frozen=True)
class KernelParams:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def rbf_kernel(a: SparseVector, b: SparseVector, gamma: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return float(np.exp(-gamma * a.sq_distance(b)))


def _as_dense(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.atleast_2d(np.asarray(vectors, dtype=float))
    if hasattr(vectors, "dense"):
        return vectors.dense()
    vectors = list(vectors)
    if not vectors:
        return np.zeros((0, 0))
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise DimMismatch(f"vectors of mixed dimension {sorted(dims)}")
    return np.vstack([v.to_dense() for v in vectors])


def rbf_gram(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * |x - y|^2) for every row pair of X and Y."""
    xx = np.einsum("ij,ij->i", X, X)
    yy = np.einsum("ij,ij->i", Y, Y)
    d2 = xx[:, None] + yy[None, :] - 2.0 * (X @ Y.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


class KernelRows:
    """Kernel matrix rows on demand; the whole matrix is computed when it fits in the cache."""

    def __init__(self, X: np.ndarray, gamma: float, cache_rows: int):
        self.X = X
        self.gamma = gamma
        self.cache_rows = max(cache_rows, 2)
        m = X.shape[0]
        self.full = rbf_gram(X, X, gamma) if m <= self.cache_rows else None
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.diag = np.ones(m)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        hit = self._cache.get(i)
        if hit is not None:
            self._cache.move_to_end(i)
            return hit
        r = rbf_gram(self.X[i : i + 1], self.X, self.gamma)[0]
        self._cache[i] = r
        if len(self._cache) > self.cache_rows:
            self._cache.popitem(last=False)
        return r


@dataclass
class OcsvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    params: KernelParams
    nu: float
    selected_features: list[str] = field(default_factory=list)
    theta: float = 0.0
    preprocess_cfg: PreprocessConfig = field(default_factory=PreprocessConfig)
    vector_scaling: str = "none"
    n_train: int = 0
    n_iter: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def gamma(self) -> float:
        return self.params.gamma

    def with_theta(self, theta: float) -> "OcsvmModel":
        return replace(self, theta=float(theta))

    def decision_many(self, vectors) -> np.ndarray:
        X = _as_dense(vectors)
        if X.shape[0] == 0:
            return np.zeros(0)
        if X.shape[1] != self.dim:
            raise DimMismatch(f"model dimension {self.dim}, input dimension {X.shape[1]}")
        return rbf_gram(X, self.support_vectors, self.params.gamma) @ self.alphas - self.rho

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kernel": "rbf",
            "gamma": self.params.gamma,
            "nu": self.nu,
            "rho": self.rho,
            "theta": self.theta,
            "n_train": self.n_train,
            "n_iter": self.n_iter,
            "vector_scaling": self.vector_scaling,
            "preprocess": self.preprocess_cfg.to_dict(),
            "selected_features": list(self.selected_features),
            "alphas": [float(a) for a in self.alphas],
            "support_vectors": [[float(v) for v in row] for row in self.support_vectors],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcsvmModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a miwaf model document")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        n_feat = len(d["selected_features"])
        svs = np.asarray(d["support_vectors"], dtype=float).reshape(-1, n_feat)
        return cls(
            support_vectors=svs,
            alphas=np.asarray(d["alphas"], dtype=float),
            rho=float(d["rho"]),
            params=KernelParams(float(d["gamma"])),
            nu=float(d["nu"]),
            selected_features=list(d["selected_features"]),
            theta=float(d["theta"]),
            preprocess_cfg=PreprocessConfig.from_dict(d["preprocess"]),
            vector_scaling=d.get("vector_scaling", "none"),
            n_train=int(d.get("n_train", 0)),
            n_iter=int(d.get("n_iter", 0)),
            meta=d.get("meta", {}),
        )

    def dumps(self) -> str:
        return dump_json(self.to_dict()) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "OcsvmModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_json(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits so reloads are bit-exact."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError(f"non-finite number {x} cannot be serialized")
        text = format(x, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dump_json(v, indent + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _solve_dual(
    kernel: KernelRows, m: int, upper: float, tol: float, max_iter: int, debug: bool
) -> tuple[np.ndarray, np.ndarray, int]:
    alpha = np.full(m, 1.0 / m)
    if kernel.full is not None:
        grad = kernel.full @ alpha
    else:
        grad = np.zeros(m)
        for i in range(m):
            grad += alpha[i] * kernel.row(i)
    obj = 0.5 * float(alpha @ grad)

    for it in range(max_iter):
        can_up = alpha < upper
        can_down = alpha > 0
        # i: raise alpha where the gradient is smallest; j: lower it where largest.
        gi = np.where(can_up, grad, np.inf)
        gj = np.where(can_down, grad, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        gap = gj[j] - gi[i]
        if gap < tol:
            return alpha, grad, it
        qi = kernel.row(i)
        qj = kernel.row(j)
        curvature = max(kernel.diag[i] + kernel.diag[j] - 2.0 * qi[j], TAU)
        step = min(gap / curvature, upper - alpha[i], alpha[j])
        alpha[i] = min(alpha[i] + step, upper)
        alpha[j] = max(alpha[j] - step, 0.0)
        grad += step * (qi - qj)
        if debug:
            new_obj = 0.5 * float(alpha @ grad)
            assert new_obj <= obj + 1e-12 * max(1.0, abs(obj)), (it, obj, new_obj)
            obj = new_obj
    raise NonConvergence(max_iter)


def _compute_rho(alpha: np.ndarray, grad: np.ndarray, upper: float) -> float:
    eps = ALPHA_EPS * max(1.0, upper)
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(grad[free].mean())
    at_upper = alpha >= upper - eps
    at_zero = alpha <= eps
    # At zero, grad >= rho; at the upper bound, grad <= rho.
    ub = float(grad[at_zero].min()) if at_zero.any() else None
    lb = float(grad[at_upper].max()) if at_upper.any() else None
    if ub is None:
        return lb
    if lb is None:
        return ub
    return 0.5 * (ub + lb)


def train(
    vectors,
    nu: float,
    gamma: float,
    tol: float = 1e-4,
    max_iter: int | None = None,
    cache_rows: int = 4096,
    debug: bool = False,
) -> OcsvmModel:
    """Fit the one-class SVM on normal-traffic vectors.

    ``vectors`` may be a list of SparseVector, a FeatureMatrix or a dense array.
    Raises NonConvergence if the maximal KKT violation is still >= ``tol``
    after ``max_iter`` pair updates (default 100 * m).
    """
    X = _as_dense(vectors)
    m = X.shape[0]
    if m < 2:
        raise DegenerateInput(f"training needs at least 2 vectors, got {m}")
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    params = KernelParams(gamma)
    upper = 1.0 / (nu * m)
    kernel = KernelRows(X, gamma, cache_rows)
    alpha, grad, n_iter = _solve_dual(kernel, m, upper, tol, max_iter or 100 * m, debug)
    rho = _compute_rho(alpha, grad, upper)
    keep = alpha > ALPHA_EPS
    log.debug("ocsvm: m=%d nu=%g gamma=%g iterations=%d n_sv=%d", m, nu, gamma, n_iter, int(keep.sum()))
    return OcsvmModel(
        support_vectors=X[keep].copy(),
        alphas=alpha[keep].copy(),
        rho=rho,
        params=params,
        nu=nu,
        n_train=m,
        n_iter=n_iter,
    )


def decision(model: OcsvmModel, v: SparseVector) -> float:
    if v.dim != model.dim:
        raise DimMismatch(f"model dimension {model.dim}, input dimension {v.dim}")
    return float(model.decision_many(v.to_dense()[None, :])[0])


def predict(model: OcsvmModel, v: SparseVector) -> ClassLabel:
    return ClassLabel.NORMAL if decision(model, v) >= model.theta else ClassLabel.ATTACK


def predict_many(model: OcsvmModel, vectors) -> list[ClassLabel]:
    scores = model.decision_many(vectors)
    return [ClassLabel.NORMAL if s >= model.theta else ClassLabel.ATTACK for s in scores]


def dual_objective(model: OcsvmModel) -> float:
    K = rbf_gram(model.support_vectors, model.support_vectors, model.params.gamma)
    return 0.5 * float(model.alphas @ K @ model.alphas)
