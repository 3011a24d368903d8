"""End-to-end runs: dictionary and MI ranking, one-class training, evaluation, stream scoring."""

from __future__ import annotations

import hashlib
import json
import logging
import random
import sys
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TextIO

import numpy as np

from . import evaluate, ocsvm
from .errors import DegenerateInput, MalformedRecord, SingleClass
from .feature_select import PLUGIN_BINARY, FeatureRanking, rank_features, select_top
from .preprocess import HeaderFilter, PreprocessConfig, canonicalize
from .request_model import ClassLabel, Corpus, RawRequest, load_corpus, parse_jsonl_line
from .tokenizer import TokenDictionary, build_dictionary, corpus_tokens, tokenize
from .vectorizer import FeatureMatrix, bow_matrix, scale_rows, tfidf_matrix

log = logging.getLogger(__name__)

DICTIONARY_FILE = "dictionary.txt"
RANKING_FILE = "ranking.tsv"
MODEL_FILE = "model.json"
METRICS_FILE = "metrics.json"
ROC_FILE = "roc.csv"


@dataclass(frozen=True)
class RunConfig:
    normal_corpus: str | None = None
    attack_corpus: str | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    n_features: int = 100
    nu: float = 0.05
    gamma: float = 0.5
    nu_grid: tuple[float, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    estimator_id: str = PLUGIN_BINARY
    seed: int = 0
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    vector_scaling: str = "none"
    theta_policy: str = "max_youden"
    fpr_cap: float | None = None
    tol: float = 1e-4
    # None means 100 * (training-set size).
    max_iter: int | None = None
    unlabeled_ratio: float = 1.0
    attack_fraction: float | None = None
    expert_features: tuple[str, ...] | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if len(self.split) != 3 or any(f < 0 for f in self.split) or self.split[0] <= 0:
            raise ValueError(f"invalid split fractions {self.split}")
        if sum(self.split) > 1 + 1e-9:
            raise ValueError("split fractions sum above 1")
        if self.n_features < 1:
            raise ValueError("n_features must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"header_denylist", "header_allowlist", "include_body"}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        kw = {k: v for k, v in data.items() if k in known and k != "preprocess"}
        for key in ("nu_grid", "gamma_grid", "split", "expert_features"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        kw["preprocess"] = _preprocess_from(data)
        return cls(**kw)

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            return cls.from_mapping(tomllib.load(fh))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["preprocess"] = self.preprocess.to_dict()
        for key in ("nu_grid", "gamma_grid", "split", "expert_features"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def _preprocess_from(data: dict) -> PreprocessConfig:
    if "preprocess" in data:
        return PreprocessConfig.from_dict(data["preprocess"])
    if data.get("header_allowlist") is not None:
        hf = HeaderFilter.allowlist(data["header_allowlist"])
    elif data.get("header_denylist") is not None:
        hf = HeaderFilter.denylist(data["header_denylist"])
    else:
        hf = HeaderFilter()
    return PreprocessConfig(hf, bool(data.get("include_body", True)))


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the settings that affect results; the output directory is left out."""
    d = cfg.to_dict()
    d.pop("out_dir")
    blob = json.dumps(d, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class NormalSplit:
    train: Corpus
    validation: Corpus
    test: Corpus


def split_normals(normals: Corpus, fractions: Sequence[float], seed: int) -> NormalSplit:
    """Seeded shuffle of the normal corpus into train / validation / test."""
    n = len(normals)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    f_train, f_val, f_test = fractions
    n_train = int(f_train * n)
    n_val = int(f_val * n)
    n_test = n - n_train - n_val if abs(sum(fractions) - 1) < 1e-9 else int(f_test * n)
    pick = lambda idx: tuple(normals.requests[i] for i in sorted(idx))  # noqa: E731
    name = normals.source_name
    return NormalSplit(
        Corpus(pick(order[:n_train]), f"{name}-train"),
        Corpus(pick(order[n_train : n_train + n_val]), f"{name}-validation"),
        Corpus(pick(order[n_train + n_val : n_train + n_val + n_test]), f"{name}-test"),
    )


def subsample_attacks(attacks: Corpus, fraction: float, seed: int) -> Corpus:
    """Keep ``fraction`` of each attack category (uncategorized requests form one group)."""
    groups: dict[str | None, list[int]] = defaultdict(list)
    for i, req in enumerate(attacks):
        groups[req.category].append(i)
    rng = random.Random(seed)
    keep: list[int] = []
    for cat in sorted(groups, key=lambda c: (c is None, c or "")):
        idx = groups[cat]
        k = max(1, round(fraction * len(idx)))
        keep.extend(rng.sample(idx, k))
    return Corpus(tuple(attacks.requests[i] for i in sorted(keep)), attacks.source_name)


def load_inputs(cfg: RunConfig, normals: Corpus | None, attacks: Corpus | None) -> tuple[Corpus, Corpus]:
    if normals is None:
        normals = load_corpus(cfg.normal_corpus)
    if attacks is None:
        attacks = load_corpus(cfg.attack_corpus)
    normals = normals.relabel(ClassLabel.NORMAL)
    attacks = attacks.relabel(ClassLabel.ATTACK)
    if cfg.attack_fraction is not None:
        attacks = subsample_attacks(attacks, cfg.attack_fraction, cfg.seed)
    return normals, attacks


def _out(cfg: RunConfig, name: str) -> Path | None:
    if cfg.out_dir is None:
        return None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def ranking_normals(cfg: RunConfig, normals: Corpus) -> Corpus:
    """Normals that take part in ranking: the train and validation splits."""
    split = split_normals(normals, cfg.split, cfg.seed)
    ranked = Corpus(split.train.requests + split.validation.requests, normals.source_name)
    if not ranked.requests:
        raise DegenerateInput("no normal requests left for ranking after the split")
    return ranked


@dataclass
class RankResult:
    dictionary: TokenDictionary
    ranking: FeatureRanking
    provenance: dict


def run_rank(cfg: RunConfig, normals: Corpus | None = None, attacks: Corpus | None = None) -> RankResult:
    """Dictionary over attacks + non-test normals, TF-IDF over the same union, MI ranking."""
    normals, attacks = load_inputs(cfg, normals, attacks)
    ranked_normals = ranking_normals(cfg, normals)
    normal_texts = {canonicalize(r, cfg.preprocess) for r in normals}
    if {canonicalize(r, cfg.preprocess) for r in attacks} == normal_texts:
        raise SingleClass("attack and normal corpora hold the same requests; there is only one class")
    dictionary = build_dictionary(attacks, ranked_normals, cfg.preprocess)
    union = Corpus(ranked_normals.requests + attacks.requests)
    toks = corpus_tokens(union, cfg.preprocess)
    matrix = tfidf_matrix(toks, dictionary)
    ranking = rank_features(matrix, union.labels(), cfg.estimator_id)
    provenance = {
        "normal_sha256": ranked_normals.content_hash(),
        "attack_sha256": attacks.content_hash(),
        "n_docs": str(len(union)),
        "n_normal": str(len(ranked_normals)),
        "n_attack": str(len(attacks)),
        "preprocess": json.dumps(cfg.preprocess.to_dict(), sort_keys=True),
    }
    if (path := _out(cfg, DICTIONARY_FILE)) is not None:
        dictionary.save(path)
    if (path := _out(cfg, RANKING_FILE)) is not None:
        ranking.save(path, provenance)
    return RankResult(dictionary, ranking, provenance)


def vectorize(requests: Iterable[RawRequest], features: Sequence[str], cfg: PreprocessConfig, scaling: str) -> FeatureMatrix:
    toks = [tokenize(canonicalize(r, cfg)) for r in requests]
    return scale_rows(bow_matrix(toks, features), scaling)


def model_vectors(model: ocsvm.OcsvmModel, requests: Iterable[RawRequest]) -> FeatureMatrix:
    return vectorize(requests, model.selected_features, model.preprocess_cfg, model.vector_scaling)


def _scores(model: ocsvm.OcsvmModel, corpus: Corpus) -> list[tuple[float, ClassLabel]]:
    values = model.decision_many(model_vectors(model, corpus))
    return [(float(v), r.label) for v, r in zip(values, corpus)]


def unlabeled_mix(validation: Corpus, attacks: Corpus, ratio: float, seed: int) -> Corpus:
    k = min(len(attacks), max(1, round(ratio * len(validation))))
    picked = sorted(random.Random(seed + 1).sample(range(len(attacks)), k))
    mix = validation.requests + tuple(attacks.requests[i] for i in picked)
    return Corpus(tuple(r.with_label(ClassLabel.UNLABELED) for r in mix), "unlabeled-mix")


def run_train(
    cfg: RunConfig,
    ranking: FeatureRanking,
    normals: Corpus | None = None,
    attacks: Corpus | None = None,
) -> ocsvm.OcsvmModel:
    """Train on the normal training split; pick (nu, gamma) by F-hat if grids are set, then theta."""
    normals, attacks = load_inputs(cfg, normals, attacks)
    if cfg.expert_features is not None:
        features = list(cfg.expert_features)
    else:
        features = select_top(ranking, cfg.n_features)
    split = split_normals(normals, cfg.split, cfg.seed)
    if len(split.train) < 2:
        raise DegenerateInput(f"training split holds {len(split.train)} requests; need at least 2")
    if len(split.validation) == 0:
        raise DegenerateInput("validation split is empty; theta cannot be chosen")

    X_train = vectorize(split.train, features, cfg.preprocess, cfg.vector_scaling)
    X_val = vectorize(split.validation, features, cfg.preprocess, cfg.vector_scaling)
    nu, gamma = cfg.nu, cfg.gamma
    meta: dict = {
        "config_sha256": config_hash(cfg),
        "normal_sha256": normals.content_hash(),
        "attack_sha256": attacks.content_hash(),
        "estimator_id": ranking.estimator_id,
        "f_hat_formula": evaluate.F_HAT_FORMULA,
        "theta_policy": cfg.theta_policy if cfg.theta_policy != "fpr_cap" else f"fpr_cap({cfg.fpr_cap})",
    }
    if cfg.nu_grid or cfg.gamma_grid:
        mix = unlabeled_mix(split.validation, attacks, cfg.unlabeled_ratio, cfg.seed)
        X_mix = vectorize(mix, features, cfg.preprocess, cfg.vector_scaling)
        grid = evaluate.grid_search(
            X_train, X_val, X_mix, cfg.nu_grid or (cfg.nu,), cfg.gamma_grid or (cfg.gamma,), tol=cfg.tol,
            max_iter=cfg.max_iter,
        )
        nu, gamma = grid.best
        meta["grid"] = grid.to_dict()

    model = ocsvm.train(X_train, nu, gamma, tol=cfg.tol, max_iter=cfg.max_iter)
    model = replace(
        model,
        selected_features=list(features),
        preprocess_cfg=cfg.preprocess,
        vector_scaling=cfg.vector_scaling,
    )
    validation = Corpus(split.validation.requests + attacks.requests)
    curve = evaluate.roc(_scores(model, validation))
    theta = evaluate.pick_theta(curve, cfg.theta_policy, cfg.fpr_cap)
    meta["validation_auc"] = curve.auc
    model = replace(model, theta=theta, meta=meta)
    if (path := _out(cfg, MODEL_FILE)) is not None:
        model.save(path)
    return model


@dataclass
class EvalResult:
    metrics: dict
    roc: evaluate.RocCurve


def run_eval(model: ocsvm.OcsvmModel, test_corpus: Corpus, out_dir: str | Path | None = None) -> EvalResult:
    labels = {r.label for r in test_corpus}
    if not {ClassLabel.NORMAL, ClassLabel.ATTACK} <= labels:
        raise SingleClass("the test corpus needs both Normal and Attack requests")
    scores = _scores(model, test_corpus)
    curve = evaluate.roc(scores)
    record = evaluate.metrics_record(scores, model.theta, len(model.selected_features), curve)
    record["n_normal"] = sum(1 for _, lab in scores if lab is ClassLabel.NORMAL)
    record["n_attack"] = sum(1 for _, lab in scores if lab is ClassLabel.ATTACK)
    record["nu"] = model.nu
    record["gamma"] = model.gamma
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / METRICS_FILE).write_text(evaluate.dumps_metrics(record), encoding="utf-8")
        curve.save(out / ROC_FILE)
    return EvalResult(record, curve)


def holdout_normals(cfg: RunConfig, normals: Corpus | None = None) -> Corpus:
    if normals is None:
        normals = load_corpus(cfg.normal_corpus)
    return split_normals(normals.relabel(ClassLabel.NORMAL), cfg.split, cfg.seed).test


def run_all(cfg: RunConfig, test_attacks: Corpus, normals: Corpus | None = None, attacks: Corpus | None = None):
    """Rank, train and evaluate in one go; the test set is the normal test split plus ``test_attacks``."""
    normals, attacks = load_inputs(cfg, normals, attacks)
    ranked = run_rank(cfg, normals, attacks)
    model = run_train(cfg, ranked.ranking, normals, attacks)
    test = Corpus(holdout_normals(cfg, normals).requests + test_attacks.relabel(ClassLabel.ATTACK).requests)
    result = run_eval(model, test, cfg.out_dir)
    return ranked, model, result


def score_stream(
    model: ocsvm.OcsvmModel,
    lines: Iterable[str],
    out: TextIO,
    diag: TextIO | None = None,
) -> int:
    """Score JSONL requests one line at a time; returns the number of malformed lines.

    Each output line is ``{"id", "decision", "label"}``; ``id`` is the record's
    own "id" field when present, else its 1-based line number.
    """
    diag = diag if diag is not None else sys.stderr
    bad = 0
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            req = parse_jsonl_line(text, lineno)
        except MalformedRecord as exc:
            bad += 1
            diag.write(json.dumps({"line": lineno, "error": str(exc)}) + "\n")
            continue
        rid = _record_id(text, lineno)
        value = float(model.decision_many(model_vectors(model, [req]))[0])
        label = ClassLabel.NORMAL if value >= model.theta else ClassLabel.ATTACK
        out.write(json.dumps({"id": rid, "decision": value, "label": label.value}) + "\n")
    return bad


def _record_id(text: str, lineno: int):
    rid = json.loads(text).get("id")
    return rid if isinstance(rid, (str, int)) else lineno


def decisions(model: ocsvm.OcsvmModel, corpus: Corpus) -> np.ndarray:
    return model.decision_many(model_vectors(model, corpus))
