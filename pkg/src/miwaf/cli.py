"""Command-line entry point: ``miwaf <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluate, ocsvm, pipeline
from .errors import MiwafError
from .feature_select import PLUGIN_BINARY, PLUGIN_BINNED, FeatureRanking
from .preprocess import HeaderFilter, PreprocessConfig
from .request_model import ClassLabel, Corpus, load_corpus, save_corpus
from .synthgen import FAMILIES, SynthSpec, generate
from .tokenizer import build_dictionary, corpus_tokens
from .vectorizer import tfidf_matrix

log = logging.getLogger("miwaf")

ESTIMATOR_NAMES = {"plugin": PLUGIN_BINARY, "binned": PLUGIN_BINNED}


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in _csv_list(text))


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="TOML run configuration")
    g.add_argument("--seed", type=int)
    hf = g.add_mutually_exclusive_group()
    hf.add_argument("--header-denylist", type=_csv_list, metavar="A,B,...")
    hf.add_argument("--header-allowlist", type=_csv_list, metavar="A,B,...")
    g.add_argument("--include-body", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--n-features", type=int)
    g.add_argument("--nu", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--vector-scaling", choices=("none", "binary", "l2"))
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--normals", type=Path, help="normal-traffic corpus (jsonl or csv)")
    p.add_argument("--attacks", type=Path, required=False, help="generic attack corpus (jsonl or csv)")
    p.add_argument("--attack-fraction", type=float, help="keep this share of each attack category")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    # Global flags live on each leaf command so they may follow the command name.
    parser = argparse.ArgumentParser(prog="miwaf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n-normal", type=int, default=1000)
    p.add_argument("--n-attack", type=int, default=100)
    p.add_argument("--families", type=_csv_list, default=list(FAMILIES))
    p.add_argument("--noise-tokens", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("split", parents=[common], help="split normals into train/validation/test")
    p.add_argument("normals", type=Path)
    p.add_argument("--fractions", type=_float_list, default=None, metavar="TRAIN,VAL,TEST")
    p.add_argument("--out-dir", type=Path, required=True)

    d = sub.add_parser("dict", help="dictionary commands").add_subparsers(dest="dict_command", required=True)
    p = d.add_parser("build", parents=[common], help="build the token dictionary")
    _corpus_flags(p)
    p.add_argument("-o", "--output", type=Path, required=True)

    f = sub.add_parser("features", help="feature ranking commands").add_subparsers(dest="features_command", required=True)
    p = f.add_parser("rank", parents=[common], help="rank tokens by mutual information")
    _corpus_flags(p)
    p.add_argument("--estimator", choices=sorted(ESTIMATOR_NAMES), default=None)
    p.add_argument("--dump-matrix", type=Path, help="debug: write the TF-IDF matrix as CSV")
    p.add_argument("-o", "--output", type=Path, required=True)

    for name, helptext in (("train", "train the one-class model"), ("grid", "grid search over nu and gamma")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _corpus_flags(p)
        p.add_argument("--ranking", type=Path, help="ranking TSV from 'features rank'")
        p.add_argument("--expert-features", type=Path, help="file with one token per line; overrides --ranking")
        p.add_argument("--nu-grid", type=_float_list)
        p.add_argument("--gamma-grid", type=_float_list)
        p.add_argument("--unlabeled-ratio", type=float)
        p.add_argument("-o", "--output", type=Path, required=True)
        if name == "train":
            p.add_argument("--theta-policy", choices=("max_youden", "fpr_cap"))
            p.add_argument("--fpr-cap", type=float)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a labeled test corpus")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True, action="append", help="labeled test corpus (repeatable)")
    p.add_argument("--attacks", type=Path, action="append", default=[], help="extra corpus counted as attacks")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("score", parents=[common], help="score a JSONL request stream")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("-i", "--input", type=Path, help="JSONL input (default stdin)")
    return parser


def make_config(args: argparse.Namespace) -> pipeline.RunConfig:
    data: dict = {}
    if args.config is not None:
        data = pipeline.RunConfig.from_toml(args.config).to_dict()
    overrides = {
        "seed": args.seed,
        "n_features": args.n_features,
        "nu": args.nu,
        "gamma": args.gamma,
        "vector_scaling": args.vector_scaling,
        "attack_fraction": getattr(args, "attack_fraction", None),
        "nu_grid": getattr(args, "nu_grid", None),
        "gamma_grid": getattr(args, "gamma_grid", None),
        "unlabeled_ratio": getattr(args, "unlabeled_ratio", None),
        "theta_policy": getattr(args, "theta_policy", None),
        "fpr_cap": getattr(args, "fpr_cap", None),
    }
    if getattr(args, "normals", None) is not None:
        overrides["normal_corpus"] = str(args.normals)
    if isinstance(getattr(args, "attacks", None), Path):
        overrides["attack_corpus"] = str(args.attacks)
    if getattr(args, "estimator", None) is not None:
        overrides["estimator_id"] = ESTIMATOR_NAMES[args.estimator]
    if getattr(args, "fractions", None) is not None:
        overrides["split"] = args.fractions
    data.update({k: v for k, v in overrides.items() if v is not None})

    pre = PreprocessConfig.from_dict(data.pop("preprocess")) if "preprocess" in data else PreprocessConfig()
    hf = pre.header_filter
    if args.header_denylist is not None:
        hf = HeaderFilter.denylist(args.header_denylist)
    elif args.header_allowlist is not None:
        hf = HeaderFilter.allowlist(args.header_allowlist)
    include_body = pre.include_body if args.include_body is None else args.include_body
    data["preprocess"] = PreprocessConfig(hf, include_body).to_dict()
    return pipeline.RunConfig.from_mapping(data)


def _require(cfg: pipeline.RunConfig, *keys: str) -> None:
    for key in keys:
        if getattr(cfg, key) is None:
            flag = {"normal_corpus": "--normals", "attack_corpus": "--attacks"}[key]
            raise _UsageError(f"{flag} is required (or set {key} in --config)")


class _UsageError(Exception):
    pass


def _cmd_synth(args, cfg):
    spec = SynthSpec(args.n_normal, args.n_attack, families=tuple(args.families), seed=cfg.seed, noise_tokens=args.noise_tokens)
    corpus = generate(spec)
    save_corpus(corpus, args.output)
    print(f"wrote {len(corpus)} requests to {args.output}")


def _cmd_split(args, cfg):
    parts = pipeline.split_normals(load_corpus(args.normals), cfg.split, cfg.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("train", "validation", "test"):
        part = getattr(parts, name)
        if len(part):
            save_corpus(part, args.out_dir / f"{name}.jsonl")
        print(f"{name}: {len(part)}")


def _cmd_dict_build(args, cfg):
    _require(cfg, "normal_corpus", "attack_corpus")
    attacks = load_corpus(cfg.attack_corpus)
    normals = load_corpus(cfg.normal_corpus)
    dictionary = build_dictionary(attacks, normals, cfg.preprocess)
    dictionary.save(args.output)
    print(f"{len(dictionary)} tokens -> {args.output}")


def _cmd_features_rank(args, cfg):
    _require(cfg, "normal_corpus", "attack_corpus")
    result = pipeline.run_rank(cfg)
    result.ranking.save(args.output, result.provenance)
    if args.dump_matrix is not None:
        normals, attacks = pipeline.load_inputs(cfg, None, None)
        union = Corpus(pipeline.ranking_normals(cfg, normals).requests + attacks.requests)
        tfidf_matrix(corpus_tokens(union, cfg.preprocess), result.dictionary).dump_csv(args.dump_matrix)
    print(f"ranked {len(result.ranking)} tokens -> {args.output}")


def _features_cfg(args, cfg) -> tuple[pipeline.RunConfig, FeatureRanking | None]:
    _require(cfg, "normal_corpus", "attack_corpus")
    if args.expert_features is not None:
        tokens = [t for t in args.expert_features.read_text(encoding="utf-8").split("\n") if t]
        return replace(cfg, expert_features=tuple(tokens)), None
    if args.ranking is None:
        raise _UsageError("--ranking or --expert-features is required")
    return cfg, FeatureRanking.load(args.ranking)


def _cmd_train(args, cfg):
    cfg, ranking = _features_cfg(args, cfg)
    model = pipeline.run_train(cfg, ranking or FeatureRanking(()))
    model.save(args.output)
    print(
        f"trained nu={model.nu} gamma={model.gamma} support_vectors={len(model.alphas)} "
        f"theta={model.theta:.6g} -> {args.output}"
    )


def _cmd_grid(args, cfg):
    cfg, ranking = _features_cfg(args, cfg)
    normals, attacks = pipeline.load_inputs(cfg, None, None)
    features = list(cfg.expert_features) if cfg.expert_features else ranking.tokens[: cfg.n_features]
    split = pipeline.split_normals(normals, cfg.split, cfg.seed)
    vec = lambda c: pipeline.vectorize(c, features, cfg.preprocess, cfg.vector_scaling)  # noqa: E731
    mix = pipeline.unlabeled_mix(split.validation, attacks, cfg.unlabeled_ratio, cfg.seed)
    result = evaluate.grid_search(
        vec(split.train),
        vec(split.validation),
        vec(mix),
        cfg.nu_grid or evaluate.DEFAULT_NU_GRID,
        cfg.gamma_grid or evaluate.DEFAULT_GAMMA_GRID,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
    )
    args.output.write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"best nu={result.best[0]} gamma={result.best[1]} -> {args.output}")


def _cmd_eval(args, cfg):
    model = ocsvm.OcsvmModel.load(args.model)
    requests = []
    for path in args.test:
        requests.extend(load_corpus(path).requests)
    for path in args.attacks:
        requests.extend(load_corpus(path).relabel(ClassLabel.ATTACK).requests)
    result = pipeline.run_eval(model, Corpus(tuple(requests)), args.out_dir)
    print(evaluate.dumps_metrics(result.metrics), end="")


def _cmd_score(args, cfg):
    model = ocsvm.OcsvmModel.load(args.model)
    if args.input is None:
        pipeline.score_stream(model, sys.stdin, sys.stdout, sys.stderr)
    else:
        with open(args.input, encoding="utf-8") as fh:
            pipeline.score_stream(model, fh, sys.stdout, sys.stderr)


COMMANDS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    ("dict", "build"): _cmd_dict_build,
    ("features", "rank"): _cmd_features_rank,
    "train": _cmd_train,
    "grid": _cmd_grid,
    "eval": _cmd_eval,
    "score": _cmd_score,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    key = args.command
    if key == "dict":
        key = ("dict", args.dict_command)
    elif key == "features":
        key = ("features", args.features_command)
    try:
        cfg = make_config(args)
        COMMANDS[key](args, cfg)
    except _UsageError as exc:
        parser.error(str(exc))
    except MiwafError as exc:
        print(f"miwaf: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"miwaf: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
