import io
import json

import pytest

from miwaf.errors import SingleClass
from miwaf.evaluate import auc_pairwise
from miwaf.pipeline import (
    RunConfig,
    decisions,
    holdout_normals,
    run_all,
    run_eval,
    run_rank,
    run_train,
    score_stream,
    split_normals,
    subsample_attacks,
)
from miwaf.request_model import ClassLabel, Corpus, RawRequest
from miwaf.synthgen import SynthSpec, generate


def test_split_is_partition(small_corpora):
    normals, _, _ = small_corpora
    parts = split_normals(normals, (0.7, 0.15, 0.15), seed=3)
    sizes = (len(parts.train), len(parts.validation), len(parts.test))
    assert sizes == (280, 60, 60)
    ids = [r for p in (parts.train, parts.validation, parts.test) for r in p]
    assert sorted(map(repr, ids)) == sorted(map(repr, normals))
    assert split_normals(normals, (0.7, 0.15, 0.15), seed=3) == parts


def test_subsample_per_category():
    attacks = generate(SynthSpec(0, 80, seed=1))
    kept = subsample_attacks(attacks, 0.5, seed=0)
    for fam in {r.category for r in attacks}:
        total = sum(r.category == fam for r in attacks)
        assert sum(r.category == fam for r in kept) == max(1, round(total / 2))


def test_rank_excludes_test_normals(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(seed=1)
    result = run_rank(cfg, normals, attacks)
    assert result.provenance["n_normal"] == str(340)
    assert result.provenance["n_attack"] == str(len(attacks))


def test_identical_corpora_are_single_class(small_corpora):
    normals, _, _ = small_corpora
    with pytest.raises(SingleClass):
        run_rank(RunConfig(), normals, normals)


def test_end_to_end_small(small_corpora, tmp_path):
    normals, attacks, test_attacks = small_corpora
    cfg = RunConfig(n_features=40, seed=2, out_dir=str(tmp_path))
    ranked, model, result = run_all(cfg, test_attacks, normals, attacks)
    assert len(model.selected_features) == 40
    assert model.selected_features == ranked.ranking.tokens[:40]
    assert result.metrics["auc"] > 0.95
    for name in ("dictionary.txt", "ranking.tsv", "model.json", "metrics.json", "roc.csv"):
        assert (tmp_path / name).exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert {"acc", "tpr", "fpr", "auc", "theta", "n_features"} <= set(metrics)
    # AUC in the metrics agrees with the pairwise count over the same scores.
    test = Corpus(holdout_normals(cfg, normals).requests + test_attacks.requests)
    scores = list(zip(decisions(model, test), test.labels()))
    assert metrics["auc"] == pytest.approx(auc_pairwise(scores), abs=1e-12)


def test_grid_selection_recorded(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(n_features=30, nu_grid=(0.05, 0.2), gamma_grid=(0.5, 1.0))
    ranking = run_rank(cfg, normals, attacks).ranking
    model = run_train(cfg, ranking, normals, attacks)
    grid = model.meta["grid"]
    assert len(grid["table"]) == 4
    assert (model.nu, model.gamma) == (grid["best"]["nu"], grid["best"]["gamma"])


def test_expert_features(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(expert_features=("union", "<script>", "select"))
    model = run_train(cfg, run_rank(cfg, normals, attacks).ranking, normals, attacks)
    assert model.selected_features == ["union", "<script>", "select"]


def test_eval_needs_both_classes(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(n_features=20)
    model = run_train(cfg, run_rank(cfg, normals, attacks).ranking, normals, attacks)
    with pytest.raises(SingleClass):
        run_eval(model, normals)


def test_score_stream(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(n_features=20)
    model = run_train(cfg, run_rank(cfg, normals, attacks).ranking, normals, attacks)
    lines = [
        json.dumps({"id": "a", "method": "GET", "target": "/shop/item?id=1&cat=books"}),
        "{broken",
        "",
        json.dumps({"method": "GET", "target": "/shop/item?id=1&cat=x union select 1"}),
    ]
    out, diag = io.StringIO(), io.StringIO()
    assert score_stream(model, lines, out, diag) == 1
    rows = [json.loads(line) for line in out.getvalue().splitlines()]
    assert [r["id"] for r in rows] == ["a", 4]
    assert all(r["label"] in ("normal", "attack") for r in rows)
    assert json.loads(diag.getvalue())["line"] == 2


def test_config_round_trip(tmp_path):
    (tmp_path / "run.toml").write_text('n_features = 7\nnu = 0.1\nheader_denylist = ["cookie"]\nsplit = [0.6, 0.2, 0.2]\n')
    cfg = RunConfig.from_toml(tmp_path / "run.toml")
    assert cfg.n_features == 7 and cfg.split == (0.6, 0.2, 0.2)
    assert not cfg.preprocess.header_filter.keeps("Cookie")
    assert RunConfig.from_mapping(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        RunConfig.from_mapping({"bogus": 1})


def test_unlabeled_items_are_ignored_in_eval(small_corpora):
    normals, attacks, test_attacks = small_corpora
    cfg = RunConfig(n_features=20)
    model = run_train(cfg, run_rank(cfg, normals, attacks).ranking, normals, attacks)
    test = Corpus(holdout_normals(cfg, normals).requests + test_attacks.requests)
    extra = Corpus(test.requests + (RawRequest("GET", "/zzz", label=ClassLabel.UNLABELED),))
    assert run_eval(model, extra).metrics == run_eval(model, test).metrics


def test_outputs_independent_of_hash_seed(tmp_path):
    import os
    import subprocess
    import sys

    script = (
        "import sys\n"
        "from miwaf.pipeline import RunConfig, run_all\n"
        "from miwaf.synthgen import SynthSpec, generate, split_by_label\n"
        "n, a = split_by_label(generate(SynthSpec(300, 40, seed=1)))\n"
        "_, t = split_by_label(generate(SynthSpec(0, 20, seed=2)))\n"
        "run_all(RunConfig(n_features=30, out_dir=sys.argv[1]), t, n, a)\n"
    )
    for h in ("1", "2"):
        env = dict(os.environ, PYTHONHASHSEED=h)
        subprocess.run([sys.executable, "-c", script, str(tmp_path / h)], check=True, env=env)
    for name in ("dictionary.txt", "ranking.tsv", "model.json", "metrics.json", "roc.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_score_stream_empty_and_known_normal(small_corpora):
    normals, attacks, _ = small_corpora
    cfg = RunConfig(n_features=60)
    model = run_train(cfg, run_rank(cfg, normals, attacks).ranking, normals, attacks)
    out = io.StringIO()
    assert score_stream(model, [], out, io.StringIO()) == 0
    assert out.getvalue() == ""
    known = split_normals(normals, cfg.split, cfg.seed).train.requests[0]
    line = json.dumps({"method": known.method, "target": known.target, "headers": [list(h) for h in known.headers],
                       "body": known.body.decode()})
    score_stream(model, [line], out, io.StringIO())
    assert json.loads(out.getvalue())["label"] == "normal"
