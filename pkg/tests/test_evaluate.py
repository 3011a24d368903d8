import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from miwaf.errors import Infeasible, NoLabeledData, SingleClass
from miwaf.evaluate import (
    RocCurve,
    auc_pairwise,
    confusion,
    f_hat,
    grid_search,
    pick_theta,
    roc,
)
from miwaf.ocsvm import KernelParams, OcsvmModel
from miwaf.request_model import ClassLabel

A, N, U = ClassLabel.ATTACK, ClassLabel.NORMAL, ClassLabel.UNLABELED


def scored(normals, attacks):
    return [(v, N) for v in normals] + [(v, A) for v in attacks]


def brute_rates(scores, theta):
    att = [v for v, lab in scores if lab is A]
    nor = [v for v, lab in scores if lab is N]
    return sum(v < theta for v in att) / len(att), sum(v < theta for v in nor) / len(nor)


def test_confusion_counts():
    cm = confusion(scored([2.0, 0.5, -0.1], [-1.0, 0.0, 3.0]) + [(-9.0, U)], 0.0)
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (1, 1, 2, 2)
    assert cm.tpr == pytest.approx(1 / 3) and cm.fpr == pytest.approx(1 / 3)
    assert cm.acc == pytest.approx(0.5)


def test_value_equal_to_theta_is_not_flagged():
    cm = confusion(scored([], [0.0]), 0.0)
    assert cm.tp == 0 and cm.fn == 1


def test_confusion_empty_denominators():
    cm = confusion(scored([1.0], []), 0.0)
    assert cm.tpr == 0.0 and cm.fpr == 0.0 and cm.acc == 1.0


def test_confusion_needs_labels():
    with pytest.raises(NoLabeledData):
        confusion([(1.0, U)], 0.0)


def test_separated_hand_case():
    curve = roc(scored([2.0, 1.0], [-1.0, 0.5]))
    assert curve.auc == 1.0
    assert [p.theta for p in curve.points] == [-2.0, -0.25, 0.75, 1.5, 3.0]


def test_tied_hand_case():
    s = scored([2.0, 1.0], [-1.0, 1.0])
    curve = roc(s)
    assert curve.auc == pytest.approx(0.875, abs=1e-12)
    assert curve.auc == pytest.approx(auc_pairwise(s), abs=1e-12)
    theta = pick_theta(curve, "max_youden")
    assert theta == 0.0
    tpr, fpr = brute_rates(s, theta)
    assert tpr - fpr == 0.5


def test_fpr_cap_zero_hand_case():
    s = scored([0.0, 1.0, 4.0], [-5.0, -4.0, -3.0, 2.0, 5.0])
    theta = pick_theta(roc(s), "fpr_cap", 0.0)
    assert theta == -1.5
    assert brute_rates(s, theta) == (0.6, 0.0)


def test_fpr_cap_negative_is_infeasible():
    with pytest.raises(Infeasible):
        pick_theta(roc(scored([1.0], [0.0])), "fpr_cap", -0.1)


def test_roc_needs_both_classes():
    with pytest.raises(SingleClass):
        roc(scored([1.0, 2.0], []))


def test_roc_file_round_trip(tmp_path):
    curve = roc(scored([0.3, 0.1, 0.2], [0.05, 0.2]))
    curve.save(tmp_path / "roc.csv")
    assert RocCurve.loads((tmp_path / "roc.csv").read_text()) == curve


score_sets = st.tuples(
    st.lists(st.integers(-6, 6).map(lambda k: k / 4), min_size=1, max_size=40),
    st.lists(st.integers(-6, 6).map(lambda k: k / 4), min_size=1, max_size=40),
)


@given(score_sets)
def test_roc_points_match_brute_force(sets):
    s = scored(*sets)
    curve = roc(s)
    for p in curve.points:
        assert (p.tpr, p.fpr) == pytest.approx(brute_rates(s, p.theta), abs=1e-12)
    fprs = [p.fpr for p in curve.points]
    tprs = [p.tpr for p in curve.points]
    assert fprs == sorted(fprs) and tprs == sorted(tprs)
    assert (fprs[0], tprs[0], fprs[-1], tprs[-1]) == (0.0, 0.0, 1.0, 1.0)


@given(score_sets)
def test_auc_estimators_agree(sets):
    s = scored(*sets)
    auc = roc(s).auc
    assert 0.0 <= auc <= 1.0
    assert auc == pytest.approx(auc_pairwise(s), abs=1e-9)
    y = [lab is A for _, lab in s]
    assert auc == pytest.approx(roc_auc_score(y, [-v for v, _ in s]), abs=1e-9)


@given(score_sets)
def test_youden_is_maximal(sets):
    s = scored(*sets)
    curve = roc(s)
    theta = pick_theta(curve)
    tpr, fpr = brute_rates(s, theta)
    best = max(p.tpr - p.fpr for p in curve.points)
    assert tpr - fpr == pytest.approx(best, abs=1e-12)


@given(score_sets, st.floats(0, 1))
def test_fpr_cap_respected(sets, cap):
    s = scored(*sets)
    curve = roc(s)
    theta = pick_theta(curve, "fpr_cap", cap)
    tpr, fpr = brute_rates(s, theta)
    assert fpr <= cap
    assert tpr == max(p.tpr for p in curve.points if p.fpr <= cap)


def origin_model(rho=0.5, gamma=1.0):
    return OcsvmModel(np.zeros((1, 1)), np.array([1.0]), rho, KernelParams(gamma), nu=0.5, selected_features=["t"])


def test_f_hat_hand_value():
    # decision = exp(-d^2) - 0.5: accepted at the origin, rejected far away.
    model = origin_model()
    validation = np.array([[0.0]] * 9 + [[5.0]])
    mix = np.array([[0.0]] * 5 + [[5.0]] * 5)
    assert f_hat(model, validation, mix) == pytest.approx(0.9**2 / 0.5)
    assert f_hat(model, validation, mix) == pytest.approx(1.62)


def test_f_hat_zero_acceptance():
    model = origin_model()
    assert f_hat(model, np.array([[0.0]]), np.array([[5.0]])) == 0.0


def test_grid_search_shape_and_ties():
    rng = np.random.default_rng(0)
    train_x = rng.standard_normal((40, 2))
    val = rng.standard_normal((20, 2))
    mix = np.vstack([rng.standard_normal((10, 2)), rng.standard_normal((10, 2)) + 6])
    result = grid_search(train_x, val, mix, [0.2, 0.1], [1.0, 0.5])
    assert [(c.nu, c.gamma) for c in result.table] == [(0.1, 0.5), (0.1, 1.0), (0.2, 0.5), (0.2, 1.0)]
    best = max(c.f_hat for c in result.table)
    first = next(c for c in result.table if c.f_hat == best)
    assert result.best == (first.nu, first.gamma)
    assert result.to_dict()["f_hat_formula"] == "r^2/q"


def test_grid_search_failed_cell():
    x = np.zeros((5, 1))
    result = grid_search(x, x, x, [0.5, 1.5], [1.0])
    assert result.table[1].f_hat == -1.0
    assert result.best == (0.5, 1.0)
