import json

import numpy as np
import pytest

import oracles
from clozeselect.embed_io import SetKind, make_embedding_set
from clozeselect.errors import DegenerateRow, MissingClassToken, UnknownGoldLabel
from clozeselect.geometry import PcaModel, fit_pca
from clozeselect.selection import VerbalizerEntry, VerbalizerSet, canonical_json
from clozeselect.verbalizer_eval import (
    AGG_MAX,
    AGG_MEAN,
    PROXY_NOTE,
    class_probabilities,
    evaluate,
    render_report,
)


def identity_model(dim):
    return PcaModel(mean=np.zeros(dim), components=np.eye(dim),
                    explained_variance=np.ones(dim))


def verbalizer_set(vectors_by_class):
    vs = VerbalizerSet()
    row = 0
    for cls, vectors in vectors_by_class.items():
        for v in vectors:
            vs.add(VerbalizerEntry(token_id=f"t{row}", token_index=row,
                                   class_name=cls, acquired_at=row,
                                   vector=np.asarray(v, dtype=np.float64)))
            row += 1
    return vs


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# --- class_probabilities -------------------------------------------------------


def test_probabilities_sum_to_one_and_match_oracle():
    rng = np.random.default_rng(0)
    classes = ("a", "b", "c")
    vs = verbalizer_set({c: [unit(rng.normal(size=6)) for _ in range(2)] for c in classes})
    tokens_by_class = {c: [e.vector for e in vs.by_class()[c]] for c in classes}
    for _ in range(25):
        h = unit(rng.normal(size=6))
        for agg in (AGG_MAX, AGG_MEAN):
            probs = class_probabilities(h, vs, classes, agg)
            assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)
            expected = oracles.class_probs(h, tokens_by_class, agg)
            for c in classes:
                assert probs[c] == pytest.approx(expected[c], abs=1e-9)


def test_aggregation_flag_changes_result():
    # class "far" owns one excellent and one terrible token: max forgives
    # the stray token, mean does not
    h = np.array([1.0, 0.0, 0.0])
    vs = verbalizer_set({
        "near": [unit([0.8, 0.6, 0.0])],
        "far": [unit([1.0, 0.05, 0.0]), unit([-1.0, 0.0, 0.0])],
    })
    top_max = max(class_probabilities(h, vs, ("near", "far"), AGG_MAX).items(),
                  key=lambda kv: kv[1])[0]
    top_mean = max(class_probabilities(h, vs, ("near", "far"), AGG_MEAN).items(),
                   key=lambda kv: kv[1])[0]
    assert top_max == "far"
    assert top_mean == "near"


def test_probabilities_validation():
    vs = verbalizer_set({"a": [np.array([1.0, 0.0])]})
    with pytest.raises(ValueError):
        class_probabilities(np.array([1.0, 0.0]), vs, ("a",), "median")
    with pytest.raises(MissingClassToken):
        class_probabilities(np.array([1.0, 0.0]), vs, ("a", "ghost"))


def test_orthogonal_tokens_recover_their_class():
    dim = 4
    classes = tuple(f"class_{i}" for i in range(dim))
    vs = verbalizer_set({c: [np.eye(dim)[i]] for i, c in enumerate(classes)})
    rng = np.random.default_rng(1)
    for _ in range(100):
        i = int(rng.integers(dim))
        h = unit(np.eye(dim)[i] + 0.05 * rng.normal(size=dim))
        probs = class_probabilities(h, vs, classes)
        assert max(probs, key=probs.get) == classes[i]


# --- evaluate -------------------------------------------------------------------


def eval_fixture(n_per_class=10, noise=0.05, seed=2, classes=("a", "b", "c")):
    """Orthogonal class axes, instances hugging their axis."""
    dim = max(3, len(classes))
    rng = np.random.default_rng(seed)
    ids, rows, gold = [], [], {}
    for i, cls in enumerate(classes):
        for j in range(n_per_class):
            ids.append(f"{cls}{j}")
            rows.append(np.eye(dim)[i] + noise * rng.normal(size=dim))
            gold[f"{cls}{j}"] = cls
    test = make_embedding_set(SetKind.INSTANCE, ids, np.array(rows))
    vs = verbalizer_set({c: [np.eye(dim)[i]] for i, c in enumerate(classes)})
    return test, gold, vs, identity_model(dim)


def test_evaluate_perfect_separation():
    test, gold, vs, model = eval_fixture()
    report = evaluate(test, gold, vs, model, ("a", "b", "c"))
    assert report.accuracy == 1.0
    assert report.n_evaluated == 30
    assert report.n_skipped == 0
    assert not report.empty_warning
    assert report.note == PROXY_NOTE
    for i, cls in enumerate(("a", "b", "c")):
        assert report.per_class[cls] == {"support": 10, "correct": 10}
        assert report.confusion[i][i] == 10
    assert sum(map(sum, report.confusion)) == 30


def test_evaluate_skips_uncovered_classes():
    test, gold, vs, model = eval_fixture()
    partial = verbalizer_set({"a": [np.eye(3)[0]], "b": [np.eye(3)[1]]})
    report = evaluate(test, gold, partial, model, ("a", "b", "c"))
    assert report.n_skipped == 10
    assert report.n_evaluated == 20
    assert report.per_class["c"] == {"support": 0, "correct": 0}
    assert all(report.confusion[2][j] == 0 for j in range(3))
    assert report.accuracy == 1.0  # accuracy is over evaluated instances only


def test_evaluate_all_skipped_sets_warning():
    test, gold, _, model = eval_fixture()
    report = evaluate(test, gold, VerbalizerSet(), model, ("a", "b", "c"))
    assert report.n_evaluated == 0
    assert report.n_skipped == 30
    assert report.accuracy == 0.0
    assert report.empty_warning


def test_evaluate_tie_prefers_earliest_label_space_entry():
    dim = 3
    # one instance exactly between the two class tokens
    test = make_embedding_set(SetKind.INSTANCE, ["q0"],
                              np.array([[1.0, 1.0, 0.0]]))
    vs = verbalizer_set({"zeta": [np.eye(dim)[0]], "alpha": [np.eye(dim)[1]]})
    gold = {"q0": "alpha"}
    report = evaluate(test, gold, vs, identity_model(dim), ("zeta", "alpha"))
    # the tie resolves to "zeta", so the gold "alpha" counts as wrong
    assert report.accuracy == 0.0
    assert report.confusion[1][0] == 1


def test_evaluate_validation_errors():
    test, gold, vs, model = eval_fixture()
    vocab = make_embedding_set(SetKind.VOCAB, ["v0"], np.ones((1, 3)))
    with pytest.raises(ValueError):
        evaluate(vocab, gold, vs, model, ("a", "b", "c"))
    missing = dict(gold)
    missing.pop("a0")
    with pytest.raises(UnknownGoldLabel):
        evaluate(test, missing, vs, model, ("a", "b", "c"))
    stray = dict(gold, a0="mystery")
    with pytest.raises(UnknownGoldLabel):
        evaluate(test, stray, vs, model, ("a", "b", "c"))


def test_evaluate_degenerate_projection_rejected():
    rng = np.random.default_rng(3)
    half = rng.normal(size=(10, 5))
    model = fit_pca(np.vstack([half, -half]), 3)  # mean is exactly zero
    # an instance at the training mean projects to the zero vector
    test = make_embedding_set(SetKind.INSTANCE, ["dead"], np.zeros((1, 5)))
    vs = verbalizer_set({"a": [unit(np.ones(3))]})
    with pytest.raises(DegenerateRow):
        evaluate(test, {"dead": "a"}, vs, model, ("a",))


def test_evaluate_matches_nearest_mean_oracle():
    # two Gaussian blobs, verbalizers planted exactly at the component means:
    # softmax argmax must agree with the nearest-mean classifier everywhere
    rng = np.random.default_rng(4)
    dim = 6
    mean_a = unit(rng.normal(size=dim))
    mean_b = unit(rng.normal(size=dim))
    ids, rows, gold = [], [], {}
    for i in range(100):
        ids.append(f"a{i}")
        rows.append(mean_a + 0.4 * rng.normal(size=dim))
        gold[f"a{i}"] = "a"
    for i in range(100):
        ids.append(f"b{i}")
        rows.append(mean_b + 0.4 * rng.normal(size=dim))
        gold[f"b{i}"] = "b"
    X = np.array(rows)
    test = make_embedding_set(SetKind.INSTANCE, ids, X)
    vs = verbalizer_set({"a": [mean_a], "b": [mean_b]})
    model = identity_model(dim)

    report = evaluate(test, gold, vs, model, ("a", "b"))

    H = X / np.linalg.norm(X, axis=1)[:, None]
    disagreements = 0
    correct = 0
    for i, ident in enumerate(ids):
        oracle_pred = "a" if H[i] @ unit(mean_a) >= H[i] @ unit(mean_b) else "b"
        probs = class_probabilities(H[i], vs, ("a", "b"))
        eval_pred = max(("a", "b"), key=probs.get)
        if eval_pred != oracle_pred:
            disagreements += 1
        if eval_pred == gold[ident]:
            correct += 1
    assert disagreements == 0
    assert report.accuracy == pytest.approx(correct / len(ids), abs=1e-12)


def test_report_serializes():
    test, gold, vs, model = eval_fixture()
    doc = evaluate(test, gold, vs, model, ("a", "b", "c")).to_dict()
    parsed = json.loads(canonical_json(doc).decode("utf-8"))
    assert parsed["n_evaluated"] == 30
    assert parsed["label_space"] == ["a", "b", "c"]


def test_render_report_formats():
    test, gold, vs, model = eval_fixture()
    partial = verbalizer_set({"a": [np.eye(3)[0]], "b": [np.eye(3)[1]]})
    text = render_report(evaluate(test, gold, partial, model, ("a", "b", "c")))
    assert "accuracy: 100.00%" in text
    assert "(evaluated 20, skipped 10)" in text
    assert text.endswith("\n")
    c_line = next(line for line in text.splitlines() if line.startswith("c "))
    assert c_line.split()[-1] == "-"
    assert PROXY_NOTE in text


def test_render_report_warns_when_empty():
    test, gold, _, model = eval_fixture()
    text = render_report(evaluate(test, gold, VerbalizerSet(), model, ("a", "b", "c")))
    assert "warning: no instances were evaluated" in text
