from dataclasses import replace
import itertools
import json

import numpy as np
import pytest

from taglabel.domain import ClassifierKind, MaterialClass, TagRole
from taglabel.features import FeatureWindow, TagFeatures, orientation_dataset
from taglabel.learn import MLPClassifier, RandomForestClassifier
from taglabel.features import material_dataset
from taglabel.pipeline import (
    PipelineModels,
    infer,
    infer_batch,
    load_bundle,
    save_bundle,
    select_tag,
    write_results,
)

TABLE = {
    0: ("Tag2", "Side"),
    1: ("Tag2", "Rear"),
    2: ("Tag1", "Rear"),
    3: ("Tag1", "Side"),
    4: ("Tag2", "Side"),
}


@pytest.mark.parametrize("state,n_tags", list(itertools.product(range(6), (2, 3))))
def test_selection_exhaustive(state, n_tags):
    got = select_tag(state, n_tags)
    if state == 5:
        want = ("Tag3", "Rear") if n_tags == 3 else ("Tag2", "Side")
    else:
        want = TABLE[state]
    assert (got.tag.value, got.classifier.value) == want


def test_selection_examples():
    assert select_tag(2, 3) == (TagRole.TAG1, ClassifierKind.REAR)
    assert select_tag(5, 3) == (TagRole.TAG3, ClassifierKind.REAR)
    assert select_tag(5, 2) == (TagRole.TAG2, ClassifierKind.SIDE)


@pytest.mark.parametrize("state,n_tags", [(6, 3), (-1, 2), (0, 4)])
def test_selection_invalid(state, n_tags):
    with pytest.raises(ValueError):
        select_tag(state, n_tags)


@pytest.fixture(scope="module")
def models(short_windows):
    train = short_windows[::2]
    out = {}
    for n in (3, 2):
        X, y = orientation_dataset(train, n)
        out[n] = RandomForestClassifier(n_estimators=15, random_state=n).fit(X, y)
    mats = {}
    for kind in ClassifierKind:
        X, y = material_dataset(train, kind)
        mats[kind] = MLPClassifier(hidden_layer_sizes=(24, 12), max_epochs=8, random_state=1).fit(X, y)
    return out, mats


def _bundle(models, n_tags):
    forests, mats = models
    return PipelineModels(forests[n_tags], mats[ClassifierKind.SIDE], mats[ClassifierKind.REAR], n_tags)


class Spy:
    def __init__(self, model, log, name):
        self.model, self.log, self.name = model, log, name
        self.classes_ = model.classes_
        self.n_features_in_ = model.n_features_in_

    def predict_proba(self, X):
        self.log.append((self.name, np.asarray(X).copy()))
        return self.model.predict_proba(X)


@pytest.mark.parametrize("n_tags", [3, 2])
def test_invoked_classifier_matches_selection(models, short_windows, n_tags):
    base = _bundle(models, n_tags)
    calls = []
    spied = replace(base, side=Spy(base.side, calls, "Side"), rear=Spy(base.rear, calls, "Rear"))
    for w in short_windows[1::37]:
        calls.clear()
        r = infer(w, spied)
        assert r.selection == select_tag(r.state, n_tags)
        assert [c[0] for c in calls] == [r.selection.classifier.value]
        f = w.tag(r.selection.tag)
        assert calls[0][1].tolist() == [[f.mean_rssi, f.var_rssi, f.mean_phase, f.var_phase]]


def test_pipeline_accuracy_equals_replay(models, short_windows):
    forests, mats = models
    held = short_windows[1::2]
    for n_tags in (3, 2):
        _, summary = infer_batch(held, _bundle(models, n_tags))
        # independent replay of the two stages
        X, _ = orientation_dataset(held, n_tags)
        states = forests[n_tags].predict(X)
        hits = 0
        for w, s in zip(held, states):
            if s == 5:
                tag, kind = ("Tag3", "Rear") if n_tags == 3 else ("Tag2", "Side")
            else:
                tag, kind = TABLE[int(s)]
            f = w.tags[TagRole(tag)]
            x = np.array([[f.mean_rssi, f.var_rssi, f.mean_phase, f.var_phase]])
            pred = mats[ClassifierKind(kind)].predict(x)[0]
            hits += int(pred) == w.material.index
        assert summary.accuracy == pytest.approx(hits / len(held), abs=0)
        assert summary.labelled == summary.n == len(held)


def test_result_carries_both_distributions(models, short_windows):
    r = infer(short_windows[3], _bundle(models, 3))
    assert r.state_proba.shape == (6,) and r.material_proba.shape == (5,)
    assert r.state == int(np.argmax(r.state_proba))
    assert r.material is MaterialClass.from_index(int(np.argmax(r.material_proba)))
    assert np.isclose(r.state_proba.sum(), 1) and np.isclose(r.material_proba.sum(), 1)


def test_infer_pure(models, short_windows):
    b = _bundle(models, 2)
    a, c = infer(short_windows[10], b), infer(short_windows[10], b)
    assert a.to_dict() == c.to_dict()


def test_state1_vote_uses_rear_on_tag2(models):
    forests, mats = models
    calls = []

    class Fixed:
        classes_ = np.arange(6)
        n_features_in_ = 6

        def __init__(self, state):
            self.state = state

        def predict_proba(self, X):
            p = np.zeros((len(X), 6))
            p[:, self.state] = 1
            return p

    window = FeatureWindow(0, {t: TagFeatures(-60.0 - t.index, 1.0, 1.0, 0.01, 5) for t in TagRole})
    b = PipelineModels(Fixed(1), Spy(mats[ClassifierKind.SIDE], calls, "Side"), Spy(mats[ClassifierKind.REAR], calls, "Rear"), 3)
    r = infer(window, b)
    assert r.selection == (TagRole.TAG2, ClassifierKind.REAR) and calls[0][0] == "Rear"
    assert calls[0][1][0, 0] == -61.0

    calls.clear()
    two = Fixed(5)
    two.n_features_in_ = 4
    b2 = replace(b, orientation=two, n_tags=2)
    r = infer(window, b2)
    assert r.selection == (TagRole.TAG2, ClassifierKind.SIDE) and calls[0][0] == "Side"


def test_missing_selected_tag_raises(models):
    forests, mats = models

    class VotesState2:
        classes_ = np.arange(6)
        n_features_in_ = 4

        def predict_proba(self, X):
            return np.eye(6)[[2] * len(X)]

    b = PipelineModels(VotesState2(), mats[ClassifierKind.SIDE], mats[ClassifierKind.REAR], 2)
    # state 2 selects Tag1, which this window lacks
    window = FeatureWindow(0, {TagRole.TAG2: TagFeatures(-60, 1, 1, 0.1, 3)})
    with pytest.raises(KeyError):
        infer(window, b)


def test_width_mismatch_rejected(models):
    forests, mats = models
    with pytest.raises(ValueError):
        PipelineModels(forests[3], mats[ClassifierKind.SIDE], mats[ClassifierKind.REAR], 2)


def test_bundle_round_trip(tmp_path, models, short_windows):
    b = _bundle(models, 3)
    path = save_bundle(tmp_path, b)
    manifest = json.loads(path.read_text())
    assert manifest["n_tags"] == 3 and set(manifest["models"]) == {"orientation", "side", "rear"}
    back = load_bundle(path)
    ws = short_windows[:40]
    assert [r.to_dict() for r in infer_batch(ws, back)[0]] == [r.to_dict() for r in infer_batch(ws, b)[0]]
    results, _ = infer_batch(ws, back)
    write_results(tmp_path / "p.jsonl", results)
    lines = (tmp_path / "p.jsonl").read_text().splitlines()
    assert len(lines) == 40 and json.loads(lines[0])["key"] == ws[0].key


def test_unlabelled_batch(models, short_windows):
    ws = [replace(w, material=None, state=None) for w in short_windows[:5]]
    results, summary = infer_batch(ws, _bundle(models, 3))
    assert len(results) == 5 and summary.labelled == 0 and np.isnan(summary.accuracy)
