"""Acceptance checks, each against an oracle that shares no code with the implementation.

Criteria 6 to 8 read the report of a full run; the rest are self-contained.
"""

from collections import Counter
from dataclasses import dataclass
import filecmp
import json
import math
from pathlib import Path
import shutil
import tempfile

import numpy as np

from ._seeding import DEFAULT_SEED, stream_rng
from .domain import MaterialClass, RawRead, TagRole
from .features import window_reads
from .learn import MLPClassifier, RandomForestClassifier, serialize_model
from .learn.mlp import gradient_check_detail, onehot
from .pipeline import select_tag
from .sim import ScenarioConfig, sample_read

# (state, n_tags or None for both, tag, classifier), written out by hand
SELECTION_ROWS = (
    (0, None, "Tag2", "Side"),
    (1, None, "Tag2", "Rear"),
    (2, None, "Tag1", "Rear"),
    (3, None, "Tag1", "Side"),
    (4, None, "Tag2", "Side"),
    (5, 3, "Tag3", "Rear"),
    (5, 2, "Tag2", "Side"),
)

REAR_PARAMS = 12_261
SIDE_PARAMS = 16_421


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:>2} {self.name}: {self.detail}"

    def to_dict(self):
        return {"number": self.number, "name": self.name, "passed": bool(self.passed), "detail": self.detail}


def check_selection():
    expected = {}
    for state, n, tag, kind in SELECTION_ROWS:
        for nt in (2, 3) if n is None else (n,):
            expected[(state, nt)] = (tag, kind)
    bad = []
    for (state, nt), want in sorted(expected.items()):
        got = select_tag(state, nt)
        if (got.tag.value, got.classifier.value) != want:
            bad.append(f"({state},{nt})->{got.tag.value}/{got.classifier.value}")
    ok = len(expected) == 12 and not bad
    return CriterionResult(1, "selection table", ok, f"{12 - len(bad)}/12 cases match" + (f"; wrong: {bad}" if bad else ""))


def check_param_counts():
    def count(sizes):
        n = 0
        for a, b in zip(sizes, sizes[1:]):
            n += a * b + b
        return n

    rear = MLPClassifier(hidden_layer_sizes=(128, 64, 48)).initialize(4, range(5))
    side = MLPClassifier(hidden_layer_sizes=(128, 64, 64, 48)).initialize(4, range(5))
    got = (rear.n_params_, side.n_params_)
    hand = (count([4, 128, 64, 48, 5]), count([4, 128, 64, 64, 48, 5]))
    ok = got == (REAR_PARAMS, SIDE_PARAMS) and hand == got
    return CriterionResult(2, "MLP parameter counts", ok, f"rear {got[0]:,}, side {got[1]:,}")


def check_gradients(n_pairs=10, seed=DEFAULT_SEED, tol=1e-4):
    """Central-difference check on the two production networks plus random small ones."""
    rng = stream_rng(seed, "acceptance/gradcheck")
    archs = [(128, 64, 48), (128, 64, 64, 48)]
    while len(archs) < n_pairs:
        archs.append(tuple(int(h) for h in rng.integers(3, 17, int(rng.integers(1, 4)))))
    worst = 0.0
    checked = skipped = 0
    for hidden in archs[:n_pairs]:
        model = MLPClassifier(hidden_layer_sizes=hidden, random_state=int(rng.integers(2**31)))
        model.initialize(4, range(5))
        batch = int(rng.integers(1, 17))
        X = rng.normal(size=(batch, 4))
        Y = onehot(rng.integers(0, 5, batch), 5)
        res = gradient_check_detail(model, X, Y)
        worst = max(worst, float(res.max_rel_error))
        checked += res.n_checked
        skipped += res.n_skipped
    detail = f"max relative error {worst:.2e} over {n_pairs} pairs (< {tol:g}); {checked} params checked, {skipped} at ReLU kinks skipped"
    return CriterionResult(3, "backprop gradient check", worst < tol and checked > 0, detail)


def replay_forest(doc, X):
    """Majority vote computed straight from a serialized forest document."""
    classes = doc["classes"]
    out = []
    for row in X:
        votes = Counter()
        for t in doc["trees"]:
            node = 0
            while t["feature"][node] != -1:
                f = t["feature"][node]
                node = t["left"][node] if row[f] <= t["threshold"][node] else t["right"][node]
            counts = t["value"][node]
            votes[counts.index(max(counts))] += 1
        top = max(votes.values())
        out.append(classes[min(c for c, v in votes.items() if v == top)])
    return out


def replay_oob(doc, X, y):
    classes = doc["classes"]
    votes = [Counter() for _ in range(len(X))]
    for t in doc["trees"]:
        for i, c in enumerate(t["bootstrap_counts"]):
            if c:
                continue
            node = 0
            while t["feature"][node] != -1:
                f = t["feature"][node]
                node = t["left"][node] if X[i][f] <= t["threshold"][node] else t["right"][node]
            counts = t["value"][node]
            votes[i][counts.index(max(counts))] += 1
    hits = n = 0
    for v, label in zip(votes, y):
        if not v:
            continue
        top = max(v.values())
        hits += classes[min(c for c, k in v.items() if k == top)] == label
        n += 1
    return hits / n if n else float("nan")


def check_forest(forest=None, X_train=None, y_train=None, seed=DEFAULT_SEED):
    rng = stream_rng(seed, "acceptance/forest")
    if forest is None:
        X_train = rng.normal(size=(400, 6))
        y_train = (X_train[:, 0] + 0.5 * X_train[:, 1] > 0).astype(int) + (X_train[:, 2] > 1).astype(int)
        forest = RandomForestClassifier(n_estimators=25, random_state=seed).fit(X_train, y_train)
    X_train = np.asarray(X_train, dtype=float)
    doc = json.loads(serialize_model(forest))
    lo, hi = X_train.min(axis=0), X_train.max(axis=0)
    span = hi - lo
    X = rng.uniform(lo - 0.1 * span, hi + 0.1 * span, size=(1000, X_train.shape[1]))
    pred_match = list(forest.predict(X)) == replay_forest(doc, X.tolist())
    oob_match = replay_oob(doc, X_train.tolist(), list(y_train)) == forest.oob_score_

    # mutation: a noisy forest where one tree is wrongly told that it never saw any row
    Xn = rng.normal(size=(300, 4))
    yn = ((Xn[:, 0] + rng.normal(scale=1.0, size=300)) > 0).astype(int)
    small = RandomForestClassifier(n_estimators=7, random_state=seed).fit(Xn, yn)
    before = small.oob_score_from_bags(Xn, yn)
    small.estimators_[0].bootstrap_counts = np.zeros_like(small.estimators_[0].bootstrap_counts)
    after = small.oob_score_from_bags(Xn, yn)
    mutated = after != before

    ok = pred_match and oob_match and mutated
    detail = (
        f"replay {'matches' if pred_match else 'DIFFERS'} on 1000 inputs, "
        f"OOB replay {'matches' if oob_match else 'DIFFERS'} ({forest.oob_score_:.4f}), "
        f"bag mutation moves OOB {before:.4f} -> {after:.4f}"
    )
    return CriterionResult(4, "forest oracle equivalence", ok, detail)


def _direct_stats(rssi, phase):
    n = len(rssi)
    m = sum(rssi) / n
    v = sum((x - m) ** 2 for x in rssi) / n
    c = sum(math.cos(p) for p in phase)
    s = sum(math.sin(p) for p in phase)
    mp = math.atan2(s, c) % (2 * math.pi)
    vp = 1.0 - math.sqrt(c * c + s * s) / n
    return m, v, mp, vp


def check_features(n_windows=1000, seed=DEFAULT_SEED, tol=1e-9):
    rng = stream_rng(seed, "acceptance/features")
    reads = []
    truth = {}
    for k in range(n_windows):
        rows = []
        for tag in TagRole:
            n = int(rng.integers(2, 12))
            centre = rng.uniform(0, 2 * math.pi)
            spread = rng.choice([0.05, 0.5, 3.0])
            ts = np.sort(rng.uniform(k, k + 1, n))
            ts = np.minimum(ts, np.nextafter(k + 1.0, k))
            rssi = rng.uniform(-84.0, -20.0, n)
            phase = np.mod(centre + spread * rng.normal(size=n), 2 * math.pi)
            phase[phase >= 2 * math.pi] = 0.0
            rows += [RawRead(float(t), tag, float(r), float(p)) for t, r, p in zip(ts, rssi, phase)]
            truth[(k, tag)] = _direct_stats(rssi.tolist(), phase.tolist())
        reads += sorted(rows, key=lambda r: r.timestamp)
    got = window_reads(reads, n_tags=3, session_id="oracle")
    worst = 0.0
    for w in got.windows:
        for tag, f in w.tags.items():
            m, v, mp, vp = truth[(w.window_index, tag)]
            dphase = abs((f.mean_phase - mp + math.pi) % (2 * math.pi) - math.pi)
            worst = max(worst, abs(f.mean_rssi - m), abs(f.var_rssi - v), dphase, abs(f.var_phase - vp))
    ok = len(got.windows) == n_windows and worst <= tol
    return CriterionResult(5, "feature oracle equivalence", ok, f"{len(got.windows)} windows, max deviation {worst:.1e} (<= {tol:g})")


def check_orientation(report):
    a3 = report["orientation"]["3"]["test_accuracy"]
    a2 = report["orientation"]["2"]["test_accuracy"]
    ok = a3 >= 0.99 and a2 >= 0.95 and a3 >= a2
    return CriterionResult(6, "orientation accuracy", ok, f"3-tag {a3:.4f} (>= 0.99), 2-tag {a2:.4f} (>= 0.95)")


def check_material(report):
    rear = report["material"]["rear"]["test_accuracy"]
    side = report["material"]["side"]["test_accuracy"]
    ok = rear >= 0.80 and side >= 0.70 and rear > side
    return CriterionResult(7, "material accuracy", ok, f"rear {rear:.4f} (>= 0.80), side {side:.4f} (>= 0.70)")


def check_pipeline(report):
    p3 = report["pipeline"]["3"]["accuracy"]
    p2 = report["pipeline"]["2"]["accuracy"]
    n = report["pipeline"]["3"]["n"]
    ok = p3 >= 0.75 and abs(p3 - p2) <= 0.03
    return CriterionResult(
        8, "pipeline accuracy", ok, f"3-tag {p3:.4f} (>= 0.75), 2-tag {p2:.4f}, gap {100 * abs(p3 - p2):.2f} pts (<= 3) on {n} windows"
    )


def _rssi_variance(cfg, tag, n, rng):
    vals = []
    t = 0.0
    while len(vals) < n:
        r = sample_read(cfg, tag, t, rng)
        if r is not None:
            vals.append(r.rssi)
        t = (t + 0.2) % cfg.duration
    m = sum(vals) / n
    return m, sum((x - m) ** 2 for x in vals) / n


def simulator_moments(n=2000, seed=DEFAULT_SEED):
    """Mean and variance of RSSI per material at the rear (state 1, Tag2) and
    side (state 0, Tag2, Right face) positions."""
    rng = stream_rng(seed, "acceptance/sim")
    out = {}
    for m in MaterialClass:
        rear = ScenarioConfig(material=m, state=1)
        side = ScenarioConfig(material=m, state=0)
        out[m.value] = {
            "rear": _rssi_variance(rear, TagRole.TAG2, n, rng),
            "side": _rssi_variance(side, TagRole.TAG2, n, rng),
        }
    return out


def check_simulator(n=2000, seed=DEFAULT_SEED):
    mom = simulator_moments(n, seed)
    rear_var = {m: v["rear"][1] for m, v in mom.items()}
    chips = rear_var["Chips"]
    chips_top = all(chips > v for m, v in rear_var.items() if m != "Chips")
    wrap_low = mom["PlasticWrap"]["rear"][0] < mom["Control"]["rear"][0]
    side_high = all(v["side"][1] > v["rear"][1] for v in mom.values())
    ok = chips_top and wrap_low and side_high
    detail = (
        f"Chips rear var {chips:.3f} is {'largest' if chips_top else 'NOT largest'}; "
        f"PlasticWrap rear mean {mom['PlasticWrap']['rear'][0]:.2f} vs Control {mom['Control']['rear'][0]:.2f}; "
        f"side > rear variance for {sum(v['side'][1] > v['rear'][1] for v in mom.values())}/5 materials ({n} draws/cell)"
    )
    return CriterionResult(9, "simulator orderings", ok, detail)


def static_checks(seed=DEFAULT_SEED):
    return [check_selection(), check_param_counts(), check_gradients(seed=seed), check_features(seed=seed), check_simulator(seed=seed)]


def deterministic_files(run_dir):
    """Files that must be byte-identical across two runs with the same seed."""
    run = Path(run_dir)
    return ["report.json"] + sorted(str(p.relative_to(run)) for p in (run / "models").glob("*.json"))


def compare_runs(dir_a, dir_b):
    names = deterministic_files(dir_a)
    _, mismatch, errors = filecmp.cmpfiles(dir_a, dir_b, names, shallow=False)
    return names, mismatch + errors


def check_determinism(dir_a, dir_b):
    names, bad = compare_runs(dir_a, dir_b)
    ok = not bad and len(names) > 1
    return CriterionResult(10, "determinism", ok, f"{len(names) - len(bad)}/{len(names)} report and model files byte-identical" + (f"; differ: {bad}" if bad else ""))


def run_repro(cfg, out_dir, verify_determinism=True, echo=None):
    """Full chain plus every acceptance check; writes ``acceptance.json``.

    With ``verify_determinism`` the chain runs a second time in a scratch
    directory and the report and model files are compared byte for byte.
    """
    from .experiment import run_all
    from .evaluation import emit_report

    echo = echo or (lambda s: None)
    out = Path(out_dir)
    art, pca, boxes = run_all(cfg, out)
    results = static_checks(cfg.seed)
    results.insert(3, check_forest(art.models["orientation3"], *_orientation_train(art.parts, 3), seed=cfg.seed))
    results += [check_orientation(art.report), check_material(art.report), check_pipeline(art.report)]
    results.sort(key=lambda r: r.number)
    art.report["acceptance"] = {str(r.number): r.to_dict() for r in results}
    emit_report(out, art.report, pca, boxes)

    if verify_determinism:
        scratch = Path(tempfile.mkdtemp(prefix="taglabel-repro-"))
        try:
            art2, pca2_, boxes2 = run_all(cfg, scratch)
            art2.report["acceptance"] = art.report["acceptance"]
            emit_report(scratch, art2.report, pca2_, boxes2)
            results.append(check_determinism(out, scratch))
        finally:
            shutil.rmtree(scratch, ignore_errors=True)

    for r in results:
        echo(r.line())
    doc = {"all_passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
    (out / "acceptance.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return results, art


def _orientation_train(parts, n_tags):
    from .features import orientation_dataset

    return orientation_dataset(parts["train"], n_tags)
