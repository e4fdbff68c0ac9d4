import math

from hypothesis import given, strategies as st
import numpy as np
import pytest

from taglabel.domain import ClassifierKind, MaterialClass, RawRead, TagRole
from taglabel.features import (
    FeatureWindow,
    MaterialVectorizer,
    OrientationVectorizer,
    TagFeatures,
    assemble_material,
    assemble_orientation,
    circular_mean_var,
    material_dataset,
    orientation_dataset,
    pdoa,
    read_windows,
    tag_features,
    window_reads,
    wrap_to_pi,
    write_windows,
)


def _window(phases=None):
    phases = phases or {TagRole.TAG1: 0.1, TagRole.TAG2: 6.2, TagRole.TAG3: 3.0}
    tags = {t: TagFeatures(-60.0 - t.index, 0.5, p, 0.01, 5) for t, p in phases.items()}
    return FeatureWindow(0, tags, "Control-s0", MaterialClass.CONTROL, 0)


def test_rssi_stats():
    f = tag_features([-60, -62, -61], [1.0, 1.0, 1.0])
    assert f.mean_rssi == pytest.approx(-61.0)
    assert f.var_rssi == pytest.approx(2 / 3)
    assert f.n_reads == 3


def test_circular_wrap():
    mean, var = circular_mean_var([0.1, 2 * math.pi - 0.1])
    assert min(mean, 2 * math.pi - mean) < 1e-12
    assert var == pytest.approx(1 - math.cos(0.1), abs=1e-12)


def test_identical_reads():
    f = tag_features([-50.0] * 4, [2.0] * 4)
    assert f.var_rssi == 0.0 and f.var_phase == pytest.approx(0.0, abs=1e-15)
    assert f.mean_phase == pytest.approx(2.0)


@given(st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=1, max_size=20), st.floats(-10, 10))
def test_circular_rotation_equivariance(phases, shift):
    m0, v0 = circular_mean_var(phases)
    m1, v1 = circular_mean_var([(p + shift) % (2 * math.pi) for p in phases])
    assert 0 <= v0 <= 1 and v1 == pytest.approx(v0, abs=1e-9)
    if v0 < 0.9:
        assert wrap_to_pi(m1 - m0 - shift) == pytest.approx(0.0, abs=1e-6)


def test_pdoa_examples():
    w = _window()
    oracle = math.remainder(0.1 - 6.2, 2 * math.pi)
    assert pdoa(w, TagRole.TAG1, TagRole.TAG2) == pytest.approx(oracle, abs=1e-12)
    assert round(pdoa(w, TagRole.TAG1, TagRole.TAG2), 4) == 0.1832
    assert pdoa(_window({TagRole.TAG1: 1.0, TagRole.TAG2: 1.0}), TagRole.TAG1, TagRole.TAG2) == 0.0


@given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(0, 2 * math.pi, exclude_max=True))
def test_pdoa_antisymmetry(a, b):
    w = _window({TagRole.TAG1: a, TagRole.TAG2: b})
    ab, ba = pdoa(w, TagRole.TAG1, TagRole.TAG2), pdoa(w, TagRole.TAG2, TagRole.TAG1)
    assert -math.pi < ab <= math.pi
    if abs(abs(ab) - math.pi) > 1e-9:
        assert ab == pytest.approx(-ba, abs=1e-12)


def test_vectors():
    w = _window()
    v3 = assemble_orientation(w, 3)
    assert v3.tolist() == [-60.0, 0.1, -61.0, 6.2, -62.0, 3.0]
    assert assemble_orientation(w, 2).tolist() == v3[:4].tolist()
    assert assemble_material(w, TagRole.TAG2).tolist() == [-61.0, 0.5, 6.2, 0.01]
    two = _window({TagRole.TAG1: 0.0, TagRole.TAG2: 0.0})
    with pytest.raises(KeyError):
        assemble_orientation(two, 3)


def _reads(spec):
    """spec: list of (t, tag index)."""
    return [RawRead(t, TagRole(f"Tag{i + 1}"), -60.0 - t, 1.0) for t, i in spec]


def test_window_kept_and_counts():
    reads = _reads([(0.1, 0), (0.2, 1), (0.3, 2), (0.4, 0), (0.5, 1), (0.6, 2)])
    res = window_reads(reads, 3)
    assert len(res.windows) == 1 and res.discarded_windows == 0
    assert all(f.n_reads == 2 for f in res.windows[0].tags.values())


def test_single_read_discards_window():
    reads = _reads([(0.1, 0), (0.2, 1), (0.3, 2), (0.4, 0), (0.5, 1)])
    res = window_reads(reads, 3)
    assert res.windows == [] and res.discarded_windows == 1 and res.discarded_reads == 5


def test_absent_tag_imputed_in_both_modes():
    reads = _reads([(0.1, 1), (0.2, 2), (0.5, 1), (0.6, 2)])
    for n_tags in (2, 3):
        res = window_reads(reads, n_tags, rx_floor_dbm=-84.0)
        assert len(res.windows) == 1
        f = res.windows[0].tag(TagRole.TAG1)
        assert f.imputed and f.mean_rssi == -84.0 and f.n_reads == 0
    res = window_reads(reads, 3, impute_absent=False)
    assert res.windows == []


def test_two_tag_mode_ignores_tag3():
    reads = _reads([(0.1, 0), (0.2, 1), (0.3, 2), (0.4, 0), (0.5, 1)])
    res = window_reads(reads, 2)
    assert len(res.windows) == 1 and set(res.windows[0].tags) == {TagRole.TAG1, TagRole.TAG2}
    assert res.discarded_reads == 1


def test_window_boundaries_half_open():
    reads = _reads([(0.0, 0), (0.5, 0), (0.99, 1), (0.999, 1), (1.0, 0), (1.5, 0), (1.6, 1), (1.7, 1)])
    res = window_reads(reads, 2)
    assert [w.window_index for w in res.windows] == [0, 1]
    assert res.windows[1].tag(TagRole.TAG1).n_reads == 2


def test_unsorted_rejected():
    with pytest.raises(ValueError):
        window_reads(_reads([(0.5, 0), (0.1, 0)]), 2)


def test_window_matches_direct_formulas():
    rng = np.random.default_rng(0)
    rssi = rng.uniform(-80, -40, 7).tolist()
    phase = rng.uniform(0, 2 * math.pi, 7).tolist()
    reads = [RawRead(0.1 * i, TagRole.TAG1, r, p) for i, (r, p) in enumerate(zip(rssi, phase))]
    reads += [RawRead(0.75, TagRole.TAG2, -50.0, 1.0), RawRead(0.8, TagRole.TAG2, -52.0, 1.2)]
    reads.sort(key=lambda r: r.timestamp)
    f = window_reads(reads, 2).windows[0].tag(TagRole.TAG1)
    m = sum(rssi) / 7
    assert f.mean_rssi == pytest.approx(m, abs=1e-12)
    assert f.var_rssi == pytest.approx(sum((x - m) ** 2 for x in rssi) / 7, abs=1e-12)
    c, s = sum(map(math.cos, phase)), sum(map(math.sin, phase))
    assert f.var_phase == pytest.approx(1 - math.hypot(c, s) / 7, abs=1e-12)
    assert wrap_to_pi(f.mean_phase - math.atan2(s, c)) == pytest.approx(0.0, abs=1e-12)


def test_corpus_windows(short_windows):
    assert len(short_windows) > 900
    for w in short_windows[:50]:
        assert set(w.tags) == set(TagRole)
        assert all(0 <= f.mean_phase < 2 * math.pi for f in w.tags.values())


def test_datasets(short_windows):
    X, y = orientation_dataset(short_windows, 3)
    assert X.shape == (len(short_windows), 6) and set(y) == set(range(6))
    X2, _ = orientation_dataset(short_windows, 2)
    np.testing.assert_array_equal(X2, X[:, :4])
    Xr, yr = material_dataset(short_windows, ClassifierKind.REAR)
    Xs, ys = material_dataset(short_windows, ClassifierKind.SIDE)
    assert Xr.shape[1] == Xs.shape[1] == 4
    # rear tags sit in states 1, 2, 5; side tags in every state
    n_state = {s: sum(w.state == s for w in short_windows) for s in range(6)}
    assert len(yr) == n_state[1] + n_state[2] + n_state[5]
    assert len(ys) == sum(n_state.values())
    assert set(yr) == set(ys) == set(range(5))


def test_jsonl_round_trip(tmp_path, short_windows):
    write_windows(tmp_path / "w.jsonl", short_windows[:20])
    assert read_windows(tmp_path / "w.jsonl") == short_windows[:20]


def test_vectorizers(short_windows):
    ws = short_windows[:10]
    np.testing.assert_array_equal(OrientationVectorizer(2).fit_transform(ws), orientation_dataset(ws, 2)[0])
    np.testing.assert_array_equal(
        MaterialVectorizer(TagRole.TAG3).fit_transform(ws), [assemble_material(w, TagRole.TAG3) for w in ws]
    )
    assert OrientationVectorizer(2).get_params() == {"n_tags": 2}
