"""One-second feature windows and classifier input vectors."""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .domain import TWO_PI, ClassifierKind, Face, MaterialClass, TagRole, active_tags, check_state
from .sim import FACE_TABLE

FEATURE_NAMES = ("mean_rssi", "var_rssi", "mean_phase", "var_phase")


class TagFeatures(NamedTuple):
    mean_rssi: float
    var_rssi: float
    mean_phase: float
    var_phase: float
    n_reads: int
    imputed: bool = False


@dataclass
class FeatureWindow:
    window_index: int
    tags: dict
    session_id: str = ""
    material: Optional[MaterialClass] = None
    state: Optional[int] = None

    @property
    def key(self):
        return f"{self.session_id}:{self.window_index}"

    def tag(self, role):
        role = TagRole(role)
        try:
            return self.tags[role]
        except KeyError:
            raise KeyError(f"window {self.key} has no features for {role.value}") from None

    def to_dict(self):
        return {
            "session_id": self.session_id,
            "window_index": self.window_index,
            "material": None if self.material is None else self.material.value,
            "state": self.state,
            "tags": {t.value: f._asdict() for t, f in sorted(self.tags.items(), key=lambda kv: kv[0].index)},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            window_index=int(d["window_index"]),
            tags={TagRole(k): TagFeatures(**v) for k, v in d["tags"].items()},
            session_id=d.get("session_id", ""),
            material=None if d.get("material") is None else MaterialClass(d["material"]),
            state=None if d.get("state") is None else check_state(d["state"]),
        )


@dataclass
class Windowing:
    windows: list = field(default_factory=list)
    discarded_windows: int = 0
    discarded_reads: int = 0


def imputed_features(rx_floor_dbm):
    return TagFeatures(float(rx_floor_dbm), 0.0, 0.0, 0.0, 0, True)


def circular_mean_var(phases):
    """Circular mean in [0, 2pi) and circular variance 1 - Rbar in [0, 1]."""
    phases = np.asarray(phases, dtype=float)
    c = np.cos(phases).mean()
    s = np.sin(phases).mean()
    mean = math.atan2(s, c) % TWO_PI
    if mean >= TWO_PI:
        mean = 0.0
    var = min(1.0, max(0.0, 1.0 - math.hypot(c, s)))
    return mean, var


def tag_features(rssi, phase):
    rssi = np.asarray(rssi, dtype=float)
    mp, vp = circular_mean_var(phase)
    return TagFeatures(float(rssi.mean()), float(rssi.var()), mp, vp, int(rssi.size))


def window_reads(
    reads,
    n_tags=3,
    window_len=1.0,
    session_id="",
    material=None,
    state=None,
    impute_absent=True,
    rx_floor_dbm=-84.0,
):
    """Bin sorted reads into non-overlapping ``[k, k+1)`` windows.

    A window is kept when every active tag has at least two reads. A tag with
    no reads at all is imputed at the receive floor when ``impute_absent`` is
    set, so that an occluded tag still carries signal; a single read is never
    enough and discards the window.
    """
    if window_len <= 0:
        raise ValueError("window_len must be positive")
    tags = active_tags(n_tags)
    material = None if material is None else MaterialClass(material)
    state = None if state is None else check_state(state)
    out = Windowing()
    if not reads:
        return out
    ts = np.fromiter((r.timestamp for r in reads), float, len(reads))
    if np.any(np.diff(ts) < 0):
        raise ValueError("reads must be sorted by timestamp")
    tag_idx = np.fromiter((r.tag.index for r in reads), int, len(reads))
    rssi = np.fromiter((r.rssi for r in reads), float, len(reads))
    phase = np.fromiter((r.phase for r in reads), float, len(reads))
    widx = np.floor(ts / window_len).astype(np.int64)
    inactive = ~np.isin(tag_idx, [t.index for t in tags])
    out.discarded_reads += int(inactive.sum())

    bounds = np.flatnonzero(np.diff(widx)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [len(reads)]))
    for a, b in zip(starts, ends):
        sl = slice(a, b)
        feats = {}
        keep = True
        for t in tags:
            m = tag_idx[sl] == t.index
            n = int(m.sum())
            if n >= 2:
                feats[t] = tag_features(rssi[sl][m], phase[sl][m])
            elif n == 0 and impute_absent:
                feats[t] = imputed_features(rx_floor_dbm)
            else:
                keep = False
                break
        if keep and all(f.imputed for f in feats.values()):
            keep = False
        if keep:
            out.windows.append(FeatureWindow(int(widx[a]), feats, session_id, material, state))
        else:
            out.discarded_windows += 1
            out.discarded_reads += int((~inactive[sl]).sum())
    return out


def wrap_to_pi(angle):
    """Map an angle to (-pi, pi]."""
    d = math.fmod(angle, TWO_PI)
    if d < 0:
        d += TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


def pdoa(window, tag_a, tag_b):
    """Phase difference of arrival between two tags' mean phases, in (-pi, pi]."""
    return wrap_to_pi(window.tag(tag_a).mean_phase - window.tag(tag_b).mean_phase)


def assemble_orientation(window, n_tags):
    v = []
    for t in active_tags(n_tags):
        f = window.tag(t)
        v.extend((f.mean_rssi, f.mean_phase))
    return np.array(v)


def assemble_material(window, tag):
    f = window.tag(tag)
    return np.array([f.mean_rssi, f.var_rssi, f.mean_phase, f.var_phase])


def _kind_faces(kind):
    kind = ClassifierKind(kind)
    return {Face.REAR} if kind is ClassifierKind.REAR else {Face.LEFT, Face.RIGHT}


def orientation_dataset(windows, n_tags):
    X = np.array([assemble_orientation(w, n_tags) for w in windows]).reshape(len(windows), 2 * n_tags)
    y = np.array([w.state for w in windows], dtype=int)
    return X, y


def material_dataset(windows, kind, n_tags=3):
    """Per-tag material vectors from every active tag sitting in ``kind``'s position.

    Uses the true orientation label to locate the tags.
    """
    faces = _kind_faces(kind)
    rows, labels = [], []
    for w in windows:
        for t in active_tags(n_tags):
            if FACE_TABLE[w.state][t.index] in faces and not w.tag(t).imputed:
                rows.append(assemble_material(w, t))
                labels.append(w.material.index)
    return np.array(rows).reshape(len(rows), 4), np.array(labels, dtype=int)


def write_windows(path, windows):
    with open(path, "w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_dict(), sort_keys=True) + "\n")


def read_windows(path):
    with open(path, encoding="utf-8") as fh:
        return [FeatureWindow.from_dict(json.loads(line)) for line in fh if line.strip()]


class OrientationVectorizer(TransformerMixin, BaseEstimator):
    """Map feature windows to ``[tag1 rssi, tag1 phase, tag2 rssi, ...]`` rows."""

    def __init__(self, n_tags=3):
        self.n_tags = n_tags

    def fit(self, windows, y=None):
        active_tags(self.n_tags)
        return self

    def transform(self, windows):
        return np.array([assemble_orientation(w, self.n_tags) for w in windows]).reshape(-1, 2 * self.n_tags)


class MaterialVectorizer(TransformerMixin, BaseEstimator):
    """Map feature windows to one tag's ``[avg rssi, rssi var, avg phase, phase var]`` rows."""

    def __init__(self, tag=TagRole.TAG1):
        self.tag = tag

    def fit(self, windows, y=None):
        TagRole(self.tag)
        return self

    def transform(self, windows):
        return np.array([assemble_material(w, self.tag) for w in windows]).reshape(-1, 4)
