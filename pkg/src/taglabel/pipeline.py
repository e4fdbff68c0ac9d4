"""Orientation first, then the material classifier for the most occluded tag."""

from dataclasses import dataclass
import json
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .domain import ClassifierKind, MaterialClass, TagRole, active_tags, check_state
from .features import assemble_material, assemble_orientation
from .learn.serialize import load_model, save_model

_SELECTION = {
    0: (TagRole.TAG2, ClassifierKind.SIDE),
    1: (TagRole.TAG2, ClassifierKind.REAR),
    2: (TagRole.TAG1, ClassifierKind.REAR),
    3: (TagRole.TAG1, ClassifierKind.SIDE),
    4: (TagRole.TAG2, ClassifierKind.SIDE),
}
_STATE5 = {3: (TagRole.TAG3, ClassifierKind.REAR), 2: (TagRole.TAG2, ClassifierKind.SIDE)}


def bundle_name(n_tags):
    return f"pipeline{n_tags}.json"


class SelectionOutcome(NamedTuple):
    tag: TagRole
    classifier: ClassifierKind


def select_tag(state, n_tags):
    """Which tag to read material from, and with which classifier, given the orientation."""
    state = check_state(state)
    active_tags(n_tags)
    if state == 5:
        return SelectionOutcome(*_STATE5[n_tags])
    return SelectionOutcome(*_SELECTION[state])


@dataclass(frozen=True)
class PipelineModels:
    orientation: object
    side: object
    rear: object
    n_tags: int = 3

    def __post_init__(self):
        active_tags(self.n_tags)
        width = getattr(self.orientation, "n_features_in_", None)
        if width is not None and width != 2 * self.n_tags:
            raise ValueError(
                f"orientation model expects {width} features but n_tags={self.n_tags} gives {2 * self.n_tags}"
            )

    def material_model(self, kind):
        return self.rear if ClassifierKind(kind) is ClassifierKind.REAR else self.side


@dataclass(frozen=True)
class PipelineResult:
    state: int
    selection: SelectionOutcome
    material: MaterialClass
    state_proba: np.ndarray
    material_proba: np.ndarray
    key: str = ""

    def to_dict(self):
        return {
            "key": self.key,
            "state": self.state,
            "tag": self.selection.tag.value,
            "classifier": self.selection.classifier.value,
            "material": self.material.value,
            "state_proba": [float(p) for p in self.state_proba],
            "material_proba": [float(p) for p in self.material_proba],
        }


def _full_proba(model, proba, n):
    out = np.zeros(n)
    out[np.asarray(model.classes_, dtype=int)] = proba
    return out


def infer(window, models):
    ori = models.orientation
    x = assemble_orientation(window, models.n_tags)[None, :]
    sp = _full_proba(ori, ori.predict_proba(x)[0], 6)
    state = int(np.argmax(sp))
    sel = select_tag(state, models.n_tags)
    mat_model = models.material_model(sel.classifier)
    # a missing selected tag raises KeyError from window.tag
    m = assemble_material(window, sel.tag)[None, :]
    mp = _full_proba(mat_model, mat_model.predict_proba(m)[0], len(MaterialClass))
    return PipelineResult(state, sel, MaterialClass.from_index(int(np.argmax(mp))), sp, mp, window.key)


@dataclass
class BatchSummary:
    n: int
    labelled: int
    accuracy: float
    orientation_accuracy: float

    def to_dict(self):
        return dict(vars(self))


def infer_batch(windows, models):
    """Results for every window plus accuracy over the windows that carry labels.

    Pipeline accuracy counts a window correct when the predicted material
    matches, regardless of whether the orientation stage was right.
    """
    results = [infer(w, models) for w in windows]
    lab = [(r, w) for r, w in zip(results, windows) if w.material is not None]
    if lab:
        acc = float(np.mean([r.material is w.material for r, w in lab]))
        with_state = [(r, w) for r, w in lab if w.state is not None]
        ori = float(np.mean([r.state == w.state for r, w in with_state])) if with_state else float("nan")
    else:
        acc = ori = float("nan")
    return results, BatchSummary(len(results), len(lab), acc, ori)


def save_bundle(out_dir, models, names=None):
    """Write the three models plus a manifest naming them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = names or {
        "orientation": f"orientation{models.n_tags}.json",
        "side": "material_side.json",
        "rear": "material_rear.json",
    }
    for role in ("orientation", "side", "rear"):
        save_model(out / names[role], getattr(models, role))
    manifest = {"n_tags": models.n_tags, "models": {k: names[k] for k in ("orientation", "side", "rear")}}
    path = out / bundle_name(models.n_tags)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_bundle(path):
    path = Path(path)
    manifest = json.loads(path.read_text())
    try:
        files = manifest["models"]
        loaded = {k: load_model(path.parent / files[k]) for k in ("orientation", "side", "rear")}
        return PipelineModels(n_tags=int(manifest["n_tags"]), **loaded)
    except KeyError as e:
        raise ValueError(f"bundle manifest {path} is missing {e}") from None


def write_results(path, results):
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
