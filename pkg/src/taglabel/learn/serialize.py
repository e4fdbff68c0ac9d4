"""Versioned JSON model files."""

import json
from pathlib import Path

import numpy as np

from .forest import RandomForestClassifier, Tree
from .mlp import MLPClassifier

SCHEMA_VERSION = 1
FOREST_KIND = "random_forest"
MLP_KIND = "mlp"


class ModelFormatError(ValueError):
    pass


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def model_to_dict(model):
    if not isinstance(model, (RandomForestClassifier, MLPClassifier)):
        raise TypeError(f"cannot serialize {type(model).__name__}")
    params = {k: _plain(v) for k, v in model.get_params().items()}
    classes = [_plain(c) for c in model.classes_]
    if isinstance(model, RandomForestClassifier):
        return {
            "model_kind": FOREST_KIND,
            "schema_version": SCHEMA_VERSION,
            "params": params,
            "classes": classes,
            "n_features": int(model.n_features_in_),
            "oob_score": getattr(model, "oob_score_", None),
            "trees": [t.to_dict() for t in model.estimators_],
        }
    if isinstance(model, MLPClassifier):
        return {
            "model_kind": MLP_KIND,
            "schema_version": SCHEMA_VERSION,
            "params": params,
            "classes": classes,
            "layer_sizes": model.layer_sizes_,
            "activation": {"hidden": "relu", "output": "softmax"},
            "weights": [W.tolist() for W in model.coefs_],
            "biases": [b.tolist() for b in model.intercepts_],
            "input_mean": model.input_mean_.tolist(),
            "input_scale": model.input_scale_.tolist(),
            "stopping_epoch": getattr(model, "stopping_epoch_", None),
            "best_epoch": getattr(model, "best_epoch_", None),
            "history": getattr(model, "history_", None),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d):
    if not isinstance(d, dict):
        raise ModelFormatError("model document must be a JSON object")
    try:
        return _from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model document: {e!r}") from None


def _from_dict(d):
    kind = d.get("model_kind")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelFormatError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    params = dict(d["params"])
    if kind == FOREST_KIND:
        model = RandomForestClassifier(**params)
        model.estimators_ = [Tree.from_dict(t) for t in d["trees"]]
        model.n_features_in_ = d["n_features"]
        if d.get("oob_score") is not None:
            model.oob_score_ = d["oob_score"]
    elif kind == MLP_KIND:
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        model = MLPClassifier(**params)
        model.coefs_ = [np.array(W, dtype=float).reshape(a, b) for W, a, b in
                        zip(d["weights"], d["layer_sizes"][:-1], d["layer_sizes"][1:])]
        model.intercepts_ = [np.array(b, dtype=float) for b in d["biases"]]
        model.n_features_in_ = d["layer_sizes"][0]
        model.input_mean_ = np.array(d["input_mean"], dtype=float)
        model.input_scale_ = np.array(d["input_scale"], dtype=float)
        if d.get("stopping_epoch") is not None:
            model.stopping_epoch_ = d["stopping_epoch"]
            model.best_epoch_ = d["best_epoch"]
        if d.get("history") is not None:
            model.history_ = d["history"]
    else:
        raise ModelFormatError(f"unknown model_kind {kind!r}")
    model.classes_ = np.array(d["classes"])
    return model


def serialize_model(model):
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def deserialize_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from None
    return model_from_dict(doc)


def save_model(path, model):
    Path(path).write_text(serialize_model(model) + "\n")


def load_model(path):
    return deserialize_model(Path(path).read_text())
