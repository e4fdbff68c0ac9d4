"""Classifiers for orientation (random forest) and material (MLP) sensing."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .._seeding import DEFAULT_SEED
from .forest import RandomForestClassifier, Tree, majority_vote, oob_score
from .mlp import MLPClassifier, backward, forward_pass, gradient_check, param_count
from .serialize import deserialize_model, load_model, save_model, serialize_model

REAR_HIDDEN = (128, 64, 48)
SIDE_HIDDEN = (128, 64, 64, 48)


@dataclass
class ForestHyperparams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 4
    min_samples_leaf: int = 2
    features_per_split: object = "sqrt"
    bootstrap: bool = True
    seed: int = DEFAULT_SEED

    @classmethod
    def for_tags(cls, n_tags, seed=DEFAULT_SEED):
        return cls(n_trees=100 if n_tags == 3 else 200, seed=seed)

    def estimator(self):
        return RandomForestClassifier(
            n_estimators=self.n_trees,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            min_samples_leaf=self.min_samples_leaf,
            max_features=self.features_per_split,
            bootstrap=self.bootstrap,
            random_state=self.seed,
        )


@dataclass
class MlpHyperparams:
    hidden: tuple = REAR_HIDDEN
    batch_size: int = 16
    learning_rate: float = 0.001
    max_epochs: int = 40
    patience: int = 5
    seed: int = DEFAULT_SEED

    @classmethod
    def rear(cls, seed=DEFAULT_SEED):
        return cls(hidden=REAR_HIDDEN, max_epochs=40, seed=seed)

    @classmethod
    def side(cls, seed=DEFAULT_SEED):
        return cls(hidden=SIDE_HIDDEN, max_epochs=30, seed=seed)

    def estimator(self):
        return MLPClassifier(
            hidden_layer_sizes=tuple(self.hidden),
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            random_state=self.seed,
        )


@dataclass
class TrainReport:
    train_accuracy: float
    val_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None
    oob_score: Optional[float] = None
    stopping_epoch: Optional[int] = None
    n_params: Optional[int] = None
    history: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _acc(model, X, y):
    if X is None or len(X) == 0:
        return None
    return float(np.mean(model.predict(X) == np.asarray(y)))


def train_forest(X, y, hp=None, val=None, test=None):
    """Fit a forest; ``val``/``test`` are optional ``(X, y)`` pairs scored in the report."""
    hp = hp or ForestHyperparams()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D array")
    model = hp.estimator().fit(X, y)
    report = TrainReport(
        train_accuracy=_acc(model, X, y),
        val_accuracy=_acc(model, *val) if val else None,
        test_accuracy=_acc(model, *test) if test else None,
        oob_score=getattr(model, "oob_score_", None),
    )
    return model, report


def train_mlp(X, y_onehot, hp=None, val=None, test=None):
    """Fit an MLP from one-hot targets; ``val`` (one-hot too) drives early stopping."""
    hp = hp or MlpHyperparams()
    y = np.argmax(np.asarray(y_onehot), axis=1)
    val_data = (val[0], np.argmax(np.asarray(val[1]), axis=1)) if val else None
    model = hp.estimator().fit(X, y, validation_data=val_data)
    report = TrainReport(
        train_accuracy=_acc(model, np.asarray(X, float), y),
        val_accuracy=_acc(model, val_data[0], val_data[1]) if val_data else None,
        test_accuracy=_acc(model, test[0], np.argmax(np.asarray(test[1]), axis=1)) if test else None,
        stopping_epoch=model.stopping_epoch_,
        n_params=model.n_params_,
        history=model.history_,
    )
    return model, report


def predict_forest(model, x):
    """Class for a single feature row."""
    return model.predict(np.atleast_2d(x))[0]


def predict_proba_forest(model, x):
    return model.predict_proba(np.atleast_2d(x))[0]


def forward(model, x):
    """Class distribution for one row, or one per row of a 2-D batch."""
    x = np.asarray(x, dtype=float)
    p = model.predict_proba(np.atleast_2d(x))
    return p[0] if x.ndim == 1 else p


__all__ = [
    "ForestHyperparams",
    "MLPClassifier",
    "MlpHyperparams",
    "RandomForestClassifier",
    "TrainReport",
    "Tree",
    "backward",
    "deserialize_model",
    "forward",
    "forward_pass",
    "gradient_check",
    "load_model",
    "majority_vote",
    "oob_score",
    "param_count",
    "predict_forest",
    "predict_proba_forest",
    "save_model",
    "serialize_model",
    "train_forest",
    "train_mlp",
]
