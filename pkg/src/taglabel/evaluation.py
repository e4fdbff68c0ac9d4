"""Splits, metrics and the summary statistics behind the evaluation figures."""

from dataclasses import asdict, dataclass
import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._seeding import DEFAULT_SEED

PARTS = ("pipeline_test", "train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split settings.

    ``holdout_size``, when set, fixes the pipeline test set to that many rows
    (shared across strata by largest remainder) and overrides
    ``holdout_fraction``.
    """

    holdout_fraction: float = 1.0 / 9.0
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = DEFAULT_SEED
    holdout_size: Optional[int] = None

    def __post_init__(self):
        if self.holdout_size is not None and self.holdout_size < 0:
            raise ValueError("holdout_size must be >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"train/val/test fractions must be >= 0 and sum to 1, got {fr}")


def split_indices(strata, spec=SplitSpec()):
    """Stratified, seeded assignment of row indices to the four evaluation parts."""
    strata = list(strata)
    rng = np.random.default_rng(spec.seed)
    groups = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)
    keys = sorted(groups, key=repr)
    sizes = np.array([len(groups[k]) for k in keys])
    if spec.holdout_size is None:
        holds = np.rint(spec.holdout_fraction * sizes).astype(int)
    else:
        holds = _allocate(spec.holdout_size, sizes)
    parts = {p: [] for p in PARTS}
    for key, n_hold in zip(keys, holds):
        idx = np.array(groups[key])[rng.permutation(len(groups[key]))]
        rest = idx[n_hold:]
        n_train = int(round(spec.train_fraction * len(rest)))
        n_val = int(round(spec.val_fraction * len(rest)))
        parts["pipeline_test"].extend(idx[:n_hold])
        parts["train"].extend(rest[:n_train])
        parts["val"].extend(rest[n_train:n_train + n_val])
        parts["test"].extend(rest[n_train + n_val:])
    return {p: np.sort(np.array(v, dtype=int)) for p, v in parts.items()}


def _allocate(total, sizes):
    """Proportional integer shares of ``total`` that sum exactly to it."""
    n = int(sizes.sum())
    if total > n:
        raise ValueError(f"holdout_size {total} exceeds the {n} available rows")
    quota = total * sizes / n if n else np.zeros(len(sizes))
    share = np.floor(quota).astype(int)
    # ties in the remainder go to the earlier stratum
    order = np.argsort(-(quota - share), kind="stable")
    share[order[: total - share.sum()]] += 1
    return share


def split(windows, spec=SplitSpec()):
    """Split labelled feature windows, stratified by (material, state)."""
    idx = split_indices([(w.material.value, w.state) for w in windows], spec)
    return {p: [windows[i] for i in ix] for p, ix in idx.items()}


def accuracy(preds, labels):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if len(preds) == 0:
        return float("nan")
    return float(np.mean(preds == labels))


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return self.counts.sum(axis=1)

    @property
    def accuracy(self):
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def per_class_recall(self):
        s = self.support
        return np.divide(np.diag(self.counts), s, out=np.zeros(len(s)), where=s > 0)

    def tolist(self):
        return self.counts.astype(int).tolist()


def confusion(preds, labels, k):
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (labels, preds), 1)
    return ConfusionMatrix(m)


class StandardizedPCA(TransformerMixin, BaseEstimator):
    """PCA by covariance eigendecomposition, optionally on z-scored features.

    Component signs are fixed so the largest-magnitude loading of each axis is
    positive.
    """

    def __init__(self, n_components=2, standardize=True):
        self.n_components = n_components
        self.standardize = standardize

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        k = self.n_components
        if not 1 <= k <= X.shape[1]:
            raise ValueError(f"n_components must be in [1, {X.shape[1]}]")
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0) if self.standardize else np.ones(X.shape[1])
        self.scale_ = np.where(scale > 0, scale, 1.0)
        Z = (X - self.mean_) / self.scale_
        cov = Z.T @ Z / len(Z)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals = np.clip(evals[order], 0.0, None)
        evecs = evecs[:, order]
        pivots = np.argmax(np.abs(evecs), axis=0)
        evecs = evecs * np.sign(evecs[pivots, np.arange(evecs.shape[1])])
        total = evals.sum()
        self.components_ = evecs[:, :k].T
        self.explained_variance_ = evals[:k]
        self.explained_variance_ratio_ = evals[:k] / total if total > 0 else np.zeros(k)
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return ((X - self.mean_) / self.scale_) @ self.components_.T

    def inverse_transform(self, P):
        return np.asarray(P) @ self.components_ * self.scale_ + self.mean_


@dataclass
class PcaProjection:
    axes: np.ndarray
    explained: np.ndarray
    points: np.ndarray
    labels: object = None


def pca2(X, labels=None, standardize=True):
    p = StandardizedPCA(2, standardize=standardize).fit(X)
    return PcaProjection(p.components_, p.explained_variance_ratio_, p.transform(X), labels)


@dataclass
class BoxStats:
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    n_outliers: int


def box_summary(values):
    """Box-plot numbers; quartiles by linear interpolation, whiskers at 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cannot summarise an empty group")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    return BoxStats(
        n=int(v.size),
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        n_outliers=int(v.size - inside.size),
    )


def box_stats(groups):
    """``{group: values}`` to ``{group: BoxStats}``, keys in sorted order."""
    return {g: box_summary(groups[g]) for g in sorted(groups)}


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, ConfusionMatrix):
        return o.tolist()
    return o


def write_pca_csv(path, projection):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "state"])
        labels = projection.labels if projection.labels is not None else [""] * len(projection.points)
        for (a, b), s in zip(projection.points, labels):
            w.writerow([repr(float(a)), repr(float(b)), s])


def write_box_csv(path, stats):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "stat", "value"])
        for g, bs in stats.items():
            for k, v in asdict(bs).items():
                w.writerow([g, k, repr(v) if isinstance(v, float) else v])


def emit_report(out_dir, report, pca=None, boxes=None):
    """Write ``report.json`` plus ``pca_points*.csv`` and ``box_stats.csv``.

    ``pca`` maps a suffix ("" for the main file) to a :class:`PcaProjection`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    for suffix, proj in (pca or {}).items():
        path = out / f"pca_points{suffix}.csv"
        write_pca_csv(path, proj)
        written.append(path)
    if boxes is not None:
        write_box_csv(out / "box_stats.csv", boxes)
        written.append(out / "box_stats.csv")
    return written
