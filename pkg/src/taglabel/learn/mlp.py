"""Feedforward ReLU network with softmax output, trained by mini-batch Adam."""

from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._seeding import DEFAULT_SEED


def param_count(layer_sizes):
    """Weights plus biases of a dense stack, e.g. ``[4, 128, 64, 48, 5]``."""
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_params(layer_sizes, rng):
    """He-uniform hidden layers, Glorot-uniform output layer, zero biases."""
    coefs, intercepts = [], []
    last = len(layer_sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        if i < last:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        coefs.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        intercepts.append(np.zeros(fan_out))
    return coefs, intercepts


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward_pass(coefs, intercepts, X):
    """Return the list of layer activations; the last entry is the logits."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(zip(coefs, intercepts)):
        z = h @ W + b
        h = z if i == len(coefs) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def cross_entropy(coefs, intercepts, X, Y):
    logits = forward_pass(coefs, intercepts, X)[-1]
    return float(-np.mean(np.sum(Y * log_softmax(logits), axis=1)))


def backward(coefs, intercepts, X, Y):
    """Mean categorical cross-entropy and its gradients w.r.t. every parameter."""
    acts = forward_pass(coefs, intercepts, X)
    logp = log_softmax(acts[-1])
    loss = float(-np.mean(np.sum(Y * logp, axis=1)))
    delta = (np.exp(logp) - Y) / len(X)
    g_coefs = [None] * len(coefs)
    g_intercepts = [None] * len(coefs)
    for i in range(len(coefs) - 1, -1, -1):
        g_coefs[i] = acts[i].T @ delta
        g_intercepts[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ coefs[i].T) * (acts[i] > 0)
    return loss, g_coefs, g_intercepts


def onehot(y_index, n_classes):
    return np.eye(n_classes)[np.asarray(y_index, dtype=int)]


class _Adam:
    def __init__(self, params, lr, beta_1, beta_2, epsilon):
        self.lr, self.b1, self.b2, self.eps = lr, beta_1, beta_2, epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """ReLU MLP with softmax output and categorical cross-entropy loss.

    Early stopping watches the validation loss: training halts after
    ``patience`` epochs without improvement and the best-validation weights
    are restored. Validation data comes from ``fit(..., validation_data=)`` or,
    failing that, a seeded ``validation_fraction`` hold-out of the training set.

    With ``standardize`` the per-feature training mean and standard deviation
    are stored on the model and applied to every input, like a frozen
    normalisation layer; they are not counted in ``n_params_``.
    """

    def __init__(
        self,
        hidden_layer_sizes=(128, 64, 48),
        batch_size=16,
        learning_rate=0.001,
        max_epochs=40,
        patience=5,
        beta_1=0.9,
        beta_2=0.999,
        epsilon=1e-8,
        validation_fraction=0.15,
        standardize=True,
        random_state=DEFAULT_SEED,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.validation_fraction = validation_fraction
        self.standardize = standardize
        self.random_state = random_state

    @property
    def layer_sizes_(self):
        check_is_fitted(self, "coefs_")
        return [self.coefs_[0].shape[0]] + [W.shape[1] for W in self.coefs_]

    @property
    def n_params_(self):
        return param_count(self.layer_sizes_)

    def initialize(self, n_features, classes):
        """Set up fresh weights for ``classes`` without training."""
        self.classes_ = np.asarray(classes)
        self.n_features_in_ = n_features
        sizes = [n_features, *self.hidden_layer_sizes, len(self.classes_)]
        self.coefs_, self.intercepts_ = init_params(sizes, np.random.default_rng(self.random_state))
        self.input_mean_ = np.zeros(n_features)
        self.input_scale_ = np.ones(n_features)
        return self

    def _scale(self, X):
        return (X - self.input_mean_) / self.input_scale_

    def fit(self, X, y, validation_data=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        rng = np.random.default_rng(self.random_state)
        if validation_data is None:
            perm = rng.permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            X_val, y_val = X[perm[:n_val]], y[perm[:n_val]]
            X, y = X[perm[n_val:]], y[perm[n_val:]]
        else:
            X_val, y_val = check_X_y(*validation_data, dtype=np.float64)

        if self.standardize:
            self.input_mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.input_scale_ = np.where(scale > 0, scale, 1.0)
        else:
            self.input_mean_ = np.zeros(X.shape[1])
            self.input_scale_ = np.ones(X.shape[1])
        X, X_val = self._scale(X), self._scale(X_val)

        classes = np.unique(np.concatenate([y, y_val]))
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        k = len(classes)
        Y = onehot(np.searchsorted(classes, y), k)
        Y_val = onehot(np.searchsorted(classes, y_val), k)
        sizes = [X.shape[1], *self.hidden_layer_sizes, k]
        coefs, intercepts = init_params(sizes, rng)
        params = coefs + intercepts
        opt = _Adam(params, self.learning_rate, self.beta_1, self.beta_2, self.epsilon)

        history = {"train_loss": [], "val_loss": [], "train_acc": [], "val_acc": []}
        best_loss, best_epoch, best = np.inf, 0, None
        wait = 0
        n = len(X)
        for epoch in range(1, self.max_epochs + 1):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                b = perm[start:start + self.batch_size]
                loss, gw, gb = backward(coefs, intercepts, X[b], Y[b])
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, batch starting {start}: {loss}"
                    )
                opt.step(params, gw + gb)
            tr_loss = cross_entropy(coefs, intercepts, X, Y)
            va_loss = cross_entropy(coefs, intercepts, X_val, Y_val)
            if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
                raise FloatingPointError(f"non-finite loss after epoch {epoch}")
            history["train_loss"].append(tr_loss)
            history["val_loss"].append(va_loss)
            history["train_acc"].append(_accuracy(coefs, intercepts, X, Y))
            history["val_acc"].append(_accuracy(coefs, intercepts, X_val, Y_val))
            if va_loss < best_loss:
                best_loss, best_epoch, wait = va_loss, epoch, 0
                best = ([W.copy() for W in coefs], [b.copy() for b in intercepts])
            else:
                wait += 1
                if wait >= self.patience:
                    break

        self.coefs_, self.intercepts_ = best
        self.history_ = history
        self.stopping_epoch_ = len(history["val_loss"])
        self.best_epoch_ = best_epoch
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coefs_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.exp(log_softmax(forward_pass(self.coefs_, self.intercepts_, self._scale(X))[-1]))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def loss(self, X, y):
        """Mean cross-entropy on labelled data."""
        check_is_fitted(self, "coefs_")
        Y = onehot(np.searchsorted(self.classes_, y), len(self.classes_))
        return cross_entropy(self.coefs_, self.intercepts_, self._scale(np.asarray(X, dtype=float)), Y)


def _accuracy(coefs, intercepts, X, Y):
    logits = forward_pass(coefs, intercepts, X)[-1]
    return float(np.mean(np.argmax(logits, axis=1) == np.argmax(Y, axis=1)))


class GradCheck(NamedTuple):
    max_rel_error: float
    n_checked: int
    n_skipped: int


def _loss_and_mask(coefs, intercepts, X, Y):
    h = X
    masks = []
    for W, b in zip(coefs[:-1], intercepts[:-1]):
        z = h @ W + b
        masks.append(z > 0)
        h = np.maximum(z, 0.0)
    logits = h @ coefs[-1] + intercepts[-1]
    loss = float(-np.mean(np.sum(Y * log_softmax(logits), axis=1)))
    return loss, np.concatenate([m.ravel() for m in masks]) if masks else np.zeros(0, bool)


def gradient_check_detail(model, X, Y, h=1e-5, grad_fn=backward, floor=1e-6, skip_kinks=True):
    """Compare ``grad_fn`` gradients with central differences, parameter by parameter.

    Relative error is ``|a - n| / max(|a| + |n|, floor)``; the floor keeps
    near-zero gradients from amplifying round-off. With ``skip_kinks`` a
    parameter whose +h or -h nudge flips any ReLU on/off is left out: the
    difference quotient then straddles a kink and says nothing about the
    analytic gradient.
    """
    coefs = [W.copy() for W in model.coefs_]
    intercepts = [b.copy() for b in model.intercepts_]
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _, gw, gb = grad_fn(coefs, intercepts, X, Y)
    _, base_mask = _loss_and_mask(coefs, intercepts, X, Y)
    worst = 0.0
    checked = skipped = 0
    for params, grads in ((coefs, gw), (intercepts, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), np.asarray(g).reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp, mp = _loss_and_mask(coefs, intercepts, X, Y)
                flat[j] = orig - h
                lm, mm = _loss_and_mask(coefs, intercepts, X, Y)
                flat[j] = orig
                if skip_kinks and not (np.array_equal(mp, base_mask) and np.array_equal(mm, base_mask)):
                    skipped += 1
                    continue
                num = (lp - lm) / (2 * h)
                err = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), floor)
                worst = max(worst, err)
                checked += 1
    return GradCheck(worst, checked, skipped)


def gradient_check(model, X, Y, h=1e-5, grad_fn=backward, floor=1e-6, skip_kinks=True):
    """Max relative error of ``grad_fn`` against central differences; see
    :func:`gradient_check_detail`."""
    return gradient_check_detail(model, X, Y, h, grad_fn, floor, skip_kinks).max_rel_error
