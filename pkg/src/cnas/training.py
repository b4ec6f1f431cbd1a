"""Cross-entropy training with Adam and early stopping, plus evaluation."""
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, EmptyDataError, LabelError


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 5
    epoch_limit_l: int = 3  # epoch cap for candidate architectures
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epoch_limit_l < 1:
            raise ValueError("epoch_limit_l must be >= 1")


class Adam:
    """Adam over a network's parameter list (beta1=0.9, beta2=0.999)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                p.dtype, copy=False)


def one_hot(labels, classes, dtype=np.float32):
    oh = np.zeros((len(labels), classes), dtype=dtype)
    oh[np.arange(len(labels)), labels] = 1.0
    return oh


def cross_entropy(probs, labels):
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-12))))


def train(net, train_split, val_split, cfg):
    """Train with Adam and early stopping on validation accuracy.

    Returns (best_network, best_val_accuracy); the returned network is the
    snapshot with the best validation accuracy seen, which may be the
    untouched input when max_epochs == 0 or training never improves.
    """
    x_train, y_train = train_split
    x_val, y_val = val_split
    if len(x_train) == 0 or len(x_val) == 0:
        raise EmptyDataError("train and validation splits must be non-empty")
    _check_labels(y_train, net.class_count)
    _check_labels(y_val, net.class_count)

    rng = np.random.default_rng(cfg.rng_seed)
    best_acc, _ = evaluate(net, val_split)
    best_net = net.clone()
    opt = Adam(net.params(), cfg.learning_rate)
    stale = 0

    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            probs = net.forward(xb, training=True, rng=rng)
            loss = cross_entropy(probs, yb)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss {loss}",
                    best_net=best_net, best_val_accuracy=best_acc)
            dlogits = (probs - one_hot(yb, net.class_count,
                                       probs.dtype)) / len(yb)
            net.backward(dlogits)
            opt.step(net.grads())
        acc, _ = evaluate(net, val_split)
        if acc > best_acc:
            best_acc = acc
            best_net = net.clone()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_net, best_acc


def evaluate(net, split, batch_size=256):
    """Overall accuracy plus a per-class accuracy map.

    Ties in the predicted distribution resolve to the lowest class index.
    """
    x, y = split
    if len(x) == 0:
        raise EmptyDataError("cannot evaluate an empty split")
    _check_labels(y, net.class_count)
    preds = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), batch_size):
        probs = net.forward(x[start:start + batch_size], training=False)
        preds[start:start + batch_size] = probs.argmax(axis=1)
    correct = preds == y
    accuracy = float(correct.sum()) / len(y)
    per_class = {}
    for c in np.unique(y):
        sel = y == c
        per_class[int(c)] = float(correct[sel].sum()) / int(sel.sum())
    return accuracy, per_class


def _check_labels(labels, classes):
    if len(labels) and (labels.min() < 0 or labels.max() >= classes):
        raise LabelError(
            f"labels must lie in [0, {classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
