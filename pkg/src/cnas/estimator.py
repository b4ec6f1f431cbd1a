"""scikit-learn estimator facade.

Wraps the continual search engine so it composes with the wider sklearn
ecosystem (pipelines, cross-validation, get_params/set_params). `fit`
turns a flat (X, y) into a class-incremental stream internally; `predict`
uses the final task network.

Requires scikit-learn (optional dependency, extras tag "sklearn").
"""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .arch import ArchDescriptor
from .data import LabeledDataset, TRAIN, VAL, TEST
from .driver import Scenario, make_stream, run_baseline
from .search import SearchConfig
from .training import TrainConfig


DEFAULT_DESCRIPTOR = """\
input {h}x{w}x{c}
conv 4
pool
flatten
dense 8
softmax 2
"""


class ContinualNASClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier that grows its architecture over a class stream.

    Parameters mirror the engine configuration; X must be image batches
    of shape (N, H, W, C) or flat (N, H*W*C) with `image_shape` given.
    """

    def __init__(self, method="cnas", k=2, base_classes=2, sample_size=6,
                 epoch_limit=3, max_wider=2, max_deeper=2, max_epochs=30,
                 learning_rate=1e-4, batch_size=128, descriptor=None,
                 image_shape=None, val_fraction=0.15, seed=0):
        self.method = method
        self.k = k
        self.base_classes = base_classes
        self.sample_size = sample_size
        self.epoch_limit = epoch_limit
        self.max_wider = max_wider
        self.max_deeper = max_deeper
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.descriptor = descriptor
        self.image_shape = image_shape
        self.val_fraction = val_fraction
        self.seed = seed

    def _images(self, X):
        X = np.asarray(X, dtype=np.float32)
        if X.ndim == 2:
            if self.image_shape is None:
                raise ValueError("flat X needs image_shape=(H, W, C)")
            X = X.reshape((len(X),) + tuple(self.image_shape))
        if X.ndim == 3:
            X = X[..., None]
        return X

    def fit(self, X, y):
        flat, y = check_X_y(self._images(X).reshape(len(X), -1), y)
        images = self._images(X)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) <= self.base_classes:
            raise ValueError("need more classes than base_classes")

        rng = np.random.default_rng(self.seed)
        split = np.full(len(y_idx), TRAIN, dtype=np.int8)
        for c in range(len(self.classes_)):
            idx = np.flatnonzero(y_idx == c)
            n_val = max(2, int(len(idx) * self.val_fraction))
            held = rng.choice(idx, size=min(n_val, len(idx) - 1),
                              replace=False)
            split[held] = VAL
            # the stream metric needs every class in the test split;
            # score() still evaluates on caller-provided data
            split[held[:1]] = TEST

        dataset = LabeledDataset(images=images,
                                 labels=y_idx.astype(np.int64),
                                 split=split)
        h, w, c = dataset.image_shape
        text = self.descriptor or DEFAULT_DESCRIPTOR.format(h=h, w=w, c=c)
        base_desc = ArchDescriptor.from_text(text)

        scenario = Scenario(kind="kclass", k=self.k,
                            base_classes=self.base_classes)
        base_step, steps = make_stream(scenario, dataset, self.seed)
        train_cfg = TrainConfig(learning_rate=self.learning_rate,
                                batch_size=self.batch_size,
                                max_epochs=self.max_epochs)
        search_cfg = SearchConfig(sample_size=self.sample_size,
                                  epoch_limit=self.epoch_limit,
                                  max_wider=self.max_wider,
                                  max_deeper=self.max_deeper)
        self.reports_, state = run_baseline(
            self.method, base_step, steps, base_desc, train_cfg,
            search_cfg, self.seed)
        self.network_ = state.network
        self.descriptor_ = state.descriptor
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        images = self._images(check_array(X, allow_nd=True))
        return self.network_.forward(images)

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=1)]
