"""Dataset ingestion: CIFAR-100 binary parsing, per-class splits, and a
synthetic class-stream generator for fast tests.

The CIFAR binary layout is one record per image: a coarse label byte, a
fine label byte, then the image as channel planes of H*W bytes each,
row-major. CIFAR-100 records are 2 + 3*1024 = 3074 bytes.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, OrderError

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "val": VAL, "test": TEST}

CIFAR_SHAPE = (32, 32, 3)
CIFAR_CLASSES = 100
CIFAR_TRAIN_PER_CLASS = 450
CIFAR_VAL_PER_CLASS = 50
CIFAR_TEST_PER_CLASS = 100


@dataclass
class LabeledDataset:
    """Images with integer class labels and per-example split tags.

    images: (N, H, W, C) float32 in [0, 1]; labels: (N,) int64;
    split: (N,) int8 with codes TRAIN/VAL/TEST. `coarse` keeps the CIFAR
    coarse-label byte so parsed files can be re-serialized bit-exactly;
    `label_map` records any remapping applied (new label -> original).
    """
    images: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    coarse: np.ndarray = None
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.images) == len(self.labels) == len(self.split)):
            raise FormatError("images, labels and split must align")

    def __len__(self):
        return len(self.images)

    @property
    def class_count(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def classes(self):
        return [int(c) for c in np.unique(self.labels)]

    def select(self, split=None, classes=None):
        """(images, labels) filtered by split name and/or class set."""
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= self.split == SPLIT_NAMES[split]
        if classes is not None:
            mask &= np.isin(self.labels, list(classes))
        return self.images[mask], self.labels[mask]

    def indices(self, split=None, classes=None):
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= self.split == SPLIT_NAMES[split]
        if classes is not None:
            mask &= np.isin(self.labels, list(classes))
        return np.flatnonzero(mask)


def parse_records(data, shape=CIFAR_SHAPE):
    """Parse concatenated binary records into (coarse, fine, images)."""
    h, w, c = shape
    record = 2 + h * w * c
    if len(data) == 0 or len(data) % record != 0:
        raise FormatError(
            f"file size {len(data)} is not a multiple of {record}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
    coarse = raw[:, 0].copy()
    fine = raw[:, 1].astype(np.int64)
    planes = raw[:, 2:].reshape(-1, c, h, w)          # channel planes
    images = planes.transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    return coarse, fine, images


def serialize_records(coarse, fine, images):
    """Inverse of parse_records; bit-exact for parsed inputs."""
    n, h, w, c = images.shape
    planes = np.rint(images * 255.0).astype(np.uint8).transpose(0, 3, 1, 2)
    raw = np.empty((n, 2 + h * w * c), dtype=np.uint8)
    raw[:, 0] = coarse
    raw[:, 1] = fine
    raw[:, 2:] = planes.reshape(n, -1)
    return raw.tobytes()


def load_cifar100(train_path, test_path):
    """Load the CIFAR-100 binary files with per-class 450/50/100 splits.

    Per class: the first 450 train-file images (in file order) become the
    training split, the last 50 the validation split; all 100 test-file
    images are the test split. Records stay in file order (train file
    first) so re-serialization can reproduce the input bytes.
    """
    with open(train_path, "rb") as f:
        tr_coarse, tr_fine, tr_images = parse_records(f.read())
    with open(test_path, "rb") as f:
        te_coarse, te_fine, te_images = parse_records(f.read())
    if len(tr_fine) != 50000 or len(te_fine) != 10000:
        raise FormatError(
            f"expected 50000 train / 10000 test records, got "
            f"{len(tr_fine)} / {len(te_fine)}")
    for fine in (tr_fine, te_fine):
        if fine.min() < 0 or fine.max() >= CIFAR_CLASSES:
            raise FormatError("fine label outside [0, 100)")

    split = np.empty(60000, dtype=np.int8)
    seen = np.zeros(CIFAR_CLASSES, dtype=np.int64)
    for i, label in enumerate(tr_fine):
        split[i] = TRAIN if seen[label] < CIFAR_TRAIN_PER_CLASS else VAL
        seen[label] += 1
    split[50000:] = TEST

    return LabeledDataset(
        images=np.concatenate([tr_images, te_images]),
        labels=np.concatenate([tr_fine, te_fine]),
        split=split,
        coarse=np.concatenate([tr_coarse, te_coarse]),
    )


def cifar_bytes(dataset):
    """Re-serialize a loaded CIFAR dataset to (train_bytes, test_bytes)."""
    if dataset.coarse is None:
        raise FormatError("dataset has no coarse labels to re-serialize")
    test_mask = dataset.split == TEST
    file_mask = ~test_mask
    train = serialize_records(dataset.coarse[file_mask],
                              dataset.labels[file_mask],
                              dataset.images[file_mask])
    test = serialize_records(dataset.coarse[test_mask],
                             dataset.labels[test_mask],
                             dataset.images[test_mask])
    return train, test


def synthetic_dataset(classes, per_class, dims=8, seed=0, noise_std=0.12,
                      modes_per_class=1, amplitude=0.7):
    """Gaussian-cluster classes rendered as small single-channel images.

    Each class gets `modes_per_class` blob positions on the pixel grid;
    a sample is one mode's blob image plus pixel noise, clipped to [0, 1].
    The per-class split ratio is 9:1:2 (train:val:test), mirroring the
    450/50/100 CIFAR split. Deterministic under seed.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:dims, 0:dims]
    cells = rng.permutation(dims * dims)[:classes * modes_per_class]
    means = []
    for c in range(classes):
        class_means = []
        for m in range(modes_per_class):
            cell = cells[c * modes_per_class + m]
            cy, cx = divmod(int(cell), dims)
            blob = amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2)
                                      / 2.0)
            class_means.append(0.1 + blob)
        means.append(class_means)

    n_train = max(1, round(per_class * 9 / 12))
    n_val = max(1, round(per_class * 1 / 12))
    n_test = max(1, per_class - n_train - n_val)

    images, labels, split = [], [], []
    for c in range(classes):
        for tag, count in ((TRAIN, n_train), (VAL, n_val), (TEST, n_test)):
            mode_idx = rng.integers(0, modes_per_class, size=count)
            for m in mode_idx:
                img = means[c][m] + rng.normal(0.0, noise_std, (dims, dims))
                images.append(np.clip(img, 0.0, 1.0))
            labels.extend([c] * count)
            split.extend([tag] * count)

    return LabeledDataset(
        images=np.asarray(images, dtype=np.float32)[..., None],
        labels=np.asarray(labels, dtype=np.int64),
        split=np.asarray(split, dtype=np.int8),
    )


def remap_labels(dataset, arrival_order):
    """Renumber labels so the class arriving i-th has label i."""
    present = sorted(dataset.classes())
    if sorted(int(c) for c in arrival_order) != present:
        raise OrderError(
            "arrival order must be a permutation of the class set")
    lookup = np.full(max(present) + 1, -1, dtype=np.int64)
    for new, old in enumerate(arrival_order):
        lookup[old] = new
    return LabeledDataset(
        images=dataset.images,
        labels=lookup[dataset.labels],
        split=dataset.split,
        coarse=dataset.coarse,
        label_map={new: int(old) for new, old in enumerate(arrival_order)},
    )
