"""Datasets: synthetic ordered classes, CSV I/O and score discretisation."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


class DegenerateBinsError(InvalidInputError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: str = "train"

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] < 1 or self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInputError("dataset needs N >= 1 rows with one label each")
        if np.any(np.isnan(self.features)):
            raise InvalidInputError("features contain NaN")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class SyntheticOrdinalSpec:
    num_classes: int = 8
    feature_dim: int = 16
    samples_per_class: int = 200
    test_samples_per_class: int = 100
    center_spacing: float = 1.0
    noise_sigma: float = 0.6
    neighbor_flip_prob: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.feature_dim, self.samples_per_class, self.test_samples_per_class) < 1:
            raise InvalidInputError("synthetic dataset sizes must be positive")
        if self.num_classes < 2:
            raise InvalidInputError("need at least two classes")
        if not 0 <= self.neighbor_flip_prob < 0.5:
            raise InvalidInputError("neighbor_flip_prob must lie in [0, 0.5)")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be >= 0")


def _draw(spec, direction, per_class, rng):
    C, d = spec.num_classes, spec.feature_dim
    true = np.repeat(np.arange(C), per_class)
    X = true[:, None] * spec.center_spacing * direction[None, :]
    X = X + rng.normal(0.0, spec.noise_sigma, size=X.shape) if spec.noise_sigma > 0 else X
    labels = true.copy()
    flip = rng.random(true.size) < spec.neighbor_flip_prob
    step = np.where(rng.random(true.size) < 0.5, -1, 1)
    # reflect at the ends so a flip always moves to a different class
    step = np.where(true == 0, 1, np.where(true == C - 1, -1, step))
    labels[flip] = true[flip] + step[flip]
    return X, labels, true


def generate_ordinal(spec):
    """Train/test sets whose class means lie in order along a random direction.

    Returns ``(train, test)``; each Dataset additionally carries the noise-free
    generating class in ``.true_labels``.
    """
    rng = np.random.default_rng(spec.seed)
    direction = rng.normal(size=spec.feature_dim)
    direction /= np.linalg.norm(direction)
    out = []
    for tag, per_class in (("train", spec.samples_per_class), ("test", spec.test_samples_per_class)):
        X, y, true = _draw(spec, direction, per_class, rng)
        order = rng.permutation(y.size)
        ds = Dataset(X[order], y[order], spec.num_classes, tag)
        ds.true_labels = true[order]
        out.append(ds)
    return tuple(out)


def shuffle_labels(ds, seed):
    """Copy of ``ds`` with labels uniformly permuted (destroys class structure)."""
    rng = np.random.default_rng(seed)
    return Dataset(ds.features.copy(), rng.permutation(ds.labels), ds.num_classes, ds.split_tag)


def load_csv(path, num_classes, header=False, split_tag="train"):
    """Rows are ``feature_1,...,feature_d,label``."""
    feats, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise InvalidInputError(f"{path}:{lineno}: expected features followed by a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InvalidInputError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                x = [float(c) for c in row[:-1]]
                lab = float(row[-1])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
            if lab != int(lab) or not 0 <= lab < num_classes:
                raise InvalidInputError(f"{path}:{lineno}: label {row[-1]} outside [0, {num_classes})")
            feats.append(x)
            labels.append(int(lab))
    if not labels:
        raise InvalidInputError(f"{path}: no data rows")
    return Dataset(np.array(feats), np.array(labels), num_classes, split_tag)


def save_csv(ds, path, header=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"feature_{i + 1}" for i in range(ds.feature_dim)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def discretize_scores(scores, num_bins):
    """Count-balanced binning of real scores.

    Equal scores always share a bin (a tie at a boundary goes to the lower bin).
    Returns ``(labels, bin_edges, bin_centers)`` where ``bin_edges`` has
    ``num_bins + 1`` entries: the minimum, the maximum score of each bin.
    """
    s = np.asarray(scores, dtype=np.float64)
    if num_bins < 2:
        raise InvalidInputError("need at least 2 bins")
    if s.ndim != 1 or s.size == 0 or not np.all(np.isfinite(s)):
        raise InvalidInputError("scores must be a non-empty finite vector")
    values, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    G, N = values.size, s.size
    if G < num_bins:
        raise DegenerateBinsError(f"{G} distinct scores cannot fill {num_bins} bins")
    group_bin = np.empty(G, dtype=np.int64)
    b, cum = 0, 0
    for gi in range(G):
        group_bin[gi] = b
        cum += counts[gi]
        if b < num_bins - 1:
            forced = G - gi - 1 == num_bins - b - 1
            if forced or cum * num_bins >= (b + 1) * N:
                b += 1
    labels = group_bin[inverse]
    edges = [float(values[0])]
    centers = []
    for k in range(num_bins):
        members = s[labels == k]
        edges.append(float(members.max()))
        centers.append(float(members.mean()))
    return labels, np.array(edges), np.array(centers)


def assign_bins(scores, bin_edges):
    """Map new scores to bins using the edges from :func:`discretize_scores`."""
    inner = np.asarray(bin_edges, dtype=np.float64)[1:-1]
    return np.searchsorted(inner, np.asarray(scores, dtype=np.float64), side="left")


def write_bin_sidecar(path, bin_edges, bin_centers):
    with open(path, "w") as fh:
        json.dump({"bin_edges": [float(x) for x in bin_edges],
                   "bin_centers": [float(x) for x in bin_centers]}, fh, indent=2)


def read_bin_sidecar(path):
    with open(path) as fh:
        meta = json.load(fh)
    return np.array(meta["bin_edges"]), np.array(meta["bin_centers"])
