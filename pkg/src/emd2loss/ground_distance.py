"""Ground-distance matrices: the ordinal |i-j| metric and the self-guided estimate
built from class centroids of a network's penultimate-layer features.

Pipeline for the learned matrix::

    features --(L1 normalise, per-class mean)--> centroids
             --(pairwise l-norm)--> raw distances
             --(row-wise percentile rank)--> B
             --((B + B.T) / 2)--> D
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientDataError, InvalidInputError

PROVENANCES = ("ordinal", "learned", "external")


@dataclass(frozen=True)
class GroundMatrix:
    entries: np.ndarray
    provenance: str = "external"

    def __post_init__(self):
        E = np.array(self.entries, dtype=np.float64)
        E.setflags(write=False)
        object.__setattr__(self, "entries", E)
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        if E.ndim != 2 or E.shape[0] != E.shape[1] or E.shape[0] < 1:
            raise InvalidInputError(f"ground matrix must be square, got shape {E.shape}")
        if not np.all(np.isfinite(E)) or np.any(E < 0):
            raise InvalidInputError("ground matrix entries must be finite and non-negative")
        if not np.array_equal(E, E.T):
            raise InvalidInputError("ground matrix is not symmetric")
        if np.any(np.diag(E) != 0):
            raise InvalidInputError("ground matrix diagonal must be zero")
        if self.provenance == "learned" and np.any(E > 1):
            raise InvalidInputError("learned ground distances must lie in [0, 1]")

    @property
    def num_classes(self):
        return self.entries.shape[0]


class CentroidAccumulator:
    """Running per-class sums of L1-normalised feature vectors."""

    def __init__(self, num_classes, feature_dim):
        if num_classes < 1 or feature_dim < 1:
            raise InvalidInputError("num_classes and feature_dim must be positive")
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.sums = np.zeros((num_classes, feature_dim))
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.skipped = 0

    def add_batch(self, features, labels):
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if F.shape[1] != self.feature_dim or F.shape[0] != labels.shape[0]:
            raise InvalidInputError(
                f"features {F.shape} / labels {labels.shape} do not match feature_dim {self.feature_dim}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInputError("label outside [0, num_classes)")
        self.skipped += kernels.accumulate(self.sums, self.counts, F, labels)
        return self

    def add(self, features, label):
        return self.add_batch(np.asarray(features, dtype=np.float64)[None, :], [label])

    def merge(self, other):
        if (other.num_classes, other.feature_dim) != (self.num_classes, self.feature_dim):
            raise InvalidInputError("cannot merge accumulators of different shapes")
        self.sums += other.sums
        self.counts += other.counts
        self.skipped += other.skipped
        return self

    def reset(self):
        self.sums[:] = 0.0
        self.counts[:] = 0
        self.skipped = 0

    def missing_classes(self):
        return [int(c) for c in np.flatnonzero(self.counts == 0)]

    def centroids(self):
        missing = self.missing_classes()
        if missing:
            raise InsufficientDataError(f"no features accumulated for class(es) {missing}", missing)
        return self.sums / self.counts[:, None]


def accumulate_features(acc, features, label):
    """Add one instance to ``acc`` (zero-norm vectors are counted in ``acc.skipped``)."""
    return acc.add(features, label)


def pairwise_distances(centroids, l=2):
    diff = centroids[:, None, :] - centroids[None, :, :]
    if l == np.inf:
        return np.max(np.abs(diff), axis=2)
    return np.sum(np.abs(diff) ** l, axis=2) ** (1.0 / l)


def raw_distance_matrix(acc, l=2):
    """l-norm distances between class centroids."""
    return pairwise_distances(acc.centroids(), l)


def percentile_transform(raw):
    """B[i, j] = #{m : raw[i, m] < raw[i, j]} / C. Ties share a rank."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise InvalidInputError("percentile_transform needs a square matrix")
    return kernels.percentile_rows(raw)


def symmetrize(B):
    B = np.asarray(B, dtype=np.float64)
    D = (B + B.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return GroundMatrix(D, "learned")


def ordinal_matrix(C, scale=1.0):
    """|i - j| * scale. Pass ``scale=1/(C-1)`` for entries in [0, 1]."""
    if int(C) != C or C < 2:
        raise InvalidInputError(f"ordinal matrix needs C >= 2, got {C}")
    idx = np.arange(int(C), dtype=np.float64)
    return GroundMatrix(np.abs(idx[:, None] - idx[None, :]) * scale, "ordinal")


def sdd(raw, include_diagonal=True):
    """Population standard deviation of the entries of a raw distance matrix."""
    raw = np.asarray(raw, dtype=np.float64)
    if include_diagonal:
        return float(np.std(raw))
    return float(np.std(raw[~np.eye(raw.shape[0], dtype=bool)]))


def learn_ground_matrix(acc, previous=None, l=2):
    """Estimate D from ``acc``; returns ``(GroundMatrix, raw_distances)``.

    Classes with no samples keep their rows/columns from ``previous`` (with a
    warning); without a previous matrix that is an error. ``raw_distances`` has
    NaN in the rows/columns of missing classes.
    """
    C = acc.num_classes
    missing = acc.missing_classes()
    if not missing:
        raw = raw_distance_matrix(acc, l)
        return symmetrize(percentile_transform(raw)), raw
    if previous is None:
        raise InsufficientDataError(
            f"cannot estimate ground distances: no features for class(es) {missing}", missing
        )
    warnings.warn(f"classes {missing} absent this epoch; reusing previous ground distances", stacklevel=2)
    present = np.flatnonzero(acc.counts > 0)
    raw = np.full((C, C), np.nan)
    D = np.array(getattr(previous, "entries", previous), dtype=np.float64)
    if present.size >= 2:
        cents = acc.sums[present] / acc.counts[present, None]
        sub = pairwise_distances(cents, l)
        raw[np.ix_(present, present)] = sub
        sub_D = percentile_transform(sub)
        D[np.ix_(present, present)] = (sub_D + sub_D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return GroundMatrix(D, "learned"), raw
