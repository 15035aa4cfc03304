"""Evaluation metrics for ordered-class predictions."""

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError


@dataclass
class EvalReport:
    aem: float
    aeo: float
    confusion: list
    spearman_rho: Optional[float] = None
    sdd: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def aem_aeo(predicted, truth):
    """Exact-match accuracy and within-one-class accuracy."""
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape:
        raise InvalidInputError("predictions and truth differ in length")
    if pred.size == 0:
        raise UndefinedMetricError("AEM/AEO undefined on empty input")
    err = np.abs(pred - true)
    return float(np.mean(err == 0)), float(np.mean(err <= 1))


def predict_class(p):
    """argmax; np.argmax already returns the first (smallest) index on ties."""
    return int(np.argmax(np.asarray(p)))


def predict_classes(P):
    return np.argmax(np.asarray(P), axis=1)


def decode_regression(y, num_classes):
    return np.clip(np.rint(np.asarray(y, dtype=np.float64)), 0, num_classes - 1).astype(np.int64)


def expected_score(p, bin_centers):
    p = np.asarray(p, dtype=np.float64)
    c = np.asarray(bin_centers, dtype=np.float64)
    if p.shape[-1] != c.shape[0]:
        raise InvalidInputError(f"{p.shape[-1]} probabilities but {c.shape[0]} bin centers")
    return p @ c


def average_ranks(x):
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise InvalidInputError("spearman_rho needs two equal-length non-empty vectors")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedMetricError("rank correlation undefined for a constant input")
    rx = average_ranks(x) - (x.size + 1) / 2.0
    ry = average_ranks(y) - (y.size + 1) / 2.0
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def confusion_matrix(predicted, truth, num_classes):
    M = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(M, (np.asarray(truth, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return M


def evaluate(predicted, truth, num_classes, scores=None, sdd=None):
    """Build an :class:`EvalReport`; ``scores`` (real predictions) enable Spearman's rho."""
    aem, aeo = aem_aeo(predicted, truth)
    rho = None
    if scores is not None:
        try:
            rho = spearman_rho(scores, truth)
        except UndefinedMetricError:
            rho = None
    conf = confusion_matrix(predicted, truth, num_classes)
    return EvalReport(aem, aeo, conf.tolist(), rho, sdd)
