"""Readers/writers for the labelled matrix CSVs and the JSON-lines eval reports."""

import csv

import numpy as np

from .errors import InvalidInputError
from .metrics import EvalReport


def write_matrix_csv(M, path, labels=None):
    M = np.asarray(M, dtype=np.float64)
    labels = [str(i) for i in range(M.shape[0])] if labels is None else [str(x) for x in labels]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class"] + labels)
        for lab, row in zip(labels, M):
            w.writerow([lab] + [repr(float(v)) for v in row])


def read_matrix_csv(path):
    """Returns ``(matrix, labels)``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise InvalidInputError(f"{path}: empty matrix file")
    labels = rows[0][1:]
    body = rows[1:]
    if len(body) != len(labels) or any(len(r) != len(labels) + 1 for r in body):
        raise InvalidInputError(f"{path}: matrix is not square / labelled")
    if [r[0] for r in body] != labels:
        raise InvalidInputError(f"{path}: row labels differ from column labels")
    return np.array([[float(x) for x in r[1:]] for r in body]), labels


def append_report(report, path):
    with open(path, "a") as fh:
        fh.write(report.to_json() + "\n")


def read_reports(path):
    with open(path) as fh:
        return [EvalReport.from_json(line) for line in fh if line.strip()]
