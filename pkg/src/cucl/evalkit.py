"""KNN evaluation and the ACC / BWT / MAA continual-learning metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import diffmath as dm


class IncompleteMatrixError(ValueError):
    pass


@dataclass
class AccuracyMatrix:
    """Lower-triangular ``A[j][i]``: accuracy on task ``i`` after training task ``j`` (1-based)."""

    T: int
    entries: dict[tuple[int, int], float] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows) -> "AccuracyMatrix":
        m = cls(len(rows))
        for j, row in enumerate(rows, start=1):
            if len(row) != j:
                raise IncompleteMatrixError(f"row {j} must have {j} entries, got {len(row)}")
            for i, a in enumerate(row, start=1):
                m[j, i] = a
        return m

    def __setitem__(self, key: tuple[int, int], value: float):
        j, i = key
        if not (1 <= i <= j <= self.T):
            raise IndexError(f"A[{j}][{i}] is outside the lower triangle of a {self.T}-task matrix")
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"accuracy {value} outside [0, 1]")
        self.entries[(j, i)] = value

    def __getitem__(self, key: tuple[int, int]) -> float:
        if key not in self.entries:
            raise IncompleteMatrixError(f"A[{key[0]}][{key[1]}] is undefined")
        return self.entries[key]

    def set_row(self, j: int, row):
        for i, a in enumerate(row, start=1):
            self[j, i] = a

    def row(self, j: int) -> list[float]:
        return [self[j, i] for i in range(1, j + 1)]

    def is_complete(self, upto: int | None = None) -> bool:
        upto = self.T if upto is None else upto
        return all((j, i) in self.entries for j in range(1, upto + 1) for i in range(1, j + 1))

    def require_complete(self):
        missing = [(j, i) for j in range(1, self.T + 1) for i in range(1, j + 1)
                   if (j, i) not in self.entries]
        if missing:
            raise IncompleteMatrixError(f"accuracy matrix is missing entries {missing[:5]}")

    def to_rows(self) -> list[list[float]]:
        return [self.row(j) for j in range(1, self.T + 1)]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task_trained", "task_eval", "accuracy"])
            for (j, i) in sorted(self.entries):
                w.writerow([j, i, f"{self.entries[(j, i)]:.6f}"])
        return path

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["task_trained", "task_eval", "accuracy"]:
                raise ValueError(f"{path}: bad header {header}")
            cells = []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                try:
                    cells.append((int(rec[0]), int(rec[1]), float(rec[2])))
                except (ValueError, IndexError):
                    raise ValueError(f"{path}:{lineno}: malformed row {rec}") from None
        if not cells:
            raise IncompleteMatrixError(f"{path}: no entries")
        m = cls(max(j for j, _, _ in cells))
        for j, i, a in cells:
            m[j, i] = a
        return m


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    bwt: float | None
    maa: float

    def as_dict(self) -> dict:
        return {"acc": self.acc, "bwt": self.bwt, "maa": self.maa}


def average_accuracy(matrix: AccuracyMatrix) -> float:
    matrix.require_complete()
    return float(np.mean(matrix.row(matrix.T)))


def backward_transfer(matrix: AccuracyMatrix) -> float:
    matrix.require_complete()
    T = matrix.T
    if T < 2:
        raise ValueError("BWT is undefined for a single task")
    return float(np.mean([matrix[T, i] - matrix[i, i] for i in range(1, T)]))


def running_average_accuracy(matrix: AccuracyMatrix) -> list[float]:
    """Row averages ``(1/j) sum_i A[j][i]`` for every training point ``j``."""
    return [float(np.mean(matrix.row(j))) for j in range(1, matrix.T + 1)]


def mean_average_accuracy(matrix: AccuracyMatrix) -> float:
    matrix.require_complete()
    return float(np.mean(running_average_accuracy(matrix)))


def compute_metrics(matrix: AccuracyMatrix) -> MetricsReport:
    matrix.require_complete()
    bwt = backward_transfer(matrix) if matrix.T > 1 else None
    return MetricsReport(average_accuracy(matrix), bwt, mean_average_accuracy(matrix))


def _knn_scores(train_feats, train_labels, queries, k, tau_knn):
    train_feats = np.asarray(train_feats, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    N = len(train_feats)
    if N == 0:
        raise ValueError("empty training set")
    if len(train_labels) != N:
        raise ValueError("features and labels differ in length")
    if not 1 <= k <= N:
        raise ValueError(f"k={k} must lie in [1, {N}]")
    sims = dm.cosine_matrix(queries, train_feats)
    # stable sort on -sim keeps the lower training index first on ties
    nn = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    classes = np.unique(train_labels)
    col = np.searchsorted(classes, train_labels[nn])
    w = np.exp(np.take_along_axis(sims, nn, axis=1) / tau_knn)
    votes = np.zeros((len(queries), len(classes)))
    np.add.at(votes, (np.arange(len(queries))[:, None], col), w)
    return classes, votes


def knn_classify(train_feats, train_labels, queries, k: int = 20, tau_knn: float = 0.1) -> np.ndarray:
    """Cosine-similarity weighted KNN vote; ties go to the smallest label."""
    classes, votes = _knn_scores(train_feats, train_labels, queries, k, tau_knn)
    return classes[votes.argmax(axis=1)]


def knn_predict(train_feats, train_labels, query, k: int = 20, tau_knn: float = 0.1):
    return knn_classify(train_feats, train_labels, np.asarray(query)[None, :], k, tau_knn)[0]


def evaluate_all_tasks(features: Callable[[np.ndarray], np.ndarray], stream, j: int,
                       k: int = 20, tau_knn: float = 0.1) -> list[float]:
    """Accuracy on tasks ``1..j``, each classified among its own classes.

    ``features`` maps raw inputs to representations (the current encoder).
    """
    row = []
    for i in range(1, j + 1):
        task = stream[i]
        if task.train_y is None or task.test_y is None or len(task.test_y) != len(task.test_x):
            raise ValueError(f"task {i} lacks evaluation labels")
        pred = knn_classify(features(task.train_x), task.train_y, features(task.test_x),
                            k=min(k, len(task.train_x)), tau_knn=tau_knn)
        row.append(float(np.mean(pred == task.test_y)))
    return row
