"""Seeded Gaussian-cluster task streams and their CSV file format."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StreamConfig:
    T: int = 5
    classes_per_task: int = 5
    train_per_class: int = 200
    test_per_class: int = 50
    input_dim: int = 64
    separation: float = 4.0
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("T", "classes_per_task", "train_per_class", "test_per_class", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")


@dataclass
class Task:
    task_id: int
    class_ids: tuple[int, ...]
    train_x: np.ndarray
    train_y: np.ndarray  # evaluation only; training never sees these
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass
class TaskStream:
    tasks: list[Task]
    input_dim: int
    seed: int | None = None

    def __post_init__(self):
        validate_stream(self)

    @property
    def T(self) -> int:
        return len(self.tasks)

    def __getitem__(self, task_id: int) -> Task:
        return self.tasks[task_id - 1]

    def __eq__(self, other):
        if not isinstance(other, TaskStream) or self.T != other.T or self.input_dim != other.input_dim:
            return False
        for a, b in zip(self.tasks, other.tasks):
            if a.task_id != b.task_id or a.class_ids != b.class_ids:
                return False
            for f in ("train_x", "train_y", "test_x", "test_y"):
                if not np.array_equal(getattr(a, f), getattr(b, f)):
                    return False
        return True


def validate_stream(stream: TaskStream):
    seen: dict[int, int] = {}
    for pos, task in enumerate(stream.tasks, start=1):
        if task.task_id != pos:
            raise StreamFormatError(f"task ids must run 1..T, found {task.task_id} at position {pos}")
        if len(task.train_x) == 0 or len(task.test_x) == 0:
            raise StreamFormatError(f"task {task.task_id} is empty (needs train and test rows)")
        for x in (task.train_x, task.test_x):
            if x.ndim != 2 or x.shape[1] != stream.input_dim:
                raise StreamFormatError(f"task {task.task_id} has wrong feature width")
        for c in task.class_ids:
            if c in seen:
                raise StreamFormatError(f"class {c} appears in tasks {seen[c]} and {task.task_id}")
            seen[c] = task.task_id
        labels = set(task.train_y.tolist()) | set(task.test_y.tolist())
        if not labels <= set(task.class_ids):
            raise StreamFormatError(f"task {task.task_id} has labels outside its class set")


def _round9(x: np.ndarray) -> np.ndarray:
    # values the 9-significant-digit file format reproduces exactly
    return np.char.mod("%.9g", x).astype(np.float64)


def generate_stream(config: StreamConfig) -> TaskStream:
    """Class means on a sphere of radius ``separation``, isotropic Gaussian samples."""
    rng = np.random.default_rng(config.seed)
    C, d = config.classes_per_task, config.input_dim
    n_classes = config.T * C
    # global class ids are shuffled before being dealt out to tasks
    class_order = rng.permutation(n_classes)
    means = rng.standard_normal((n_classes, d))
    means *= config.separation / np.linalg.norm(means, axis=1, keepdims=True)
    tasks = []
    for t in range(config.T):
        ids = tuple(sorted(int(c) for c in class_order[t * C:(t + 1) * C]))
        splits = {}
        for split, per in (("train", config.train_per_class), ("test", config.test_per_class)):
            xs, ys = [], []
            for c in ids:
                xs.append(means[c] + config.spread * rng.standard_normal((per, d)))
                ys.append(np.full(per, c))
            x, y = np.concatenate(xs), np.concatenate(ys)
            perm = rng.permutation(len(y))
            splits[split] = (_round9(x[perm]), y[perm])
        tasks.append(Task(t + 1, ids, *splits["train"], *splits["test"]))
    return TaskStream(tasks, d, config.seed)


def export_stream(stream: TaskStream, path) -> Path:
    path = Path(path)
    d = stream.input_dim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task_id", "class_id", "split"] + [f"f{j}" for j in range(d)])
        for task in stream.tasks:
            for split, xs, ys in (("train", task.train_x, task.train_y), ("test", task.test_x, task.test_y)):
                for x, y in zip(xs, ys):
                    w.writerow([task.task_id, int(y), split] + ["%.9g" % v for v in x])
    return path


def load_external(path, input_dim: int | None = None) -> TaskStream:
    """Read a stream CSV (``task_id,class_id,split,f0..f{d-1}``)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise StreamFormatError(f"{path}: empty file") from None
        d = len(header) - 3
        expected = ["task_id", "class_id", "split"] + [f"f{j}" for j in range(d)]
        if d < 1 or header != expected:
            raise StreamFormatError(f"{path}: bad header {header[:4]}...")
        if input_dim is not None and d != input_dim:
            raise StreamFormatError(f"{path}: {d} features, expected {input_dim}")
        rows: dict[int, dict[str, tuple[list, list]]] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != d + 3:
                raise StreamFormatError(f"{path}:{lineno}: expected {d + 3} fields, got {len(rec)}")
            try:
                tid, cid = int(rec[0]), int(rec[1])
                feats = [float(v) for v in rec[3:]]
            except ValueError as exc:
                raise StreamFormatError(f"{path}:{lineno}: {exc}") from None
            split = rec[2]
            if split not in ("train", "test"):
                raise StreamFormatError(f"{path}:{lineno}: split must be train or test, got {split!r}")
            if tid < 1:
                raise StreamFormatError(f"{path}:{lineno}: task ids start at 1")
            bucket = rows.setdefault(tid, {"train": ([], []), "test": ([], [])})[split]
            bucket[0].append(feats)
            bucket[1].append(cid)
    if not rows:
        raise StreamFormatError(f"{path}: no data rows")
    tasks = []
    for tid in range(1, max(rows) + 1):
        parts = rows.get(tid)
        if parts is None or not parts["train"][0] or not parts["test"][0]:
            raise StreamFormatError(f"{path}: task {tid} is empty")
        ids = tuple(sorted(set(parts["train"][1]) | set(parts["test"][1])))
        tasks.append(Task(
            tid, ids,
            np.array(parts["train"][0], dtype=np.float64), np.array(parts["train"][1]),
            np.array(parts["test"][0], dtype=np.float64), np.array(parts["test"][1]),
        ))
    return TaskStream(tasks, d)
