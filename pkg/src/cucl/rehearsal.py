"""Codebook-distance rehearsal buffer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantizer import Codebook, slot_distances

MODES = ("furthest", "nearest", "off")


def sample_distances(X, codebook: Codebook) -> np.ndarray:
    """Summed squared distance from each subvector to its nearest codeword, per row."""
    d = slot_distances(np.atleast_2d(X), codebook)
    nearest = d.min(axis=2)
    total = np.zeros(nearest.shape[0])
    for i in range(codebook.M):
        total = total + nearest[:, i]
    return total


def sample_distance(x, codebook: Codebook) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != codebook.dim:
        raise ValueError(f"expected a {codebook.dim}-vector, got shape {x.shape}")
    return float(sample_distances(x[None, :], codebook)[0])


def select_furthest(distances, S: int, samples=None, mode: str = "furthest") -> list[int]:
    """Indices of the ``S`` largest distances, largest first, ties by lower index.

    ``mode="nearest"`` picks the smallest distances instead.
    """
    d = np.asarray(distances, dtype=np.float64)
    if samples is not None and len(samples) != len(d):
        raise ValueError(f"{len(samples)} samples but {len(d)} distances")
    if S < 0:
        raise ValueError("S must be >= 0")
    if mode == "furthest":
        order = np.argsort(-d, kind="stable")
    elif mode == "nearest":
        order = np.argsort(d, kind="stable")
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    return [int(i) for i in order[:S]]


@dataclass(frozen=True)
class BufferEntry:
    task_id: int
    distance: float
    sample: np.ndarray


@dataclass
class RehearsalBuffer:
    """Per-task stores of raw (pre-augmentation) samples, sorted by distance."""

    capacity: int = 20
    tasks: dict[int, tuple[BufferEntry, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")

    def add_task(self, task_id: int, samples, distances, mode: str = "furthest") -> list[int]:
        """Score-select up to ``capacity`` rows of ``samples`` for ``task_id``."""
        if task_id in self.tasks:
            raise ValueError(f"task {task_id} already buffered")
        samples = np.asarray(samples, dtype=np.float64)
        chosen = select_furthest(distances, self.capacity, samples, mode=mode)
        entries = []
        for i in chosen:
            row = samples[i].copy()
            row.flags.writeable = False
            entries.append(BufferEntry(task_id, float(distances[i]), row))
        self.tasks[task_id] = tuple(entries)
        return chosen

    def __len__(self):
        return sum(len(v) for v in self.tasks.values())

    def entries(self) -> list[BufferEntry]:
        return [e for tid in sorted(self.tasks) for e in self.tasks[tid]]

    def samples_by_task(self) -> list[np.ndarray]:
        return [np.stack([e.sample for e in self.tasks[t]]) for t in sorted(self.tasks) if self.tasks[t]]

    def to_arrays(self) -> dict[str, np.ndarray]:
        entries = self.entries()
        dim = entries[0].sample.shape[0] if entries else 0
        return {
            "buffer_task_ids": np.array([e.task_id for e in entries], dtype=np.float64),
            "buffer_distances": np.array([e.distance for e in entries], dtype=np.float64),
            "buffer_samples": (np.stack([e.sample for e in entries]) if entries
                               else np.zeros((0, dim))),
        }

    @classmethod
    def from_arrays(cls, capacity: int, arrays: dict[str, np.ndarray]) -> "RehearsalBuffer":
        buf = cls(capacity)
        grouped: dict[int, list[BufferEntry]] = {}
        for tid, dist, row in zip(arrays["buffer_task_ids"], arrays["buffer_distances"],
                                  arrays["buffer_samples"]):
            row = np.array(row, dtype=np.float64)
            row.flags.writeable = False
            grouped.setdefault(int(tid), []).append(BufferEntry(int(tid), float(dist), row))
        buf.tasks = {t: tuple(v) for t, v in grouped.items()}
        return buf


def replay_merge(current_batch, buffer: RehearsalBuffer, rng: np.random.Generator,
                 replay_count: int | None = None) -> np.ndarray:
    """Append buffered samples, drawn evenly across past tasks, to ``current_batch``.

    By default every buffered sample joins when they fit within the batch size;
    otherwise ``len(current_batch)`` of them are drawn.
    """
    current_batch = np.asarray(current_batch, dtype=np.float64)
    pools = buffer.samples_by_task()
    total = sum(len(p) for p in pools)
    if total == 0:
        return current_batch
    if replay_count is None:
        replay_count = total if total <= len(current_batch) else len(current_batch)
    R = min(replay_count, total)
    if R <= 0:
        return current_batch
    if R == total:
        drawn = np.concatenate(pools)
    else:
        # round-robin over tasks in a random order: even split, leftovers random
        quota = np.zeros(len(pools), dtype=int)
        order = rng.permutation(len(pools))
        remaining = R
        while remaining:
            for t in order:
                if remaining and quota[t] < len(pools[t]):
                    quota[t] += 1
                    remaining -= 1
        drawn = np.concatenate([p[rng.choice(len(p), size=q, replace=False)]
                                for p, q in zip(pools, quota) if q > 0])
    return np.concatenate([current_batch, drawn])
