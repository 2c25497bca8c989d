import numpy as np
import pytest

from cucl.quantizer import Codebook, hard_quantize
from cucl.rehearsal import (RehearsalBuffer, replay_merge, sample_distance, sample_distances,
                            select_furthest)


def exhaustive_distance(x, book):
    total = 0.0
    s = book.sub_dim
    for i in range(book.M):
        total += min(((x[i * s:(i + 1) * s] - c) ** 2).sum() for c in book.codewords[i])
    return total


def test_distance_zero_for_exact_codewords(rng):
    book = Codebook(rng.standard_normal((3, 4, 2)))
    x = np.concatenate([book.codewords[0, 1], book.codewords[1, 3], book.codewords[2, 0]])
    assert sample_distance(x, book) == 0.0


def test_distance_two_slots():
    cw = np.array([[[0.0, 0.0], [10.0, 10.0]], [[0.0, 0.0], [-10.0, 0.0]]])
    book = Codebook(cw)
    # slot 0 nearest (0,0) at distance 1; slot 1 nearest (0,0) at distance 4
    assert sample_distance(np.array([1.0, 0.0, 0.0, 2.0]), book) == 5.0


def test_distance_matches_exhaustive_scan_exactly(rng):
    book = Codebook(rng.standard_normal((8, 8, 16)))
    X = rng.standard_normal((1000, 128))
    got = sample_distances(X, book)
    for b in range(1000):
        assert got[b] == exhaustive_distance(X[b], book)


def test_distance_equals_hard_residual_energy(rng):
    book = Codebook(rng.standard_normal((4, 8, 4)))
    X = rng.standard_normal((200, 16))
    Zh, _ = hard_quantize(X, book)
    residual = X - Zh
    energy = np.zeros(200)
    for i in range(4):
        energy = energy + (residual[:, 4 * i:4 * i + 4] ** 2).sum(axis=1)
    assert np.array_equal(sample_distances(X, book), energy)


def test_distance_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        sample_distance(np.ones(5), Codebook(rng.standard_normal((2, 3, 2))))


def test_select_examples():
    assert select_furthest([5, 1, 3], 1) == [0]
    assert select_furthest([5, 1, 3], 10) == [0, 2, 1]
    assert select_furthest([2, 7, 7, 1], 2) == [1, 2]
    assert select_furthest([5, 1, 3], 2, mode="nearest") == [1, 2]
    assert select_furthest([], 3) == []
    with pytest.raises(ValueError):
        select_furthest([1, 2], 1, samples=[0])


def test_select_matches_sort_oracle(rng):
    for n in list(range(0, 30)) + [100, 1000]:
        d = rng.integers(0, 5, size=n).astype(float)
        for S in (0, 1, 5, n, n + 3):
            oracle = sorted(range(n), key=lambda i: (-d[i], i))[:S]
            assert select_furthest(d, S) == oracle


def test_buffer_capacity_and_order(rng):
    buf = RehearsalBuffer(capacity=3)
    samples = rng.standard_normal((10, 4))
    dist = rng.random(10)
    buf.add_task(1, samples, dist)
    entries = buf.tasks[1]
    assert len(entries) == 3
    assert [e.distance for e in entries] == sorted(dist, reverse=True)[:3]
    assert all(e.task_id == 1 for e in entries)
    with pytest.raises(ValueError):
        buf.add_task(1, samples, dist)
    with pytest.raises(ValueError):
        entries[0].sample[0] = 1.0


def test_buffer_round_trips_through_arrays(rng):
    buf = RehearsalBuffer(capacity=2)
    buf.add_task(1, rng.standard_normal((5, 3)), rng.random(5))
    buf.add_task(2, rng.standard_normal((5, 3)), rng.random(5))
    back = RehearsalBuffer.from_arrays(2, buf.to_arrays())
    assert [(e.task_id, e.distance) for e in back.entries()] == [(e.task_id, e.distance) for e in buf.entries()]
    assert all(np.array_equal(a.sample, b.sample) for a, b in zip(back.entries(), buf.entries()))


def test_replay_empty_buffer(rng):
    batch = rng.standard_normal((8, 3))
    assert np.array_equal(replay_merge(batch, RehearsalBuffer(20), rng), batch)


def test_replay_all_when_they_fit(rng):
    buf = RehearsalBuffer(20)
    buf.add_task(1, rng.standard_normal((50, 3)), rng.random(50))
    batch = rng.standard_normal((64, 3))
    merged = replay_merge(batch, buf, rng, replay_count=20)
    assert merged.shape == (84, 3)
    assert np.array_equal(merged[:64], batch)
    assert np.array_equal(replay_merge(batch, buf, rng), merged)


def test_replay_draw_is_deterministic_and_even(rng):
    buf = RehearsalBuffer(20)
    for t in range(1, 5):
        buf.add_task(t, rng.standard_normal((30, 3)) + 100 * t, rng.random(30))
    batch = np.zeros((10, 3))
    m1 = replay_merge(batch, buf, np.random.default_rng(7))
    m2 = replay_merge(batch, buf, np.random.default_rng(7))
    assert np.array_equal(m1, m2)
    assert m1.shape == (20, 3)
    tasks = np.round(m1[10:, 0] / 100).astype(int)
    counts = np.bincount(tasks, minlength=5)[1:]
    assert sorted(counts) == [2, 2, 3, 3]
