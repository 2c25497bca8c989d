"""Sequential task training, rehearsal selection, evaluation and persistence."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diffmath as dm
from .checkpoint import save_arrays
from .datastream import StreamConfig, TaskStream, generate_stream, load_external
from .encoder import (AugmentationConfig, MLPParams, augment_batch, encode, init_encoder,
                      init_predictor, mlp_forward)
from .evalkit import (AccuracyMatrix, MetricsReport, compute_metrics, evaluate_all_tasks,
                      running_average_accuracy)
from .losses import LossConfig, cucl_loss, ntxent_loss, siamese_stopgrad_loss, total_loss
from .quantizer import Codebook, QuantizerConfig, soft_quantize
from .rehearsal import MODES, RehearsalBuffer, replay_merge, sample_distances

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class RunConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    hidden: int = 256
    depth: int = 2
    predictor_hidden: int = 64
    buffer_size: int = 20
    replay_count: int | None = None
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.03
    seed: int = 0
    cucl_enabled: bool = True
    rehearsal_mode: str = "furthest"
    knn_k: int = 20
    knn_tau: float = 0.1
    stream_path: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        for name in ("hidden", "depth", "predictor_hidden", "epochs", "batch_size", "knn_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.buffer_size < 0:
            raise ValueError("buffer_size must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.rehearsal_mode not in MODES:
            raise ValueError(f"rehearsal_mode must be one of {MODES}")

    @property
    def rep_dim(self) -> int:
        return self.quantizer.dim

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    encoder: MLPParams
    predictor: MLPParams | None
    codebook: Codebook | None
    rng: np.random.Generator

    @classmethod
    def create(cls, config: RunConfig, input_dim: int) -> "TrainState":
        init_seq, train_seq = np.random.SeedSequence(config.seed).spawn(2)
        init_rng = np.random.default_rng(init_seq)
        enc = init_encoder(input_dim, init_rng, hidden=config.hidden, depth=config.depth,
                           out_dim=config.rep_dim)
        pred = (init_predictor(config.rep_dim, init_rng, config.predictor_hidden)
                if config.loss.backbone == "siamese" else None)
        return cls(enc, pred, None, np.random.default_rng(train_seq))

    def features(self, x: np.ndarray) -> np.ndarray:
        return encode(x, self.encoder)


@dataclass
class LossTrace:
    l_unsup: list[float] = field(default_factory=list)
    l_cucl: list[float] | None = None
    total: list[float] = field(default_factory=list)


def _guard(term: str, fn, *args):
    try:
        out = fn(*args)
    except dm.NonFiniteError as exc:
        raise TrainingDivergedError(f"{term} became non-finite: {exc}") from None
    if not np.all(np.isfinite(dm._val(out))):
        raise TrainingDivergedError(f"{term} became non-finite")
    return out


def train_step(state: TrainState, batch: np.ndarray, config: RunConfig) -> tuple[float, float | None]:
    """One SGD step on ``batch`` (already merged with replay samples)."""
    B = len(batch)
    view_a = augment_batch(batch, config.augment, state.rng)
    view_b = augment_batch(batch, config.augment, state.rng)
    if state.codebook is None:
        state.codebook = Codebook.initialize(config.quantizer, encode(view_a, state.encoder), state.rng)

    # per-op scans are skipped here; loss terms and gradients are checked below
    tape = dm.Tape(check_finite=False)
    enc = [tape.leaf(a) for a in state.encoder.arrays()]
    params = list(enc)
    H = _guard("encoder output", mlp_forward, np.concatenate([view_a, view_b]), enc)
    X_a, X_b = dm.rows(H, 0, B), dm.rows(H, B, 2 * B)

    if config.loss.backbone == "siamese":
        pred = [tape.leaf(a) for a in state.predictor.arrays()]
        params += pred

        def unsup():
            P = mlp_forward(H, pred)
            return siamese_stopgrad_loss(dm.rows(P, 0, B), X_a, dm.rows(P, B, 2 * B), X_b)
    else:
        def unsup():
            return ntxent_loss(X_a, X_b, config.loss.tau_l)
    l_unsup = _guard("l_unsup", unsup)

    l_cucl = None
    if config.cucl_enabled:
        book = tape.leaf(state.codebook.codewords.reshape(-1, state.codebook.sub_dim))
        params.append(book)

        def cross():
            Z = soft_quantize(H, book, config.quantizer.tau_q, M=state.codebook.M)
            return cucl_loss(X_a, dm.rows(Z, B, 2 * B), X_b, dm.rows(Z, 0, B),
                             config.loss.tau_l, config.loss.literal_indicator)
        l_cucl = _guard("l_cucl", cross)
        loss = total_loss(l_unsup, l_cucl)
    else:
        loss = l_unsup

    grads = tape.grad(loss, params)
    for g in grads:
        if not np.isfinite(g.sum()):
            raise TrainingDivergedError("gradient of the total loss became non-finite")

    if config.lr == 0:
        return float(dm._val(l_unsup)), None if l_cucl is None else float(dm._val(l_cucl))
    arrays = state.encoder.arrays()
    if state.predictor is not None and config.loss.backbone == "siamese":
        arrays += state.predictor.arrays()
    for p, g in zip(arrays, grads):
        p -= config.lr * g
    if config.cucl_enabled:
        state.codebook.codewords -= config.lr * grads[-1].reshape(state.codebook.codewords.shape)
    return float(dm._val(l_unsup)), None if l_cucl is None else float(dm._val(l_cucl))


def train_task(state: TrainState, train_x: np.ndarray, buffer: RehearsalBuffer,
               config: RunConfig) -> LossTrace:
    """Train on one task's unlabeled inputs; returns per-epoch mean losses."""
    train_x = np.asarray(train_x, dtype=np.float64)
    if len(train_x) == 0:
        raise ValueError("task has no training samples")
    trace = LossTrace(l_cucl=[] if config.cucl_enabled else None)
    n = len(train_x)
    for _ in range(config.epochs):
        order = state.rng.permutation(n)
        sums = [0.0, 0.0]
        steps = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            batch = replay_merge(train_x[idx], buffer, state.rng, config.replay_count)
            lu, lc = train_step(state, batch, config)
            sums[0] += lu
            sums[1] += lc or 0.0
            steps += 1
        trace.l_unsup.append(sums[0] / steps)
        if trace.l_cucl is not None:
            trace.l_cucl.append(sums[1] / steps)
        trace.total.append((sums[0] + sums[1]) / steps)
    return trace


@dataclass
class RunSummary:
    matrix: AccuracyMatrix
    metrics: MetricsReport | None
    loss_traces: list[LossTrace]
    wall_clock: float
    config: dict
    artifacts: dict[str, str] = field(default_factory=dict)
    status: str = "ok"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "metrics": None if self.metrics is None else self.metrics.as_dict(),
            "matrix": [self.matrix.row(j) for j in range(1, self.matrix.T + 1)
                       if self.matrix.is_complete(j)],
            "loss_traces": [asdict(t) for t in self.loss_traces],
            "wall_clock_seconds": self.wall_clock,
            "config": self.config,
            "artifacts": self.artifacts,
        }


def emit_learning_curve(matrix: AccuracyMatrix, path=None) -> list[tuple[int, float, float]]:
    """Rows ``(after_task, maa_so_far, aa_so_far)``; written as CSV when ``path`` is given."""
    matrix.require_complete()
    aa = running_average_accuracy(matrix)
    rows = [(j, float(np.mean(aa[:j])), aa[j - 1]) for j in range(1, matrix.T + 1)]
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["after_task", "maa_so_far", "aa_so_far"])
            for j, maa, a in rows:
                w.writerow([j, f"{maa:.6f}", f"{a:.6f}"])
    return rows


def _state_arrays(state: TrainState, buffer: RehearsalBuffer) -> dict[str, np.ndarray]:
    arrays = {}
    for l, a in enumerate(state.encoder.arrays()):
        arrays[f"encoder.{l // 2}.{'W' if l % 2 == 0 else 'b'}"] = a
    if state.predictor is not None:
        for l, a in enumerate(state.predictor.arrays()):
            arrays[f"predictor.{l // 2}.{'W' if l % 2 == 0 else 'b'}"] = a
    if state.codebook is not None:
        arrays["codebook"] = state.codebook.codewords
    arrays.update(buffer.to_arrays())
    return arrays


def load_stream(config: RunConfig) -> TaskStream:
    if config.stream_path:
        return load_external(config.stream_path)
    return generate_stream(config.stream)


def run_experiment(config: RunConfig, stream: TaskStream | None = None) -> RunSummary:
    t0 = time.perf_counter()
    stream = stream if stream is not None else load_stream(config)
    out = Path(config.out_dir) if config.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    state = TrainState.create(config, stream.input_dim)
    capacity = config.buffer_size if config.rehearsal_mode != "off" else 0
    buffer = RehearsalBuffer(capacity)
    matrix = AccuracyMatrix(stream.T)
    summary = RunSummary(matrix, None, [], 0.0, config.to_dict())

    try:
        for task in stream.tasks:
            tid = task.task_id
            summary.loss_traces.append(train_task(state, task.train_x, buffer, config))
            if capacity > 0:
                dist = sample_distances(state.features(task.train_x), state.codebook)
                buffer.add_task(tid, task.train_x, dist, mode=config.rehearsal_mode)
            row = evaluate_all_tasks(state.features, stream, tid, config.knn_k, config.knn_tau)
            matrix.set_row(tid, row)
            log.info("task %d/%d  row=%s", tid, stream.T, " ".join(f"{a:.3f}" for a in row))
        summary.metrics = compute_metrics(matrix)
    except Exception:
        summary.status = "failed"
        summary.wall_clock = time.perf_counter() - t0
        if out is not None:
            matrix.to_csv(out / "matrix.csv")
            (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2))
        raise

    summary.wall_clock = time.perf_counter() - t0
    if out is not None:
        summary.artifacts = {
            "matrix": str(matrix.to_csv(out / "matrix.csv")),
            "curve": str(out / "curve.csv"),
            "checkpoint": str(save_arrays(out / "checkpoint.bin", _state_arrays(state, buffer))),
            "summary": str(out / "summary.json"),
        }
        emit_learning_curve(matrix, out / "curve.csv")
        (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2))
    return summary


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **kw)
