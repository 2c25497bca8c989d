"""Feedforward encoder, predictor head and vector augmentations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffmath as dm


@dataclass(frozen=True)
class AugmentationConfig:
    noise_sigma: float = 0.3
    mask_prob: float = 0.2
    scale_range: tuple[float, float] = (0.8, 1.2)

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.mask_prob < 1:
            raise ValueError("mask_prob must lie in [0, 1)")
        lo, hi = self.scale_range
        if lo > hi:
            raise ValueError("scale_range must be an interval (lo <= hi)")


def augment(sample, config: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    """One distorted view: ``mask * (scale * (sample + noise))``."""
    return augment_batch(np.asarray(sample, dtype=np.float64)[None, :], config, rng)[0]


def augment_batch(batch, config: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    B = batch.shape[0]
    noise = rng.standard_normal(batch.shape) * config.noise_sigma
    lo, hi = config.scale_range
    scale = rng.uniform(lo, hi, size=(B, 1)) if hi > lo else np.full((B, 1), lo)
    keep = (rng.random(batch.shape) >= config.mask_prob).astype(np.float64)
    return keep * (scale * (batch + noise))


@dataclass
class MLPParams:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``.

    The nonlinearity (tanh) sits between layers; the last layer is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator) -> "MLPParams":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            ws.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, sizes: list[int]) -> "MLPParams":
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list, interleaved ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MLPParams":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


# The encoder F and the siamese predictor share one representation.
EncoderParams = MLPParams


def init_encoder(input_dim: int, rng: np.random.Generator, hidden: int = 256,
                 depth: int = 2, out_dim: int = 128) -> EncoderParams:
    return MLPParams.init([input_dim] + [hidden] * depth + [out_dim], rng)


def init_predictor(dim: int, rng: np.random.Generator, hidden: int = 64) -> MLPParams:
    return MLPParams.init([dim, hidden, dim], rng)


def mlp_forward(x, arrays):
    """Run the MLP given its flat ``[W0, b0, ...]`` list (arrays or ``Var``)."""
    h = x
    n = len(arrays) // 2
    for layer in range(n):
        h = dm.add(dm.matmul(h, arrays[2 * layer]), arrays[2 * layer + 1])
        if layer < n - 1:
            h = dm.tanh(h)
    return h


def encode(batch, params: EncoderParams) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    if batch.shape[1] != params.in_dim:
        raise ValueError(f"batch has {batch.shape[1]} features, encoder expects {params.in_dim}")
    if not np.all(np.isfinite(batch)):
        raise ValueError("batch contains non-finite values")
    return mlp_forward(batch, params.arrays())
