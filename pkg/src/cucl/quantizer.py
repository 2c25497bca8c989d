"""Product quantization with temperature-softened codeword assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import diffmath as dm


@dataclass(frozen=True)
class QuantizerConfig:
    M: int = 8
    K: int = 8
    sub_dim: int = 16
    tau_q: float = 5.0

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.sub_dim < 1:
            raise ValueError("M, K and sub_dim must be >= 1")
        if not self.tau_q > 0:
            raise ValueError("tau_q must be positive")

    @property
    def dim(self) -> int:
        return self.M * self.sub_dim

    @property
    def bits(self) -> float:
        return self.M * float(np.log2(self.K))


@dataclass
class Codebook:
    """``M`` codebooks of ``K`` codewords each, stored as an (M, K, sub_dim) array."""

    codewords: np.ndarray

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=np.float64)
        if self.codewords.ndim != 3:
            raise ValueError("codewords must have shape (M, K, sub_dim)")
        if not np.all(np.isfinite(self.codewords)):
            raise ValueError("codewords must be finite")

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    @property
    def K(self) -> int:
        return self.codewords.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.codewords.shape[2]

    @property
    def dim(self) -> int:
        return self.M * self.sub_dim

    @classmethod
    def initialize(cls, config: QuantizerConfig, X: np.ndarray, rng: np.random.Generator) -> "Codebook":
        """Gaussian codewords scaled to the spread of each subvector slot in ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != config.dim:
            raise ValueError(f"expected (B, {config.dim}) batch, got {X.shape}")
        subs = X.reshape(X.shape[0], config.M, config.sub_dim)
        scales = subs.std(axis=(0, 2))
        scales = np.where(scales > 0, scales, 1.0)
        noise = rng.standard_normal((config.M, config.K, config.sub_dim))
        book = cls(noise * scales[:, None, None])
        book.check_distinct()
        return book

    def check_distinct(self):
        for i in range(self.M):
            if len(np.unique(self.codewords[i], axis=0)) != self.K:
                raise ValueError(f"codebook {i} has duplicate codewords")

    def split(self) -> list[np.ndarray]:
        return [self.codewords[i] for i in range(self.M)]


def split(x: np.ndarray, M: int) -> list[np.ndarray]:
    """Cut ``x`` (a D-vector) into ``M`` contiguous subvectors of length D/M."""
    x = np.asarray(x, dtype=np.float64)
    D = x.shape[-1]
    if M < 1 or D % M:
        raise ValueError(f"dimension {D} is not divisible by {M}")
    s = D // M
    return [x[..., i * s:(i + 1) * s] for i in range(M)]


def codeword_distance(x, c) -> float:
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {c.shape}")
    return float(((x - c) ** 2).sum())


def soft_assign(x, codebook_i, tau_q: float) -> np.ndarray:
    """Softmax over negative codeword distances scaled by ``1/tau_q``."""
    if not tau_q > 0:
        raise ValueError("tau_q must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    C = np.asarray(codebook_i, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    d = dm.sqdist(x[None, :], C)
    return dm.softmax_rows(d * (-1.0 / tau_q))[0]


def _flat_codewords(codebook, M: int | None):
    """Return ``(C, M)`` with ``C`` of shape (M*K, s), slot-major."""
    if isinstance(codebook, Codebook):
        return codebook.codewords.reshape(-1, codebook.sub_dim), codebook.M
    if isinstance(codebook, np.ndarray) and codebook.ndim == 3:
        return codebook.reshape(-1, codebook.shape[2]), codebook.shape[0]
    if M is None:
        raise ValueError("M is required when passing flat (M*K, s) codewords")
    return codebook, M


def soft_quantize(X, codebook, tau_q: float, M: int | None = None):
    """Replace each subvector by the distance-softmax mix of its codewords.

    ``codebook`` may be a :class:`Codebook`, an (M, K, s) array, or flat (M*K, s)
    codewords (array or ``Var``, slot-major) together with ``M``; pass a ``Var``
    to get gradients for the codewords.

    All slots are handled at once through a block-diagonal (D, M*K) codeword
    matrix whose block ``i`` holds codebook ``i`` transposed.
    """
    if not tau_q > 0:
        raise ValueError("tau_q must be positive")
    C, M = _flat_codewords(codebook, M)
    MK, s = dm._val(C).shape
    N, D = dm._val(X).shape
    if M * s != D or MK % M:
        raise ValueError(f"codebook covers {M * s} dims, representation has {D}")
    K = MK // M
    mask = np.kron(np.eye(M), np.ones((s, K)))
    blocks = dm.mul(dm.concat_rows([dm.transpose(C)] * M), mask)
    # |x_i|^2 is constant across the K codewords of slot i, so the softmax
    # ignores it; only |c|^2 - 2 x.c is needed
    c_sq = dm.sum(dm.mul(C, C), axis=1)
    dist = dm.sub(dm.matmul(X, blocks), dm.scale(c_sq, 0.5))
    logits = dm.reshape(dm.scale(dist, 2.0 / tau_q), (N * M, K))
    weights = dm.reshape(dm.softmax_rows(logits), (N, MK))
    return dm.matmul(weights, dm.transpose(blocks))


def assignment_weights(X, codebook: Codebook, tau_q: float) -> np.ndarray:
    """Soft weights for every row and slot, shape (B, M, K)."""
    X = np.asarray(X, dtype=np.float64)
    s = codebook.sub_dim
    out = [dm.softmax_rows(dm.sqdist(X[:, i * s:(i + 1) * s], codebook.codewords[i]) * (-1.0 / tau_q))
           for i in range(codebook.M)]
    return np.stack(out, axis=1)


def slot_distances(X, codebook: Codebook) -> np.ndarray:
    """Squared distance of every subvector to every codeword, shape (B, M, K)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != codebook.dim:
        raise ValueError(f"expected (B, {codebook.dim}) batch, got {X.shape}")
    s = codebook.sub_dim
    out = np.empty((X.shape[0], codebook.M, codebook.K))
    for i in range(codebook.M):
        # explicit differences, not the expansion, so distances match a brute-force scan exactly
        diff = X[:, None, i * s:(i + 1) * s] - codebook.codewords[i][None, :, :]
        out[:, i, :] = (diff ** 2).sum(axis=-1)
    return out


def hard_quantize(X, codebook: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest codeword per subvector; ties go to the lowest index."""
    d = slot_distances(X, codebook)
    idx = d.argmin(axis=2)
    Z = np.concatenate([codebook.codewords[i][idx[:, i]] for i in range(codebook.M)], axis=1)
    return Z, idx
