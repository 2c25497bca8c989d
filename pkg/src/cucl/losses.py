"""Cross-quantized contrastive loss and the two backbone objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffmath as dm

BACKBONES = ("ntxent", "siamese")


@dataclass(frozen=True)
class LossConfig:
    tau_l: float = 0.5
    backbone: str = "siamese"
    literal_indicator: bool = False

    def __post_init__(self):
        if not self.tau_l > 0:
            raise ValueError("tau_l must be positive")
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")


def _batch_size(*arrays) -> int:
    shapes = {dm._val(a).shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 2:
        raise ValueError("expected 2-D batches")
    return shape[0]


def _cross_term(X, Z, tau_l: float, literal: bool):
    """Mean over anchors of -log p(positive) for anchors X against candidates Z."""
    B = dm._val(X).shape[0]
    logits = dm.scale(dm.cosine_matrix(X, Z), 1.0 / tau_l)
    eye = np.eye(B)
    if not literal:
        return dm.scale(dm.mean(dm.sum(dm.mul(dm.log_softmax_rows(logits), eye), axis=1)), -1.0)
    positive = dm.sum(dm.mul(logits, eye), axis=1)
    # logits are bounded by 1/tau_l, so shifting by it keeps exp() in range
    shift = 1.0 / tau_l
    others = dm.sum(dm.mul(dm.exp(dm.add(logits, -shift)), 1.0 - eye), axis=1)
    log_den = dm.add(dm.log(others), shift)
    return dm.mean(dm.sub(log_den, positive))


def cucl_loss(X_a, Z_b, X_b, Z_a, tau_l: float = 0.5, literal_indicator: bool = False):
    """Contrast each branch's representation with the other branch's quantized codes.

    Row ``i`` of ``X_a`` is pulled towards row ``i`` of ``Z_b`` and pushed away
    from every other row of ``Z_b``; likewise for ``X_b`` against ``Z_a``.  The
    two directions are averaged.  With ``literal_indicator`` the positive is
    removed from the denominator, which makes the loss unbounded below.
    """
    B = _batch_size(X_a, Z_b, X_b, Z_a)
    if B < 2:
        raise ValueError("cucl_loss needs at least two rows to form negatives")
    if not tau_l > 0:
        raise ValueError("tau_l must be positive")
    ab = _cross_term(X_a, Z_b, tau_l, literal_indicator)
    ba = _cross_term(X_b, Z_a, tau_l, literal_indicator)
    return dm.scale(dm.add(ab, ba), 0.5)


def ntxent_loss(X_a, X_b, tau_l: float = 0.5):
    """Normalized-temperature cross entropy over the 2B views of a batch."""
    B = _batch_size(X_a, X_b)
    if B < 2:
        raise ValueError("ntxent_loss needs at least two rows")
    H = dm.concat_rows([X_a, X_b])
    logits = dm.scale(dm.cosine_matrix(H, H), 1.0 / tau_l)
    n = 2 * B
    not_self = 1.0 - np.eye(n)
    pos_mask = np.zeros((n, n))
    pos_mask[np.arange(B), np.arange(B) + B] = 1.0
    pos_mask[np.arange(B) + B, np.arange(B)] = 1.0
    shift = 1.0 / tau_l
    den = dm.sum(dm.mul(dm.exp(dm.add(logits, -shift)), not_self), axis=1)
    log_den = dm.add(dm.log(den), shift)
    positive = dm.sum(dm.mul(logits, pos_mask), axis=1)
    return dm.mean(dm.sub(log_den, positive))


def siamese_stopgrad_loss(p_a, z_a, p_b, z_b):
    """Symmetric negative cosine between predictions and detached targets."""
    _batch_size(p_a, z_a, p_b, z_b)
    left = dm.mean(dm.rowwise_cosine(p_a, dm.detach(z_b)))
    right = dm.mean(dm.rowwise_cosine(p_b, dm.detach(z_a)))
    return dm.scale(dm.add(left, right), -0.5)


def total_loss(l_unsup, l_cucl):
    for name, term in (("l_unsup", l_unsup), ("l_cucl", l_cucl)):
        if not np.all(np.isfinite(dm._val(term))):
            raise ValueError(f"{name} is not finite")
    return dm.add(l_unsup, l_cucl)
