"""Training losses: rhythmic InfoNCE, blendshape MSE, pose L1 and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore, Tensor
from .autodiff import ops as F
from .autodiff.layers import Linear


@dataclass
class LossWeights:
    lambda_rhy: float = 1.0
    lambda_mse: float = 1000.0
    lambda_rec: float = 500.0
    alpha: float = 1.0
    tau: float = 0.1

    def validate(self) -> None:
        for name in ("lambda_rhy", "lambda_mse", "lambda_rec", "alpha"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


class RhythmHeads:
    """Linear projections applied to facial features (f) and audio latents (g)."""

    def __init__(self, store: ParamStore, width: int, name: str = "rhythm"):
        self.f = Linear(store, f"{name}.f", width, width)
        self.g = Linear(store, f"{name}.g", width, width)

    def __call__(self, p, face_feat, audio_feat):
        return self.f(p, face_feat), self.g(p, audio_feat)


def info_nce(zf: Tensor, za: Tensor, tau: float) -> Tensor:
    """Frame-level InfoNCE over ``(..., N, D)``: frame ``i`` of ``zf`` should match frame ``i`` of ``za``."""
    if zf.shape != za.shape:
        raise ValueError(f"rhythmic_loss: shapes {zf.shape} and {za.shape} differ")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    n = zf.shape[-2]
    logits = F.scale(F.cosine_similarity(zf, za), 1.0 / tau)
    targets = np.broadcast_to(np.arange(n), zf.shape[:-1])
    return F.cross_entropy(logits, targets)


def rhythmic_loss(face_feat: Tensor, audio_feat: Tensor, heads: RhythmHeads, p, tau: float = 0.1) -> Tensor:
    zf, za = heads(p, face_feat, audio_feat)
    return info_nce(zf, za, tau)


def face_mse(pred: Tensor, target: Tensor) -> Tensor:
    return F.mse(pred, target)


def recon_l1(body_pred, body_gt, hand_pred, hand_gt, alpha: float = 1.0):
    """Returns ``(total, body_term, hand_term)``; ``total = body + alpha * hand``."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    lb = F.l1(body_pred, body_gt)
    lh = F.l1(hand_pred, hand_gt)
    if alpha == 0:
        return F.identity(lb), lb, lh
    return F.weighted_sum([lb, lh], [1.0, alpha]), lb, lh


def total_loss(l_rhy: Tensor, l_mse: Tensor, l_rec: Tensor, weights: LossWeights) -> Tensor:
    return F.weighted_sum([l_rhy, l_mse, l_rec], [weights.lambda_rhy, weights.lambda_mse, weights.lambda_rec])
