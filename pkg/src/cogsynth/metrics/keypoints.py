from __future__ import annotations

import numpy as np


def srgr(gen: np.ndarray, gt: np.ndarray, weights: np.ndarray | None = None, delta: float = 5.0) -> float:
    """Semantically weighted fraction of joints within ``delta`` of ground truth.

    ``gen`` and ``gt`` are (T, J, 3) Euler triples; per-frame ``weights`` are
    rescaled to mean 1 so the score stays in [0, 1].
    """
    gen = np.asarray(gen, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if gen.shape != gt.shape or gen.ndim != 3:
        raise ValueError(f"srgr: shapes {gen.shape} and {gt.shape} must match as (T, J, 3)")
    if delta <= 0:
        raise ValueError("srgr: delta must be positive")
    t_len = gen.shape[0]
    w = np.ones(t_len) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (t_len,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("srgr: weights must be (T,), non-negative, not all zero")
    w = w / w.mean()
    hit = np.linalg.norm(gen - gt, axis=2) < delta
    return float(np.mean(w * hit.mean(axis=1)))
