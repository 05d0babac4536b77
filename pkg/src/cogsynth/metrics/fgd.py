from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray


def gaussian_stats(latents: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased, symmetrized covariance of ``(M, D)`` latents."""
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"gaussian_stats needs at least 2 samples of shape (M, D), got {x.shape}")
    mu = x.mean(axis=0)
    centred = x - mu
    cov = centred.T @ centred / (x.shape[0] - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T))


def _psd_sqrt(mat: np.ndarray, what: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    _check_psd(vals, what)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _check_psd(vals: np.ndarray, what: str) -> None:
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if vals.min() < -1e-6 * scale:
        raise ValueError(f"{what} is not positive semidefinite (eigenvalue {vals.min():.3g})")


def fgd(real, gen) -> float:
    """Frechet distance between two Gaussian fits (or raw ``(M, D)`` latents, fitted here).

    ``|mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r S_g)^(1/2))`` with the trace of
    the cross term taken from the eigenvalues of ``S_r^(1/2) S_g S_r^(1/2)``,
    which is symmetric and shares its spectrum with ``S_r S_g``.
    """
    real = real if isinstance(real, GaussianStats) else gaussian_stats(real)
    gen = gen if isinstance(gen, GaussianStats) else gaussian_stats(gen)
    if real.mean.shape != gen.mean.shape:
        raise ValueError(f"fgd: dimension mismatch {real.mean.shape} vs {gen.mean.shape}")
    root_r = _psd_sqrt(real.cov, "real covariance")
    _check_psd(np.linalg.eigvalsh(0.5 * (gen.cov + gen.cov.T)), "generated covariance")
    inner = root_r @ gen.cov @ root_r
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    _check_psd(vals, "covariance product")
    cross = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = real.mean - gen.mean
    return float(diff @ diff + np.trace(real.cov) + np.trace(gen.cov) - 2.0 * cross)
