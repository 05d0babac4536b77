"""Motion autoencoder whose time-pooled latent feeds the Frechet distance."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..autodiff import AdamState, ParamStore, Tape, adam_step, load_checkpoint, save_checkpoint
from ..autodiff import ops as F
from ..autodiff.layers import TCN


class PoseEmbedder:
    def __init__(self, pose_dim: int = 141, latent: int = 32, hidden: int = 64, seed: int = 0):
        self.pose_dim, self.latent, self.hidden = pose_dim, latent, hidden
        self.store = ParamStore(seed)
        self.encoder = TCN(self.store, "enc", [pose_dim, hidden, latent])
        self.decoder = TCN(self.store, "dec", [latent, hidden, pose_dim])
        self.mean = np.zeros(pose_dim)
        self.std = np.ones(pose_dim)
        self.losses: list[float] = []

    def _norm(self, poses):
        return (np.asarray(poses, dtype=np.float64) - self.mean) / self.std

    def _recon_loss(self, tape, p, x):
        z = self.encoder(p, x)
        return F.mse(self.decoder(p, z), x)

    def fit(self, poses: np.ndarray, steps: int = 300, batch_size: int = 16, lr: float = 2e-3, seed: int = 0) -> "PoseEmbedder":
        """Train on ground-truth clips ``(M, T, pose_dim)``, then freeze."""
        poses = np.asarray(poses, dtype=np.float64)
        if poses.ndim != 3 or poses.shape[0] < 2:
            raise ValueError(f"embedder needs >= 2 clips shaped (M, T, D), got {poses.shape}")
        self.mean = poses.reshape(-1, self.pose_dim).mean(axis=0)
        self.std = np.maximum(poses.reshape(-1, self.pose_dim).std(axis=0), 1e-3)
        data = self._norm(poses)
        rng = np.random.default_rng(seed)
        state = AdamState(lr=lr)
        for _ in range(steps):
            idx = rng.choice(len(data), size=min(batch_size, len(data)), replace=False)
            tape = Tape()
            p = tape.bind(self.store)
            loss = self._recon_loss(tape, p, tape.constant(data[idx]))
            self.losses.append(float(loss.data))
            adam_step(self.store, tape.backward(loss), state)
        self.store.freeze()
        return self

    def reconstruction_loss(self, poses: np.ndarray) -> float:
        tape = Tape()
        return float(self._recon_loss(tape, tape.bind(self.store), tape.constant(self._norm(poses))).data)

    def embed(self, poses: np.ndarray) -> np.ndarray:
        """(M, T, D) clips -> (M, latent), mean-pooled over time."""
        tape = Tape()
        z = self.encoder(tape.bind(self.store), tape.constant(self._norm(poses)))
        return z.data.mean(axis=-2)

    def save(self, path) -> Path:
        tensors = {f"embedder.{k}": v for k, v in self.store.items()}
        tensors["stats.mean"], tensors["stats.std"] = self.mean, self.std
        meta = {"kind": "embedder", "pose_dim": self.pose_dim, "latent": self.latent, "hidden": self.hidden, "frozen": True}
        return save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "PoseEmbedder":
        tensors, meta = load_checkpoint(path)
        emb = cls(meta["pose_dim"], meta["latent"], meta["hidden"])
        emb.store.load({k[len("embedder.") :]: v for k, v in tensors.items() if k.startswith("embedder.")})
        emb.store.freeze()
        emb.mean, emb.std = tensors["stats.mean"], tensors["stats.std"]
        return emb
