"""Trainable speech front-ends and the frozen emotion / speaker classifier."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import AdamState, ParamStore, Tape, adam_step, load_checkpoint, save_checkpoint
from .autodiff import ops as F
from .autodiff.layers import TCN, Linear, ResidualTCN
from .dataio import N_EMOTIONS

# replicate boundary frames so a time-constant input yields a time-constant output
PADDING = "edge"


class AudioEncoder:
    """4-layer TCN and a bias-free projection to the latent width."""

    def __init__(self, store: ParamStore, audio_dim: int, hidden: int, latent: int, n_layers: int = 4, kernel: int = 3):
        self.audio_dim = audio_dim
        self.tcn = TCN(store, "audio_enc.tcn", [audio_dim] + [hidden] * n_layers, kernel, True, PADDING)
        self.proj = Linear(store, "audio_enc.proj", hidden, latent, bias=False)

    def __call__(self, p, audio):
        if audio.shape[-1] != self.audio_dim:
            raise ValueError(f"encode_audio: expected {self.audio_dim} features, got {audio.shape[-1]}")
        return self.proj(p, self.tcn(p, audio))


class TextEncoder:
    def __init__(self, store: ParamStore, text_dim: int, hidden: int, latent: int, n_layers: int = 8, kernel: int = 3):
        self.text_dim = text_dim
        self.net = ResidualTCN(store, "text_enc", text_dim, hidden, latent, n_layers, kernel, PADDING)

    def __call__(self, p, text):
        if text.shape[-1] != self.text_dim:
            raise ValueError(f"encode_text: expected {self.text_dim} features, got {text.shape[-1]}")
        return self.net(p, text)


class LabelEmbedding:
    def __init__(self, store: ParamStore, n_speakers: int, dim: int = 8):
        self.n_speakers = n_speakers
        self.emotion = store.add("emb.emotion", (N_EMOTIONS, dim), "normal")
        self.speaker = store.add("emb.speaker", (n_speakers, dim), "normal")

    def __call__(self, p, emotion, speaker, n_frames: int):
        """Hard labels (B,) -> per-frame embeddings (E, I), each (B, T, dim)."""
        emotion, speaker = np.atleast_1d(emotion), np.atleast_1d(speaker)
        if np.any((emotion < 0) | (emotion >= N_EMOTIONS)):
            raise ValueError(f"emotion label outside 0..{N_EMOTIONS - 1}: {emotion}")
        if np.any((speaker < 0) | (speaker >= self.n_speakers)):
            raise ValueError(f"speaker label outside 0..{self.n_speakers - 1}: {speaker}")
        e_idx = np.repeat(emotion.astype(int)[:, None], n_frames, axis=1)
        s_idx = np.repeat(speaker.astype(int)[:, None], n_frames, axis=1)
        return F.embed(p[self.emotion], e_idx), F.embed(p[self.speaker], s_idx)

    def soft(self, p, emotion_probs, speaker_probs, n_frames: int):
        """Probability-weighted table rows, broadcast over time."""
        tape = p[self.emotion].tape
        rows_e = F.stack_time([F.linear(tape.constant(emotion_probs), p[self.emotion])])
        rows_s = F.stack_time([F.linear(tape.constant(speaker_probs), p[self.speaker])])
        b = np.shape(emotion_probs)[0]
        zeros = tape.constant(np.zeros((b, n_frames, rows_e.shape[-1])))
        return F.add(zeros, rows_e), F.add(zeros, rows_s)


@dataclass
class ClassifierOutput:
    emotion_probs: np.ndarray
    speaker_probs: np.ndarray

    @property
    def emotion(self) -> np.ndarray:
        return self.emotion_probs.argmax(axis=-1)

    @property
    def speaker(self) -> np.ndarray:
        return self.speaker_probs.argmax(axis=-1)


class EmotionSpeakerClassifier:
    """3-layer TCN trunk, temporal mean pooling, emotion and speaker heads."""

    def __init__(self, audio_dim: int, n_speakers: int, hidden: int = 64, kernel: int = 3, seed: int = 0):
        self.audio_dim, self.n_speakers, self.hidden, self.kernel = audio_dim, n_speakers, hidden, kernel
        self.store = ParamStore(seed)
        self.trunk = TCN(self.store, "cls.trunk", [audio_dim, hidden, hidden, hidden], kernel, True, PADDING)
        self.emo_head = Linear(self.store, "cls.emotion", hidden, N_EMOTIONS)
        self.spk_head = Linear(self.store, "cls.speaker", hidden, n_speakers)
        self.audio_mean = np.zeros(audio_dim)
        self.audio_std = np.ones(audio_dim)
        self.losses: list[float] = []

    @property
    def frozen(self) -> bool:
        return len(self.store) > 0 and set(self.store) <= self.store.frozen

    def normalize(self, audio):
        return (np.asarray(audio, dtype=np.float64) - self.audio_mean) / self.audio_std

    def logits(self, p, audio):
        if audio.shape[-1] != self.audio_dim:
            raise ValueError(f"classify: expected {self.audio_dim} features, got {audio.shape[-1]}")
        pooled = F.select_time(F.avg_pool_time(self.trunk(p, audio)), 0)
        return self.emo_head(p, pooled), self.spk_head(p, pooled)

    def classify(self, audio: np.ndarray) -> ClassifierOutput:
        """Raw audio features (T, F_a) or (B, T, F_a) -> per-head probabilities."""
        tape = Tape()
        emo, spk = self.logits(tape.bind(self.store), tape.constant(self.normalize(audio)))
        return ClassifierOutput(F.softmax(emo).data, F.softmax(spk).data)

    def loss(self, p, tape, audio_norm, emotion, speaker):
        emo, spk = self.logits(p, tape.constant(audio_norm))
        return F.weighted_sum([F.cross_entropy(emo, emotion), F.cross_entropy(spk, speaker)], [1.0, 1.0])

    def fit(self, audio: np.ndarray, emotion: np.ndarray, speaker: np.ndarray, steps: int = 200,
            batch_size: int = 16, lr: float = 1e-3, seed: int = 0) -> "EmotionSpeakerClassifier":
        """Minimize emotion CE + speaker CE on clips ``(M, T, F_a)``, then freeze."""
        if self.frozen:
            raise RuntimeError("classifier is frozen")
        audio = np.asarray(audio, dtype=np.float64)
        if audio.ndim != 3 or audio.shape[0] == 0:
            raise ValueError("train_classifier: empty dataset")
        flat = audio.reshape(-1, audio.shape[-1])
        self.audio_mean, self.audio_std = flat.mean(axis=0), np.maximum(flat.std(axis=0), 1e-6)
        data = self.normalize(audio)
        emotion, speaker = np.asarray(emotion, dtype=int), np.asarray(speaker, dtype=int)
        rng = np.random.default_rng(seed)
        state = AdamState(lr=lr)
        for _ in range(steps):
            idx = rng.choice(len(data), size=min(batch_size, len(data)), replace=False)
            tape = Tape()
            loss = self.loss(tape.bind(self.store), tape, data[idx], emotion[idx], speaker[idx])
            self.losses.append(float(loss.data))
            adam_step(self.store, tape.backward(loss), state)
        self.store.freeze()
        return self

    def dataset_loss(self, audio, emotion, speaker) -> float:
        tape = Tape()
        loss = self.loss(tape.bind(self.store), tape, self.normalize(audio), np.asarray(emotion), np.asarray(speaker))
        return float(loss.data)

    def accuracy(self, audio, emotion, speaker) -> tuple[float, float]:
        out = self.classify(audio)
        return float(np.mean(out.emotion == np.asarray(emotion))), float(np.mean(out.speaker == np.asarray(speaker)))

    # checkpoint ------------------------------------------------------------

    def tensors(self) -> dict[str, np.ndarray]:
        t = dict(self.store.items())
        t["cls.stats.audio_mean"], t["cls.stats.audio_std"] = self.audio_mean, self.audio_std
        return t

    def meta(self) -> dict:
        return {"kind": "classifier", "audio_dim": self.audio_dim, "n_speakers": self.n_speakers,
                "hidden": self.hidden, "kernel": self.kernel, "frozen": self.frozen}

    def save(self, path) -> Path:
        return save_checkpoint(path, self.tensors(), self.meta())

    @classmethod
    def from_tensors(cls, tensors: dict, meta: dict) -> "EmotionSpeakerClassifier":
        clf = cls(meta["audio_dim"], meta["n_speakers"], meta["hidden"], meta["kernel"])
        clf.store.load({k: v for k, v in tensors.items() if k.startswith("cls.") and not k.startswith("cls.stats.")})
        clf.audio_mean, clf.audio_std = tensors["cls.stats.audio_mean"], tensors["cls.stats.audio_std"]
        if meta.get("frozen"):
            clf.store.freeze()
        return clf

    @classmethod
    def load(cls, path) -> "EmotionSpeakerClassifier":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path}: not a classifier checkpoint")
        return cls.from_tensors(tensors, meta)
