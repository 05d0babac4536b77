"""Cascaded face -> body -> hand synthesizer with emotion/speaker style injection."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ParamStore, Tape, load_checkpoint, save_checkpoint
from .autodiff import ops as F
from .autodiff.layers import LSTM, MLP, TCN, Linear
from .dataio import BODY_DIM, HAND_DIM, N_EMOTIONS, POSE_DIM, Clip, GestureSequence, wrap_degrees
from .frontend import PADDING, AudioEncoder, EmotionSpeakerClassifier, LabelEmbedding, TextEncoder
from .objectives import RhythmHeads


@dataclass
class ModelConfig:
    audio_dim: int = 16
    text_dim: int = 8
    face_dim: int = 51
    n_speakers: int = 4
    latent: int = 128
    enc_hidden: int = 64
    embed_dim: int = 8
    style_dim: int = 64
    lstm_hidden: int = 256
    lstm_layers: int = 2
    mlp_hidden: int = 512
    kernel: int = 3
    attn_reduction: int = 4
    seed_frames: int = 4
    adaln_normalize: bool = True
    teacher_forcing: bool = False
    soft_labels: bool = False

    def validate(self) -> None:
        for k, v in asdict(self).items():
            if isinstance(v, int) and not isinstance(v, bool) and v < 1:
                raise ValueError(f"model.{k} must be >= 1, got {v}")
        if self.kernel % 2 == 0:
            raise ValueError("model.kernel must be odd")

    @property
    def fused_width(self) -> int:
        """Channels of the fused stream: audio, text, facial and seed-pose latents."""
        return 4 * self.latent


class ChannelAttention:
    """Per-channel sigmoid gate from time-averaged and time-maxed statistics through one shared MLP."""

    def __init__(self, store: ParamStore, name: str, channels: int, reduction: int = 4):
        self.channels = channels
        self.mlp = MLP(store, name, [channels, max(channels // reduction, 1), channels])

    def gate(self, p, x):
        return F.sigmoid(F.add(self.mlp(p, F.avg_pool_time(x)), self.mlp(p, F.max_pool_time(x))))

    def __call__(self, p, x):
        if x.shape[-1] != self.channels:
            raise ValueError(f"cw_attn: expected {self.channels} channels, got {x.shape[-1]}")
        return F.mul(x, self.gate(p, x))


class GestureAdaLN:
    """``f(S) * norm(X) + g(S)``; f starts at 1 and g at 0 so the layer begins as plain normalization."""

    def __init__(self, store: ParamStore, name: str, style_dim: int, channels: int, normalize: bool = True):
        self.normalize = normalize
        self.f = Linear(store, f"{name}.f", style_dim, channels, init="zeros")
        store[self.f.b] = np.ones(channels)
        self.g = Linear(store, f"{name}.g", style_dim, channels, init="zeros")

    def __call__(self, p, x, s):
        if x.shape[:-1] != s.shape[:-1]:
            raise ValueError(f"gesture_adaln: X {x.shape} and S {s.shape} are not frame-aligned")
        h = F.layer_norm(x) if self.normalize else x
        return F.add(F.mul(self.f(p, s), h), self.g(p, s))


@dataclass
class Normalizer:
    """Per-channel standardization statistics for model inputs and pose targets."""

    audio_mean: np.ndarray
    audio_std: np.ndarray
    text_mean: np.ndarray
    text_std: np.ndarray
    pose_mean: np.ndarray
    pose_std: np.ndarray

    @classmethod
    def identity(cls, cfg: ModelConfig) -> "Normalizer":
        z = np.zeros
        return cls(z(cfg.audio_dim), np.ones(cfg.audio_dim), z(cfg.text_dim), np.ones(cfg.text_dim),
                   z(POSE_DIM), np.ones(POSE_DIM))

    @classmethod
    def fit(cls, clips: list[Clip]) -> "Normalizer":
        def stats(x):
            x = x.reshape(-1, x.shape[-1])
            return x.mean(axis=0), np.maximum(x.std(axis=0), 1e-3)

        a = stats(np.stack([c.audio for c in clips]))
        t = stats(np.stack([c.text for c in clips]))
        p = stats(np.stack([c.pose for c in clips]))
        return cls(*a, *t, *p)

    def tensors(self) -> dict[str, np.ndarray]:
        return {f"stats.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_tensors(cls, t: dict) -> "Normalizer":
        return cls(**{k[len("stats."):]: v for k, v in t.items() if k.startswith("stats.")})


@dataclass
class Batch:
    """Normalized model inputs and targets, leading batch axis."""

    audio: np.ndarray
    text: np.ndarray
    seed: np.ndarray  # (B, T, 142): normalized seed poses plus a mask channel
    face: np.ndarray
    body: np.ndarray
    hands: np.ndarray
    emotion: np.ndarray
    speaker: np.ndarray
    raw_audio: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return self.audio.shape[0]


def seed_stream(seed_poses: np.ndarray, n_frames: int, norm: Normalizer, seed_frames: int) -> np.ndarray:
    """Place normalized seed poses on the first frames of a ``(.., T, 142)`` stream with a mask bit."""
    seed_poses = np.asarray(seed_poses, dtype=np.float64)
    lead = seed_poses.shape[:-2]
    k = seed_poses.shape[-2]
    if seed_poses.shape[-1] != POSE_DIM:
        raise ValueError(f"seed poses need {POSE_DIM} columns, got {seed_poses.shape[-1]}")
    if k != seed_frames or k > n_frames:
        raise ValueError(f"expected {seed_frames} seed frames within {n_frames} frames, got {k}")
    out = np.zeros(lead + (n_frames, POSE_DIM + 1))
    out[..., :k, :POSE_DIM] = (seed_poses - norm.pose_mean) / norm.pose_std
    out[..., :k, POSE_DIM] = 1.0
    return out


def make_batch(clips: list[Clip], norm: Normalizer, seed_frames: int = 4) -> Batch:
    audio = np.stack([c.audio for c in clips])
    pose = (np.stack([c.pose for c in clips]) - norm.pose_mean) / norm.pose_std
    return Batch(
        audio=(audio - norm.audio_mean) / norm.audio_std,
        text=(np.stack([c.text for c in clips]) - norm.text_mean) / norm.text_std,
        seed=seed_stream(np.stack([c.seed_poses for c in clips]), audio.shape[1], norm, seed_frames),
        face=np.stack([c.face for c in clips]),
        body=pose[..., :BODY_DIM],
        hands=pose[..., BODY_DIM:],
        emotion=np.array([c.emotion for c in clips]),
        speaker=np.array([c.speaker for c in clips]),
        raw_audio=audio,
    )


class CoGModel:
    """All trainable networks of the synthesizer plus the frozen classifier and data statistics."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, classifier: EmotionSpeakerClassifier | None = None,
                 norm: Normalizer | None = None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.classifier = classifier
        self.norm = norm or Normalizer.identity(cfg)
        s = self.store = ParamStore(seed)
        L, h, k = cfg.latent, cfg.enc_hidden, cfg.kernel
        self.audio_enc = AudioEncoder(s, cfg.audio_dim, h, L, kernel=k)
        self.text_enc = TextEncoder(s, cfg.text_dim, h, L, kernel=k)
        self.labels = LabelEmbedding(s, cfg.n_speakers, cfg.embed_dim)
        self.face_dec = TCN(s, "face_dec", [L, h, h, cfg.face_dim], k, padding=PADDING)
        self.tffd_net = TCN(s, "tffd", [cfg.face_dim, h, h, h, L], k, padding=PADDING)
        self.seed_enc = Linear(s, "seed_enc", POSE_DIM + 1, L)
        self.fuse_attn = ChannelAttention(s, "fuse_attn", cfg.fused_width, cfg.attn_reduction)
        self.hynet = TCN(s, "hynet", [2 * cfg.embed_dim, cfg.style_dim, cfg.style_dim], k, padding=PADDING)
        self.adaln = GestureAdaLN(s, "adaln", cfg.style_dim, cfg.fused_width, cfg.adaln_normalize)
        self.body_lstm = LSTM(s, "body_lstm", cfg.fused_width, cfg.lstm_hidden, cfg.lstm_layers)
        self.body_mlp = MLP(s, "body_mlp", [cfg.lstm_hidden, cfg.mlp_hidden, BODY_DIM])
        hand_in = cfg.fused_width + cfg.lstm_hidden
        self.hand_attn = ChannelAttention(s, "hand_attn", hand_in, cfg.attn_reduction)
        self.hand_lstm = LSTM(s, "hand_lstm", hand_in, cfg.lstm_hidden, cfg.lstm_layers)
        self.hand_mlp = MLP(s, "hand_mlp", [cfg.lstm_hidden, cfg.mlp_hidden, HAND_DIM])
        self.rhythm = RhythmHeads(s, L)

    # components -------------------------------------------------------------

    def face_generate(self, p, audio_lat):
        return F.sigmoid(self.face_dec(p, audio_lat))

    def tffd(self, p, face):
        return self.tffd_net(p, face)

    def style_vector(self, p, emo_emb, spk_emb):
        return self.hynet(p, F.concat([emo_emb, spk_emb]))

    def gesture_adaln(self, p, x, style):
        return self.adaln(p, x, style)

    def body_decode(self, p, fused):
        latent = self.body_lstm(p, fused)
        return latent, self.body_mlp(p, latent)

    def hand_decode(self, p, fused, body_latent):
        attended = self.hand_attn(p, F.concat([fused, body_latent]))
        latent = self.hand_lstm(p, attended)
        return latent, self.hand_mlp(p, latent)

    # chain ------------------------------------------------------------------

    def forward(self, tape: Tape, p, audio, text, seed, emotion=None, speaker=None, label_probs=None, face_gt=None):
        """Run the whole chain on normalized arrays; returns every intermediate tensor by name.

        Labels come either as hard indices (``emotion``, ``speaker``) or as a
        pair of probability arrays ``label_probs`` fed through the tables.
        """
        audio_t, text_t = tape.constant(audio), tape.constant(text)
        n_frames = audio_t.shape[-2]
        out = {"audio_lat": self.audio_enc(p, audio_t), "text_lat": self.text_enc(p, text_t)}
        out["face"] = self.face_generate(p, out["audio_lat"])
        face_in = tape.constant(face_gt) if (self.cfg.teacher_forcing and face_gt is not None) else out["face"]
        out["face_lat"] = self.tffd(p, face_in)
        out["seed_lat"] = self.seed_enc(p, tape.constant(seed))
        out["fused"] = self.fuse_attn(p, F.concat([out["audio_lat"], out["text_lat"], out["face_lat"], out["seed_lat"]]))
        if label_probs is not None:
            emo_emb, spk_emb = self.labels.soft(p, label_probs[0], label_probs[1], n_frames)
        else:
            emo_emb, spk_emb = self.labels(p, emotion, speaker, n_frames)
        out["style"] = self.style_vector(p, emo_emb, spk_emb)
        out["styled"] = self.gesture_adaln(p, out["fused"], out["style"])
        out["body_lat"], out["body"] = self.body_decode(p, out["styled"])
        out["hand_lat"], out["hands"] = self.hand_decode(p, out["styled"], out["body_lat"])
        return out

    def forward_batch(self, tape: Tape, p, batch: Batch):
        """Training-time pass with ground-truth labels."""
        return self.forward(tape, p, batch.audio, batch.text, batch.seed, batch.emotion, batch.speaker, face_gt=batch.face)

    # inference --------------------------------------------------------------

    def resolve_labels(self, raw_audio: np.ndarray, emotion=None, speaker=None, soft: bool | None = None):
        """Fill missing labels from the classifier; returns ``(emotion, speaker, probs_or_None)``."""
        soft = self.cfg.soft_labels if soft is None else soft
        b = raw_audio.shape[0]
        if emotion is not None and speaker is not None:
            return np.broadcast_to(emotion, (b,)).astype(int), np.broadcast_to(speaker, (b,)).astype(int), None
        if self.classifier is None:
            raise RuntimeError("labels not given and the model has no classifier to predict them")
        pred = self.classifier.classify(raw_audio)
        if not soft:
            emo = pred.emotion if emotion is None else np.broadcast_to(emotion, (b,)).astype(int)
            spk = pred.speaker if speaker is None else np.broadcast_to(speaker, (b,)).astype(int)
            return emo, spk, None
        emo_p = pred.emotion_probs if emotion is None else np.eye(N_EMOTIONS)[np.broadcast_to(emotion, (b,))]
        spk_p = pred.speaker_probs if speaker is None else np.eye(self.cfg.n_speakers)[np.broadcast_to(speaker, (b,))]
        return None, None, (emo_p, spk_p)

    def predict(self, audio, text, seed_poses, emotion=None, speaker=None, soft: bool | None = None) -> dict:
        """Batched inference on raw features ``(B, T, .)`` and seed poses ``(B, k, 141)``.

        Returns blendshapes plus denormalized, wrapped body and hand angles.
        """
        audio = np.asarray(audio, dtype=np.float64)
        text = np.asarray(text, dtype=np.float64)
        if audio.ndim != 3 or text.ndim != 3 or audio.shape[:2] != text.shape[:2]:
            raise ValueError(f"audio {audio.shape} and text {text.shape} must be (B, T, .) with equal B and T")
        emo, spk, probs = self.resolve_labels(audio, emotion, speaker, soft)
        n = self.norm
        seed = seed_stream(seed_poses, audio.shape[1], n, self.cfg.seed_frames)
        tape = Tape()
        out = self.forward(tape, tape.bind(self.store), (audio - n.audio_mean) / n.audio_std,
                           (text - n.text_mean) / n.text_std, seed, emo, spk, label_probs=probs)
        pose = np.concatenate([out["body"].data, out["hands"].data], axis=-1) * n.pose_std + n.pose_mean
        pose = wrap_degrees(pose)
        return {"face": out["face"].data, "body": pose[..., :BODY_DIM], "hands": pose[..., BODY_DIM:],
                "emotion": emo, "speaker": spk}

    # persistence ------------------------------------------------------------

    def tensors(self) -> dict[str, np.ndarray]:
        t = {f"model.{k}": v for k, v in self.store.items()}
        t.update(self.norm.tensors())
        if self.classifier is not None:
            t.update(self.classifier.tensors())
        return t

    def meta(self, **extra) -> dict:
        m = {"kind": "cog", "model": asdict(self.cfg), "seed": self.seed,
             "classifier": self.classifier.meta() if self.classifier else None}
        m.update(extra)
        return m

    def save(self, path, **extra) -> Path:
        return save_checkpoint(path, self.tensors(), self.meta(**extra))

    @classmethod
    def load(cls, path) -> "CoGModel":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "cog":
            raise ValueError(f"{path}: not a model checkpoint")
        clf = EmotionSpeakerClassifier.from_tensors(tensors, meta["classifier"]) if meta.get("classifier") else None
        model = cls(ModelConfig(**meta["model"]), meta.get("seed", 0), clf, Normalizer.from_tensors(tensors))
        model.store.load({k[len("model."):]: v for k, v in tensors.items() if k.startswith("model.")})
        model.meta_loaded = meta
        return model


def synthesize(model: CoGModel, audio_feat, text_feat, seed_poses, emotion=None, speaker=None,
               soft: bool | None = None) -> tuple[np.ndarray, GestureSequence]:
    """One clip: ``(T, F_a)``, ``(T, F_w)``, ``(k, 141)`` -> blendshapes ``(T, D_f)`` and gestures.

    Missing labels are predicted from the audio by the frozen classifier, so
    neither blendshapes nor emotion or speaker annotations are needed.
    """
    audio_feat, text_feat = np.asarray(audio_feat), np.asarray(text_feat)
    if audio_feat.ndim != 2 or text_feat.ndim != 2 or audio_feat.shape[0] != text_feat.shape[0]:
        raise ValueError(f"synthesize: audio {audio_feat.shape} and text {text_feat.shape} must be (T, .) of equal T")
    out = model.predict(audio_feat[None], text_feat[None], np.asarray(seed_poses)[None],
                        None if emotion is None else [emotion], None if speaker is None else [speaker], soft)
    return out["face"][0], GestureSequence(out["body"][0], out["hands"][0])
