"""Training schedules (classifier, then full model), evaluation and the loss-weight sweep."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, Tape, adam_step
from .cascade import Batch, CoGModel, Normalizer, make_batch
from .config import RunConfig
from .dataio import Clip, SequenceRecord, load_dataset, window_clips
from .frontend import EmotionSpeakerClassifier
from .metrics import PoseEmbedder, beat_align, extract_beats, fgd, srgr
from .objectives import LossWeights, face_mse, recon_l1, rhythmic_loss, total_loss
from .synthetic import gen_synthetic

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "l_rhy", "l_mse", "l_rec_b", "l_rec_h", "total")


# ------------------------------------------------------------------- data


def load_records(cfg: RunConfig) -> tuple[list[SequenceRecord], list[SequenceRecord]]:
    """Training and evaluation sequences: from manifests, or two independent synthetic draws."""
    d = cfg.data
    if d.manifest is not None:
        train = load_dataset(d.manifest)
        if d.eval_manifest is not None:
            return train, load_dataset(d.eval_manifest)
        if len(train) < 2:
            return train, train
        n_eval = max(1, len(train) // 4)
        return train[:-n_eval], train[-n_eval:]
    syn = d.synthetic
    held_out = dataclasses.replace(syn, rng_seed=syn.rng_seed + 10_000, n_sequences=d.eval_sequences)
    return gen_synthetic(syn), gen_synthetic(held_out)


def clips_of(cfg: RunConfig, records: list[SequenceRecord]) -> list[Clip]:
    clips = window_clips(records, cfg.data.clip_frames, cfg.data.stride, cfg.data.seed_frames)
    if not clips:
        raise ValueError(f"no {cfg.data.clip_frames}-frame clips could be cut from {len(records)} sequences")
    return clips


# ------------------------------------------------------------- classifier


def train_classifier(cfg: RunConfig, clips: list[Clip]) -> EmotionSpeakerClassifier:
    if not clips:
        raise ValueError("train_classifier: empty dataset")
    c = cfg.classifier
    clf = EmotionSpeakerClassifier(cfg.model.audio_dim, cfg.model.n_speakers, c.hidden, cfg.model.kernel, seed=cfg.seed)
    audio = np.stack([x.audio for x in clips])
    emotion = np.array([x.emotion for x in clips])
    speaker = np.array([x.speaker for x in clips])
    return clf.fit(audio, emotion, speaker, c.steps, c.batch_size, c.lr, seed=cfg.seed)


# ------------------------------------------------------------ full model


def compute_losses(model: CoGModel, tape: Tape, p, batch: Batch, weights: LossWeights) -> dict:
    out = model.forward_batch(tape, p, batch)
    l_rhy = rhythmic_loss(out["face_lat"], out["audio_lat"], model.rhythm, p, weights.tau)
    l_mse = face_mse(out["face"], tape.constant(batch.face))
    l_rec, l_b, l_h = recon_l1(out["body"], tape.constant(batch.body), out["hands"], tape.constant(batch.hands), weights.alpha)
    return {"l_rhy": l_rhy, "l_mse": l_mse, "l_rec": l_rec, "l_rec_b": l_b, "l_rec_h": l_h,
            "total": total_loss(l_rhy, l_mse, l_rec, weights), "out": out}


@dataclass
class TrainResult:
    model: CoGModel
    log: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    checkpoints: list[str] = field(default_factory=list)

    @property
    def totals(self) -> np.ndarray:
        return np.array([row["total"] for row in self.log])


def build_model(cfg: RunConfig, classifier: EmotionSpeakerClassifier | None, clips: list[Clip]) -> CoGModel:
    return CoGModel(cfg.model, seed=cfg.seed, classifier=classifier, norm=Normalizer.fit(clips))


def train_model(cfg: RunConfig, classifier: EmotionSpeakerClassifier, clips: list[Clip], steps: int | None = None,
                weights: LossWeights | None = None, out_dir=None) -> TrainResult:
    """Adam on the weighted objective over random clip batches, ground-truth labels.

    Stops after ``steps`` or once the total loss has not improved by more than
    ``optim.tolerance`` for ``optim.patience`` consecutive steps.
    """
    if classifier is None or not classifier.frozen:
        raise RuntimeError("a frozen emotion/speaker classifier is required; run train-classifier first")
    if not clips:
        raise ValueError("train: empty dataset")
    o = cfg.optim
    weights = weights or cfg.loss
    steps = steps or o.steps
    model = build_model(cfg, classifier, clips)
    data = make_batch(clips, model.norm, cfg.model.seed_frames)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    result = TrainResult(model)
    best, since_best = np.inf, 0
    for step in range(steps):
        idx = np.sort(rng.choice(len(data), size=min(o.batch_size, len(data)), replace=False))
        batch = Batch(*(getattr(data, f.name)[idx] for f in dataclasses.fields(Batch)))
        tape = Tape()
        losses = compute_losses(model, tape, tape.bind(model.store), batch, weights)
        row = {"step": step, **{k: float(losses[k].data) for k in LOG_COLUMNS[1:]}}
        if not np.isfinite(row["total"]):
            raise FloatingPointError(f"non-finite loss at step {step}: {row}")
        result.log.append(row)
        adam_step(model.store, tape.backward(losses["total"]), state)
        if o.checkpoint_every and out_dir is not None and (step + 1) % o.checkpoint_every == 0:
            result.checkpoints.append(str(model.save(Path(out_dir) / f"model_step{step + 1}.ckpt", step=step + 1)))
        if row["total"] < best - o.tolerance:
            best, since_best = row["total"], 0
        else:
            since_best += 1
            if since_best >= o.patience:
                result.stopped_early = True
                log.info("early stop at step %d", step)
                break
    return result


def write_log(rows: list[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r["step"]] + [repr(r[k]) for k in LOG_COLUMNS[1:]])
    return path


def read_log(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


# ------------------------------------------------------------- evaluation


def fit_embedder(cfg: RunConfig, clips: list[Clip]) -> PoseEmbedder:
    e = cfg.eval
    emb = PoseEmbedder(latent=e.embedder_latent, hidden=e.embedder_hidden, seed=cfg.seed)
    return emb.fit(np.stack([c.pose for c in clips]), e.embedder_steps, lr=e.embedder_lr, seed=cfg.seed)


def generate(model: CoGModel, clips: list[Clip], use_classifier: bool = True) -> dict:
    audio = np.stack([c.audio for c in clips])
    text = np.stack([c.text for c in clips])
    seeds = np.stack([c.seed_poses for c in clips])
    if use_classifier:
        return model.predict(audio, text, seeds)
    return model.predict(audio, text, seeds, np.array([c.emotion for c in clips]), np.array([c.speaker for c in clips]))


def score(gen_pose: np.ndarray, clips: list[Clip], embedder: PoseEmbedder, delta: float = 5.0, sigma: float = 0.2) -> dict:
    """FGD, SRGR and BeatAlign of generated poses ``(M, T, 141)`` against the clips' ground truth."""
    gt_pose = np.stack([c.pose for c in clips])
    report = {"fgd": fgd(embedder.embed(gt_pose), embedder.embed(gen_pose))}
    t, j = gt_pose.shape[1], gt_pose.shape[2] // 3
    report["srgr"] = float(np.mean([srgr(g.reshape(t, j, 3), c.pose.reshape(t, j, 3), c.weights, delta)
                                    for g, c in zip(gen_pose, clips)]))
    aligns = []
    for g, c in zip(gen_pose, clips):
        a_beats = extract_beats(c.audio[:, 0], c.frame_rate, "audio_onset")
        if a_beats.size:
            aligns.append(beat_align(a_beats, extract_beats(g, c.frame_rate, "gesture_kinematic"), sigma))
    report["beat_align"] = float(np.mean(aligns)) if aligns else float("nan")
    report["n_clips"] = len(clips)
    return report


def evaluate(model: CoGModel, clips: list[Clip], embedder: PoseEmbedder, cfg: RunConfig) -> dict:
    out = generate(model, clips, cfg.eval.use_classifier_labels)
    report = score(np.concatenate([out["body"], out["hands"]], axis=-1), clips, embedder,
                   cfg.eval.srgr_delta, cfg.eval.beat_sigma)
    report["face_mse"] = float(np.mean((out["face"] - np.stack([c.face for c in clips])) ** 2))
    report["config_hash"] = cfg.hash()
    return report


# ------------------------------------------------------------------ sweep


def sweep(cfg: RunConfig, classifier, train_clips, eval_clips, embedder, grid=None, steps=None) -> list[dict]:
    """Train and evaluate one model per ``(lambda_rec, lambda_mse, lambda_rhy)`` cell; rows sorted by FGD."""
    grid = cfg.sweep.grid if grid is None else grid
    steps = steps or cfg.sweep.steps or cfg.optim.steps
    rows = []
    for rec, mse, rhy in grid:
        weights = dataclasses.replace(cfg.loss, lambda_rec=float(rec), lambda_mse=float(mse), lambda_rhy=float(rhy))
        result = train_model(cfg, classifier, train_clips, steps, weights)
        rep = evaluate(result.model, eval_clips, embedder, cfg)
        rows.append({"lambda_rec": float(rec), "lambda_mse": float(mse), "lambda_rhy": float(rhy),
                     "fgd": rep["fgd"], "srgr": rep["srgr"], "beat_align": rep["beat_align"],
                     "steps": len(result.log), "final_total": result.log[-1]["total"]})
    rows.sort(key=lambda r: r["fgd"])
    for rank, r in enumerate(rows, 1):
        r["rank"] = rank
    return rows


SWEEP_COLUMNS = ("rank", "lambda_rec", "lambda_mse", "lambda_rhy", "fgd", "srgr", "beat_align", "steps", "final_total")


def write_sweep(rows: list[dict], out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path, json_path = out_dir / "sweep.csv", out_dir / "sweep.json"
    with csv_path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    json_path.write_text(json.dumps(rows, indent=2) + "\n")
    return csv_path, json_path


def format_table(rows: list[dict]) -> str:
    lines = ["rank  (rec, mse, rhy)           FGD       SRGR    BeatAlign"]
    for r in rows:
        cell = f"({r['lambda_rec']:g}, {r['lambda_mse']:g}, {r['lambda_rhy']:g})"
        lines.append(f"{r['rank']:>4}  {cell:<24}{r['fgd']:>9.4f}  {r['srgr']:>7.3f}  {r['beat_align']:>9.3f}")
    return "\n".join(lines)
