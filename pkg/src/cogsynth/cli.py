"""Command line entry point: ``cogsynth <command> [--config PATH] [--seed N] [--out DIR]``.

Every command writes its artifacts under ``--out`` (default: the config's
``out_dir``) and prints a one-line JSON summary. Failures exit with status 1
and a JSON object ``{"error": ..., "type": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .cascade import CoGModel, synthesize
from .config import RunConfig, load_config
from .dataio import POSE_DIM, export_sequence, read_matrix_csv, save_dataset, write_matrix_csv
from .frontend import EmotionSpeakerClassifier
from .metrics import PoseEmbedder
from .synthetic import gen_synthetic
from . import train as T

log = logging.getLogger("cogsynth")


class UsageError(RuntimeError):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.data.synthetic.rng_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    return out


def _write_summary(out: Path, name: str, summary: dict) -> dict:
    # the timestamp lives only here so every other artifact is reproducible byte for byte
    (out / f"{name}.json").write_text(json.dumps({**summary, "timestamp": time.time()}, indent=2, sort_keys=True) + "\n")
    return summary


def _embedder(cfg: RunConfig, out: Path, train_clips, path: str | None) -> PoseEmbedder:
    path = Path(path) if path else out / "embedder.ckpt"
    if path.exists():
        return PoseEmbedder.load(path)
    emb = T.fit_embedder(cfg, train_clips)
    emb.save(path)
    return emb


# --------------------------------------------------------------- commands


def cmd_gen_synthetic(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    records = gen_synthetic(cfg.data.synthetic)
    manifest = save_dataset(records, out / "data", cfg.data.synthetic.n_speakers)
    return {"manifest": str(manifest), "n_sequences": len(records)}


def cmd_train_classifier(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    train_recs, eval_recs = T.load_records(cfg)
    clips = T.clips_of(cfg, train_recs)
    clf = T.train_classifier(cfg, clips)
    path = clf.save(out / "classifier.ckpt")
    with (out / "classifier_log.csv").open("w") as fh:
        fh.write("step,ce\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(clf.losses)))
    ec = T.clips_of(cfg, eval_recs)
    emo_acc, spk_acc = clf.accuracy(np.stack([c.audio for c in ec]), [c.emotion for c in ec], [c.speaker for c in ec])
    return _write_summary(out, "classifier_summary", {
        "checkpoint": str(path), "initial_ce": clf.losses[0], "final_ce": clf.losses[-1],
        "eval_emotion_accuracy": emo_acc, "eval_speaker_accuracy": spk_acc, "config_hash": cfg.hash()})


def _load_classifier(args, out: Path) -> EmotionSpeakerClassifier:
    path = Path(args.classifier) if args.classifier else out / "classifier.ckpt"
    if not path.exists():
        raise UsageError(f"classifier checkpoint {path} not found; run `cogsynth train-classifier` first")
    clf = EmotionSpeakerClassifier.load(path)
    if not clf.frozen:
        raise UsageError(f"classifier checkpoint {path} is not frozen")
    return clf


def cmd_train(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    clf = _load_classifier(args, out)
    train_recs, _ = T.load_records(cfg)
    result = T.train_model(cfg, clf, T.clips_of(cfg, train_recs), out_dir=out)
    T.write_log(result.log, out / "train_log.csv")
    path = result.model.save(out / "model.ckpt", steps=len(result.log), config_hash=cfg.hash(), run_config=cfg.to_dict())
    return _write_summary(out, "train_summary", {
        "checkpoint": str(path), "steps": len(result.log), "stopped_early": result.stopped_early,
        "initial_total": result.log[0]["total"], "final_total": result.log[-1]["total"],
        "periodic_checkpoints": result.checkpoints, "config_hash": cfg.hash()})


def cmd_evaluate(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    model_path = Path(args.model) if args.model else out / "model.ckpt"
    if not model_path.exists():
        raise UsageError(f"model checkpoint {model_path} not found; run `cogsynth train` first")
    model = CoGModel.load(model_path)
    train_recs, eval_recs = T.load_records(cfg)
    emb = _embedder(cfg, out, T.clips_of(cfg, train_recs), args.embedder)
    report = T.evaluate(model, T.clips_of(cfg, eval_recs), emb, cfg)
    report["model"] = str(model_path)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_sweep(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    train_recs, eval_recs = T.load_records(cfg)
    tc, ec = T.clips_of(cfg, train_recs), T.clips_of(cfg, eval_recs)
    clf = T.train_classifier(cfg, tc)
    emb = _embedder(cfg, out, tc, args.embedder)
    rows = T.sweep(cfg, clf, tc, ec, emb)
    csv_path, _ = T.write_sweep(rows, out)
    print(T.format_table(rows), file=sys.stderr)
    return {"table": str(csv_path), "cells": len(rows), "best": rows[0]}


def cmd_synthesize(cfg: RunConfig, args) -> dict:
    out = _out(cfg)
    if not (args.audio and args.text and args.seed_poses):
        raise UsageError("synthesize needs --audio, --text and --seed-poses CSV files")
    model_path = Path(args.model) if args.model else out / "model.ckpt"
    if not model_path.exists():
        raise UsageError(f"model checkpoint {model_path} not found")
    model = CoGModel.load(model_path)
    _, audio = read_matrix_csv(args.audio, model.cfg.audio_dim)
    _, text = read_matrix_csv(args.text, model.cfg.text_dim)
    _, seeds = read_matrix_csv(args.seed_poses, POSE_DIM)
    face, gesture = synthesize(model, audio, text, seeds, args.emotion, args.speaker)
    face_path = out / "blendshapes.csv"
    write_matrix_csv(face_path, [f"bs{k}" for k in range(face.shape[1])], face)
    gesture_path = export_sequence(gesture, None, out / ("gesture.bvh" if args.format == "bvh-lite" else "gesture.csv"), args.format)
    return {"blendshapes": str(face_path), "gesture": str(gesture_path), "frames": gesture.n_frames}


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train-classifier": cmd_train_classifier,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "synthesize": cmd_synthesize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogsynth", description="Cascaded co-speech face and gesture synthesis.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config; defaults apply when omitted")
        p.add_argument("--seed", type=int, help="overrides the run seed and the synthetic data seed")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        if name in ("train", "evaluate", "synthesize"):
            p.add_argument("--classifier", help="frozen classifier checkpoint (default OUT/classifier.ckpt)")
            p.add_argument("--model", help="model checkpoint (default OUT/model.ckpt)")
        if name in ("evaluate", "sweep"):
            p.add_argument("--embedder", help="pose embedder checkpoint; trained and cached when absent")
        if name == "synthesize":
            p.add_argument("--audio", help="audio feature CSV (T x F_a)")
            p.add_argument("--text", help="text feature CSV (T x F_w)")
            p.add_argument("--seed-poses", dest="seed_poses", help="seed pose CSV (k x 141)")
            p.add_argument("--emotion", type=int, help="emotion label; predicted from audio when omitted")
            p.add_argument("--speaker", type=int, help="speaker id; predicted from audio when omitted")
            p.add_argument("--format", choices=("csv", "bvh-lite"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = COMMANDS[args.command](_config(args), args)
    except Exception as e:  # noqa: BLE001 - every failure becomes a JSON error
        print(json.dumps({"error": str(e), "type": type(e).__name__, "command": args.command}), file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
