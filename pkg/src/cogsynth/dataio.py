"""Sequence records, the on-disk dataset format, clip windowing and export.

Dataset layout: a JSON manifest ::

    {"frame_rate": 15, "n_speakers": 4,
     "sequences": [{"audio_csv": ..., "text_csv": ..., "face_csv": ...,
                    "pose_csv": ..., "emotion": 3, "speaker": 1,
                    "weights_csv": ...}]}

where every CSV has one header row and one row per frame. ``weights_csv``
(per-frame semantic weights) and ``n_speakers`` are optional. Paths are
relative to the manifest.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_EMOTIONS = 8
EMOTIONS = ("neutral", "happiness", "anger", "sadness", "contempt", "surprise", "fear", "disgust")

BODY_JOINTS = ("Spine", "Spine1", "Spine2", "Spine3", "Neck", "Neck1", "Head", "RightShoulder", "LeftShoulder")
_FINGERS = ("Thumb", "Index", "Middle", "Ring", "Pinky")
_HAND_CHAIN = ("Arm", "ForeArm", "Hand") + tuple(f"Hand{f}{i}" for f in _FINGERS for i in (1, 2, 3)) + ("HandEnd",)
HAND_JOINTS = tuple(f"Right{j}" for j in _HAND_CHAIN) + tuple(f"Left{j}" for j in _HAND_CHAIN)
JOINTS = BODY_JOINTS + HAND_JOINTS
BODY_DIM = 3 * len(BODY_JOINTS)
HAND_DIM = 3 * len(HAND_JOINTS)
POSE_DIM = BODY_DIM + HAND_DIM
POSE_COLUMNS = tuple(f"{j}_{a}" for j in JOINTS for a in "xyz")

assert len(BODY_JOINTS) == 9 and len(HAND_JOINTS) == 38


class DataError(ValueError):
    """Invalid dataset content; the message names the file/field at fault."""


@dataclass
class SequenceRecord:
    audio: np.ndarray  # (T, F_a)
    text: np.ndarray  # (T, F_w)
    face: np.ndarray  # (T, D_f), blendshapes in [0, 1]
    body: np.ndarray  # (T, 27) Euler degrees
    hands: np.ndarray  # (T, 114) Euler degrees
    emotion: int
    speaker: int
    frame_rate: float = 15.0
    weights: np.ndarray | None = None  # (T,) semantic weights
    beats: np.ndarray | None = None  # planted beat frames, synthetic data only
    name: str = ""

    @property
    def n_frames(self) -> int:
        return self.audio.shape[0]

    def validate(self, n_speakers: int | None = None, where: str = "") -> "SequenceRecord":
        where = where or self.name or "record"
        streams = {"audio": self.audio, "text": self.text, "face": self.face, "body": self.body, "hands": self.hands}
        if self.weights is not None:
            streams["weights"] = self.weights
        lengths = {k: v.shape[0] for k, v in streams.items()}
        if len(set(lengths.values())) != 1:
            raise DataError(f"{where}: stream lengths differ: {lengths}")
        for k, v in streams.items():
            if not np.all(np.isfinite(v)):
                raise DataError(f"{where}: field '{k}' has non-finite values")
        if self.body.shape[1] != BODY_DIM or self.hands.shape[1] != HAND_DIM:
            raise DataError(f"{where}: pose must have {BODY_DIM}+{HAND_DIM} columns")
        _check_range(where, "face", self.face, 0.0, 1.0)
        _check_range(where, "body", self.body, -180.0, 180.0)
        _check_range(where, "hands", self.hands, -180.0, 180.0)
        if self.weights is not None and np.any(self.weights < 0):
            raise DataError(f"{where}: field 'weights' must be non-negative")
        if not 0 <= self.emotion < N_EMOTIONS:
            raise DataError(f"{where}: emotion label {self.emotion} outside 0..{N_EMOTIONS - 1}")
        if self.speaker < 0 or (n_speakers is not None and self.speaker >= n_speakers):
            hi = "" if n_speakers is None else f"{n_speakers - 1}"
            raise DataError(f"{where}: speaker label {self.speaker} outside 0..{hi}")
        return self


def _check_range(where, fieldname, arr, lo, hi):
    bad = np.argwhere((arr < lo) | (arr > hi))
    if bad.size:
        idx = tuple(bad[0])
        raise DataError(f"{where}: field '{fieldname}' value {arr[idx]:g} at frame {idx[0]} outside [{lo:g}, {hi:g}]")


@dataclass
class Clip:
    audio: np.ndarray
    text: np.ndarray
    face: np.ndarray
    body: np.ndarray
    hands: np.ndarray
    emotion: int
    speaker: int
    seed_poses: np.ndarray  # (seed_frames, 141)
    weights: np.ndarray
    frame_rate: float = 15.0
    beats: np.ndarray | None = None
    source: tuple[int, int] = (0, 0)  # (record index, start frame)

    @property
    def n_frames(self) -> int:
        return self.audio.shape[0]

    @property
    def pose(self) -> np.ndarray:
        return np.concatenate([self.body, self.hands], axis=-1)


@dataclass
class GestureSequence:
    body: np.ndarray  # (T, 27)
    hands: np.ndarray  # (T, 114)
    frame_rate: float = 15.0

    @property
    def n_frames(self) -> int:
        return self.body.shape[0]

    @property
    def pose(self) -> np.ndarray:
        return np.concatenate([self.body, self.hands], axis=-1)

    def joints(self) -> np.ndarray:
        """(T, 47, 3) view used by the keypoint metrics."""
        return self.pose.reshape(self.n_frames, len(JOINTS), 3)


# ------------------------------------------------------------------- CSV


def write_matrix_csv(path, header, values) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path, n_cols: int | None = None) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}:1: missing header row")
        if n_cols is not None and len(header) != n_cols:
            raise DataError(f"{path}:1: expected {n_cols} columns, header has {len(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} values, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value in row") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows)


# --------------------------------------------------------------- datasets


def load_dataset(manifest_path) -> list[SequenceRecord]:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{manifest_path}: unreadable manifest ({exc})") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("sequences"), list):
        raise DataError(f"{manifest_path}: manifest needs a 'sequences' list")
    root = manifest_path.parent
    frame_rate = float(manifest.get("frame_rate", 15.0))
    n_speakers = manifest.get("n_speakers")
    records = []
    for i, entry in enumerate(manifest["sequences"]):
        where = f"{manifest_path}: sequences[{i}]"
        missing = {"audio_csv", "text_csv", "face_csv", "pose_csv", "emotion", "speaker"} - set(entry)
        if missing:
            raise DataError(f"{where}: missing fields {sorted(missing)}")
        _, audio = read_matrix_csv(root / entry["audio_csv"])
        _, text = read_matrix_csv(root / entry["text_csv"])
        _, face = read_matrix_csv(root / entry["face_csv"])
        _, pose = read_matrix_csv(root / entry["pose_csv"], POSE_DIM)
        weights = None
        if entry.get("weights_csv"):
            _, w = read_matrix_csv(root / entry["weights_csv"], 1)
            weights = w[:, 0]
        rec = SequenceRecord(
            audio=audio,
            text=text,
            face=face,
            body=pose[:, :BODY_DIM],
            hands=pose[:, BODY_DIM:],
            emotion=int(entry["emotion"]),
            speaker=int(entry["speaker"]),
            frame_rate=frame_rate,
            weights=weights,
            name=str(entry.get("name", Path(entry["pose_csv"]).stem)),
        )
        rec.validate(n_speakers, where)
        records.append(rec)
    return records


def save_dataset(records: list[SequenceRecord], out_dir, n_speakers: int | None = None) -> Path:
    """Write records as CSVs plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(records):
        stem = rec.name or f"seq{i:04d}"
        files = {
            "audio_csv": f"{stem}_audio.csv",
            "text_csv": f"{stem}_text.csv",
            "face_csv": f"{stem}_face.csv",
            "pose_csv": f"{stem}_pose.csv",
        }
        write_matrix_csv(out_dir / files["audio_csv"], [f"a{k}" for k in range(rec.audio.shape[1])], rec.audio)
        write_matrix_csv(out_dir / files["text_csv"], [f"w{k}" for k in range(rec.text.shape[1])], rec.text)
        write_matrix_csv(out_dir / files["face_csv"], [f"bs{k}" for k in range(rec.face.shape[1])], rec.face)
        write_matrix_csv(out_dir / files["pose_csv"], POSE_COLUMNS, np.concatenate([rec.body, rec.hands], axis=1))
        entry = {"name": stem, **files, "emotion": rec.emotion, "speaker": rec.speaker}
        if rec.weights is not None:
            entry["weights_csv"] = f"{stem}_weights.csv"
            write_matrix_csv(out_dir / entry["weights_csv"], ["weight"], rec.weights)
        entries.append(entry)
    manifest = {"frame_rate": records[0].frame_rate if records else 15.0, "sequences": entries}
    if n_speakers is not None:
        manifest["n_speakers"] = n_speakers
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def window_clips(records: list[SequenceRecord], n: int = 34, stride: int = 10, seed_frames: int = 4) -> list[Clip]:
    """Cut fixed-length clips; per record ``floor((T - n) / stride) + 1`` windows."""
    if n < 1 or stride < 1 or not 0 <= seed_frames <= n:
        raise ValueError(f"bad windowing parameters n={n} stride={stride} seed_frames={seed_frames}")
    clips = []
    for ri, rec in enumerate(records):
        t_len = rec.n_frames
        if t_len < n:
            warnings.warn(f"{rec.name or f'record {ri}'}: {t_len} frames < clip length {n}; skipped", stacklevel=2)
            continue
        weights = rec.weights if rec.weights is not None else np.ones(t_len)
        for start in range(0, t_len - n + 1, stride):
            sl = slice(start, start + n)
            beats = None
            if rec.beats is not None:
                beats = rec.beats[(rec.beats >= start) & (rec.beats < start + n)] - start
            body, hands = rec.body[sl], rec.hands[sl]
            clips.append(
                Clip(
                    audio=rec.audio[sl],
                    text=rec.text[sl],
                    face=rec.face[sl],
                    body=body,
                    hands=hands,
                    emotion=rec.emotion,
                    speaker=rec.speaker,
                    seed_poses=np.concatenate([body[:seed_frames], hands[:seed_frames]], axis=1),
                    weights=weights[sl],
                    frame_rate=rec.frame_rate,
                    beats=beats,
                    source=(ri, start),
                )
            )
    return clips


# ------------------------------------------------------------------ export


def wrap_degrees(x: np.ndarray) -> np.ndarray:
    """Map angles into [-180, 180); exact multiples of 360 away stay put."""
    return (np.asarray(x) + 180.0) % 360.0 - 180.0


def export_sequence(gesture: GestureSequence, blendshapes: np.ndarray | None, path, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        cols = list(POSE_COLUMNS)
        values = gesture.pose
        if blendshapes is not None:
            cols = [f"bs{k}" for k in range(blendshapes.shape[1])] + cols
            values = np.concatenate([blendshapes, values], axis=1)
        write_matrix_csv(path, cols, values)
    elif fmt == "bvh-lite":
        path.write_text(_bvh_lite_text(gesture))
    else:
        raise ValueError(f"unknown export format {fmt!r}; use 'csv' or 'bvh-lite'")
    return path


def import_sequence_csv(path, frame_rate: float = 15.0) -> tuple[GestureSequence, np.ndarray | None]:
    header, values = read_matrix_csv(path)
    n_bs = sum(1 for h in header if h.startswith("bs"))
    if len(header) - n_bs != POSE_DIM:
        raise DataError(f"{path}: expected {POSE_DIM} pose columns, found {len(header) - n_bs}")
    pose = values[:, n_bs:]
    blend = values[:, :n_bs] if n_bs else None
    return GestureSequence(pose[:, :BODY_DIM], pose[:, BODY_DIM:], frame_rate), blend


# Parent of every joint, giving a fixed upper-body tree rooted at Spine.
_PARENT = {
    "Spine1": "Spine", "Spine2": "Spine1", "Spine3": "Spine2", "Neck": "Spine3", "Neck1": "Neck",
    "Head": "Neck1", "RightShoulder": "Spine3", "LeftShoulder": "Spine3",
}
for _side in ("Right", "Left"):
    _prev = f"{_side}Shoulder"
    for _j in ("Arm", "ForeArm", "Hand"):
        _PARENT[f"{_side}{_j}"] = _prev
        _prev = f"{_side}{_j}"
    for _f in _FINGERS:
        _p = f"{_side}Hand"
        for _i in (1, 2, 3):
            _PARENT[f"{_side}Hand{_f}{_i}"] = _p
            _p = f"{_side}Hand{_f}{_i}"
    _PARENT[f"{_side}HandEnd"] = f"{_side}Hand"


def _bvh_lite_text(gesture: GestureSequence) -> str:
    children: dict[str, list[str]] = {j: [] for j in JOINTS}
    for j in JOINTS[1:]:
        children[_PARENT[j]].append(j)
    lines = ["HIERARCHY"]

    def emit(joint, depth):
        pad = "  " * depth
        kind = "ROOT" if depth == 0 else "JOINT"
        lines.append(f"{pad}{kind} {joint}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}  OFFSET 0.0 {0.0 if depth == 0 else 5.0} 0.0")
        lines.append(f"{pad}  CHANNELS 3 Xrotation Yrotation Zrotation")
        for c in children[joint]:
            emit(c, depth + 1)
        lines.append(f"{pad}}}")

    emit(JOINTS[0], 0)
    # channel order in MOTION follows depth-first hierarchy order
    order = []

    def walk(j):
        order.append(JOINTS.index(j))
        for c in children[j]:
            walk(c)

    walk(JOINTS[0])
    joints = gesture.joints()
    lines += ["MOTION", f"Frames: {gesture.n_frames}", f"Frame Time: {1.0 / gesture.frame_rate!r}"]
    for t in range(gesture.n_frames):
        lines.append(" ".join(repr(float(v)) for v in joints[t, order].reshape(-1)))
    return "\n".join(lines) + "\n"


def read_bvh_lite(path) -> GestureSequence:
    text = Path(path).read_text().splitlines()
    order = [line.split()[1] for line in text if line.strip().startswith(("ROOT", "JOINT"))]
    m = text.index("MOTION")
    n_frames = int(text[m + 1].split(":")[1])
    frame_time = float(text[m + 2].split(":")[1])
    rows = np.array([[float(v) for v in line.split()] for line in text[m + 3 : m + 3 + n_frames]])
    if rows.shape != (n_frames, 3 * len(order)):
        raise DataError(f"{path}: MOTION block shape {rows.shape} does not match {n_frames} frames x {len(order)} joints")
    joints = np.zeros((n_frames, len(JOINTS), 3))
    for k, name in enumerate(order):
        joints[:, JOINTS.index(name)] = rows[:, 3 * k : 3 * k + 3]
    pose = joints.reshape(n_frames, -1)
    return GestureSequence(pose[:, :BODY_DIM], pose[:, BODY_DIM:], 1.0 / frame_time)
