"""Binary per-frame feature files, the dataset manifest, and synthetic
fixtures.

Feature file layout (all little-endian):

    bytes 0..3   magic b"MF2F"
    bytes 4..5   version, u16 (currently 1)
    byte  6      modality tag, u8: 0 = visual, 1 = audio
    bytes 7..10  T, u32 (frame count)
    bytes 11..14 d, u32 (feature dimension)
    bytes 15..   T*d float32 values, row-major

The manifest (`dataset.manifest`) is a JSON document: dataset name plus one
entry per video with feature paths, fps, n_frames, per-user score rows and a
fold id. Scores live in the manifest because they are small and worth keeping
human-readable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, ParseError

MAGIC = b"MF2F"
VERSION = 1
HEADER = struct.Struct("<4sHBII")
MODALITIES = {"visual": 0, "audio": 1}
MODALITY_NAMES = {v: k for k, v in MODALITIES.items()}


@dataclass(frozen=True)
class FeatureSequence:
    """T x d per-frame features for one modality."""

    modality: str
    data: np.ndarray  # T x d float32
    fps: float | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ContractError(f"unknown modality {self.modality!r}")
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContractError(f"feature data must be T x d with T,d >= 1, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def write_features(seq: FeatureSequence, path) -> None:
    payload = seq.data.astype("<f4").tobytes()
    header = HEADER.pack(MAGIC, VERSION, MODALITIES[seq.modality], seq.T, seq.dim)
    Path(path).write_bytes(header + payload)


def read_features(path) -> FeatureSequence:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ParseError(f"{path}: file shorter than header ({len(raw)} bytes)")
    magic, version, modality, t, d = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}, expected {VERSION}")
    if modality not in MODALITY_NAMES:
        raise ParseError(f"{path}: unknown modality tag {modality}")
    if t < 1 or d < 1:
        raise ParseError(f"{path}: invalid dimensions T={t}, d={d}")
    expected = HEADER.size + t * d * 4
    if len(raw) != expected:
        raise ParseError(
            f"{path}: payload length mismatch, expected {expected} bytes, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(t, d)
    return FeatureSequence(MODALITY_NAMES[modality], data)


# ---------------------------------------------------------------------------
# Manifest / dataset


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    visual: FeatureSequence
    audio: FeatureSequence
    fps: float
    user_scores: np.ndarray  # U x T, values in [0, 1]
    fold: int = 0
    visual_path: str | None = None
    audio_path: str | None = None

    def __post_init__(self):
        scores = np.ascontiguousarray(self.user_scores, dtype=np.float64)
        if scores.ndim != 2:
            raise DataError(f"{self.video_id}: user_scores must be U x T")
        scores.flags.writeable = False
        object.__setattr__(self, "user_scores", scores)
        t = self.visual.T
        if self.audio.T != t:
            raise DataError(
                f"{self.video_id}: modality misalignment, visual T={t} vs audio T={self.audio.T}"
            )
        if scores.shape[1] != t:
            raise DataError(
                f"{self.video_id}: user score length {scores.shape[1]} != n_frames {t}"
            )
        if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
            raise DataError(f"{self.video_id}: user scores outside [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.visual.T


@dataclass(frozen=True)
class Dataset:
    videos: tuple[VideoRecord, ...]
    name: str = "dataset"

    def __post_init__(self):
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate video ids in dataset: {dupes}")

    def __len__(self) -> int:
        return len(self.videos)

    def split(self, test_fold: int) -> tuple["Dataset", "Dataset"]:
        train = tuple(v for v in self.videos if v.fold != test_fold)
        test = tuple(v for v in self.videos if v.fold == test_fold)
        return Dataset(train, self.name), Dataset(test, self.name)


def load_manifest(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid manifest JSON: {e}") from e
    if not isinstance(doc, dict) or "videos" not in doc:
        raise ParseError(f"{path}: manifest must be an object with a 'videos' list")
    base = path.parent
    records = []
    for entry in doc["videos"]:
        vid = entry.get("id")
        if not vid:
            raise ParseError(f"{path}: video entry without id")
        try:
            visual = read_features(base / entry["visual"])
            audio = read_features(base / entry["audio"])
        except KeyError as e:
            raise ParseError(f"{path}: video {vid} missing field {e}") from e
        n_frames = int(entry["n_frames"])
        if visual.T != n_frames:
            raise DataError(f"{vid}: manifest n_frames={n_frames} but visual file has T={visual.T}")
        records.append(
            VideoRecord(
                video_id=vid,
                visual=visual,
                audio=audio,
                fps=float(entry.get("fps", 2.0)),
                user_scores=np.asarray(entry["user_scores"], dtype=np.float64),
                fold=int(entry.get("fold", 0)),
                visual_path=str(base / entry["visual"]),
                audio_path=str(base / entry["audio"]),
            )
        )
    return Dataset(tuple(records), name=doc.get("dataset", "dataset"))


def save_manifest(dataset: Dataset, path) -> None:
    """Writes manifest JSON; feature paths must already be set on records."""
    path = Path(path)
    entries = []
    for v in dataset.videos:
        if v.visual_path is None or v.audio_path is None:
            raise ContractError(f"{v.video_id}: record has no feature file paths")
        entries.append(
            {
                "id": v.video_id,
                "visual": str(Path(v.visual_path).name),
                "audio": str(Path(v.audio_path).name),
                "fps": v.fps,
                "n_frames": v.n_frames,
                "fold": v.fold,
                "user_scores": [[round(float(s), 6) for s in row] for row in v.user_scores],
            }
        )
    doc = {"dataset": dataset.name, "videos": entries}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Synthetic fixtures


def _plant_events(rng: np.random.Generator, t: int) -> list[tuple[int, int]]:
    """1-3 non-overlapping event intervals, kept short enough that their
    union fits a 15% summary budget."""
    budget = max(3, int(0.15 * t))
    max_events = max(1, min(3, t // 24))
    n_events = int(rng.integers(1, max_events + 1))
    events: list[tuple[int, int]] = []
    remaining = budget
    cursor = 2
    for k in range(n_events):
        left = n_events - k - 1
        max_len = remaining - 2 * left
        if max_len < 2:
            break
        length = int(rng.integers(2, max_len + 1))
        space_after = t - 2 - cursor - length - 4 * left
        if space_after < 0:
            break
        start = cursor + int(rng.integers(0, space_after + 1)) if space_after > 0 else cursor
        events.append((start, start + length))
        cursor = start + length + 4
        remaining -= length
    if not events:
        events = [(2, min(t - 2, 2 + min(4, budget)))]
    return events


def gen_synthetic_fixture(
    n_videos: int,
    T: int,
    d_v: int,
    d_a: int,
    seed: int,
    out_dir,
    n_users: int = 3,
    fps: float = 2.0,
    n_folds: int = 1,
) -> Path:
    """Generate a desk-scale dataset with planted events: inside each event
    interval both modalities shift mean and user scores are high, so the
    ground-truth keyshots are recoverable. Deterministic per seed. Returns
    the manifest path."""
    if min(n_videos, T, d_v, d_a, n_users) < 1:
        raise ContractError("all fixture counts must be >= 1")
    if T < 8:
        raise ContractError(f"fixture needs T >= 8, got {T}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_videos):
        vid = f"synth{i:03d}"
        events = _plant_events(rng, T)
        base_v = rng.normal(0.0, 1.0, size=d_v)
        base_a = rng.normal(0.0, 1.0, size=d_a)
        visual = base_v + rng.normal(0.0, 0.05, size=(T, d_v))
        audio = base_a + rng.normal(0.0, 0.05, size=(T, d_a))
        scores = np.clip(rng.normal(0.10, 0.02, size=(n_users, T)), 0.0, 1.0)
        for start, end in events:
            shift_v = rng.normal(0.0, 1.0, size=d_v)
            shift_v *= 3.0 / np.linalg.norm(shift_v)
            shift_a = rng.normal(0.0, 1.0, size=d_a)
            shift_a *= 3.0 / np.linalg.norm(shift_a)
            visual[start:end] += shift_v
            audio[start:end] += shift_a
            scores[:, start:end] = np.clip(
                rng.normal(0.90, 0.02, size=(n_users, end - start)), 0.0, 1.0
            )
        vseq = FeatureSequence("visual", visual.astype(np.float32), fps=fps)
        aseq = FeatureSequence("audio", audio.astype(np.float32), fps=fps)
        vpath = out_dir / f"{vid}.visual.mf2f"
        apath = out_dir / f"{vid}.audio.mf2f"
        write_features(vseq, vpath)
        write_features(aseq, apath)
        records.append(
            VideoRecord(
                video_id=vid,
                visual=vseq,
                audio=aseq,
                fps=fps,
                user_scores=np.round(scores, 6),
                fold=i % n_folds,
                visual_path=str(vpath),
                audio_path=str(apath),
            )
        )
    dataset = Dataset(tuple(records), name=f"synthetic-{seed}")
    manifest_path = out_dir / "dataset.manifest"
    save_manifest(dataset, manifest_path)
    return manifest_path
