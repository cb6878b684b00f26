"""Video ingestion, preprocessing, and a deterministic synthetic benchmark.

Clips are grayscale frame stacks in [0, 1] at a fixed spatial size, resampled
to a common frame rate with a zero-order hold (downsampling drops frames,
upsampling duplicates them).  Training splits must contain only normal
frames; test splits carry per-frame anomaly labels.

The synthetic generator renders a bright blob drifting smoothly over a dark
background; anomalies in test clips are abrupt high-speed vertical drops with
a posture (elongation) flip, labeled per frame.  Everything is deterministic
from the seed, with one independent random stream per clip.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

TARGET_FPS = 8
FRAME_SIZE = (64, 64)
FRAME_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff")
MANIFEST_COLUMNS = ("clip_id", "path", "modality", "split", "native_fps", "label_path")
SYNTHETIC_MODALITIES = ("intensity", "inverted")


@dataclass(frozen=True)
class VideoClip:
    """One video: frames in [0, 1], timestamps, optional per-frame labels."""

    frames: np.ndarray  # (T, H, W) float32 in [0, 1]
    timestamps: np.ndarray  # (T,) seconds, monotone non-decreasing
    labels: np.ndarray | None  # (T,) bool, True = anomalous frame
    modality: str
    clip_id: str

    def __post_init__(self) -> None:
        if self.frames.ndim != 3:
            raise DataError(f"clip {self.clip_id}: frames must be (T, H, W), got {self.frames.shape}")
        t = self.frames.shape[0]
        if not np.isfinite(self.frames).all():
            raise DataError(f"clip {self.clip_id}: non-finite pixel values")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise DataError(f"clip {self.clip_id}: pixel values outside [0, 1]")
        if self.timestamps.shape != (t,):
            raise DataError(f"clip {self.clip_id}: timestamps misaligned with frames")
        if np.any(np.diff(self.timestamps) < 0):
            raise DataError(f"clip {self.clip_id}: timestamps must be non-decreasing")
        if self.labels is not None and self.labels.shape != (t,):
            raise DataError(f"clip {self.clip_id}: labels misaligned with frames")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class DatasetSplit:
    """Train/test clip lists; the train split must be anomaly-free."""

    train: tuple[VideoClip, ...]
    test: tuple[VideoClip, ...]

    def __post_init__(self) -> None:
        train_keys = [(c.clip_id, c.modality) for c in self.train]
        test_keys = [(c.clip_id, c.modality) for c in self.test]
        for name, keys in (("train", train_keys), ("test", test_keys)):
            dupes = {k for k in keys if keys.count(k) > 1}
            if dupes:
                raise DataError(f"duplicate clips in {name} split: {sorted(dupes)}")
        overlap = set(train_keys) & set(test_keys)
        if overlap:
            raise DataError(f"clips appear in both splits: {sorted(overlap)}")
        for clip in self.train:
            if clip.labels is not None and bool(clip.labels.any()):
                raise DataError(
                    f"train clip {clip.clip_id} contains anomalous frames; "
                    "training data must be normal only"
                )
        for clip in self.test:
            if clip.labels is None:
                raise DataError(f"test clip {clip.clip_id} has no labels")

    def modalities(self) -> tuple[str, ...]:
        out: list[str] = []
        for clip in self.train + self.test:
            if clip.modality not in out:
                out.append(clip.modality)
        return tuple(out)

    def filter_modality(self, modality: str) -> "DatasetSplit":
        train = tuple(c for c in self.train if c.modality == modality)
        test = tuple(c for c in self.test if c.modality == modality)
        if not train and not test:
            raise DataError(f"no clips with modality {modality!r}")
        return DatasetSplit(train=train, test=test)


def preprocess_frame(raw: np.ndarray, target_size: tuple[int, int] = FRAME_SIZE) -> np.ndarray:
    """Convert a raw frame to grayscale [0, 1] at ``target_size``.

    3-channel input (RGB order) is reduced to luminance; integer pixel
    ranges are normalized by the dtype's full scale; resizing is bilinear.
    """
    frame = np.asarray(raw)
    if frame.ndim == 3:
        if frame.shape[2] == 1:
            frame = frame[:, :, 0]
        elif frame.shape[2] == 3:
            frame = (
                0.299 * frame[:, :, 0].astype(np.float64)
                + 0.587 * frame[:, :, 1].astype(np.float64)
                + 0.114 * frame[:, :, 2].astype(np.float64)
            )
        else:
            raise DataError(f"unsupported channel count {frame.shape[2]}")
    elif frame.ndim != 2:
        raise DataError(f"expected 2D or 3D frame, got shape {frame.shape}")

    if np.issubdtype(np.asarray(raw).dtype, np.integer):
        scale = float(np.iinfo(np.asarray(raw).dtype).max)
        gray = frame.astype(np.float64) / scale
    else:
        gray = frame.astype(np.float64)
        if gray.size and (gray.min() < 0.0 or gray.max() > 1.0):
            raise DataError("float frames must already be normalized to [0, 1]")

    height, width = target_size
    resized = cv2.resize(gray.astype(np.float32), (width, height), interpolation=cv2.INTER_LINEAR)
    return resized.astype(np.float32)


def resample_fps(
    timestamps: Sequence[float],
    native_fps: float,
    target_fps: float = TARGET_FPS,
) -> list[int]:
    """Source frame index for each output tick of a ``target_fps`` grid.

    For every tick the nearest frame not after it is selected, so
    downsampling drops frames and upsampling duplicates them (zero-order
    hold).  The output grid spans ``len(timestamps) / native_fps`` seconds
    from the first timestamp.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size == 0:
        raise DataError("cannot resample an empty clip")
    if np.any(np.diff(ts) < 0):
        raise DataError("timestamps must be non-decreasing")
    if target_fps <= 0 or native_fps <= 0:
        raise ConfigError("frame rates must be positive")

    duration = ts.size / float(native_fps)
    n_out = math.ceil(duration * target_fps - 1e-9)
    indices = []
    for k in range(n_out):
        tick = ts[0] + k / float(target_fps)
        idx = int(np.searchsorted(ts, tick + 1e-9, side="right")) - 1
        indices.append(max(idx, 0))
    return indices


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------

# Mid-gray background keeps pixel targets inside the sigmoid head's healthy
# range; a near-black scene stalls MSE training in deep saturation.
_BLOB_AMP = 0.7
_BACKGROUND = 0.25
_STAND_SIGMA = (4.5, 9.0)  # (horizontal, vertical): upright blob
_WALK_Y_BAND = (22.0, 30.0)
_WALK_X_BAND = (14.0, 50.0)
_FLOOR_Y = 50.0
_MAX_WALK_SPEED = 1.0
_MEAN_FALL_LEN = 12.0


def _clip_rng(seed: int, clip_id: str) -> np.random.Generator:
    # One independent stream per clip, stable across runs and processes.
    return np.random.default_rng((int(seed), zlib.crc32(clip_id.encode("utf-8"))))


def _render_blob(size: int, cx: float, cy: float, sx: float, sy: float) -> np.ndarray:
    ys = np.arange(size, dtype=np.float64)[:, None]
    xs = np.arange(size, dtype=np.float64)[None, :]
    bump = np.exp(-0.5 * (((xs - cx) / sx) ** 2 + ((ys - cy) / sy) ** 2))
    return np.clip(_BACKGROUND + _BLOB_AMP * bump, 0.0, 1.0).astype(np.float32)


def _plan_fall_segments(
    rng: np.random.Generator, clip_len: int, anomaly_rate: float
) -> list[tuple[int, int]]:
    """Non-overlapping (start, length) anomaly segments away from clip edges."""
    n_segments = max(1, round(anomaly_rate * clip_len / _MEAN_FALL_LEN))
    margin = 16 if clip_len >= 96 else 8
    segments: list[tuple[int, int]] = []
    for _ in range(n_segments):
        length = int(rng.integers(8, 17))
        placed = False
        for _attempt in range(64):
            hi = clip_len - margin - length
            if hi < margin:
                break
            start = int(rng.integers(margin, hi + 1))
            if all(start + length + 8 <= s or e + 8 <= start for s, e in
                   ((s, s + l) for s, l in segments)):
                segments.append((start, length))
                placed = True
                break
        if not placed:
            logger.debug("could not place all anomaly segments in clip of length %d", clip_len)
    return sorted(segments)


def _simulate_clip(
    rng: np.random.Generator, clip_len: int, fall_segments: Sequence[tuple[int, int]]
) -> tuple[np.ndarray, np.ndarray]:
    size = FRAME_SIZE[0]
    frames = np.empty((clip_len, size, size), dtype=np.float32)
    labels = np.zeros(clip_len, dtype=bool)

    x = float(rng.uniform(*_WALK_X_BAND))
    y = float(rng.uniform(*_WALK_Y_BAND))
    vx = float(rng.normal(0.0, 0.3))
    vy = float(rng.normal(0.0, 0.3))
    jitter = 1.0

    fall_starts = {start: length for start, length in fall_segments}
    for start, length in fall_segments:
        labels[start : start + length] = True

    in_fall = False
    fall_end = -1
    fall_y0 = y
    fall_path: list[float] = []
    fall_step = 0

    for t in range(clip_len):
        if not in_fall and t in fall_starts:
            # Vertical path: fast drop to the floor, then a fast recovery to
            # the starting height, all inside the labeled segment.
            length = fall_starts[t]
            in_fall = True
            fall_end = t + length
            fall_y0 = y
            down = max(1, math.ceil(0.6 * length))
            up = length - down
            drop = _FLOOR_Y - fall_y0
            fall_path = [fall_y0 + drop * (i + 1) / down for i in range(down)]
            if up > 0:
                fall_path += [_FLOOR_Y - drop * (i + 1) / up for i in range(up)]
            fall_step = 0

        if in_fall:
            y = fall_path[fall_step]
            x += float(rng.normal(0.0, 0.2))
            sx, sy = _STAND_SIGMA[1], _STAND_SIGMA[0]  # elongation flip: lying
            fall_step += 1
            if t + 1 >= fall_end:
                in_fall = False
                y = fall_y0
                vx = float(rng.normal(0.0, 0.3))
                vy = float(rng.normal(0.0, 0.3))
        else:
            vx = 0.85 * vx + float(rng.normal(0.0, 0.35))
            vy = 0.85 * vy + float(rng.normal(0.0, 0.35))
            speed = math.hypot(vx, vy)
            if speed > _MAX_WALK_SPEED:
                vx *= _MAX_WALK_SPEED / speed
                vy *= _MAX_WALK_SPEED / speed
            x += vx
            y += vy
            if x < _WALK_X_BAND[0] or x > _WALK_X_BAND[1]:
                x = float(np.clip(x, *_WALK_X_BAND))
                vx = -vx
            if y < _WALK_Y_BAND[0] or y > _WALK_Y_BAND[1]:
                y = float(np.clip(y, *_WALK_Y_BAND))
                vy = -vy
            sx, sy = _STAND_SIGMA

        jitter = float(np.clip(jitter + rng.normal(0.0, 0.02), 0.9, 1.1))
        frames[t] = _render_blob(size, x, y, sx * jitter, sy * jitter)

    return frames, labels


def _render_modality(frames: np.ndarray, modality: str) -> np.ndarray:
    if modality == "intensity":
        return frames
    if modality == "inverted":
        return (1.0 - frames).astype(np.float32)
    raise ConfigError(
        f"unknown synthetic modality {modality!r}, expected one of {SYNTHETIC_MODALITIES}"
    )


def generate_synthetic(
    seed: int,
    n_train_clips: int = 8,
    n_test_clips: int = 4,
    clip_len: int = 192,
    anomaly_rate: float = 0.06,
    modalities: Sequence[str] = ("intensity",),
) -> DatasetSplit:
    """Deterministic synthetic dataset: smooth blob drift vs abrupt falls.

    Train clips contain no anomalies; each test clip gets fall segments of
    8-16 frames sized so the anomalous-frame fraction tracks
    ``anomaly_rate``.  Requesting multiple modalities emits aligned
    renderings (``intensity`` plus ``inverted``) with identical labels and
    timestamps.
    """
    if not 0.0 < anomaly_rate <= 0.5:
        raise ConfigError(f"anomaly_rate must be in (0, 0.5], got {anomaly_rate}")
    if clip_len < 32:
        raise ConfigError(f"clip_len must be >= 32, got {clip_len}")
    if n_train_clips < 1 or n_test_clips < 1:
        raise ConfigError("need at least one train and one test clip")
    for modality in modalities:
        if modality not in SYNTHETIC_MODALITIES:
            raise ConfigError(
                f"unknown synthetic modality {modality!r}, expected one of {SYNTHETIC_MODALITIES}"
            )

    timestamps = (np.arange(clip_len) / float(TARGET_FPS)).astype(np.float64)

    def build(split: str, index: int, with_anomalies: bool) -> list[VideoClip]:
        clip_id = f"{split}-{index:03d}"
        rng = _clip_rng(seed, clip_id)
        segments = _plan_fall_segments(rng, clip_len, anomaly_rate) if with_anomalies else []
        frames, labels = _simulate_clip(rng, clip_len, segments)
        clips = []
        for modality in modalities:
            clips.append(
                VideoClip(
                    frames=_render_modality(frames, modality),
                    timestamps=timestamps.copy(),
                    labels=labels.copy() if with_anomalies else None,
                    modality=modality,
                    clip_id=clip_id,
                )
            )
        return clips

    train: list[VideoClip] = []
    for i in range(n_train_clips):
        train.extend(build("train", i, with_anomalies=False))
    test: list[VideoClip] = []
    for i in range(n_test_clips):
        test.extend(build("test", i, with_anomalies=True))
    return DatasetSplit(train=tuple(train), test=tuple(test))


# ---------------------------------------------------------------------------
# Directory datasets (manifest + frame folders)
# ---------------------------------------------------------------------------


def _read_frame_file(path: Path, clip_id: str) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"clip {clip_id}: cannot read frame file {path}")
    if raw.ndim == 3 and raw.shape[2] >= 3:
        raw = cv2.cvtColor(raw[:, :, :3], cv2.COLOR_BGR2RGB)
    return raw


def _load_raw_frames(path: Path, clip_id: str) -> list[np.ndarray]:
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in FRAME_EXTENSIONS
        )
        if not files:
            raise DataError(f"clip {clip_id}: no frame files in {path}")
        return [_read_frame_file(p, clip_id) for p in files]
    if path.is_file():
        capture = cv2.VideoCapture(str(path))
        frames = []
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if frame.ndim == 3 and frame.shape[2] >= 3:
                frame = cv2.cvtColor(frame[:, :, :3], cv2.COLOR_BGR2RGB)
            frames.append(frame)
        capture.release()
        if not frames:
            raise DataError(f"clip {clip_id}: no decodable frames in {path}")
        return frames
    raise DataError(f"clip {clip_id}: missing frames path {path}")


def _load_labels(path: Path, clip_id: str, expected: int) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"clip {clip_id}: missing label file {path}")
    values = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        token = line.strip()
        if not token:
            continue
        if token not in ("0", "1"):
            raise DataError(f"clip {clip_id}: bad label {token!r} at line {line_no} of {path}")
        values.append(token == "1")
    if len(values) != expected:
        raise DataError(
            f"clip {clip_id}: {len(values)} labels for {expected} frames in {path}"
        )
    return np.asarray(values, dtype=bool)


def load_directory(
    root: str | Path,
    manifest: str | Path,
    target_size: tuple[int, int] = FRAME_SIZE,
    target_fps: float = TARGET_FPS,
) -> DatasetSplit:
    """Load a manifest-described dataset, preprocessing and resampling each clip.

    The manifest is a CSV with columns ``clip_id, path, modality, split,
    native_fps, label_path``; relative paths resolve against ``root``.
    Labels are index-mapped through the same resampling as frames.
    """
    root = Path(root)
    manifest = Path(manifest)
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")

    train: list[VideoClip] = []
    test: list[VideoClip] = []
    with manifest.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"manifest {manifest} lacks columns: {sorted(missing)}")
        for row in reader:
            clip_id = row["clip_id"].strip()
            split = row["split"].strip().lower()
            if split not in ("train", "test"):
                raise DataError(f"clip {clip_id}: unknown split {row['split']!r}")
            try:
                native_fps = float(row["native_fps"])
            except ValueError:
                raise DataError(f"clip {clip_id}: bad native_fps {row['native_fps']!r}") from None

            frames_path = Path(row["path"])
            if not frames_path.is_absolute():
                frames_path = root / frames_path
            raw_frames = _load_raw_frames(frames_path, clip_id)
            n_native = len(raw_frames)
            native_ts = np.arange(n_native, dtype=np.float64) / native_fps
            indices = resample_fps(native_ts, native_fps, target_fps)

            processed: dict[int, np.ndarray] = {}
            for idx in indices:
                if idx not in processed:
                    processed[idx] = preprocess_frame(raw_frames[idx], target_size)
            frames = np.stack([processed[idx] for idx in indices])
            timestamps = np.arange(len(indices), dtype=np.float64) / float(target_fps)

            labels: np.ndarray | None = None
            label_path = (row.get("label_path") or "").strip()
            if label_path:
                lp = Path(label_path)
                if not lp.is_absolute():
                    lp = root / lp
                native_labels = _load_labels(lp, clip_id, n_native)
                labels = native_labels[np.asarray(indices, dtype=int)]

            clip = VideoClip(
                frames=frames,
                timestamps=timestamps,
                labels=labels,
                modality=row["modality"].strip(),
                clip_id=clip_id,
            )
            if split == "train":
                if labels is not None and bool(labels.any()):
                    raise DataError(
                        f"train clip {clip_id} contains anomalous frames; "
                        "training data must be normal only"
                    )
                train.append(clip)
            else:
                test.append(clip)

    return DatasetSplit(train=tuple(train), test=tuple(test))


def write_dataset(split: DatasetSplit, root: str | Path) -> Path:
    """Write a split to disk in the manifest + frame-folder layout.

    Frames are stored as 8-bit PNGs at the dataset's native rate; labels as
    one 0/1 per line.  Returns the manifest path.
    """
    root = Path(root)
    frames_dir = root / "frames"
    labels_dir = root / "labels"
    frames_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    written_labels: set[str] = set()
    for split_name, clips in (("train", split.train), ("test", split.test)):
        for clip in clips:
            folder = frames_dir / f"{clip.clip_id}__{clip.modality}"
            folder.mkdir(parents=True, exist_ok=True)
            for i, frame in enumerate(clip.frames):
                png = np.round(frame * 255.0).astype(np.uint8)
                if not cv2.imwrite(str(folder / f"{i:06d}.png"), png):
                    raise DataError(f"failed to write frame {i} of clip {clip.clip_id}")
            label_rel = ""
            if clip.labels is not None:
                labels_dir.mkdir(parents=True, exist_ok=True)
                label_file = labels_dir / f"{clip.clip_id}.txt"
                if clip.clip_id not in written_labels:
                    label_file.write_text(
                        "".join("1\n" if v else "0\n" for v in clip.labels)
                    )
                    written_labels.add(clip.clip_id)
                label_rel = str(label_file.relative_to(root))
            rows.append(
                {
                    "clip_id": clip.clip_id,
                    "path": str(folder.relative_to(root)),
                    "modality": clip.modality,
                    "split": split_name,
                    "native_fps": str(TARGET_FPS),
                    "label_path": label_rel,
                }
            )

    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return manifest


def dataset_hash(split: DatasetSplit) -> str:
    """Content hash over every clip's pixels, labels, and identity."""
    digest = hashlib.sha256()
    for split_name, clips in (("train", split.train), ("test", split.test)):
        for clip in sorted(clips, key=lambda c: (c.clip_id, c.modality)):
            digest.update(split_name.encode())
            digest.update(clip.clip_id.encode())
            digest.update(clip.modality.encode())
            digest.update(np.ascontiguousarray(clip.frames).tobytes())
            digest.update(np.ascontiguousarray(clip.timestamps).tobytes())
            if clip.labels is not None:
                digest.update(np.ascontiguousarray(clip.labels).tobytes())
    return digest.hexdigest()
