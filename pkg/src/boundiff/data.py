"""Synthetic multi-annotator datasets and the on-disk formats.

Feature files are binary: magic ``DBF1``, little-endian uint32 L and D,
then L*D little-endian float64 values, row-major by frame. Boundary files
(annotations and predictions alike) are JSON lines, one record per line
with fields {video_id, source, annotator_or_sample_index, L, frames}.

Synthetic videos are piecewise-constant feature sequences: each segment
gets its own latent state vector, frames add isotropic Gaussian noise, and
the planted segment starts are the latent truth. Simulated annotators
observe every latent boundary, jitter it by a rounded Gaussian, and drop
it independently; at least one boundary always survives per annotator.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .metrics import BoundarySet

_MAGIC = b"DBF1"
_HEADER = struct.Struct("<4sII")

# Narrower segments than this make jittered annotations ambiguous between
# neighboring boundaries.
_MIN_SEGMENT = 4

SOURCE_GT = "gt"
SOURCE_PRED = "pred"


@dataclass(frozen=True)
class VideoRecord:
    """One video's features and its per-annotator boundary sets."""

    id: str
    L: int
    features: np.ndarray
    annotations: list[BoundarySet]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", features)
        if features.ndim != 2 or features.shape[0] != self.L:
            raise ValueError(f"features must be ({self.L}, D), got {features.shape}")
        if not self.annotations:
            raise ValueError(f"video {self.id!r} needs at least one annotation")
        if any(a.L != self.L for a in self.annotations):
            raise ValueError(f"video {self.id!r} has annotations with mismatched L")


@dataclass(frozen=True)
class BoundaryRecord:
    """One line of a boundary file."""

    video_id: str
    source: str
    annotator_or_sample_index: int
    L: int
    frames: tuple[int, ...]

    def to_set(self) -> BoundarySet:
        return BoundarySet(self.frames, self.L)


@dataclass(frozen=True)
class SyntheticConfig:
    num_videos: int = 200
    L: int = 100
    D: int = 16
    segments_range: tuple[int, int] = (2, 6)
    feature_noise_sigma: float = 0.4
    num_annotators: int = 3
    annotator_jitter_sigma: float = 1.5
    annotator_drop_p: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.num_videos < 1:
            raise ConfigurationError(f"num_videos must be >= 1, got {self.num_videos}")
        if self.L < 2 or self.D < 1:
            raise ConfigurationError(f"need L >= 2 and D >= 1, got L={self.L}, D={self.D}")
        lo, hi = self.segments_range
        if lo < 2 or hi < lo:
            raise ConfigurationError(f"segments_range must satisfy 2 <= min <= max, got {self.segments_range}")
        if hi * _MIN_SEGMENT > self.L:
            raise ConfigurationError(
                f"{hi} segments of >= {_MIN_SEGMENT} frames do not fit in L={self.L}"
            )
        if self.num_annotators < 1:
            raise ConfigurationError(f"num_annotators must be >= 1, got {self.num_annotators}")
        if not 0.0 <= self.annotator_drop_p < 1.0:
            raise ConfigurationError(f"annotator_drop_p must be in [0, 1), got {self.annotator_drop_p}")
        if self.annotator_jitter_sigma < 0.0:
            raise ConfigurationError(f"annotator_jitter_sigma must be >= 0, got {self.annotator_jitter_sigma}")


def _sample_cuts(rng: np.random.Generator, k: int, L: int) -> tuple[int, ...]:
    """k - 1 sorted cut frames keeping every segment at least _MIN_SEGMENT wide."""
    while True:
        cuts = np.sort(rng.choice(np.arange(1, L), size=k - 1, replace=False))
        edges = np.concatenate(([0], cuts, [L]))
        if np.diff(edges).min() >= _MIN_SEGMENT:
            return tuple(int(c) for c in cuts)


def _annotate(rng: np.random.Generator, truth, cfg: SyntheticConfig) -> BoundarySet:
    jittered = []
    kept = []
    for b in truth:
        offset = int(round(rng.normal(0.0, cfg.annotator_jitter_sigma)))
        frame = int(np.clip(b + offset, 1, cfg.L - 1))
        jittered.append(frame)
        kept.append(rng.random() >= cfg.annotator_drop_p)
    survivors = [f for f, keep in zip(jittered, kept) if keep]
    if not survivors:
        survivors = [jittered[0]]
    return BoundarySet.from_frames(survivors, cfg.L)


def generate_synthetic(cfg: SyntheticConfig) -> tuple[list[VideoRecord], list[BoundarySet]]:
    """Deterministic dataset plus its latent truths, streamed per video.

    Video i draws from a generator seeded with (cfg.seed, i), so records
    are reproducible independently of num_videos.
    """
    videos = []
    truths = []
    for i in range(cfg.num_videos):
        rng = np.random.default_rng((cfg.seed, i))
        k = int(rng.integers(cfg.segments_range[0], cfg.segments_range[1] + 1))
        cuts = _sample_cuts(rng, k, cfg.L)
        states = rng.standard_normal((k, cfg.D))
        segment_of_frame = np.searchsorted(np.array(cuts), np.arange(cfg.L), side="right")
        features = states[segment_of_frame] + cfg.feature_noise_sigma * rng.standard_normal(
            (cfg.L, cfg.D)
        )
        truth = BoundarySet(cuts, cfg.L)
        annotations = [_annotate(rng, truth.frames, cfg) for _ in range(cfg.num_annotators)]
        videos.append(VideoRecord(id=f"video{i:04d}", L=cfg.L, features=features, annotations=annotations))
        truths.append(truth)
    return videos, truths


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def write_features(path: Path, features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float64)
    L, D = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, L, D))
        fh.write(features.astype("<f8").tobytes())


def read_features(path: Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: file shorter than the header")
    magic, L, D = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * L * D
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes for L={L}, D={D}, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(L, D).astype(np.float64)


def write_boundary_file(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "video_id": rec.video_id,
                        "source": rec.source,
                        "annotator_or_sample_index": rec.annotator_or_sample_index,
                        "L": rec.L,
                        "frames": list(rec.frames),
                    }
                )
            )
            fh.write("\n")


def read_boundary_file(path: Path) -> list[BoundaryRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                video_id = obj["video_id"]
                source = obj["source"]
                index = int(obj["annotator_or_sample_index"])
                L = int(obj["L"])
                frames = tuple(int(f) for f in obj["frames"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
            if source not in (SOURCE_GT, SOURCE_PRED):
                raise DataError(f"{path}:{lineno}: unknown source {source!r}")
            if any(not 0 <= f < L for f in frames):
                raise DataError(f"{path}:{lineno}: frame out of [0, {L})")
            if any(a >= b for a, b in zip(frames, frames[1:])):
                raise DataError(f"{path}:{lineno}: frames not strictly increasing")
            records.append(BoundaryRecord(video_id, source, index, L, frames))
    return records


def group_by_video(records) -> dict[str, list[BoundarySet]]:
    """Boundary sets per video id, ordered by annotator/sample index."""
    grouped: dict[str, list[BoundaryRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.video_id, []).append(rec)
    return {
        vid: [r.to_set() for r in sorted(recs, key=lambda r: r.annotator_or_sample_index)]
        for vid, recs in grouped.items()
    }


def write_dataset(dataset: list[VideoRecord], directory: Path) -> None:
    directory = Path(directory)
    feature_dir = directory / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for video in dataset:
        write_features(feature_dir / f"{video.id}.dbf", video.features)
        for a, ann in enumerate(video.annotations):
            records.append(BoundaryRecord(video.id, SOURCE_GT, a, video.L, ann.frames))
    write_boundary_file(directory / "annotations.jsonl", records)


def read_dataset(directory: Path) -> list[VideoRecord]:
    directory = Path(directory)
    records = read_boundary_file(directory / "annotations.jsonl")
    grouped = group_by_video(records)
    videos = []
    for video_id in sorted(grouped):
        path = directory / "features" / f"{video_id}.dbf"
        if not path.exists():
            raise DataError(f"{path}: missing feature file for annotated video {video_id!r}")
        features = read_features(path)
        L = grouped[video_id][0].L
        if features.shape[0] != L:
            raise DataError(f"{path}: feature length {features.shape[0]} != annotation L {L}")
        videos.append(VideoRecord(id=video_id, L=L, features=features, annotations=grouped[video_id]))
    return videos


def resample_video(video: VideoRecord, L_new: int) -> VideoRecord:
    """Uniform temporal resampling by nearest-frame selection.

    Feature rows pick the nearest source frame; boundary frames rescale by
    round(frame * L_new / L_old) and clip into range.
    """
    if video.L == L_new:
        return video
    idx = np.minimum(np.rint(np.arange(L_new) * video.L / L_new).astype(int), video.L - 1)
    annotations = [
        BoundarySet.from_frames(
            np.clip(np.rint(np.array(a.frames) * L_new / video.L).astype(int), 0, L_new - 1),
            L_new,
        )
        for a in video.annotations
    ]
    return VideoRecord(id=video.id, L=L_new, features=video.features[idx], annotations=annotations)


def ingest_external_features(feature_dir: Path, annotation_file: Path, L: int) -> list[VideoRecord]:
    """Load externally produced features plus annotations, resampled to L frames.

    This is the plug-in point for real pre-extracted backbone features;
    the feature files must follow the binary format above and carry their
    video id as the file stem.
    """
    feature_dir = Path(feature_dir)
    grouped = group_by_video(read_boundary_file(annotation_file))
    videos = []
    for video_id in sorted(grouped):
        path = feature_dir / f"{video_id}.dbf"
        if not path.exists():
            raise DataError(f"{path}: no feature file for annotated video {video_id!r}")
        features = read_features(path)
        L_old = features.shape[0]
        if any(a.L != L_old for a in grouped[video_id]):
            raise DataError(f"{path}: annotation L does not match feature length {L_old}")
        video = VideoRecord(id=video_id, L=L_old, features=features, annotations=grouped[video_id])
        videos.append(resample_video(video, L))
    return videos
