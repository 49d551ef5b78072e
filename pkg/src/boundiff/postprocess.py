"""Turn a denoised per-frame signal into discrete boundary frames."""

from __future__ import annotations

from dataclasses import dataclass

from .diffusion import BoundarySignal
from .metrics import BoundarySet


@dataclass(frozen=True)
class PostprocessConfig:
    """Threshold on the [0, 1] score scale; signals decode via (v/s + 1) / 2."""

    delta: float = 0.5
    signal_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.signal_scale > 0:
            raise ValueError(f"signal_scale must be positive, got {self.signal_scale}")


def binarize_runs(signal: BoundarySignal, config: PostprocessConfig) -> BoundarySet:
    """Emit the midpoint of each maximal run of frames scoring above delta.

    Scores must strictly exceed the threshold to join a run; even-length
    runs take the floor midpoint.
    """
    scores = (signal.values / config.signal_scale + 1.0) / 2.0
    frames = []
    start = None
    for i, score in enumerate(scores):
        if score > config.delta:
            if start is None:
                start = i
        elif start is not None:
            frames.append((start + i - 1) // 2)
            start = None
    if start is not None:
        frames.append((start + len(scores) - 1) // 2)
    return BoundarySet.from_frames(frames, len(signal))
