"""Boundary-set evaluation: relative-distance F1 and its diversity-aware
extensions.

Two boundaries match when their frame distance is at most tau * L; the
matching between two sets is one-to-one and of maximum cardinality, which a
sorted two-pointer sweep realizes for a fixed threshold on a line.

Empty-set conventions: F1(empty, empty) = 1 and F1(empty, nonempty) = 0,
so identical predictions contribute zero diversity and degenerate
predictions are penalized rather than crashing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError

DEFAULT_TAU = 0.05
SWEEP_TAUS = tuple(round(0.05 * k, 2) for k in range(1, 11))

METRIC_NAMES = ("f1_conventional", "f1_p2g", "f1_g2p", "f1_sym", "diversity", "ged")


@dataclass(frozen=True)
class BoundarySet:
    """Strictly increasing boundary frame indices within a video of L frames."""

    frames: tuple[int, ...]
    L: int

    def __post_init__(self):
        frames = tuple(int(f) for f in self.frames)
        object.__setattr__(self, "frames", frames)
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if any(not 0 <= f < self.L for f in frames):
            raise ValueError(f"frames must lie in [0, {self.L}), got {frames}")
        if any(a >= b for a, b in zip(frames, frames[1:])):
            raise ValueError(f"frames must be strictly increasing, got {frames}")

    @classmethod
    def from_frames(cls, frames, L: int) -> "BoundarySet":
        """Sort and deduplicate before constructing."""
        return cls(tuple(sorted(set(int(f) for f in frames))), L)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class EvalConfig:
    rel_dis: float = DEFAULT_TAU
    thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.rel_dis > 0:
            raise ValueError(f"rel_dis must be positive, got {self.rel_dis}")
        if self.thresholds is not None and any(t <= 0 for t in self.thresholds):
            raise ValueError(f"all thresholds must be positive, got {self.thresholds}")

    @property
    def taus(self) -> tuple[float, ...]:
        return self.thresholds if self.thresholds is not None else (self.rel_dis,)


def match_boundaries(pred: BoundarySet, gt: BoundarySet, tau: float) -> int:
    """Size of the maximum one-to-one matching within distance tau * L."""
    if pred.L != gt.L:
        raise ValueError(f"video lengths differ: {pred.L} vs {gt.L}")
    window = tau * pred.L
    i = j = matches = 0
    p, g = pred.frames, gt.frames
    while i < len(p) and j < len(g):
        if abs(p[i] - g[j]) <= window:
            matches += 1
            i += 1
            j += 1
        elif p[i] < g[j]:
            i += 1
        else:
            j += 1
    return matches


def f1_reldis(pred: BoundarySet, gt: BoundarySet, tau: float) -> float:
    """Harmonic mean of matching precision and recall."""
    if not pred.frames and not gt.frames:
        return 1.0
    if not pred.frames or not gt.frames:
        return 0.0
    matches = match_boundaries(pred, gt, tau)
    if matches == 0:
        return 0.0
    precision = matches / len(pred)
    recall = matches / len(gt)
    return 2.0 * precision * recall / (precision + recall)


def conventional_f1(pred: BoundarySet, annotations, tau: float) -> float:
    """Best F1 of a single prediction over all annotations."""
    if not annotations:
        raise ValueError("conventional_f1 requires at least one annotation")
    return max(f1_reldis(pred, gt, tau) for gt in annotations)


def f1_p2g(preds, gts, tau: float) -> float:
    """Mean over predictions of their best F1 against any annotation."""
    if not preds or not gts:
        raise ValueError("f1_p2g requires nonempty prediction and annotation lists")
    return sum(max(f1_reldis(p, g, tau) for g in gts) for p in preds) / len(preds)


def f1_g2p(preds, gts, tau: float) -> float:
    """Mean over annotations of their best F1 against any prediction."""
    return f1_p2g(gts, preds, tau)


def f1_sym(preds, gts, tau: float) -> float:
    """Harmonic mean of the two directional alignment scores."""
    p2g = f1_p2g(preds, gts, tau)
    g2p = f1_g2p(preds, gts, tau)
    if p2g + g2p == 0.0:
        return 0.0
    return 2.0 * p2g * g2p / (p2g + g2p)


def diversity(preds, tau: float) -> float:
    """Mean pairwise dissimilarity over all ordered prediction pairs.

    The double sum includes i = j terms, which contribute zero under the
    identical-set and empty-set conventions.
    """
    if not preds:
        raise ValueError("diversity requires a nonempty prediction list")
    n = len(preds)
    total = sum(1.0 - f1_reldis(a, b, tau) for a in preds for b in preds)
    return total / (n * n)


def ged(preds, gts, tau: float) -> float:
    """Energy-style distance between prediction and annotation sets.

    Twice the mean cross distance minus both mean within-set distances,
    every mean over all ordered pairs including diagonals, with distance
    d(a, b) = 1 - F1(a, b).
    """
    if not preds or not gts:
        raise ValueError("ged requires nonempty prediction and annotation lists")

    def mean_distance(xs, ys):
        return sum(1.0 - f1_reldis(a, b, tau) for a in xs for b in ys) / (len(xs) * len(ys))

    return 2.0 * mean_distance(preds, gts) - mean_distance(preds, preds) - mean_distance(gts, gts)


@dataclass(frozen=True)
class VideoScores:
    video_id: str
    tau: float
    f1_conventional: float
    f1_p2g: float
    f1_g2p: float
    f1_sym: float
    diversity: float
    ged: float

    def value(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class EvalReport:
    """Per-video scores plus unweighted dataset means, per threshold."""

    per_video: tuple[VideoScores, ...]
    summary: dict[float, dict[str, float]] = field(default_factory=dict)

    def mean(self, tau: float, name: str) -> float:
        return self.summary[tau][name]


def score_video(video_id: str, preds, gts, tau: float) -> VideoScores:
    """All metrics for one video at one threshold.

    The conventional column scores prediction index 0 alone, matching the
    single-prediction protocol (its mean over predictions would duplicate
    the prediction-to-annotation alignment score).
    """
    return VideoScores(
        video_id=video_id,
        tau=tau,
        f1_conventional=conventional_f1(preds[0], gts, tau),
        f1_p2g=f1_p2g(preds, gts, tau),
        f1_g2p=f1_g2p(preds, gts, tau),
        f1_sym=f1_sym(preds, gts, tau),
        diversity=diversity(preds, tau),
        ged=ged(preds, gts, tau),
    )


def evaluate_dataset(
    all_preds: dict[str, list[BoundarySet]],
    all_gts: dict[str, list[BoundarySet]],
    config: EvalConfig,
) -> EvalReport:
    """Score every video at every threshold and average per threshold."""
    missing_gt = sorted(set(all_preds) - set(all_gts))
    missing_pred = sorted(set(all_gts) - set(all_preds))
    if missing_gt or missing_pred:
        raise DataError(
            f"video ids misaligned: missing annotations for {missing_gt}, "
            f"missing predictions for {missing_pred}"
        )
    rows = []
    for video_id in sorted(all_preds):
        for tau in config.taus:
            rows.append(score_video(video_id, all_preds[video_id], all_gts[video_id], tau))
    summary: dict[float, dict[str, float]] = {}
    for tau in config.taus:
        tau_rows = [r for r in rows if r.tau == tau]
        summary[tau] = {
            name: sum(r.value(name) for r in tau_rows) / len(tau_rows)
            for name in METRIC_NAMES
        }
    return EvalReport(per_video=tuple(rows), summary=summary)
