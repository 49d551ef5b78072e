"""Noise schedules and step ladders for the diffusion process.

Conventions:
  t = 0      clean data; cumulative signal coefficient alpha_bar = 1
  t in 1..T  increasingly corrupted
  t = -1     sentinel for "fully denoised"; aliases t = 0

``alpha_bars`` has length T + 1 so that ``alpha_bars[t]`` is the running
product of ``alphas`` over steps 1..t, with ``alpha_bars[0] = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

SCHEDULE_KINDS = ("linear", "cosine")

# Squared-cosine curve offset and per-step cap, the standard choices for
# discrete cosine schedules.
_COSINE_OFFSET = 0.008
_MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their cumulative products.

    ``betas[i]`` is the variance added at step t = i + 1.
    """

    kind: str
    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        for arr in (self.betas, self.alphas, self.alpha_bars):
            arr.flags.writeable = False


@dataclass(frozen=True)
class StepLadder:
    """Descending (t_now, t_next) pairs ending at the t = -1 sentinel."""

    steps: int
    pairs: tuple[tuple[int, int], ...]


def build_schedule(
    kind: str, T: int, beta_range: tuple[float, float] = (1e-4, 0.02)
) -> NoiseSchedule:
    """Construct a noise schedule of the given kind.

    ``beta_range`` bounds the per-step variance for the linear kind and is
    ignored for the cosine kind, whose betas derive from the squared-cosine
    cumulative curve (each beta clipped to [0, 0.999]).
    """
    if not isinstance(T, int) or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T!r}")
    if kind == "linear":
        lo, hi = beta_range
        if not (0.0 < lo <= hi < 1.0):
            raise ConfigurationError(
                f"linear schedule needs 0 < beta_lo <= beta_hi < 1, got {beta_range!r}"
            )
        betas = np.linspace(lo, hi, T, dtype=np.float64)
    elif kind == "cosine":
        grid = np.arange(T + 1, dtype=np.float64) / T
        curve = np.cos((grid + _COSINE_OFFSET) / (1.0 + _COSINE_OFFSET) * math.pi / 2.0) ** 2
        betas = np.clip(1.0 - curve[1:] / curve[:-1], 0.0, _MAX_BETA)
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    alphas = 1.0 - betas
    alpha_bars = np.concatenate(([1.0], np.cumprod(alphas)))
    return NoiseSchedule(kind=kind, T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def alpha_bar(schedule: NoiseSchedule, t: int) -> float:
    """Cumulative signal coefficient at step t; t = -1 and t = 0 both give 1."""
    if not -1 <= t <= schedule.T:
        raise ValueError(f"t must be in [-1, {schedule.T}], got {t}")
    return float(schedule.alpha_bars[max(t, 0)])


def make_step_ladder(T: int, steps: int) -> StepLadder:
    """Evenly spaced descending sampling pairs over the schedule.

    Rounds ``steps + 1`` grid points spanning [-1, T-1] to integers, so the
    ladder performs exactly ``steps`` updates, starts at t_now = T - 1 and
    ends at t_next = -1.
    """
    if not isinstance(steps, int) or steps < 1:
        raise ConfigurationError(f"steps must be a positive integer, got {steps!r}")
    if steps > T:
        raise ConfigurationError(f"steps ({steps}) cannot exceed T ({T})")
    grid = np.rint(np.linspace(-1.0, T - 1.0, steps + 1)).astype(int)
    times = [int(t) for t in np.unique(grid)[::-1]]
    pairs = tuple(zip(times[:-1], times[1:]))
    return StepLadder(steps=len(pairs), pairs=pairs)
