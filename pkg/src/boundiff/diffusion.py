"""Forward corruption, DDIM updates, guidance, and the sampling loops.

Signals live on a per-frame real line: binary boundary labels {0, 1} map to
{-scale, +scale} so that clean data is zero-centered like the standard
normal noise prior. All sampling is deterministic given the seed; with
eta = 0 the reverse process is fully deterministic and prediction diversity
comes only from the initial noise draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .schedule import NoiseSchedule, alpha_bar, make_step_ladder

if TYPE_CHECKING:
    from .nn import ConditionEmbedding


@dataclass(frozen=True)
class BoundarySignal:
    """A length-L real-valued sequence over video frames."""

    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError(f"signal must be 1-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("signal contains non-finite values")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        values.flags.writeable = False

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SampleConfig:
    """Settings for one reverse-process sampling run."""

    steps: int = 32
    guidance_weight: float = 0.6
    num_predictions: int = 5
    eta: float = 0.0
    seed: int | tuple[int, ...] = 0
    signal_scale: float = 1.0
    clamp: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.num_predictions < 1:
            raise ValueError(f"num_predictions must be >= 1, got {self.num_predictions}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.guidance_weight < 0.0:
            raise ValueError(f"guidance_weight must be >= 0, got {self.guidance_weight}")


class Denoiser(Protocol):
    """Anything that estimates the clean signal from a noisy one."""

    def denoise(
        self, y_t: BoundarySignal, t: int, condition: "ConditionEmbedding | None"
    ) -> BoundarySignal: ...


def signal_from_boundaries(
    frames, L: int, scale: float = 1.0, smoothing_radius: int = 0
) -> BoundarySignal:
    """Encode boundary frame indices as a {-scale, +scale} signal.

    ``smoothing_radius`` widens each boundary impulse to the frames within
    that radius; the default 0 keeps exact single-frame impulses.
    """
    values = np.full(L, -scale, dtype=np.float64)
    for f in frames:
        lo = max(0, int(f) - smoothing_radius)
        hi = min(L, int(f) + smoothing_radius + 1)
        values[lo:hi] = scale
    return BoundarySignal(values, scale)


def corrupt(y0: BoundarySignal, t: int, eps: BoundarySignal, schedule: NoiseSchedule) -> BoundarySignal:
    """Forward-process corruption of a clean signal at step t.

    Returns sqrt(alpha_bar_t) * y0 + sqrt(1 - alpha_bar_t) * eps; t = 0
    returns the clean signal unchanged.
    """
    if not 0 <= t <= schedule.T:
        raise ValueError(f"t must be in [0, {schedule.T}], got {t}")
    if len(eps) != len(y0):
        raise ValueError(f"noise length {len(eps)} != signal length {len(y0)}")
    ab = alpha_bar(schedule, t)
    values = math.sqrt(ab) * y0.values + math.sqrt(1.0 - ab) * eps.values
    return BoundarySignal(values, y0.scale)


def ddim_step(
    y_t: BoundarySignal,
    y0_hat: BoundarySignal,
    t_now: int,
    t_next: int,
    schedule: NoiseSchedule,
    eta: float = 0.0,
    noise: BoundarySignal | None = None,
) -> BoundarySignal:
    """One reverse update from t_now to t_next given a clean-signal estimate.

    Rebuilds the implied noise from (y_t, y0_hat), scales it for the target
    step, and optionally injects fresh noise weighted by eta. When t_next
    hits the -1 sentinel the estimate is returned exactly.
    """
    if t_next >= t_now:
        raise ValueError(f"t_next ({t_next}) must be below t_now ({t_now})")
    if len(y_t) != len(y0_hat):
        raise ValueError(f"signal lengths differ: {len(y_t)} vs {len(y0_hat)}")
    ab_now = alpha_bar(schedule, t_now)
    ab_next = alpha_bar(schedule, t_next)
    if ab_now >= 1.0:
        raise ValueError(f"t_now={t_now} has alpha_bar=1; implied noise is undefined")
    if ab_next >= 1.0:
        return y0_hat
    sigma = eta * math.sqrt((1.0 - ab_next) / (1.0 - ab_now)) * math.sqrt(1.0 - ab_now / ab_next)
    implied_noise = (y_t.values - math.sqrt(ab_now) * y0_hat.values) / math.sqrt(1.0 - ab_now)
    values = math.sqrt(ab_next) * y0_hat.values
    values = values + math.sqrt(1.0 - ab_next - sigma * sigma) * implied_noise
    if sigma > 0.0:
        if noise is None:
            raise ValueError("eta > 0 requires a noise signal")
        if len(noise) != len(y_t):
            raise ValueError(f"noise length {len(noise)} != signal length {len(y_t)}")
        values = values + sigma * noise.values
    return BoundarySignal(values, y0_hat.scale)


def cfg_combine(y_cond: BoundarySignal, y_uncond: BoundarySignal, w: float) -> BoundarySignal:
    """Guided estimate (1 + w) * conditional - w * unconditional."""
    if len(y_cond) != len(y_uncond):
        raise ValueError(f"signal lengths differ: {len(y_cond)} vs {len(y_uncond)}")
    return BoundarySignal((1.0 + w) * y_cond.values - w * y_uncond.values, y_cond.scale)


def _seed_entropy(seed: int | tuple[int, ...], chain: int) -> tuple[int, ...]:
    base = seed if isinstance(seed, tuple) else (seed,)
    return (*base, chain)


def sample_one(
    model: Denoiser,
    condition: "ConditionEmbedding | None",
    schedule: NoiseSchedule,
    cfg: SampleConfig,
    init_noise: BoundarySignal,
    rng: np.random.Generator | None = None,
) -> BoundarySignal:
    """Run the full guided reverse process from one initial noise signal.

    Each ladder step evaluates the denoiser twice (with the condition and
    with the all-zero condition), combines the two estimates with the
    guidance weight, optionally clamps the combined estimate into the signal
    range, and applies the reverse update. ``rng`` feeds the eta > 0 noise;
    by default it derives from (cfg.seed, 0).
    """
    if rng is None:
        rng = np.random.default_rng(_seed_entropy(cfg.seed, 0))
    ladder = make_step_ladder(schedule.T, cfg.steps)
    y = init_noise
    scale = init_noise.scale
    for t_now, t_next in ladder.pairs:
        y_c = model.denoise(y, t_now, condition)
        y_u = model.denoise(y, t_now, None)
        y0_hat = cfg_combine(y_c, y_u, cfg.guidance_weight)
        if cfg.clamp:
            y0_hat = BoundarySignal(np.clip(y0_hat.values, -scale, scale), scale)
        noise = None
        if cfg.eta > 0.0:
            noise = BoundarySignal(rng.standard_normal(len(y)), scale)
        y = ddim_step(y, y0_hat, t_now, t_next, schedule, cfg.eta, noise)
    return y


def sample_many(
    model: Denoiser,
    condition: "ConditionEmbedding | None",
    schedule: NoiseSchedule,
    cfg: SampleConfig,
    length: int | None = None,
) -> list[BoundarySignal]:
    """Draw num_predictions independent chains, ordered by draw index.

    Chain k derives its generator from (cfg.seed, k), so a chain's output
    does not depend on how many other chains run alongside it. ``length``
    defaults to the condition's frame count.
    """
    if length is None:
        if condition is None:
            raise ValueError("length is required when sampling without a condition")
        length = condition.matrix.shape[0]
    outputs = []
    for k in range(cfg.num_predictions):
        rng = np.random.default_rng(_seed_entropy(cfg.seed, k))
        init = BoundarySignal(rng.standard_normal(length), cfg.signal_scale)
        outputs.append(sample_one(model, condition, schedule, cfg, init, rng))
    return outputs
