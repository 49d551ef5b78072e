"""The conditioning encoder and the denoising decoder.

The encoder turns a per-frame feature matrix into a condition embedding:
a 1-D convolution, windowed cosine self-similarity, then a two-layer
pointwise projection. The decoder denoises a per-frame signal with
self-attention blocks, modulated by the diffusion step through a
scale-and-shift of the hidden states.

All learnable state lives in a flat name -> Tensor dict so the optimizer
and the checkpoint format can treat parameters uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .diffusion import BoundarySignal
from .errors import ConfigurationError, ModelError

CONDITION_SOURCES = ("similarity", "raw")

# Feed-forward widening factor inside each decoder block.
_FF_MULT = 4


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; shapes derive entirely from these."""

    L: int = 100
    D: int = 16
    C: int = 32
    window: int = 5
    decoder_layers: int = 2
    decoder_dim: int = 64
    heads: int = 4
    t_embed_dim: int = 64
    condition_source: str = "similarity"

    def __post_init__(self):
        for name in ("L", "D", "C", "window", "decoder_layers", "decoder_dim", "heads", "t_embed_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.decoder_dim % self.heads != 0:
            raise ConfigurationError(
                f"decoder_dim ({self.decoder_dim}) must be divisible by heads ({self.heads})"
            )
        if self.t_embed_dim % 2 != 0:
            raise ConfigurationError(f"t_embed_dim must be even, got {self.t_embed_dim}")
        if self.decoder_dim % 2 != 0:
            raise ConfigurationError(f"decoder_dim must be even, got {self.decoder_dim}")
        if self.condition_source not in CONDITION_SOURCES:
            raise ConfigurationError(
                f"condition_source must be one of {CONDITION_SOURCES}, got {self.condition_source!r}"
            )

    @property
    def condition_dim(self) -> int:
        """Channel width of the condition fed to the decoder."""
        return self.C if self.condition_source == "similarity" else self.D


@dataclass(frozen=True)
class ConditionEmbedding:
    """Per-frame condition matrix (L x condition_dim)."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError(f"condition must be 2-D, got shape {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)
        matrix.flags.writeable = False

    def __len__(self) -> int:
        return self.matrix.shape[0]


def sinusoidal_embed(value: float, dim: int) -> np.ndarray:
    """Sin/cos features of a scalar at geometrically spaced frequencies.

    The first dim/2 entries are sin(value * w_i) and the last dim/2 are
    cos(value * w_i) with w_i = 10000^(-2i/dim).
    """
    if dim < 2 or dim % 2 != 0:
        raise ConfigurationError(f"embedding dim must be a positive even integer, got {dim}")
    if value < 0:
        raise ValueError(f"embedded value must be non-negative, got {value}")
    i = np.arange(dim // 2, dtype=np.float64)
    angles = value * 10000.0 ** (-2.0 * i / dim)
    return np.concatenate([np.sin(angles), np.cos(angles)])


def self_similarity(features: np.ndarray, window: int) -> np.ndarray:
    """Windowed cosine self-similarity of a feature matrix (array level)."""
    with ad.no_grad():
        return ad.cosine_window_similarity(ad.Tensor(features), window).data


def _linear(x: ad.Tensor, params: dict, name: str) -> ad.Tensor:
    return x @ params[f"{name}.w"] + params[f"{name}.b"]


def _mlp2(x: ad.Tensor, params: dict, name: str) -> ad.Tensor:
    """Two-layer pointwise network with a GELU in between."""
    return _linear(ad.gelu(_linear(x, params, f"{name}1")), params, f"{name}2")


class DenoiserModel:
    """Encoder + decoder parameters with differentiable forward passes."""

    def __init__(self, config: ModelConfig, params: dict[str, ad.Tensor]):
        self.config = config
        self.params = params
        self._posemb = np.stack(
            [sinusoidal_embed(l, config.decoder_dim) for l in range(config.L)]
        )

    # -- construction -------------------------------------------------

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "DenoiserModel":
        """Fresh parameters, deterministic in (config, seed).

        Linear and conv weights draw from a symmetric uniform range scaled
        by fan-in; biases and the final head layer start at zero, so an
        untrained model predicts the neutral signal 0 everywhere.
        """
        rng = np.random.default_rng(seed)
        params: dict[str, ad.Tensor] = {}

        def weight(name, shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            params[name] = ad.Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

        def bias(name, size):
            params[name] = ad.Tensor(np.zeros(size), requires_grad=True)

        def norm(name, size):
            params[f"{name}.g"] = ad.Tensor(np.ones(size), requires_grad=True)
            params[f"{name}.b"] = ad.Tensor(np.zeros(size), requires_grad=True)

        def linear(name, d_in, d_out):
            weight(f"{name}.w", (d_in, d_out), d_in)
            bias(f"{name}.b", d_out)

        c = config
        if c.condition_source == "similarity":
            weight("enc.conv.w", (3, c.D, c.D), 3 * c.D)
            bias("enc.conv.b", c.D)
            linear("enc.proj1", 2 * c.window + 1, c.C)
            linear("enc.proj2", c.C, c.C)
        dd, te = c.decoder_dim, c.t_embed_dim
        linear("dec.in1", 1, dd)
        linear("dec.in2", dd, dd)
        linear("dec.cond", dd + c.condition_dim, dd)
        linear("dec.time1", te, te)
        linear("dec.time2", te, te)
        for i in range(c.decoder_layers):
            base = f"dec.layer{i}"
            norm(f"{base}.ln1", dd)
            for proj in ("q", "k", "v", "o"):
                linear(f"{base}.attn.{proj}", dd, dd)
            linear(f"{base}.film.scale", te, dd)
            linear(f"{base}.film.shift", te, dd)
            norm(f"{base}.ln2", dd)
            linear(f"{base}.ff1", dd, _FF_MULT * dd)
            linear(f"{base}.ff2", _FF_MULT * dd, dd)
        linear("dec.head1", dd, dd)
        params["dec.head2.w"] = ad.Tensor(np.zeros((dd, 1)), requires_grad=True)
        params["dec.head2.b"] = ad.Tensor(np.zeros(1), requires_grad=True)
        return cls(config, params)

    def parameters(self) -> dict[str, ad.Tensor]:
        return self.params

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    # -- encoder ------------------------------------------------------

    def encode_t(self, features: ad.Tensor) -> ad.Tensor:
        """Differentiable condition embedding from a feature matrix."""
        c = self.config
        if features.shape != (c.L, c.D):
            raise ModelError(f"features shape {features.shape} != ({c.L}, {c.D})")
        if c.condition_source == "raw":
            return features
        x = ad.conv1d(features, self.params["enc.conv.w"], self.params["enc.conv.b"])
        sim = ad.cosine_window_similarity(x, c.window)
        return _mlp2(sim, self.params, "enc.proj")

    def encode(self, features: np.ndarray) -> ConditionEmbedding:
        with ad.no_grad():
            return ConditionEmbedding(self.encode_t(ad.Tensor(features)).data)

    # -- decoder ------------------------------------------------------

    def _attention(self, x: ad.Tensor, base: str) -> ad.Tensor:
        c = self.config
        L, dd, H = c.L, c.decoder_dim, c.heads
        dh = dd // H

        def heads(name):
            proj = _linear(x, self.params, f"{base}.attn.{name}")
            return ad.transpose(ad.reshape(proj, (L, H, dh)), (1, 0, 2))

        q, k, v = heads("q"), heads("k"), heads("v")
        scores = ad.matmul(q, ad.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(dh))
        ctx = ad.matmul(ad.softmax(scores, axis=-1), v)
        ctx = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (L, dd))
        return _linear(ctx, self.params, f"{base}.attn.o")

    def denoise_t(self, y: ad.Tensor, t: int, condition: ad.Tensor | None) -> ad.Tensor:
        """Differentiable clean-signal estimate from a noisy signal at step t."""
        c = self.config
        p = self.params
        if y.shape != (c.L,):
            raise ModelError(f"signal shape {y.shape} != ({c.L},)")
        if condition is None:
            condition = ad.Tensor(np.zeros((c.L, c.condition_dim)))
        if condition.shape != (c.L, c.condition_dim):
            raise ModelError(
                f"condition shape {condition.shape} != ({c.L}, {c.condition_dim})"
            )
        h = _mlp2(ad.reshape(y, (c.L, 1)), p, "dec.in")
        h = _linear(ad.concat([h, condition], axis=-1), p, "dec.cond")
        h = h + ad.Tensor(self._posemb)
        temb = ad.Tensor(sinusoidal_embed(t, c.t_embed_dim).reshape(1, c.t_embed_dim))
        tfeat = _mlp2(temb, p, "dec.time")
        for i in range(c.decoder_layers):
            base = f"dec.layer{i}"
            a = ad.layer_norm(h, p[f"{base}.ln1.g"], p[f"{base}.ln1.b"])
            h = h + self._attention(a, base)
            scale = _linear(tfeat, p, f"{base}.film.scale")
            shift = _linear(tfeat, p, f"{base}.film.shift")
            h = ad.scale_shift(h, scale, shift)
            f = ad.layer_norm(h, p[f"{base}.ln2.g"], p[f"{base}.ln2.b"])
            h = h + _mlp2(f, p, f"{base}.ff")
        out = _mlp2(h, p, "dec.head")
        return ad.reshape(out, (c.L,))

    def denoise(
        self, y_t: BoundarySignal, t: int, condition: ConditionEmbedding | None
    ) -> BoundarySignal:
        """Array-level denoising used by the samplers; never records a tape."""
        cond_t = None if condition is None else ad.Tensor(condition.matrix)
        with ad.no_grad():
            values = self.denoise_t(ad.Tensor(y_t.values), t, cond_t).data
        return BoundarySignal(values, y_t.scale)
