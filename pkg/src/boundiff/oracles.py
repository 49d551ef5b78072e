"""Brute-force reference implementations for tests.

Everything here trades speed for obviousness: exhaustive matching,
per-coordinate finite differences, and metric formulas transcribed as
nested loops. None of it shares code with the production paths beyond the
domain types, and none of it belongs on a hot path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import BoundarySignal
from .metrics import BoundarySet

_MAX_BRUTE_SIZE = 10


@dataclass(frozen=True)
class OracleDenoiser:
    """Test double that ignores its inputs and returns the stored clean signal."""

    y0: BoundarySignal

    def denoise(self, y_t, t, condition) -> BoundarySignal:
        return self.y0


def brute_force_matching(pred: BoundarySet, gt: BoundarySet, tau: float) -> int:
    """Maximum one-to-one matching size by exhaustive assignment search."""
    if len(pred) > _MAX_BRUTE_SIZE or len(gt) > _MAX_BRUTE_SIZE:
        raise ValueError(f"brute-force matching capped at {_MAX_BRUTE_SIZE} boundaries per side")
    window = tau * pred.L
    candidates = [
        [j for j, g in enumerate(gt.frames) if abs(p - g) <= window] for p in pred.frames
    ]

    def best(i: int, used: int) -> int:
        if i == len(candidates):
            return 0
        top = best(i + 1, used)
        for j in candidates[i]:
            if not used & (1 << j):
                top = max(top, 1 + best(i + 1, used | (1 << j)))
        return top

    return best(0, 0)


def oracle_f1(a: BoundarySet, b: BoundarySet, tau: float) -> float:
    """F1 from the brute-force matching, same empty-set conventions."""
    if not a.frames and not b.frames:
        return 1.0
    if not a.frames or not b.frames:
        return 0.0
    m = brute_force_matching(a, b, tau)
    if m == 0:
        return 0.0
    precision = m / len(a)
    recall = m / len(b)
    return 2.0 * precision * recall / (precision + recall)


def finite_difference_grad(f, inputs, eps: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of a scalar function, per input array."""
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    grads = []
    for k, arr in enumerate(arrays):
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(*arrays))
            flat[i] = orig - eps
            fm = float(f(*arrays))
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
        grads.append(grad)
    return grads


def direct_metric_eval(preds, gts, tau: float) -> dict[str, float]:
    """Literal nested-loop transcription of the diversity-aware metrics."""
    n_p, n_g = len(preds), len(gts)

    p2g = 0.0
    for p in preds:
        p2g += max(oracle_f1(p, g, tau) for g in gts)
    p2g /= n_p

    g2p = 0.0
    for g in gts:
        g2p += max(oracle_f1(p, g, tau) for p in preds)
    g2p /= n_g

    sym = 0.0 if p2g + g2p == 0.0 else 2.0 * p2g * g2p / (p2g + g2p)

    div = 0.0
    for a in preds:
        for b in preds:
            div += 1.0 - oracle_f1(a, b, tau)
    div /= n_p * n_p

    cross = 0.0
    for p in preds:
        for g in gts:
            cross += 1.0 - oracle_f1(p, g, tau)
    within_p = 0.0
    for a in preds:
        for b in preds:
            within_p += 1.0 - oracle_f1(a, b, tau)
    within_g = 0.0
    for a in gts:
        for b in gts:
            within_g += 1.0 - oracle_f1(a, b, tau)
    ged = 2.0 * cross / (n_p * n_g) - within_p / (n_p * n_p) - within_g / (n_g * n_g)

    return {"f1_p2g": p2g, "f1_g2p": g2p, "f1_sym": sym, "diversity": div, "ged": ged}
