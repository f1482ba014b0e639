"""Training objectives: frame-wise BCE, the gated curriculum variant, and
the auxiliary activity/scene losses used by the multitask baselines.

Reduction convention: sum over event classes and frames per clip, then
mean over the batch.  The curriculum loss multiplies each event row by a
per-clip gate g[n] = alpha*f[n] + (1-alpha)*(1-f[n]) before that same
reduction, so alpha=0 trains only events absent from the clip's scene
inventory, alpha=1 only events present in it, and alpha=0.5 recovers
exactly half the plain BCE.

All losses come back as a LossValue whose scalar is differentiable; the
optional per_event vector is a detached diagnostic that sums to the
batch-mean scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, ShapeError

__all__ = [
    "LossValue",
    "bce",
    "alpha_schedule",
    "gate",
    "curriculum_loss",
    "sad_loss",
    "asc_loss",
    "combined_loss",
]


@dataclass
class LossValue:
    scalar: ad.Tensor  # 0-d, differentiable
    per_event: np.ndarray | None = None

    def item(self) -> float:
        return self.scalar.item()


def _batched_pair(y, z):
    y = y if isinstance(y, ad.Tensor) else ad.Tensor(y)
    z = np.asarray(z, dtype=np.float64)
    if y.data.ndim == 2:
        y = ad.reshape(y, (1,) + y.shape)
        z = z[None] if z.ndim == 2 else z
    if y.data.ndim != 3:
        raise ShapeError(f"expected [events, frames] or batched logits, got {y.shape}")
    if z.shape != y.shape:
        raise ShapeError(f"target shape {z.shape} does not match logits {y.shape}")
    return y, z


def _reduce(elementwise: ad.Tensor, per_event: bool) -> LossValue:
    scalar = elementwise.sum(axis=(1, 2)).mean()
    breakdown = elementwise.data.sum(axis=2).mean(axis=0) if per_event else None
    return LossValue(scalar, breakdown)


def bce(y, z, per_event: bool = False) -> LossValue:
    """Frame-wise binary cross-entropy from logits (stable form)."""
    y, z = _batched_pair(y, z)
    return _reduce(ad.bce_logits(y, z), per_event)


def alpha_schedule(s: int, s_max: int, lam: float = 2.0) -> float:
    """Curriculum progress (s/s_max)^lam; exact 0 and 1 at the endpoints."""
    if s_max < 1:
        raise ConfigError(f"s_max must be >= 1, got {s_max}")
    if not 0 <= s <= s_max:
        raise ConfigError(f"epoch {s} outside [0, {s_max}]")
    if lam <= 0:
        raise ConfigError(f"scheduler exponent must be positive, got {lam}")
    return (s / s_max) ** lam


def gate(f: np.ndarray, alpha: float) -> np.ndarray:
    """Per-event weights: alpha where the flag is set, 1-alpha elsewhere."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    f = np.asarray(f, dtype=np.float64)
    if not np.all((f == 0.0) | (f == 1.0)):
        raise DataError("event flags must be binary")
    return alpha * f + (1.0 - alpha) * (1.0 - f)


def curriculum_loss(y, z, f, alpha: float, per_event: bool = False) -> LossValue:
    """Gated BCE; each clip weights its event rows by its own gate."""
    y, z = _batched_pair(y, z)
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        f = np.broadcast_to(f, y.shape[:2])
    if f.shape != y.shape[:2]:
        raise ShapeError(f"flag shape {f.shape} does not match logits {y.shape}")
    g = gate(f, alpha)
    return _reduce(ad.mul(ad.bce_logits(y, z), ad.Tensor(g[:, :, None])), per_event)


def sad_loss(sad_logits, z) -> LossValue:
    """BCE of the any-event-active track: target is the framewise max of z."""
    sad = sad_logits if isinstance(sad_logits, ad.Tensor) else ad.Tensor(sad_logits)
    z = np.asarray(z, dtype=np.float64)
    if sad.data.ndim == 2:
        sad = ad.reshape(sad, (1,) + sad.shape)
        z = z[None] if z.ndim == 2 else z
    target = z.max(axis=1, keepdims=True)
    if sad.shape != target.shape:
        raise ShapeError(f"activity logits {sad.shape} do not match targets {z.shape}")
    return _reduce(ad.bce_logits(sad, target), per_event=False)


def asc_loss(scene_logits, scenes) -> LossValue:
    """Softmax cross-entropy of the clip's scene, mean over the batch."""
    logits = scene_logits if isinstance(scene_logits, ad.Tensor) else ad.Tensor(scene_logits)
    if logits.data.ndim == 1:
        logits = ad.reshape(logits, (1,) + logits.shape)
    scenes = np.atleast_1d(np.asarray(scenes, dtype=np.int64))
    bsz, n_scenes = logits.shape
    if scenes.shape != (bsz,):
        raise ShapeError(f"expected {bsz} scene indices, got shape {scenes.shape}")
    if scenes.min() < 0 or scenes.max() >= n_scenes:
        raise ShapeError(f"scene index out of range for {n_scenes} classes: {scenes}")
    # subtract the detached rowwise max: cancels exactly in lse - picked
    shifted = logits - ad.Tensor(logits.data.max(axis=1, keepdims=True))
    lse = ad.log(ad.exp(shifted).sum(axis=1))
    onehot = np.zeros((bsz, n_scenes))
    onehot[np.arange(bsz), scenes] = 1.0
    picked = ad.mul(shifted, ad.Tensor(onehot)).sum(axis=1)
    return LossValue((lse - picked).mean())


def combined_loss(primary: LossValue, aux: LossValue, beta: float) -> LossValue:
    """primary + beta * aux; beta=0 reduces to the primary objective."""
    if beta < 0:
        raise ConfigError(f"aux weight must be >= 0, got {beta}")
    if beta == 0.0:
        return LossValue(primary.scalar, primary.per_event)
    return LossValue(primary.scalar + beta * aux.scalar, primary.per_event)
