from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentConfig:
    """Train-time image augmentation: pad-and-crop plus optional mirror flips."""

    enabled: bool = True
    pad: int = 4
    random_crop: bool = True
    hflip: bool = False


def pad_images(batch: np.ndarray, pad: int, fill: float = 0.0) -> np.ndarray:
    return np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=fill)


def crop(padded: np.ndarray, offsets, size) -> np.ndarray:
    """Cut ``size``-shaped windows at per-image (row, col) ``offsets``."""
    h, w = size
    out = np.empty(padded.shape[:2] + (h, w))
    for i, (r, c) in enumerate(offsets):
        out[i] = padded[i, :, r : r + h, c : c + w]
    return out


def hflip(batch: np.ndarray) -> np.ndarray:
    return batch[..., ::-1]


def augment(batch: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator, fill: float = 0.0) -> np.ndarray:
    """Augment an ``(N, C, H, W)`` batch; identity when ``cfg.enabled`` is false."""
    if not cfg.enabled:
        return batch
    n, _, h, w = batch.shape
    out = batch
    if cfg.random_crop and cfg.pad > 0:
        offsets = rng.integers(0, 2 * cfg.pad + 1, size=(n, 2))
        out = crop(pad_images(batch, cfg.pad, fill), offsets, (h, w))
    if cfg.hflip:
        flip = rng.random(n) < 0.5
        out = out.copy() if out is batch else out
        out[flip] = hflip(out[flip])
    return out
