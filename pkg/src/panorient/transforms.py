"""Artificial transformations that shrink the street-view/user-view gap.

Two preprocessors, applied to target images only and in this order:

1. style_normalize: global per-channel mean/std matching against reference
   statistics pooled from clear-day street-view slices. Inverts the global
   photometric shifts of night/rain imagery without touching the model.
2. road_overlay: paints road pixels solid green and divider pixels solid
   red, leaving everything else untouched, so the most stable scene element
   is marked identically in both domains.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .imaging import MASK_DIVIDER, MASK_ROAD, ChannelStats, channel_stats

ROAD_GREEN = (0.0, 1.0, 0.0)
DIVIDER_RED = (1.0, 0.0, 0.0)

_MIN_STD = 1e-6


@dataclass(frozen=True)
class StyleReference:
    """Pooled channel statistics of a clear-day street-view reference set."""

    stats: ChannelStats
    source_count: int


def build_style_reference(imgs: list[np.ndarray]) -> StyleReference:
    """Pool mean/std over all pixels of all reference images."""
    if not imgs:
        raise ValueError("reference set must be non-empty")
    stats = channel_stats(imgs)
    if np.any(stats.std <= _MIN_STD):
        raise ValueError(
            f"degenerate reference set: channel std {stats.std} too small")
    return StyleReference(stats=stats, source_count=len(imgs))


def style_normalize(img: np.ndarray, ref: StyleReference) -> np.ndarray:
    """Match the image's per-channel mean/std to the reference, clamped to [0, 1].

    Images with a near-zero channel std cannot be rescaled meaningfully and
    are returned unchanged with a RuntimeWarning.
    """
    img = np.asarray(img, dtype=np.float64)
    flat = img.reshape(-1, 3)
    mu = flat.mean(axis=0)
    sigma = flat.std(axis=0)
    if np.any(sigma <= _MIN_STD):
        warnings.warn(
            "style_normalize: input has a degenerate channel std; returning "
            "the image unchanged", RuntimeWarning, stacklevel=2)
        return img
    out = (img - mu) / sigma * ref.stats.std + ref.stats.mean
    return np.clip(out, 0.0, 1.0)


def clamp_fraction(img: np.ndarray, ref: StyleReference) -> float:
    """Fraction of pixels the normalization would clamp (diagnostic)."""
    img = np.asarray(img, dtype=np.float64)
    flat = img.reshape(-1, 3)
    mu = flat.mean(axis=0)
    sigma = flat.std(axis=0)
    if np.any(sigma <= _MIN_STD):
        return 0.0
    out = (img - mu) / sigma * ref.stats.std + ref.stats.mean
    return float(np.mean((out < 0.0) | (out > 1.0)))


def road_overlay(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Solid green over road pixels, solid red over divider pixels."""
    img = np.asarray(img, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.shape != img.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    out = img.copy()
    out[mask == MASK_ROAD] = ROAD_GREEN
    out[mask == MASK_DIVIDER] = DIVIDER_RED
    return out


def serialize_reference(ref: StyleReference) -> str:
    """Seven numbers on one line: source_count, mean RGB, std RGB."""
    vals = [str(ref.source_count)]
    vals += [repr(float(v)) for v in ref.stats.mean]
    vals += [repr(float(v)) for v in ref.stats.std]
    return " ".join(vals)


def parse_reference(line: str) -> StyleReference:
    parts = line.split()
    if len(parts) != 7:
        raise ValueError(f"expected 7 fields, got {len(parts)}")
    count = int(parts[0])
    mean = np.array([float(x) for x in parts[1:4]])
    std = np.array([float(x) for x in parts[4:7]])
    if count < 1 or np.any(std <= 0):
        raise ValueError("invalid style reference values")
    return StyleReference(stats=ChannelStats(mean=mean, std=std), source_count=count)
