"""Deterministic synthetic scenes with known clean labels.

Every random draw comes from numpy's PCG64 bit generator seeded with the
caller's integer seed, in a fixed order, so a (kind, size, rate, seed) tuple
always yields the same arrays.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .core import ImageTensor, LabelMap, builtin_palette

FIXTURE_KINDS = ("binary_blobs", "potsdam_mosaic")
MIN_SIDE = 8
PIXEL_NOISE_SIGMA = 0.05


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def class_colors(kind: str) -> np.ndarray:
    """Base appearance per class: palette colour squeezed into [0.15, 0.85]."""
    palette = builtin_palette("city_binary" if kind == "binary_blobs" else "potsdam")
    return 0.15 + 0.7 * palette.colors / 255.0


def _blobs(rng, h, w):
    field = rng.standard_normal((h, w))
    smooth = ndimage.gaussian_filter(field, sigma=min(h, w) / 10.0, mode="wrap")
    return (smooth > np.median(smooth)).astype(np.int64)


def _mosaic(rng, h, w):
    labels = np.empty((h, w), dtype=np.int64)
    r = int(round(h * rng.uniform(0.35, 0.65)))
    c1 = int(round(w * rng.uniform(0.2, 0.4)))
    c2 = int(round(w * rng.uniform(0.6, 0.8)))
    order = rng.permutation(6)
    tiles = [(0, r, 0, c1), (0, r, c1, c2), (0, r, c2, w), (r, h, 0, c1), (r, h, c1, c2), (r, h, c2, w)]
    for cls, (r0, r1, q0, q1) in zip(order, tiles):
        labels[r0:r1, q0:q1] = cls
    # small rectangles (cars, trees, clutter) scattered over the tiles
    count = max(1, (h * w) // 2048)
    max_h, max_w = max(2, h // 8), max(2, w // 8)
    for _ in range(count):
        rh = int(rng.integers(2, max_h + 1))
        rw = int(rng.integers(2, max_w + 1))
        r0 = int(rng.integers(0, h - rh + 1))
        q0 = int(rng.integers(0, w - rw + 1))
        cls = int(rng.integers(0, 6))
        saved = labels[r0:r0 + rh, q0:q0 + rw].copy()
        labels[r0:r0 + rh, q0:q0 + rw] = cls
        if np.unique(labels).size < 6:
            labels[r0:r0 + rh, q0:q0 + rw] = saved
    return labels


def flip_count(noise_rate: float, num_pixels: int) -> int:
    # round half up, independent of Python's banker's rounding
    return int(math.floor(noise_rate * num_pixels + 0.5))


def gen_fixture(kind: str, h: int, w: int, noise_rate: float, seed: int):
    """Return ``(image, clean, noisy)`` for a synthetic scene.

    ``noisy`` equals ``clean`` except at exactly ``round(noise_rate * h * w)``
    pixels, each moved to a uniformly chosen *different* class.
    """
    if kind not in FIXTURE_KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}; valid kinds: {', '.join(FIXTURE_KINDS)}")
    if int(h) != h or int(w) != w or h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"fixture sides must be integers >= {MIN_SIDE}, got {h}x{w}")
    if not (0.0 <= noise_rate < 1.0):
        raise ValueError(f"noise_rate must lie in [0, 1), got {noise_rate}")
    h, w = int(h), int(w)
    rng = _rng(seed)

    clean = _blobs(rng, h, w) if kind == "binary_blobs" else _mosaic(rng, h, w)
    num_classes = 2 if kind == "binary_blobs" else 6

    colors = class_colors(kind)
    pixels = colors[clean] + rng.normal(0.0, PIXEL_NOISE_SIGMA, size=(h, w, 3))
    image = ImageTensor(np.clip(pixels, 0.0, 1.0))

    noisy = clean.copy().ravel()
    flips = flip_count(noise_rate, h * w)
    if flips:
        where = rng.choice(h * w, size=flips, replace=False)
        shift = rng.integers(1, num_classes, size=flips)
        noisy[where] = (noisy[where] + shift) % num_classes
    return image, LabelMap(clean, num_classes), LabelMap(noisy.reshape(h, w), num_classes)
