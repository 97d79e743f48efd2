"""Synthetic real/fake corpus for end-to-end checks.

"Real" images are random textures (oriented gratings plus smoothed noise).
Each "fake" is a texture from the same generator with one randomly placed
square patch replaced by a Gaussian-blurred copy of itself, feathered back
into the frame.  This mimics the local smoothing left behind by face-swap
blending.

Fakes are built from their own texture draws rather than from the real
images on disk: a fake that shares its base image with a real one ends up
next to its twin after any random split, and nearest-neighbour-like
learners then score below chance.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgcore import GrayImage, save_pgm


def make_texture(rng: np.random.Generator, size=28) -> np.ndarray:
    h = w = int(size)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))
    for _ in range(rng.integers(2, 5)):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.15, 0.9)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.5, 1.0) * np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    # fine grain: this is what the fake's blurred patch removes
    img += gaussian_filter(rng.normal(size=(h, w)), rng.uniform(0.0, 0.7)) * rng.uniform(1.5, 3.0)
    img -= img.min()
    img *= rng.uniform(150, 250) / max(img.max(), 1e-12)
    return np.clip(img + rng.uniform(0, 255 - img.max()), 0, 255)


def blend_patch(img: np.ndarray, rng: np.random.Generator, patch=10, sigma=3.0) -> np.ndarray:
    """Blur a random ``patch``-sized square and blend it back with a soft edge."""
    h, w = img.shape
    y0 = int(rng.integers(0, h - patch + 1))
    x0 = int(rng.integers(0, w - patch + 1))
    blurred = gaussian_filter(img, sigma, mode="reflect")
    mask = np.zeros_like(img)
    mask[y0:y0 + patch, x0:x0 + patch] = 1.0
    mask = gaussian_filter(mask, 1.0)
    mask[y0:y0 + patch, x0:x0 + patch] = np.maximum(mask[y0:y0 + patch, x0:x0 + patch], 0.9)
    return np.clip(mask * blurred + (1.0 - mask) * img, 0, 255)


def generate_corpus(root, n_per_class=400, size=28, seed=0, fmt="png", patch=10, sigma=3.0):
    """Write ``root/real/*.{fmt}`` and ``root/fake/*.{fmt}``; returns ``root``."""
    from PIL import Image

    root = Path(root)
    (root / "real").mkdir(parents=True, exist_ok=True)
    (root / "fake").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_per_class):
        real = make_texture(rng, size)
        fake = blend_patch(make_texture(rng, size), rng, patch, sigma)
        for label, arr in (("real", real), ("fake", fake)):
            path = root / label / f"{i:05d}.{fmt}"
            if fmt == "pgm":
                save_pgm(GrayImage(arr), path)
            else:
                Image.fromarray(np.rint(arr).astype(np.uint8), mode="L").save(path)
    return root
