"""Deterministic synthetic test scenes with natural-image statistics.

The sandbox ships no photographic corpus, so tests, demos, and training
corpora draw on this generator: smooth shading, soft-edged objects, and
band-limited texture, normalized to a natural mean/contrast (mean ~120,
std ~38 on the 0-255 luminance range).
"""

from __future__ import annotations

import numpy as np
from numpy.random import default_rng
from scipy.ndimage import gaussian_filter

__all__ = ["make_scene", "make_texture"]


def make_scene(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Render one grayscale scene as a float64 array in [0, 255]."""
    rng = default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    y = yy / max(height - 1, 1)
    x = xx / max(width - 1, 1)

    img = np.zeros((height, width))

    # smooth shading: a few low-frequency plane waves
    for _ in range(4):
        fy, fx = rng.uniform(0.4, 2.5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (fy * y + fx * x) + phase)

    # soft-edged elliptical objects supply step edges
    for _ in range(12):
        cy, cx = rng.uniform(0.05, 0.95, size=2)
        ry, rx = rng.uniform(0.04, 0.28, size=2)
        theta = rng.uniform(0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (y - cy) * ct + (x - cx) * st
        v = -(y - cy) * st + (x - cx) * ct
        dist = np.sqrt((u / ry) ** 2 + (v / rx) ** 2)
        edge = np.clip((dist - 1.0) / 0.02, -60.0, 60.0)
        img += rng.uniform(-1.3, 1.3) / (1.0 + np.exp(edge))

    # band-passed noise gives pixel-scale texture
    tex = rng.normal(size=(height, width))
    tex = gaussian_filter(tex, 0.8) - gaussian_filter(tex, 2.5)
    img += 0.55 * tex / tex.std()

    img = (img - img.mean()) / img.std()
    return np.clip(120.0 + 38.0 * img, 4.0, 251.0)


def make_texture(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Fully textured scene: every small block carries discriminative detail.

    Used by registration accuracy tests, which assume textured frames; the
    mixed scenes from :func:`make_scene` contain smooth regions where raw
    cosine block matching is inherently ambiguous.
    """
    rng = default_rng(seed)
    tex = gaussian_filter(rng.normal(size=(height, width)), 1.2)
    tex += 0.5 * gaussian_filter(rng.normal(size=(height, width)), 3.0)
    tex = (tex - tex.mean()) / tex.std()
    return np.clip(120.0 + 36.0 * tex, 4.0, 251.0)
