"""Degradation operators (sub-pixel warp, blur, impulse downsampling, noise)
and the synthetic multi-frame observation generator.

Shift convention, stated once: ``warp(img, spec)`` samples the input at
``(row + shift_y, col + shift_x)``, so positive shifts move image content
up and to the left.  Shifts are decomposed as ``shift = floor(shift) +
frac`` with ``frac in [0, 1)``, which is exact in binary floating point.

Boundary handling is replicate (edge clamp) for whole-image blur and warp;
dictionary atoms are degraded on zero-padded canvases instead (they are
compactly supported by construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import SeedSequence, default_rng
from scipy import ndimage, signal

from .core import (
    DegradationModel,
    Image,
    LinearOperator,
    image_from_array,
)

__all__ = [
    "WarpSpec",
    "gaussian_kernel",
    "blur",
    "blur_adjoint",
    "warp_bilinear",
    "warp_operator",
    "downsample",
    "upsample_zero",
    "blur_operator",
    "downsample_operator",
    "shift_operator",
    "generate_observations",
]


@dataclass(frozen=True)
class WarpSpec:
    """A translation in HR-pixel units, split into integer + fractional parts."""

    shift_x: float
    shift_y: float

    @property
    def wx(self) -> int:
        return int(math.floor(self.shift_x))

    @property
    def wy(self) -> int:
        return int(math.floor(self.shift_y))

    @property
    def vx(self) -> float:
        return self.shift_x - math.floor(self.shift_x)

    @property
    def vy(self) -> float:
        return self.shift_y - math.floor(self.shift_y)


def gaussian_kernel(side: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian tap grid with odd side."""
    if side < 1 or side % 2 == 0:
        raise ValueError(f"kernel side must be odd and >= 1, got {side}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = side // 2
    idx = np.arange(side) - c
    g1 = np.exp(-(idx ** 2) / (2.0 * sigma * sigma))
    k = np.outer(g1, g1)
    return k / k.sum()


def blur(img: Image, kernel: np.ndarray) -> Image:
    """2-D convolution with replicate boundary; output size equals input size."""
    if kernel.shape[0] > img.height or kernel.shape[1] > img.width:
        raise ValueError(
            f"kernel {kernel.shape} larger than image ({img.height}, {img.width})"
        )
    out = ndimage.convolve(img.data, kernel, mode="nearest")
    return image_from_array(out)


def _blur_array(arr: np.ndarray, kernel: np.ndarray, boundary: str) -> np.ndarray:
    if boundary == "replicate":
        return ndimage.convolve(arr, kernel, mode="nearest")
    return ndimage.convolve(arr, kernel, mode="constant", cval=0.0)


def _fold_axis(z: np.ndarray, b: int, axis: int) -> np.ndarray:
    """Adjoint of replicate padding: accumulate the pad margins onto the edges."""
    if b == 0:
        return z
    z = np.moveaxis(z, axis, 0)
    out = z[b:-b].copy()
    out[0] += z[:b].sum(axis=0)
    out[-1] += z[-b:].sum(axis=0)
    return np.moveaxis(out, 0, axis)


def blur_adjoint(arr: np.ndarray, kernel: np.ndarray, boundary: str = "replicate") -> np.ndarray:
    """Exact adjoint of :func:`blur` (needed for gradient steps)."""
    kf = kernel[::-1, ::-1]
    if boundary == "zero":
        return ndimage.correlate(arr, kernel, mode="constant", cval=0.0)
    bh, bw = kernel.shape[0] // 2, kernel.shape[1] // 2
    full = signal.convolve(arr, kf, mode="full")
    return _fold_axis(_fold_axis(full, bh, 0), bw, 1)


def _gather_indices(n: int, w: int, boundary: str) -> tuple[np.ndarray, np.ndarray]:
    """Source indices for an integer shift; mask marks in-bounds sources."""
    idx = np.arange(n) + w
    mask = (idx >= 0) & (idx < n)
    if boundary == "replicate":
        return np.clip(idx, 0, n - 1), np.ones(n, dtype=bool)
    return np.clip(idx, 0, n - 1), mask


def _shift_array(arr: np.ndarray, wy: int, wx: int, boundary: str) -> np.ndarray:
    rows, rmask = _gather_indices(arr.shape[0], wy, boundary)
    cols, cmask = _gather_indices(arr.shape[1], wx, boundary)
    out = arr[np.ix_(rows, cols)]
    if boundary == "zero":
        out = out * np.outer(rmask, cmask)
    return out


def warp_bilinear(img: Image, spec: WarpSpec) -> Image:
    """Translate by a sub-pixel shift using bilinear interpolation.

    Output pixel (m, n) takes the value of the input at continuous position
    ``(m + shift_y, n + shift_x)``; samples outside the grid use replicate
    extension.
    """
    h, w = img.height, img.width
    rr = np.arange(h, dtype=np.float64) + spec.shift_y
    cc = np.arange(w, dtype=np.float64) + spec.shift_x
    r0 = np.floor(rr).astype(np.int64)
    c0 = np.floor(cc).astype(np.int64)
    fy = rr - r0
    fx = cc - c0
    r0c = np.clip(r0, 0, h - 1)
    r1c = np.clip(r0 + 1, 0, h - 1)
    c0c = np.clip(c0, 0, w - 1)
    c1c = np.clip(c0 + 1, 0, w - 1)
    d = img.data
    wy0 = (1.0 - fy)[:, None]
    wy1 = fy[:, None]
    wx0 = (1.0 - fx)[None, :]
    wx1 = fx[None, :]
    out = (wy0 * wx0 * d[np.ix_(r0c, c0c)] + wy0 * wx1 * d[np.ix_(r0c, c1c)]
           + wy1 * wx0 * d[np.ix_(r1c, c0c)] + wy1 * wx1 * d[np.ix_(r1c, c1c)])
    return image_from_array(out)


def shift_operator(wy: int, wx: int, rows: int, cols: int,
                   boundary: str = "replicate") -> LinearOperator:
    """Integer-pixel translation as a linear operator on vectorized images."""
    n = rows * cols
    ridx, rmask = _gather_indices(rows, wy, boundary)
    cidx, cmask = _gather_indices(cols, wx, boundary)
    mask = np.outer(rmask, cmask) if boundary == "zero" else None

    def apply_fn(v: np.ndarray) -> np.ndarray:
        a = v.reshape(rows, cols)
        out = a[np.ix_(ridx, cidx)]
        if mask is not None:
            out = out * mask
        return out.reshape(-1)

    def adjoint_fn(v: np.ndarray) -> np.ndarray:
        a = v.reshape(rows, cols)
        if mask is not None:
            a = a * mask
        out = np.zeros((rows, cols))
        np.add.at(out, (ridx[:, None], cidx[None, :]), a)
        return out.reshape(-1)

    return LinearOperator(n, n, apply_fn, adjoint_fn, label=f"T[{wy},{wx}]")


def warp_operator(spec: WarpSpec, rows: int, cols: int,
                  boundary: str = "replicate") -> LinearOperator:
    """Sub-pixel warp as the bilinear-weighted sum of four integer shifts."""
    wy, wx, vy, vx = spec.wy, spec.wx, spec.vy, spec.vx
    terms = []
    for dy, dx, wt in (
        (0, 0, (1.0 - vy) * (1.0 - vx)),
        (0, 1, (1.0 - vy) * vx),
        (1, 0, vy * (1.0 - vx)),
        (1, 1, vy * vx),
    ):
        if wt != 0.0:
            terms.append((wt, shift_operator(wy + dy, wx + dx, rows, cols, boundary)))

    n = rows * cols

    def apply_fn(v: np.ndarray) -> np.ndarray:
        out = np.zeros(n)
        for wt, op in terms:
            out += wt * op(v)
        return out

    def adjoint_fn(v: np.ndarray) -> np.ndarray:
        out = np.zeros(n)
        for wt, op in terms:
            out += wt * op.adjoint(v)
        return out

    return LinearOperator(n, n, apply_fn, adjoint_fn,
                          label=f"W[{spec.shift_y},{spec.shift_x}]")


def downsample(img: Image, scale: int) -> Image:
    """Impulse sampling: keep every ``scale``-th pixel starting at (0, 0)."""
    if img.height % scale or img.width % scale:
        raise ValueError(
            f"image dims ({img.height}, {img.width}) not divisible by scale {scale}"
        )
    return image_from_array(img.data[::scale, ::scale].copy())


def upsample_zero(arr: np.ndarray, scale: int) -> np.ndarray:
    """Adjoint of impulse sampling: zero insertion."""
    out = np.zeros((arr.shape[0] * scale, arr.shape[1] * scale))
    out[::scale, ::scale] = arr
    return out


def blur_operator(kernel: np.ndarray, rows: int, cols: int,
                  boundary: str = "replicate") -> LinearOperator:
    n = rows * cols
    return LinearOperator(
        n, n,
        lambda v: _blur_array(v.reshape(rows, cols), kernel, boundary).reshape(-1),
        lambda v: blur_adjoint(v.reshape(rows, cols), kernel, boundary).reshape(-1),
        label="H")


def downsample_operator(scale: int, rows: int, cols: int) -> LinearOperator:
    if rows % scale or cols % scale:
        raise ValueError(f"dims ({rows}, {cols}) not divisible by scale {scale}")
    out_n = (rows // scale) * (cols // scale)

    def apply_fn(v: np.ndarray) -> np.ndarray:
        return v.reshape(rows, cols)[::scale, ::scale].reshape(-1)

    def adjoint_fn(v: np.ndarray) -> np.ndarray:
        return upsample_zero(v.reshape(rows // scale, cols // scale), scale).reshape(-1)

    return LinearOperator(out_n, rows * cols, apply_fn, adjoint_fn, label="S")


def generate_observations(hr: Image, model: DegradationModel, n_frames: int,
                          shift_range: float) -> list[tuple[Image, WarpSpec]]:
    """Generate LR frames ``downsample(blur(warp(hr, spec))) + noise``.

    Frame 0 is the target and gets zero shift; auxiliary shifts are drawn
    uniformly from [-shift_range, shift_range]^2 in HR-pixel units.  All
    randomness derives from ``model.rng_seed`` via spawned per-frame
    streams, so frames are reproducible and independent of each other.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    h = hr.height - hr.height % model.scale
    w = hr.width - hr.width % model.scale
    if h == 0 or w == 0:
        raise ValueError(
            f"HR image ({hr.height}, {hr.width}) too small for scale {model.scale}"
        )
    base = image_from_array(hr.data[:h, :w])

    streams = SeedSequence(model.rng_seed).spawn(n_frames + 1)
    shift_rng = default_rng(streams[0])
    shifts = [WarpSpec(0.0, 0.0)]
    for _ in range(n_frames - 1):
        sx, sy = shift_rng.uniform(-shift_range, shift_range, size=2)
        shifts.append(WarpSpec(float(sx), float(sy)))

    frames: list[tuple[Image, WarpSpec]] = []
    for j, spec in enumerate(shifts):
        warped = base if (spec.shift_x == 0.0 and spec.shift_y == 0.0) \
            else warp_bilinear(base, spec)
        blurred = blur(warped, model.blur_kernel)
        lr = downsample(blurred, model.scale)
        if model.noise_sigma > 0:
            noise_rng = default_rng(streams[j + 1])
            noisy = lr.data + noise_rng.normal(0.0, model.noise_sigma, size=lr.data.shape)
            lr = image_from_array(noisy)
        frames.append((lr, spec))
    return frames
