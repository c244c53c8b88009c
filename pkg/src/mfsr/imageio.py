"""Image and dictionary file I/O with fixed, bit-exact formats.

Grayscale binary PGM (P5, maxval 255) is the canonical byte-deterministic
format; 8-bit PNG is supported for convenience.  RGB inputs are split into
YCbCr (ITU-R BT.601, full range) and only the luminance plane is processed;
the chroma planes ride along on the Image for color reassembly.
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image as PILImage

from .core import Dictionary, Image, dictionary_from_matrix, image_from_array

__all__ = [
    "read_image",
    "write_image",
    "read_dictionary",
    "write_dictionary",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "quantize",
]

DICTIONARY_MAGIC = b"MFSRDIC1"

# BT.601 full-range luma weights; the chroma scales make Cb/Cr span [-128, 127]
_KR, _KG, _KB = 0.299, 0.587, 0.114
_CB_SCALE = 0.5 / (1.0 - _KB)   # 1/1.772
_CR_SCALE = 0.5 / (1.0 - _KR)   # 1/1.402


def rgb_to_ycbcr(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    y = _KR * r + _KG * g + _KB * b
    cb = 128.0 + _CB_SCALE * (b - y)
    cr = 128.0 + _CR_SCALE * (r - y)
    return y, cb, cr


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    b = y + (cb - 128.0) / _CB_SCALE
    r = y + (cr - 128.0) / _CR_SCALE
    g = (y - _KR * r - _KB * b) / _KG
    return np.stack([r, g, b], axis=-1)


def quantize(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to uint8."""
    v = np.clip(values, 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8)


def _read_pgm(path: str) -> Image:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")

    # header tokens may be separated by arbitrary whitespace and '#' comments
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    width, height, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported bit depth (maxval {maxval}, want 255)")
    n = width * height
    payload = data[pos:pos + n]
    if len(payload) != n:
        raise ValueError(f"{path}: truncated PGM payload ({len(payload)} of {n} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return image_from_array(arr.astype(np.float64))


def _write_pgm(img: Image, path: str) -> None:
    arr = quantize(img.data)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def _read_png(path: str) -> Image:
    with PILImage.open(path) as pil:
        mode = pil.mode
        if mode == "L":
            arr = np.asarray(pil, dtype=np.uint8)
            return image_from_array(arr.astype(np.float64))
        if mode in ("RGB", "RGBA"):
            arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
            y, cb, cr = rgb_to_ycbcr(arr)
            return image_from_array(y, chroma=(cb, cr))
        raise ValueError(f"{path}: unsupported PNG mode {mode!r} (need 8-bit L or RGB)")


def _write_png(img: Image, path: str) -> None:
    if img.chroma is not None:
        cb, cr = img.chroma
        if cb.shape != img.data.shape:
            raise ValueError(
                f"chroma shape {cb.shape} does not match luminance {img.data.shape}"
            )
        rgb = quantize(ycbcr_to_rgb(img.data, cb, cr))
        PILImage.fromarray(rgb, mode="RGB").save(path)
    else:
        PILImage.fromarray(quantize(img.data), mode="L").save(path)


def read_image(path: str) -> Image:
    """Read an 8-bit grayscale PGM or an 8-bit PNG (grayscale or RGB)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"P5"):
        return _read_pgm(path)
    if head.startswith(b"\x89PNG"):
        return _read_png(path)
    raise ValueError(f"{path}: unsupported image format (need PGM P5 or PNG)")


def write_image(img: Image, path: str) -> None:
    """Write an image; format chosen by extension (.pgm default, .png supported)."""
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".png":
            _write_png(img, path)
        else:
            _write_pgm(img, path)
    except OSError as exc:
        raise OSError(f"failed to write image {path}: {exc}") from exc


def write_dictionary(d: Dictionary, path: str) -> None:
    """Serialize atoms as 64-bit little-endian reals, column-major by atom."""
    payload = np.ascontiguousarray(d.atoms.T, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(DICTIONARY_MAGIC)
        fh.write(struct.pack("<II", d.dim, d.count))
        fh.write(payload.tobytes())


def read_dictionary(path: str) -> Dictionary:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != DICTIONARY_MAGIC:
        raise ValueError(
            f"{path}: bad magic {data[:8]!r}, expected {DICTIONARY_MAGIC!r}"
        )
    if len(data) < 16:
        raise ValueError(f"{path}: truncated dictionary header")
    dim, count = struct.unpack("<II", data[8:16])
    expected = 8 * dim * count
    payload = data[16:]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for dim={dim} count={count}"
        )
    atoms = np.frombuffer(payload, dtype="<f8").reshape(count, dim).T
    return dictionary_from_matrix(atoms)
