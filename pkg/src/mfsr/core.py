"""Shared domain types and the linear-operator abstraction.

Conventions fixed here once and relied on everywhere else:

* luminance is stored as float64 throughout; quantization to 8-bit happens
  only when an image is written to disk,
* images and patches are vectorized in row-major order,
* operators are kept in composed (functional) form; explicit matrices are
  materialized only for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Image",
    "Patch",
    "Displacement",
    "Dictionary",
    "DegradationModel",
    "LinearOperator",
    "image_from_array",
    "patch_from_array",
    "apply_operator",
    "compose",
    "identity_operator",
    "matrix_operator",
    "materialize",
]


def _readonly(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Image:
    """A 2-D luminance grid, nominal range [0, 255], stored as float64.

    ``chroma`` optionally carries the (Cb, Cr) planes of a color source so
    a color round trip can be reassembled after processing the luminance.
    """

    height: int
    width: int
    data: np.ndarray
    chroma: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"image data shape {self.data.shape} does not match "
                f"({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image data contains non-finite values")

    @property
    def vector(self) -> np.ndarray:
        """Row-major vectorization of the pixel grid."""
        return self.data.reshape(-1)

    def with_data(self, data: np.ndarray) -> "Image":
        return image_from_array(data, chroma=self.chroma)


def image_from_array(arr: np.ndarray, chroma=None) -> Image:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    return Image(arr.shape[0], arr.shape[1], _readonly(arr), chroma=chroma)


@dataclass(frozen=True)
class Patch:
    """A small block of a parent image; ``(row0, col0)`` is its top-left pixel."""

    rows: int
    cols: int
    data: np.ndarray
    row0: int = 0
    col0: int = 0

    def __post_init__(self):
        if self.data.shape != (self.rows, self.cols):
            raise ValueError(
                f"patch data shape {self.data.shape} does not match "
                f"({self.rows}, {self.cols})"
            )

    @property
    def vector(self) -> np.ndarray:
        return self.data.reshape(-1)


def patch_from_array(arr: np.ndarray, row0: int = 0, col0: int = 0) -> Patch:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    return Patch(arr.shape[0], arr.shape[1], _readonly(arr), row0, col0)


def extract_patch(img: Image, row0: int, col0: int, rows: int, cols: int) -> Patch:
    if row0 < 0 or col0 < 0 or row0 + rows > img.height or col0 + cols > img.width:
        raise ValueError(
            f"patch [{row0}:{row0 + rows}, {col0}:{col0 + cols}] exceeds "
            f"image bounds ({img.height}, {img.width})"
        )
    return Patch(rows, cols, _readonly(img.data[row0:row0 + rows, col0:col0 + cols]),
                 row0, col0)


@dataclass(frozen=True)
class Displacement:
    """Sub-pixel shift of an auxiliary patch relative to the target patch.

    Units are LR pixels.  ``score`` is the block-matching similarity of the
    best integer-pixel match, in [0, 1].
    """

    dx: float
    dy: float
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0 + 1e-12):
            raise ValueError(f"similarity score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Dictionary:
    """A set of atoms stored as the columns of a ``dim x count`` matrix."""

    dim: int
    count: int
    atoms: np.ndarray

    def __post_init__(self):
        if self.atoms.shape != (self.dim, self.count):
            raise ValueError(
                f"atom matrix shape {self.atoms.shape} does not match "
                f"({self.dim}, {self.count})"
            )
        if not np.all(np.isfinite(self.atoms)):
            raise ValueError("dictionary contains non-finite entries")


def dictionary_from_matrix(atoms: np.ndarray) -> Dictionary:
    atoms = np.asarray(atoms, dtype=np.float64)
    if atoms.ndim != 2:
        raise ValueError(f"expected a 2-D atom matrix, got shape {atoms.shape}")
    return Dictionary(atoms.shape[0], atoms.shape[1], _readonly(atoms))


@dataclass(frozen=True)
class DegradationModel:
    """Blur kernel, decimation factor and noise level of the observation model."""

    scale: int
    blur_kernel: np.ndarray
    noise_sigma: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        k = self.blur_kernel
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ValueError(f"blur kernel must be 2-D with odd sides, got {k.shape}")
        s = float(k.sum())
        if abs(s - 1.0) > 1e-12:
            raise ValueError(f"blur kernel entries sum to {s!r}, expected 1")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")


class LinearOperator:
    """A linear map R^in_dim -> R^out_dim held in functional form.

    ``apply_fn`` receives and returns 1-D float64 arrays.  ``adjoint_fn`` is
    optional; operators that are used inside gradient steps provide it.
    """

    __slots__ = ("out_dim", "in_dim", "_apply", "_adjoint", "label")

    def __init__(self, out_dim: int, in_dim: int,
                 apply_fn: Callable[[np.ndarray], np.ndarray],
                 adjoint_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 label: str = ""):
        self.out_dim = int(out_dim)
        self.in_dim = int(in_dim)
        self._apply = apply_fn
        self._adjoint = adjoint_fn
        self.label = label

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return apply_operator(self, v)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        if self._adjoint is None:
            raise NotImplementedError(f"operator {self.label or '<anon>'} has no adjoint")
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != self.out_dim:
            raise ValueError(
                f"adjoint input length {v.size} does not match out_dim {self.out_dim}"
            )
        return self._adjoint(v)

    def __repr__(self):
        tag = f" {self.label}" if self.label else ""
        return f"<LinearOperator{tag} {self.out_dim}x{self.in_dim}>"


def apply_operator(op: LinearOperator, v: np.ndarray) -> np.ndarray:
    """Apply ``op`` to a vector, checking dimensions."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != op.in_dim:
        raise ValueError(
            f"operator expects input length {op.in_dim}, got {v.size}"
        )
    out = np.asarray(op._apply(v), dtype=np.float64).reshape(-1)
    if out.size != op.out_dim:
        raise AssertionError(
            f"operator produced length {out.size}, declared out_dim {op.out_dim}"
        )
    return out


def identity_operator(n: int) -> LinearOperator:
    return LinearOperator(n, n, lambda v: v.copy(), lambda v: v.copy(), label="I")


def matrix_operator(m: np.ndarray, label: str = "M") -> LinearOperator:
    """Wrap an explicit (dense or scipy-sparse) matrix."""
    out_dim, in_dim = m.shape
    dense = np.asarray(m, dtype=np.float64) if not hasattr(m, "tocsr") else m
    if hasattr(dense, "tocsr"):
        mat = dense.tocsr()
        return LinearOperator(out_dim, in_dim,
                              lambda v: mat.dot(v),
                              lambda v: mat.T.dot(v), label=label)
    return LinearOperator(out_dim, in_dim,
                          lambda v: dense @ v,
                          lambda v: dense.T @ v, label=label)


def compose(ops: Sequence[LinearOperator]) -> LinearOperator:
    """Chain operators so that ``compose([A, B, C])(v) == A(B(C(v)))``.

    Adjacent dimensions must agree: ``ops[i].in_dim == ops[i+1].out_dim``.
    """
    ops = list(ops)
    if not ops:
        raise ValueError("compose() needs at least one operator")
    for i in range(len(ops) - 1):
        if ops[i].in_dim != ops[i + 1].out_dim:
            raise ValueError(
                f"dimension chain break at index {i}: "
                f"ops[{i}].in_dim={ops[i].in_dim} != "
                f"ops[{i + 1}].out_dim={ops[i + 1].out_dim}"
            )

    def apply_fn(v: np.ndarray) -> np.ndarray:
        for op in reversed(ops):
            v = apply_operator(op, v)
        return v

    def adjoint_fn(v: np.ndarray) -> np.ndarray:
        for op in ops:
            v = op.adjoint(v)
        return v

    has_adj = all(op._adjoint is not None for op in ops)
    label = "*".join(op.label or "?" for op in ops)
    return LinearOperator(ops[0].out_dim, ops[-1].in_dim, apply_fn,
                          adjoint_fn if has_adj else None, label=label)


def materialize(op: LinearOperator) -> np.ndarray:
    """Build the explicit matrix of ``op`` column by column (tests only)."""
    cols = np.empty((op.out_dim, op.in_dim))
    e = np.zeros(op.in_dim)
    for j in range(op.in_dim):
        e[j] = 1.0
        cols[:, j] = apply_operator(op, e)
        e[j] = 0.0
    return cols
