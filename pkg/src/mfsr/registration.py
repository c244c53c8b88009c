"""Sub-pixel block matching between a target frame and auxiliary frames.

For a candidate displacement d, the block compared against the target
patch at origin p is the auxiliary block at origin p - d, so the reported
displacement is directly the warp that maps target-frame coordinates into
the auxiliary frame: ``aux(p) ~= target(p - d)``.  That makes the reported
(dx, dy), scaled to HR units, the warp spec of the frame's degradation
operator.

A note on the acceptance threshold delta: the cosine score of raw
nonnegative luminance patches is typically very close to 1, so useful
delta values live near 1.0 (or near 0 to accept everything).  Published
threshold choices quoted on very different scales (e.g. 1e-3) are not
reproducible from the raw-cosine definition; delta is therefore left fully
configurable, and ``mean_removed=True`` switches to matching on
mean-removed blocks for experimentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .core import Displacement, Image, Patch

__all__ = [
    "MatchResult",
    "similarity",
    "integer_search",
    "subpixel_refine",
    "match_frames",
]


@dataclass(frozen=True)
class MatchResult:
    """Best match of one auxiliary frame for one target patch."""

    frame_index: int
    displacement: Displacement
    accepted: bool


def similarity(a: Patch, b: Patch) -> float:
    """Cosine similarity of two equal-size patches; all-zero patches score 0."""
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise ValueError(
            f"patch sizes differ: ({a.rows}, {a.cols}) vs ({b.rows}, {b.cols})"
        )
    av, bv = a.vector, b.vector
    denom = np.linalg.norm(av) * np.linalg.norm(bv)
    if denom == 0.0:
        return 0.0
    return float(min(max(av @ bv / denom, 0.0), 1.0))


def _candidate_grid(patch: Patch, aux_shape: tuple[int, int], radius: int):
    """Block origins for every displacement in [-radius, radius]^2 whose
    block stays inside the frame.

    Candidates that would read outside the frame are dropped rather than
    clamped: a clamped block scores content at a different geometry than
    the displacement it would report.  The zero displacement is always
    representable, so the candidate set is never empty.
    """
    h, w = aux_shape
    dy = np.repeat(np.arange(-radius, radius + 1), 2 * radius + 1)
    dx = np.tile(np.arange(-radius, radius + 1), 2 * radius + 1)
    rows = patch.row0 - dy
    cols = patch.col0 - dx
    ok = ((rows >= 0) & (rows <= h - patch.rows)
          & (cols >= 0) & (cols <= w - patch.cols))
    return rows[ok], cols[ok], dy[ok], dx[ok]


def _surface_scores(patch_data: np.ndarray, aux: np.ndarray,
                    rows: np.ndarray, cols: np.ndarray,
                    mean_removed: bool) -> np.ndarray:
    target = patch_data
    if mean_removed:
        target = target - target.mean()
        p, q = target.shape
        n = rows.size
        rr = rows[:, None, None] + np.arange(p)[None, :, None]
        cc = cols[:, None, None] + np.arange(q)[None, None, :]
        blocks = aux[rr, cc].reshape(n, -1)
        blocks = blocks - blocks.mean(axis=1, keepdims=True)
        tnorm = np.linalg.norm(target)
        bnorm = np.linalg.norm(blocks, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = (blocks @ target.reshape(-1)) / (tnorm * bnorm)
        scores[~np.isfinite(scores)] = 0.0
        return np.abs(scores)
    return _accel.block_scores(np.ascontiguousarray(target),
                               np.ascontiguousarray(aux),
                               rows.astype(np.int64), cols.astype(np.int64))


def _pick_best(scores: np.ndarray, eff_dy: np.ndarray, eff_dx: np.ndarray) -> int:
    """Argmax with exact ties broken by smallest ||d||_2, then dy, then dx."""
    tied = np.nonzero(scores == np.max(scores))[0]
    if tied.size == 1:
        return int(tied[0])
    key = np.lexsort((eff_dx[tied], eff_dy[tied],
                      eff_dy[tied] ** 2 + eff_dx[tied] ** 2))
    return int(tied[key[0]])


def integer_search(target_patch: Patch, aux: Image, radius: int,
                   mean_removed: bool = False) -> tuple[tuple[int, int], float]:
    """Exhaustively scan integer displacements in [-radius, radius]^2.

    Returns ``((dy, dx), score)`` for the best-scoring displacement.
    Candidates whose block would leave the frame are clamped to the border,
    so near edges the effective displacement magnitude shrinks.
    """
    if target_patch.rows > aux.height or target_patch.cols > aux.width:
        raise ValueError(
            f"patch ({target_patch.rows}, {target_patch.cols}) larger than "
            f"frame ({aux.height}, {aux.width})"
        )
    rows, cols, eff_dy, eff_dx = _candidate_grid(
        target_patch, (aux.height, aux.width), radius)
    scores = _surface_scores(target_patch.data, aux.data, rows, cols, mean_removed)
    k = _pick_best(scores, eff_dy, eff_dx)
    return (int(eff_dy[k]), int(eff_dx[k])), float(min(max(scores[k], 0.0), 1.0))


def _quadratic_peak(s: np.ndarray) -> Optional[tuple[float, float]]:
    """Continuous argmax of a quadratic fitted to a 3x3 score neighborhood.

    Least-squares fit of f(y,x) = a + b*y + c*x + d*y^2 + e*y*x + f*x^2 on
    the 9-point stencil; returns None unless the Hessian is negative
    definite (a genuine peak).
    """
    b = (s[2, :].sum() - s[0, :].sum()) / 6.0
    c = (s[:, 2].sum() - s[:, 0].sum()) / 6.0
    d = (s[0, :].sum() + s[2, :].sum() - 2.0 * s[1, :].sum()) / 6.0
    f = (s[:, 0].sum() + s[:, 2].sum() - 2.0 * s[:, 1].sum()) / 6.0
    e = (s[2, 2] + s[0, 0] - s[0, 2] - s[2, 0]) / 4.0
    det = 4.0 * d * f - e * e
    if d >= 0 or f >= 0 or det <= 0:
        return None
    dy = -(2.0 * f * b - e * c) / det
    dx = -(2.0 * d * c - e * b) / det
    return dy, dx


def subpixel_refine(target_patch: Patch, aux: Image,
                    integer_shift: tuple[int, int],
                    mean_removed: bool = False) -> Displacement:
    """Refine an integer displacement to sub-pixel accuracy.

    Fits a 2-D quadratic to the 3x3 similarity surface around the integer
    peak; the continuous argmax is clamped to +/-0.5 px per axis.  The
    reported score stays the measured similarity at the integer peak.
    Degenerate (non-concave) surfaces fall back to the integer shift.
    """
    idy, idx = integer_shift
    off_dy = np.repeat(np.arange(-1, 2), 3) + idy
    off_dx = np.tile(np.arange(-1, 2), 3) + idx
    rows = target_patch.row0 - off_dy
    cols = target_patch.col0 - off_dx
    in_bounds = ((rows >= 0) & (rows <= aux.height - target_patch.rows)
                 & (cols >= 0) & (cols <= aux.width - target_patch.cols))
    if not np.all(in_bounds):
        center = _surface_scores(target_patch.data, aux.data,
                                 np.array([target_patch.row0 - idy]),
                                 np.array([target_patch.col0 - idx]),
                                 mean_removed)[0]
        return Displacement(float(idx), float(idy), float(min(max(center, 0.0), 1.0)))
    scores = _surface_scores(target_patch.data, aux.data, rows, cols,
                             mean_removed).reshape(3, 3)
    center = float(min(max(scores[1, 1], 0.0), 1.0))
    if center >= 1.0 - 1e-12:
        # cosine 1 means the blocks are positive scalar multiples: the match
        # is already exact and a least-squares fit could only drift off it
        return Displacement(float(idx), float(idy), center)
    peak = _quadratic_peak(scores)
    if peak is None:
        return Displacement(float(idx), float(idy), center)
    fy = float(np.clip(peak[0], -0.5, 0.5))
    fx = float(np.clip(peak[1], -0.5, 0.5))
    return Displacement(idx + fx, idy + fy, center)


def match_frames(target: Image, auxiliaries: Sequence[Image],
                 patch_origins: Sequence[tuple[int, int]], patch_side: int,
                 radius: int, delta: float,
                 mean_removed: bool = False) -> list[list[MatchResult]]:
    """Match every target patch against every auxiliary frame.

    Returns one list per patch, in patch order.  Entry 0 of each list is
    the target frame itself, always accepted with zero displacement; an
    auxiliary match is accepted when its integer-peak similarity reaches
    ``delta``.
    """
    for j, aux in enumerate(auxiliaries):
        if (aux.height, aux.width) != (target.height, target.width):
            raise ValueError(
                f"auxiliary frame {j + 1} size ({aux.height}, {aux.width}) "
                f"differs from target ({target.height}, {target.width})"
            )
    results: list[list[MatchResult]] = []
    for (r0, c0) in patch_origins:
        patch = Patch(patch_side, patch_side,
                      target.data[r0:r0 + patch_side, c0:c0 + patch_side], r0, c0)
        per_patch = [MatchResult(0, Displacement(0.0, 0.0, 1.0), True)]
        for j, aux in enumerate(auxiliaries):
            shift, score = integer_search(patch, aux, radius, mean_removed)
            disp = subpixel_refine(patch, aux, shift, mean_removed)
            per_patch.append(MatchResult(j + 1, disp, disp.score >= delta))
        results.append(per_patch)
    return results
