"""The multi-frame super-resolution pipeline.

Per target patch: block-matching results select auxiliary frames and give
their sub-pixel displacements; each accepted frame contributes the LR
pixels whose footprints stay inside the shift-compensated patch region
(the clip), and the same warp/blur/downsample/clip chain applied to every
HR atom yields the patch's stacked LR dictionary.  Sparse coding of the
mean-removed stacked observation then selects HR atoms, overlapping HR
patches are fused under a Hanning window, and back-projection enforces
consistency with the observed target frame.

Displacement units: registration reports LR-pixel displacements; the atom
warp runs in HR pixels, so specs are displacement * scale.  The clip rule
in LR units: pixel (m, n) of frame j is retained iff ``m + dy`` and
``n + dx`` land within the target patch's LR index range (inclusive with a
1e-9 slack; exact half-pixel overshoots are excluded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from ._parallel import map_indexed
from .core import (
    DegradationModel,
    Dictionary,
    Displacement,
    Image,
    LinearOperator,
    compose,
    dictionary_from_matrix,
    image_from_array,
)
from .degrade import (
    WarpSpec,
    blur_adjoint,
    blur_operator,
    downsample_operator,
    gaussian_kernel,
    upsample_zero,
    warp_operator,
)
from .registration import MatchResult, match_frames
from .solver import lars_lasso

__all__ = [
    "SRConfig",
    "ClipSpec",
    "PlanEntry",
    "PatchPlan",
    "build_clip_spec",
    "build_patch_plan",
    "build_stacked_observation",
    "BlurredAtomTable",
    "build_stacked_dictionary",
    "frame_degradation_operator",
    "reconstruct_patch",
    "patch_grid",
    "hann_window",
    "fuse_patches",
    "back_project",
    "super_resolve",
    "super_resolve_single",
    "SRResult",
]

_CLIP_TOL = 1e-9


@dataclass(frozen=True)
class SRConfig:
    """Pipeline parameters (defaults follow the published configuration)."""

    scale: int = 3
    hr_patch_side: int = 15
    lr_overlap: int = 3
    eta: float = 0.05
    delta: float = 0.0
    bp_c: float = 0.0001
    bp_nu: float = 0.001
    bp_iterations: int = 100
    blur_side: int = 9
    blur_sigma: float = 1.0
    search_radius: int = 5
    mean_removed_matching: bool = False
    motion_guard: bool = True
    motion_guard_tol: float = 0.75
    overlap_units: str = "lr"
    threads: int = 1

    def __post_init__(self):
        if self.hr_patch_side % self.scale:
            raise ValueError(
                f"hr_patch_side {self.hr_patch_side} not divisible by "
                f"scale {self.scale}"
            )
        if self.overlap_units not in ("lr", "hr"):
            raise ValueError(f"overlap_units must be 'lr' or 'hr', got "
                             f"{self.overlap_units!r}")
        if self.overlap_units == "hr" and self.lr_overlap % self.scale:
            raise ValueError(
                f"HR-unit overlap {self.lr_overlap} not divisible by scale"
            )
        if self.overlap_lr >= self.lr_patch_side:
            raise ValueError(
                f"overlap {self.overlap_lr} must be smaller than the LR "
                f"patch side {self.lr_patch_side}"
            )

    @property
    def lr_patch_side(self) -> int:
        return self.hr_patch_side // self.scale

    @property
    def overlap_lr(self) -> int:
        if self.overlap_units == "hr":
            return self.lr_overlap // self.scale
        return self.lr_overlap

    @property
    def lr_step(self) -> int:
        return self.lr_patch_side - self.overlap_lr

    def blur_kernel(self) -> np.ndarray:
        return gaussian_kernel(self.blur_side, self.blur_sigma)

    def degradation_model(self, noise_sigma: float = 0.0, seed: int = 0) -> DegradationModel:
        return DegradationModel(self.scale, self.blur_kernel(), noise_sigma, seed)


@dataclass(frozen=True)
class ClipSpec:
    """Retained LR pixels of one frame, a rectangle in frame coordinates."""

    row_lo: int
    row_hi: int  # inclusive
    col_lo: int
    col_hi: int

    @property
    def count(self) -> int:
        if self.row_hi < self.row_lo or self.col_hi < self.col_lo:
            return 0
        return (self.row_hi - self.row_lo + 1) * (self.col_hi - self.col_lo + 1)

    @property
    def rows(self) -> np.ndarray:
        return np.arange(self.row_lo, self.row_hi + 1)

    @property
    def cols(self) -> np.ndarray:
        return np.arange(self.col_lo, self.col_hi + 1)


@dataclass(frozen=True)
class PlanEntry:
    frame_index: int
    displacement: Displacement
    clip: ClipSpec


@dataclass(frozen=True)
class PatchPlan:
    """Everything needed to reconstruct one HR patch."""

    lr_row0: int
    lr_col0: int
    lr_side: int
    scale: int
    entries: tuple[PlanEntry, ...]

    @property
    def hr_row0(self) -> int:
        return self.lr_row0 * self.scale

    @property
    def hr_col0(self) -> int:
        return self.lr_col0 * self.scale

    @property
    def hr_side(self) -> int:
        return self.lr_side * self.scale

    @property
    def stacked_dim(self) -> int:
        return sum(e.clip.count for e in self.entries)


def build_clip_spec(displacement: Displacement, lr_row0: int, lr_col0: int,
                    lr_side: int, frame_shape: tuple[int, int]) -> ClipSpec:
    """LR pixels of a frame whose shift-compensated centers stay inside the
    target patch footprint (shrunk by half an LR pixel per side)."""
    h, w = frame_shape
    row_lo = max(0, math.ceil(lr_row0 - displacement.dy - _CLIP_TOL))
    row_hi = min(h - 1, math.floor(lr_row0 + lr_side - 1 - displacement.dy + _CLIP_TOL))
    col_lo = max(0, math.ceil(lr_col0 - displacement.dx - _CLIP_TOL))
    col_hi = min(w - 1, math.floor(lr_col0 + lr_side - 1 - displacement.dx + _CLIP_TOL))
    return ClipSpec(row_lo, row_hi, col_lo, col_hi)


def build_patch_plan(lr_row0: int, lr_col0: int, lr_side: int, scale: int,
                     matches: Sequence[MatchResult],
                     frame_shape: tuple[int, int]) -> PatchPlan:
    """Assemble the plan for one patch from its per-frame match results.

    The target frame (index 0) always contributes its full patch; accepted
    auxiliary frames contribute their clips, and frames whose clip retains
    no pixels are dropped.
    """
    target = PlanEntry(
        0, Displacement(0.0, 0.0, 1.0),
        ClipSpec(lr_row0, lr_row0 + lr_side - 1, lr_col0, lr_col0 + lr_side - 1))
    entries = [target]
    for m in matches:
        if m.frame_index == 0 or not m.accepted:
            continue
        clip = build_clip_spec(m.displacement, lr_row0, lr_col0, lr_side, frame_shape)
        if clip.count:
            entries.append(PlanEntry(m.frame_index, m.displacement, clip))
    return PatchPlan(lr_row0, lr_col0, lr_side, scale, tuple(entries))


def build_stacked_observation(plan: PatchPlan, frames: Sequence[Image]) -> np.ndarray:
    """Concatenate the clipped LR pixels of all planned frames, frame order."""
    parts = []
    for e in plan.entries:
        frame = frames[e.frame_index]
        clip = e.clip
        if (clip.row_lo < 0 or clip.col_lo < 0 or clip.row_hi >= frame.height
                or clip.col_hi >= frame.width):
            raise ValueError(
                f"clip rows {clip.row_lo}..{clip.row_hi} cols "
                f"{clip.col_lo}..{clip.col_hi} outside frame "
                f"({frame.height}, {frame.width})"
            )
        parts.append(frame.data[clip.row_lo:clip.row_hi + 1,
                                clip.col_lo:clip.col_hi + 1].reshape(-1))
    return np.concatenate(parts)


class BlurredAtomTable:
    """Per-run cache: every HR atom embedded on a zero canvas and blurred.

    Degrading an embedded atom with an integer translation commutes with
    the (zero-padded) blur, so any sub-pixel warp + blur + downsample +
    clip of an atom reduces to four weighted gathers from this table.
    """

    def __init__(self, dictionary: Dictionary, kernel: np.ndarray, hr_side: int,
                 scale: int):
        if dictionary.dim != hr_side * hr_side:
            raise ValueError(
                f"dictionary atom dim {dictionary.dim} does not match "
                f"HR patch side {hr_side}"
            )
        self.hr_side = hr_side
        self.scale = scale
        self.count = dictionary.count
        self.margin = kernel.shape[0] // 2
        self.canvas_side = hr_side + 2 * self.margin
        k = dictionary.count
        canvases = np.zeros((k, self.canvas_side, self.canvas_side))
        canvases[:, self.margin:self.margin + hr_side,
                 self.margin:self.margin + hr_side] = \
            dictionary.atoms.T.reshape(k, hr_side, hr_side)
        blurred = ndimage.convolve(canvases, kernel[None, :, :], mode="constant")
        self.table = np.ascontiguousarray(
            blurred.reshape(k, self.canvas_side * self.canvas_side).T)
        self._memo: dict = {}

    def entry_block(self, rel_rows: np.ndarray, rel_cols: np.ndarray,
                    spec: WarpSpec) -> np.ndarray:
        """Stacked LR atoms of one frame entry.

        ``rel_rows``/``rel_cols`` are clip pixel offsets relative to the
        patch origin in LR units; ``spec`` is the frame's HR-unit warp.
        """
        cs = self.canvas_side
        wy, wx, vy, vx = spec.wy, spec.wx, spec.vy, spec.vx
        base_r = self.scale * rel_rows + wy + self.margin
        base_c = self.scale * rel_cols + wx + self.margin
        out = np.zeros((rel_rows.size * rel_cols.size, self.count))
        for dy, dx, wt in ((0, 0, (1 - vy) * (1 - vx)), (0, 1, (1 - vy) * vx),
                           (1, 0, vy * (1 - vx)), (1, 1, vy * vx)):
            if wt == 0.0:
                continue
            rr = base_r + dy
            cc = base_c + dx
            rok = (rr >= 0) & (rr < cs)
            cok = (cc >= 0) & (cc < cs)
            flat = (np.clip(rr, 0, cs - 1)[:, None] * cs
                    + np.clip(cc, 0, cs - 1)[None, :]).reshape(-1)
            vals = self.table[flat]
            mask = (rok[:, None] & cok[None, :]).reshape(-1)
            if not mask.all():
                vals = vals * mask[:, None]
            out += wt * vals
        return out

    def stacked_matrix(self, plan: PatchPlan) -> np.ndarray:
        blocks = []
        for e in plan.entries:
            spec = WarpSpec(e.displacement.dx * self.scale,
                            e.displacement.dy * self.scale)
            key = (e.clip.row_lo - plan.lr_row0, e.clip.row_hi - plan.lr_row0,
                   e.clip.col_lo - plan.lr_col0, e.clip.col_hi - plan.lr_col0,
                   spec.shift_x, spec.shift_y)
            block = self._memo.get(key)
            if block is None:
                block = self.entry_block(e.clip.rows - plan.lr_row0,
                                         e.clip.cols - plan.lr_col0, spec)
                if len(self._memo) < 64:
                    self._memo[key] = block
            blocks.append(block)
        return np.ascontiguousarray(np.vstack(blocks))


def build_stacked_dictionary(plan: PatchPlan, d_h: Dictionary,
                             model: DegradationModel,
                             table: Optional[BlurredAtomTable] = None) -> Dictionary:
    """Degrade every HR atom through each planned frame's operator chain.

    Atom norms are NOT renormalized; they carry the energy loss of the
    degradation, which the solver must see.
    """
    if table is None:
        table = BlurredAtomTable(d_h, model.blur_kernel, plan.hr_side, model.scale)
    return dictionary_from_matrix(table.stacked_matrix(plan))


def frame_degradation_operator(entry: PlanEntry, plan: PatchPlan,
                               model: DegradationModel) -> LinearOperator:
    """Reference composed form clip * S * H * W * R for one planned frame.

    Builds the full embed/warp/blur/downsample/clip chain on a zero-padded
    canvas (sized for patch + blur support + shift, 3-aligned so the
    decimation grid matches the image grid).  Exists for verification; the
    fast path in :class:`BlurredAtomTable` must match it to 1e-10.
    """
    scale = model.scale
    spec = WarpSpec(entry.displacement.dx * scale, entry.displacement.dy * scale)
    b = model.blur_kernel.shape[0] // 2
    max_shift = int(math.ceil(max(abs(spec.shift_x), abs(spec.shift_y)))) + 1
    margin = scale * math.ceil((b + max_shift) / scale)
    cs = plan.hr_side + 2 * margin
    side = plan.hr_side

    def embed_fn(v: np.ndarray) -> np.ndarray:
        canvas = np.zeros((cs, cs))
        canvas[margin:margin + side, margin:margin + side] = v.reshape(side, side)
        return canvas.reshape(-1)

    embed = LinearOperator(cs * cs, side * side, embed_fn, label="R")
    warp = warp_operator(spec, cs, cs, boundary="zero")
    blur = blur_operator(model.blur_kernel, cs, cs, boundary="zero")
    down = downsample_operator(scale, cs, cs)

    lr_cs = cs // scale
    lr_off = margin // scale
    clip = entry.clip
    rel_rows = clip.rows - plan.lr_row0 + lr_off
    rel_cols = clip.cols - plan.lr_col0 + lr_off
    flat = (rel_rows[:, None] * lr_cs + rel_cols[None, :]).reshape(-1)

    clip_op = LinearOperator(flat.size, lr_cs * lr_cs, lambda v: v[flat],
                             label=f"C{entry.frame_index}")
    return compose([clip_op, down, blur, warp, embed])


def reconstruct_patch(plan: PatchPlan, frames: Sequence[Image], d_h: Dictionary,
                      d_stacked: Dictionary, eta: float) -> np.ndarray:
    """Sparse-code the mean-removed stacked observation, rebuild in HR."""
    y = build_stacked_observation(plan, frames)
    m = float(y.mean())
    code = lars_lasso(d_stacked, y - m, eta)
    return d_h.atoms @ code.coefficients + m


def patch_grid(lr_height: int, lr_width: int, side: int, step: int) -> list[tuple[int, int]]:
    """Patch origins tiling the LR grid; the last row/column is flushed to
    the border so coverage is complete (overlap grows at the remainder)."""
    if lr_height < side or lr_width < side:
        raise ValueError(
            f"LR frame ({lr_height}, {lr_width}) smaller than patch side {side}"
        )

    def axis(n: int) -> list[int]:
        xs = list(range(0, n - side + 1, step))
        if xs[-1] != n - side:
            xs.append(n - side)
        return xs

    return [(r, c) for r in axis(lr_height) for c in axis(lr_width)]


def hann_window(side: int, floor: float = 1e-6) -> np.ndarray:
    """Separable raised-cosine fusion weights, floored so rims keep weight."""
    i = np.arange(side)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * i / (side - 1))
    return np.outer(np.maximum(w, floor), np.maximum(w, floor))


def fuse_patches(patches: Sequence[tuple[int, int, np.ndarray]],
                 hr_shape: tuple[int, int],
                 window: Optional[np.ndarray] = None) -> Image:
    """Weighted overlap-average of HR patches given as (row0, col0, values)."""
    acc = np.zeros(hr_shape)
    wsum = np.zeros(hr_shape)
    for row0, col0, values in patches:
        side = values.shape[0] if values.ndim == 2 else int(round(math.sqrt(values.size)))
        block = values.reshape(side, side)
        w = hann_window(side) if window is None else window
        acc[row0:row0 + side, col0:col0 + side] += w * block
        wsum[row0:row0 + side, col0:col0 + side] += w
    if np.any(wsum == 0.0):
        holes = int((wsum == 0).sum())
        raise ValueError(f"{holes} HR pixels not covered by any patch")
    return image_from_array(acc / wsum)


def back_project(x0: Image, y_target: Image, model: DegradationModel,
                 c: float, nu: float, iterations: int,
                 improve_tol: float = 1e-8, return_trace: bool = False):
    """Gradient descent on ``||S H X - Y||^2 + c ||X - X0||^2`` from X0.

    The blur adjoint is exact (including the replicate-boundary fold), so
    the step direction is the true gradient.  If a step would increase the
    objective the step size is halved for the remaining iterations; descent
    stops early when the improvement drops below ``improve_tol`` relative.
    """
    kernel = model.blur_kernel
    scale = model.scale
    if (x0.height != y_target.height * scale
            or x0.width != y_target.width * scale):
        raise ValueError(
            f"HR ({x0.height}, {x0.width}) is not scale x LR "
            f"({y_target.height}, {y_target.width})"
        )

    def forward(x: np.ndarray) -> np.ndarray:
        return ndimage.convolve(x, kernel, mode="nearest")[::scale, ::scale]

    def adjoint(r: np.ndarray) -> np.ndarray:
        return blur_adjoint(upsample_zero(r, scale), kernel)

    x_init = x0.data
    y = y_target.data
    x = x_init.copy()
    resid = forward(x) - y

    def objective(xa: np.ndarray, ra: np.ndarray) -> float:
        return float((ra * ra).sum()) + c * float(((xa - x_init) ** 2).sum())

    obj = objective(x, resid)
    trace = [obj]
    halvings = 0
    for _ in range(iterations):
        grad = adjoint(resid) + c * (x - x_init)
        while True:
            cand = x - nu * grad
            cand_resid = forward(cand) - y
            cand_obj = objective(cand, cand_resid)
            if cand_obj <= obj or nu < 1e-30:
                break
            nu *= 0.5
            halvings += 1
        improved = obj - cand_obj
        x, resid, obj = cand, cand_resid, cand_obj
        trace.append(obj)
        if improved < improve_tol * max(1.0, abs(obj)):
            break
    out = image_from_array(x)
    if return_trace:
        return out, np.array(trace), halvings
    return out


@dataclass(frozen=True)
class SRResult:
    image: Image
    pre_projection: Image
    plans: tuple[PatchPlan, ...]


def _plan_all(frames: Sequence[Image], config: SRConfig,
              oracle_shifts: Optional[Sequence[WarpSpec]]) -> list[PatchPlan]:
    target = frames[0]
    side = config.lr_patch_side
    grid = patch_grid(target.height, target.width, side, config.lr_step)
    shape = (target.height, target.width)

    if len(frames) == 1:
        return [build_patch_plan(r, c, side, config.scale, (), shape)
                for (r, c) in grid]

    if oracle_shifts is not None:
        if len(oracle_shifts) != len(frames):
            raise ValueError(
                f"{len(oracle_shifts)} oracle shifts for {len(frames)} frames"
            )
        matches = [
            MatchResult(j, Displacement(spec.shift_x / config.scale,
                                        spec.shift_y / config.scale, 1.0), True)
            for j, spec in enumerate(oracle_shifts) if j > 0
        ]
        return [build_patch_plan(r, c, side, config.scale, matches, shape)
                for (r, c) in grid]

    all_matches = match_frames(target, frames[1:], grid, side,
                               config.search_radius, config.delta,
                               config.mean_removed_matching)
    if config.motion_guard:
        all_matches = _guard_displacements(all_matches, len(frames),
                                           config.motion_guard_tol)
    return [build_patch_plan(r, c, side, config.scale, pm, shape)
            for (r, c), pm in zip(grid, all_matches)]


def _guard_displacements(all_matches: list[list[MatchResult]], n_frames: int,
                         tol: float) -> list[list[MatchResult]]:
    """Snap per-patch displacement outliers to their frame's robust motion.

    The observation model assigns each frame one global translation; local
    block matching refines it per patch but produces confident false peaks
    where the shifted content is unobservable (frame borders, flat or
    self-similar regions).  An estimate farther than ``tol`` LR pixels from
    the frame's median displacement is such a false peak, and the median is
    the better-supported hypothesis for that patch.
    """
    guarded = [list(pm) for pm in all_matches]
    for j in range(1, n_frames):
        dx = np.array([pm[j].displacement.dx for pm in guarded])
        dy = np.array([pm[j].displacement.dy for pm in guarded])
        med_dx = float(np.median(dx))
        med_dy = float(np.median(dy))
        off = np.maximum(np.abs(dx - med_dx), np.abs(dy - med_dy)) > tol
        for i in np.nonzero(off)[0]:
            old = guarded[i][j]
            snapped = Displacement(med_dx, med_dy, old.displacement.score)
            guarded[i][j] = MatchResult(old.frame_index, snapped, old.accepted)
    return guarded


def super_resolve(frames: Sequence[Image], config: SRConfig, d_h: Dictionary,
                  oracle_shifts: Optional[Sequence[WarpSpec]] = None,
                  detailed: bool = False):
    """Run the full pipeline; frame 0 is the target being super-resolved.

    With one frame this IS the single-frame sparse-coding method:
    registration is skipped and every plan holds only the target entry.
    ``oracle_shifts`` (HR-unit warp specs, one per frame) bypasses
    registration with ground-truth displacements.
    """
    if not frames:
        raise ValueError("need at least one frame")
    target = frames[0]
    model = config.degradation_model()
    plans = _plan_all(frames, config, oracle_shifts)
    table = BlurredAtomTable(d_h, model.blur_kernel, config.hr_patch_side,
                             config.scale)

    def solve(plan: PatchPlan) -> np.ndarray:
        stacked = build_stacked_dictionary(plan, d_h, model, table)
        return reconstruct_patch(plan, frames, d_h, stacked, config.eta)

    hr_patches = map_indexed(solve, plans, config.threads)
    fused = fuse_patches(
        [(p.hr_row0, p.hr_col0, v) for p, v in zip(plans, hr_patches)],
        (target.height * config.scale, target.width * config.scale),
        hann_window(config.hr_patch_side))
    final = back_project(fused, target, model, config.bp_c, config.bp_nu,
                         config.bp_iterations)
    if detailed:
        return SRResult(final, fused, tuple(plans))
    return final


def super_resolve_single(frame: Image, config: SRConfig, d_h: Dictionary,
                         detailed: bool = False):
    """Dedicated single-frame entry point (the N=1 reduction)."""
    return super_resolve([frame], config, d_h, detailed=detailed)
