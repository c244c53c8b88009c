"""Pipeline mechanics: clips, stacking, atom degradation, fusion, projection."""

import numpy as np
import pytest

from mfsr.core import DegradationModel, Displacement, dictionary_from_matrix, image_from_array
from mfsr.degrade import WarpSpec, gaussian_kernel, generate_observations
from mfsr.pipeline import (
    BlurredAtomTable,
    SRConfig,
    back_project,
    build_clip_spec,
    build_patch_plan,
    build_stacked_dictionary,
    build_stacked_observation,
    frame_degradation_operator,
    fuse_patches,
    hann_window,
    patch_grid,
    reconstruct_patch,
    super_resolve,
    super_resolve_single,
)
from mfsr.registration import MatchResult
from mfsr.scenes import make_scene, make_texture


def small_dictionary(dim=225, count=40, seed=0, zero_mean=True):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(dim, count))
    if zero_mean:
        atoms -= atoms.mean(axis=0)
    atoms /= np.linalg.norm(atoms, axis=0)
    return dictionary_from_matrix(atoms)


def model_for(config=None, sigma=1.0, side=9):
    return DegradationModel(3, gaussian_kernel(side, sigma), 0.0, 0)


def plan_with(displacements, lr_row0=4, lr_col0=4, frame_shape=(32, 32)):
    matches = [MatchResult(j + 1, d, True) for j, d in enumerate(displacements)]
    return build_patch_plan(lr_row0, lr_col0, 5, 3, matches, frame_shape)


class TestClipSpec:
    def test_zero_displacement_keeps_full_patch(self):
        clip = build_clip_spec(Displacement(0.0, 0.0, 1.0), 4, 4, 5, (32, 32))
        assert clip.count == 25
        assert (clip.row_lo, clip.row_hi, clip.col_lo, clip.col_hi) == (4, 8, 4, 8)

    def test_half_pixel_displacement_drops_rightmost_column(self):
        clip = build_clip_spec(Displacement(0.5, 0.0, 1.0), 4, 4, 5, (32, 32))
        assert (clip.col_lo, clip.col_hi) == (4, 7)
        assert (clip.row_lo, clip.row_hi) == (4, 8)
        assert clip.count == 20

    def test_negative_half_pixel_drops_leftmost_column(self):
        clip = build_clip_spec(Displacement(-0.5, 0.0, 1.0), 4, 4, 5, (32, 32))
        assert (clip.col_lo, clip.col_hi) == (5, 8)

    def test_shift_outside_frame_gives_empty_clip(self):
        # border patch, displacement pushes every source pixel off-frame
        clip = build_clip_spec(Displacement(6.0, 0.0, 1.0), 4, 0, 5, (32, 32))
        assert clip.count == 0
        plan = build_patch_plan(4, 0, 5, 3,
                                [MatchResult(1, Displacement(6.0, 0.0, 1.0), True)],
                                (32, 32))
        assert len(plan.entries) == 1  # the frame was dropped

    def test_frame_bounds_intersected(self):
        # bottom-edge patch: part of the mapped window leaves the frame
        clip = build_clip_spec(Displacement(0.0, -2.25, 1.0), 27, 4, 5, (32, 32))
        assert (clip.row_lo, clip.row_hi) == (30, 31)  # rows 32, 33 cut off
        assert (clip.col_lo, clip.col_hi) == (4, 8)

    def test_threshold_monotonicity_of_stacked_dim(self):
        # raising delta can only drop frames, never grow the stacked dim
        rng = np.random.default_rng(1)
        disps = [Displacement(float(dx), float(dy), s)
                 for dx, dy, s in zip(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4),
                                      [0.2, 0.5, 0.8, 0.95])]
        shape = (32, 32)
        dims = []
        for delta in (0.0, 0.4, 0.7, 0.9, 1.0):
            matches = [MatchResult(j + 1, d, d.score >= delta)
                       for j, d in enumerate(disps)]
            plan = build_patch_plan(4, 4, 5, 3, matches, shape)
            dims.append(plan.stacked_dim)
        assert all(a >= b for a, b in zip(dims, dims[1:]))


class TestStackedObservation:
    def test_single_frame_reduces_to_patch_vector(self):
        img = image_from_array(make_scene(32, 32, seed=2))
        plan = plan_with([])
        y = build_stacked_observation(plan, [img])
        assert np.array_equal(y, img.data[4:9, 4:9].reshape(-1))

    def test_two_identical_frames_repeat_the_patch(self):
        img = image_from_array(make_scene(32, 32, seed=3))
        plan = plan_with([Displacement(0.0, 0.0, 1.0)])
        y = build_stacked_observation(plan, [img, img])
        assert y.size == 50
        assert np.array_equal(y[:25], y[25:])

    def test_frame_one_always_full(self):
        plan = plan_with([Displacement(3.25, -2.0, 0.9)])
        assert plan.entries[0].frame_index == 0
        assert plan.entries[0].clip.count == 25


class TestStackedDictionary:
    def test_single_frame_matches_blur_downsample_of_atoms(self):
        d_h = small_dictionary()
        model = model_for()
        plan = plan_with([])
        stacked = build_stacked_dictionary(plan, d_h, model)
        assert stacked.dim == 25 and stacked.count == d_h.count
        op = frame_degradation_operator(plan.entries[0], plan, model)
        for k in range(0, d_h.count, 7):
            ref = op(d_h.atoms[:, k])
            assert np.max(np.abs(stacked.atoms[:, k] - ref)) < 1e-12

    def test_matches_functional_degradation_of_combined_patch(self):
        # linearity oracle: D~ a == degrading (D_h a) through the chain
        rng = np.random.default_rng(4)
        d_h = small_dictionary()
        model = model_for()
        for trial in range(10):
            disps = [Displacement(float(rng.uniform(-2, 2)),
                                  float(rng.uniform(-2, 2)), 1.0)
                     for _ in range(3)]
            plan = plan_with(disps)
            stacked = build_stacked_dictionary(plan, d_h, model)
            alpha = rng.normal(size=d_h.count)
            combined = d_h.atoms @ alpha
            ref = np.concatenate([
                frame_degradation_operator(e, plan, model)(combined)
                for e in plan.entries])
            assert np.max(np.abs(stacked.atoms @ alpha - ref)) < 1e-10

    def test_zero_atom_gives_zero_stacked_atom(self):
        atoms = np.zeros((225, 3))
        atoms[:, 0] = 1.0 / 15.0
        d_h = dictionary_from_matrix(atoms)
        plan = plan_with([Displacement(0.75, -0.5, 1.0)])
        stacked = build_stacked_dictionary(plan, d_h, model_for())
        assert np.all(stacked.atoms[:, 1] == 0.0)
        assert np.all(stacked.atoms[:, 2] == 0.0)

    def test_atom_dim_mismatch_rejected(self):
        d_h = small_dictionary(dim=100)
        with pytest.raises(ValueError, match="dim"):
            BlurredAtomTable(d_h, gaussian_kernel(9, 1.0), 15, 3)


class TestReconstructPatch:
    def test_constant_observation_reproduces_constant(self):
        d_h = small_dictionary()  # zero-mean atoms
        model = model_for()
        img = image_from_array(np.full((32, 32), 37.0))
        plan = plan_with([Displacement(0.25, 0.25, 1.0)])
        stacked = build_stacked_dictionary(plan, d_h, model)
        x = reconstruct_patch(plan, [img, img], d_h, stacked, eta=0.05)
        assert np.max(np.abs(x - 37.0)) < 1e-8

    def test_huge_eta_returns_mean_only(self):
        d_h = small_dictionary()
        model = model_for()
        img = image_from_array(make_scene(32, 32, seed=5))
        plan = plan_with([])
        stacked = build_stacked_dictionary(plan, d_h, model)
        y = img.data[4:9, 4:9]
        x = reconstruct_patch(plan, [img], d_h, stacked, eta=1e9)
        assert np.max(np.abs(x - y.mean())) < 1e-10

    def test_one_sparse_recovery_through_degradation(self):
        # a stacked observation that is exactly one degraded atom (plus its
        # mean) must be explained by that atom up to eta shrinkage
        d_h = small_dictionary(count=12, seed=6)
        model = model_for()
        plan = plan_with([Displacement(-0.75, 1.25, 1.0)])
        stacked = build_stacked_dictionary(plan, d_h, model)
        amp = 40.0
        y = amp * stacked.atoms[:, 5]
        from mfsr.solver import lars_lasso
        code = lars_lasso(stacked, y - y.mean(), 0.001)
        assert abs(code.coefficients[5]) > 0.5 * amp
        recon = stacked.atoms @ code.coefficients
        assert np.linalg.norm(recon - (y - y.mean())) < 0.05 * np.linalg.norm(y - y.mean()) + 1.0


class TestFusion:
    def test_constant_patches_fuse_to_constant(self):
        patches = [(r, c, np.full(225, 5.5)) for (r, c) in
                   [(0, 0), (0, 6), (6, 0), (6, 6)]]
        out = fuse_patches(patches, (21, 21))
        assert np.max(np.abs(out.data - 5.5)) < 1e-12

    def test_single_patch_is_identity(self):
        rng = np.random.default_rng(7)
        vals = rng.uniform(0, 255, size=225)
        out = fuse_patches([(0, 0, vals)], (15, 15))
        assert np.max(np.abs(out.vector - vals)) < 1e-12

    def test_overlap_band_is_monotone_blend(self):
        a = (0, 0, np.zeros(225))
        b = (0, 7, np.ones(225))
        out = fuse_patches([a, b], (15, 22))
        mid = out.data[7]
        assert np.all(mid >= -1e-12) and np.all(mid <= 1.0 + 1e-12)
        band = mid[7:15]
        assert np.all(np.diff(band) >= -1e-9)

    def test_uncovered_pixel_is_error(self):
        with pytest.raises(ValueError, match="not covered"):
            fuse_patches([(0, 0, np.ones(225))], (20, 20))

    def test_hann_window_floor(self):
        w = hann_window(15)
        assert w.min() >= 1e-12  # floored 1-D rims keep positive weight
        assert w[7, 7] == pytest.approx(1.0)


class TestBackProjection:
    def test_fixed_point_when_consistent(self):
        rng = np.random.default_rng(8)
        model = model_for()
        hr = image_from_array(make_scene(30, 30, seed=9))
        from mfsr.degrade import blur, downsample
        y = downsample(blur(hr, model.blur_kernel), 3)
        out, trace, halvings = back_project(hr, y, model, c=0.5, nu=0.001,
                                            iterations=20, return_trace=True)
        assert np.max(np.abs(out.data - hr.data)) < 1e-10
        assert halvings == 0

    def test_huge_c_pins_iterate_to_start(self):
        model = model_for()
        x0 = image_from_array(make_scene(30, 30, seed=10))
        y = image_from_array(make_scene(10, 10, seed=11))
        out = back_project(x0, y, model, c=1e12, nu=1e-12, iterations=1)
        assert np.max(np.abs(out.data - x0.data)) < 1e-3

    def test_objective_strictly_decreases(self):
        model = model_for()
        hr = image_from_array(make_scene(36, 36, seed=12))
        x0 = image_from_array(hr.data + np.random.default_rng(13).normal(0, 4, hr.data.shape))
        y = image_from_array(make_scene(12, 12, seed=12) )
        out, trace, halvings = back_project(x0, y, model, c=0.0001, nu=0.001,
                                            iterations=10, return_trace=True)
        assert halvings == 0
        assert np.all(np.diff(trace) < 0)

    def test_size_mismatch(self):
        model = model_for()
        with pytest.raises(ValueError, match="scale"):
            back_project(image_from_array(np.ones((10, 10))),
                         image_from_array(np.ones((5, 5))), model, 0.1, 0.1, 1)


class TestPatchGrid:
    def test_flush_remainder(self):
        grid = patch_grid(32, 32, 5, 2)
        rows = sorted({r for r, _ in grid})
        assert rows[0] == 0 and rows[-1] == 27
        assert all(b - a in (1, 2) for a, b in zip(rows, rows[1:]))

    def test_covers_every_pixel(self):
        for n in (15, 16, 17, 32):
            grid = patch_grid(n, n, 5, 2)
            cover = np.zeros((n, n), dtype=int)
            for r, c in grid:
                cover[r:r + 5, c:c + 5] += 1
            assert np.all(cover > 0)

    def test_too_small_frame(self):
        with pytest.raises(ValueError, match="smaller"):
            patch_grid(4, 10, 5, 2)


class TestSuperResolve:
    def config(self, **kw):
        return SRConfig(**{"bp_iterations": 10, **kw})

    def test_single_frame_bit_identical_to_dedicated_path(self):
        d_h = small_dictionary(count=48, seed=14)
        img = image_from_array(make_scene(30, 30, seed=15))
        cfg = self.config()
        via_list = super_resolve([img], cfg, d_h)
        via_single = super_resolve_single(img, cfg, d_h)
        assert np.array_equal(via_list.data, via_single.data)

    def test_constant_frames_reconstruct_constant_before_projection(self):
        d_h = small_dictionary(count=32, seed=16)
        frames = [image_from_array(np.full((15, 15), 81.0)) for _ in range(3)]
        res = super_resolve(frames, self.config(), d_h,
                            oracle_shifts=[WarpSpec(0, 0)] * 3, detailed=True)
        assert np.max(np.abs(res.pre_projection.data - 81.0)) < 1e-8

    def test_oracle_shift_count_validated(self):
        d_h = small_dictionary(count=8, seed=17)
        frames = [image_from_array(make_scene(15, 15, seed=18))] * 2
        with pytest.raises(ValueError, match="oracle"):
            super_resolve(frames, self.config(), d_h,
                          oracle_shifts=[WarpSpec(0, 0)])

    def test_multi_frame_runs_and_improves_over_prebp(self):
        # smoke test: 5 oracle-shift frames, output finite and HR-sized
        hr = image_from_array(make_texture(45, 45, seed=19))
        model = DegradationModel(3, gaussian_kernel(9, 1.0), 0.0, 20)
        frames = generate_observations(hr, model, 5, 4.0)
        d_h = small_dictionary(count=64, seed=21)
        res = super_resolve([f for f, _ in frames], self.config(), d_h,
                            oracle_shifts=[s for _, s in frames], detailed=True)
        assert res.image.height == 45 and res.image.width == 45
        assert np.all(np.isfinite(res.image.data))
        assert len(res.plans) == len(patch_grid(15, 15, 5, 2))
        assert all(p.stacked_dim >= 25 for p in res.plans)
