"""Iterative dataset update: blending, masking, editors, and the loop."""
from __future__ import annotations

import numpy as np
import pytest

from radiant.core import MaskImage, RgbaImage, VoxelField
from radiant.idu import (
    AlphaThresholdSegmenter,
    EditInstruction,
    IduDataset,
    IduError,
    IduSchedule,
    KnownMaskSegmenter,
    alpha_blend_black,
    apply_mask,
    builtin_editor,
    idu_run,
    make_segmenter,
)
from radiant.optim import TrainConfig, train_object_field
from radiant.render import RenderConfig, render_view
from radiant.synth import mask_from_alpha


def _rng_image(rng, h=6, w=5):
    return RgbaImage(rng.random((h, w, 3)), rng.random((h, w)))


class TestAlphaBlendBlack:
    def test_opaque_passes_through(self):
        rng = np.random.default_rng(0)
        img = RgbaImage(rng.random((4, 4, 3)), np.ones((4, 4)))
        assert np.array_equal(alpha_blend_black(img), img.rgb)

    def test_transparent_goes_black(self):
        rng = np.random.default_rng(1)
        img = RgbaImage(rng.random((4, 4, 3)), np.zeros((4, 4)))
        assert np.all(alpha_blend_black(img) == 0.0)

    def test_half_alpha_halves_pixel(self):
        img = RgbaImage(np.array([[[0.8, 0.4, 0.2]]]), np.array([[0.5]]))
        assert alpha_blend_black(img)[0, 0] == pytest.approx([0.4, 0.2, 0.1], abs=1e-15)


class TestApplyMask:
    def test_full_and_empty_masks(self):
        rgb = np.random.default_rng(2).random((3, 4, 3))
        full = apply_mask(rgb, MaskImage(np.ones((3, 4), dtype=bool)))
        assert np.all(full.alpha == 1.0)
        empty = apply_mask(rgb, MaskImage(np.zeros((3, 4), dtype=bool)))
        assert np.all(empty.alpha == 0.0)

    def test_round_trip_on_masked_pixels(self):
        rng = np.random.default_rng(3)
        mask = MaskImage(rng.random((5, 5)) > 0.5)
        img = RgbaImage(rng.random((5, 5, 3)), mask.as_float())
        back = apply_mask(alpha_blend_black(img), mask)
        sel = mask.data
        assert np.array_equal(back.rgb[sel], img.rgb[sel])
        assert np.array_equal(back.alpha, img.alpha)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimensions"):
            apply_mask(np.zeros((3, 4, 3)), MaskImage(np.zeros((4, 4), dtype=bool)))


class TestBuiltinEditors:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(4)
        img = rng.random((6, 6, 3))
        editor = builtin_editor("identity")
        out = editor.edit(img, img, EditInstruction("noop"))
        assert out is img or np.array_equal(out, img)

    def test_recolor_full_strength_hits_target(self):
        editor = builtin_editor("recolor", {"target": (0.0, 0.0, 1.0), "strength": 1.0})
        out = editor.edit(np.random.default_rng(5).random((4, 4, 3)), None,
                          EditInstruction("recolor"))
        assert np.all(out == np.array([0.0, 0.0, 1.0]))

    def test_recolor_half_strength_interpolates(self):
        editor = builtin_editor("recolor", {"target": (0.0, 0.0, 1.0), "strength": 0.5})
        out = editor.edit(np.array([[[1.0, 0.0, 0.0]]]), None, EditInstruction("recolor"))
        assert out[0, 0] == pytest.approx([0.5, 0.0, 0.5], abs=1e-15)

    def test_hue_shift_cycles_primaries(self):
        editor = builtin_editor("hue_shift", {"degrees": 120.0})
        red = np.array([[[1.0, 0.0, 0.0]]])
        green = editor.edit(red, None, EditInstruction("shift"))
        assert green[0, 0] == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)
        blue = editor.edit(green, None, EditInstruction("shift"))
        assert blue[0, 0] == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)

    def test_hue_shift_preserves_greys(self):
        editor = builtin_editor("hue_shift", {"degrees": 77.0})
        grey = np.full((3, 3, 3), 0.42)
        assert editor.edit(grey, None, EditInstruction("shift")) == pytest.approx(grey, abs=1e-12)

    def test_brighten_scales_and_clamps(self):
        editor = builtin_editor("brighten", {"factor": 2.0})
        out = editor.edit(np.array([[[0.3, 0.6, 0.0]]]), None, EditInstruction("brighten"))
        assert out[0, 0] == pytest.approx([0.6, 1.0, 0.0], abs=1e-15)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown editor"):
            builtin_editor("sharpen")


class TestSegmenters:
    def test_known_mask_returns_prior(self):
        prior = MaskImage(np.eye(4, dtype=bool))
        out = KnownMaskSegmenter().segment(np.zeros((4, 4, 3)), prior)
        assert np.array_equal(out.data, prior.data)

    def test_alpha_threshold_marks_non_black(self):
        rgb = np.zeros((2, 3, 3))
        rgb[0, 1] = (0.5, 0.0, 0.0)
        rgb[1, 2] = (0.0005, 0.0, 0.0)  # below the 1e-3 threshold
        out = AlphaThresholdSegmenter().segment(rgb, MaskImage(np.zeros((2, 3), dtype=bool)))
        assert out.data[0, 1] and not out.data[1, 2]

    def test_make_segmenter_names(self):
        assert isinstance(make_segmenter("known_mask"), KnownMaskSegmenter)
        assert isinstance(make_segmenter("alpha_threshold"), AlphaThresholdSegmenter)
        with pytest.raises(ValueError):
            make_segmenter("sam")


class CountingEditor:
    """Identity editor that records how often each viewpoint-sized call happens."""

    def __init__(self):
        self.calls = 0

    def edit(self, current_rgb, original_rgb, instruction):
        self.calls += 1
        return current_rgb


def _idu_dataset(dataset) -> IduDataset:
    return IduDataset.from_multiview(dataset)


def _snapshot(dataset: IduDataset):
    return [(v.current.rgb.copy(), v.current.alpha.copy(), v.mask.data.copy())
            for v in dataset.views]


def _small_cfg(n_iter=0, seed=7):
    return TrainConfig(iterations=max(n_iter, 1), rays_per_batch=256,
                       learning_rate=0.15, samples_per_ray=24, rng_seed=seed)


class TestIduRun:
    def test_identity_editor_keeps_dataset_bit_identical(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        before = _snapshot(ds)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
        schedule = IduSchedule(outer_iterations=3, d=2, n=5, rng_seed=3)
        idu_run(field, ds, builtin_editor("identity"), KnownMaskSegmenter(), schedule,
                _small_cfg(), EditInstruction("keep"))
        for (rgb0, a0, m0), view in zip(before, ds.views):
            assert np.array_equal(rgb0, view.current.rgb)
            assert np.array_equal(a0, view.current.alpha)
            assert np.array_equal(m0, view.mask.data)

    def test_identity_editor_matches_plain_training(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        outer, n = 4, 25
        cfg = _small_cfg(seed=11)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
        schedule = IduSchedule(outer_iterations=outer, d=1, n=n, rng_seed=5)
        idu_run(field, ds, builtin_editor("identity"), KnownMaskSegmenter(), schedule, cfg,
                EditInstruction("keep"))

        plain_cfg = TrainConfig(iterations=outer * n, rays_per_batch=cfg.rays_per_batch,
                                learning_rate=cfg.learning_rate,
                                samples_per_ray=cfg.samples_per_ray, rng_seed=11)
        plain = train_object_field(tiny_object_dataset, plain_cfg, resolution=(16, 16, 16))
        assert np.array_equal(field.density, plain.density)
        assert np.array_equal(field.color, plain.color)

    def test_schedule_accounting_with_no_training(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
        before_density = field.density.copy()
        editor = CountingEditor()
        schedule = IduSchedule(outer_iterations=1, d=1, n=0, rng_seed=0)
        idu_run(field, ds, editor, KnownMaskSegmenter(), schedule, _small_cfg(),
                EditInstruction("count"))
        assert editor.calls == len(ds.views)  # every view edited exactly once
        assert np.array_equal(field.density, before_density)

    def test_viewpoint_coverage_is_d_per_outer(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
        editor = CountingEditor()
        schedule = IduSchedule(outer_iterations=2, d=3, n=0, rng_seed=0)
        idu_run(field, ds, editor, KnownMaskSegmenter(), schedule, _small_cfg(),
                EditInstruction("count"))
        assert editor.calls == 2 * 3 * len(ds.views)

    def test_run_is_deterministic(self, tiny_object_dataset):
        results = []
        for _ in range(2):
            ds = _idu_dataset(tiny_object_dataset)
            field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
            schedule = IduSchedule(outer_iterations=2, d=1, n=10, rng_seed=21)
            editor = builtin_editor("recolor", {"target": (0.1, 0.2, 0.9), "strength": 0.5})
            idu_run(field, ds, editor, KnownMaskSegmenter(), schedule, _small_cfg(seed=2),
                    EditInstruction("recolor"))
            results.append((field.density.copy(), field.color.copy(),
                            ds.views[0].current.rgb.copy()))
        assert np.array_equal(results[0][0], results[1][0])
        assert np.array_equal(results[0][1], results[1][1])
        assert np.array_equal(results[0][2], results[1][2])

    def test_images_stay_valid_rgba_through_edits(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)
        editor = builtin_editor("brighten", {"factor": 3.0})
        schedule = IduSchedule(outer_iterations=2, d=2, n=0, rng_seed=1)
        idu_run(field, ds, editor, KnownMaskSegmenter(), schedule, _small_cfg(),
                EditInstruction("brighten"))
        for view in ds.views:
            assert view.current.rgb.min() >= 0.0 and view.current.rgb.max() <= 1.0
            assert set(np.unique(view.current.alpha)).issubset({0.0, 1.0})

    def test_editor_failure_names_viewpoint(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)

        class FailingEditor:
            def edit(self, current_rgb, original_rgb, instruction):
                raise RuntimeError("model exploded")

        with pytest.raises(IduError, match="viewpoint") as err:
            idu_run(field, ds, FailingEditor(), KnownMaskSegmenter(),
                    IduSchedule(outer_iterations=1, d=1, n=0, rng_seed=0), _small_cfg(),
                    EditInstruction("fail"))
        assert err.value.viewpoint is not None

    def test_wrong_size_editor_output_rejected(self, tiny_object_dataset):
        ds = _idu_dataset(tiny_object_dataset)
        field = VoxelField.constant((16, 16, 16), ds.bounds_min, ds.bounds_max)

        class WrongSizeEditor:
            def edit(self, current_rgb, original_rgb, instruction):
                return current_rgb[:-1]

        with pytest.raises(IduError, match="expected"):
            idu_run(field, ds, WrongSizeEditor(), KnownMaskSegmenter(),
                    IduSchedule(outer_iterations=1, d=1, n=0, rng_seed=0), _small_cfg(),
                    EditInstruction("shrink"))

    def test_recolor_converges_toward_target(self, tiny_scene, tiny_object_dataset):
        spec, fields, cams = tiny_scene
        ds = _idu_dataset(tiny_object_dataset)
        cfg = TrainConfig(iterations=1, rays_per_batch=512, learning_rate=0.25,
                          samples_per_ray=32, rng_seed=9)
        field = train_object_field(
            tiny_object_dataset,
            TrainConfig(iterations=200, rays_per_batch=512, learning_rate=0.25,
                        samples_per_ray=32, rng_seed=1),
            resolution=(32, 32, 32))
        target = np.array([0.0, 0.0, 1.0])
        editor = builtin_editor("recolor", {"target": tuple(target), "strength": 1.0})
        schedule = IduSchedule(outer_iterations=5, d=1, n=60, rng_seed=4)
        idu_run(field, ds, editor, KnownMaskSegmenter(), schedule, cfg,
                EditInstruction("make it blue"))
        render_cfg = RenderConfig(samples_per_ray=64, background="transparent",
                                  near=spec.rig.near, far=spec.rig.far)
        view = tiny_object_dataset.views[0]
        rendered = render_view(field, view.camera, render_cfg)
        sel = view.mask.data & (rendered.alpha > 0.5)
        mean_color = (rendered.rgb / np.maximum(rendered.alpha, 1e-6)[..., None])[sel].mean(axis=0)
        assert np.abs(mean_color - target).max() < 0.1


class TestIduTypes:
    def test_instruction_requires_text(self):
        with pytest.raises(ValueError, match="nonempty"):
            EditInstruction("")

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            IduSchedule(outer_iterations=0)
        with pytest.raises(ValueError):
            IduSchedule(d=0)
        with pytest.raises(ValueError):
            IduSchedule(n=-1)
        IduSchedule(n=0)  # zero training steps is allowed

    def test_from_multiview_requires_masks(self, tiny_background_dataset):
        from radiant.synth import MultiViewDataset, ViewData
        ds = tiny_background_dataset
        stripped = MultiViewDataset(
            [ViewData(v.camera, v.rgb) for v in ds.views],
            ds.bounds_min, ds.bounds_max, ds.near, ds.far)
        with pytest.raises(ValueError, match="incomplete"):
            IduDataset.from_multiview(stripped)
