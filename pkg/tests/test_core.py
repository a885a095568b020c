"""Field, camera, ray, image, and transform primitives."""
from __future__ import annotations

import numpy as np
import pytest

from radiant.core import (
    Camera,
    MaskImage,
    Ray,
    RaySamples,
    RgbaImage,
    SrtTransform,
    VoxelField,
    rotation_about_axis,
    srt_canonical_to_world,
    srt_density_correction,
    srt_world_to_canonical,
    trilinear_query,
)

from conftest import random_rotation


class TestVoxelFieldInvariants:
    def test_negative_density_rejected(self):
        dens = np.full((2, 2, 2), -0.1)
        with pytest.raises(ValueError, match="density"):
            VoxelField((2, 2, 2), (0, 0, 0), (1, 1, 1), dens, np.zeros((2, 2, 2, 3)))

    def test_color_out_of_range_rejected(self):
        col = np.full((2, 2, 2, 3), 1.5)
        with pytest.raises(ValueError, match="color"):
            VoxelField((2, 2, 2), (0, 0, 0), (1, 1, 1), np.zeros((2, 2, 2)), col)

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ValueError, match="bounds"):
            VoxelField.constant((2, 2, 2), (0, 0, 0), (1, 0, 1))

    def test_resolution_must_be_at_least_two(self):
        with pytest.raises(ValueError, match="resolution"):
            VoxelField.constant((1, 4, 4), (0, 0, 0), (1, 1, 1))

    def test_fingerprint_tracks_mutation(self):
        f = VoxelField.constant((2, 2, 2), (0, 0, 0), (1, 1, 1))
        fp0 = f.fingerprint()
        f.density[0, 0, 0] = 5.0
        f.note_mutation()
        assert f.fingerprint() != fp0


class TestTrilinearQuery:
    def test_constant_field_interpolates_to_constant(self):
        f = VoxelField.constant((4, 4, 4), (-1, -1, -1), (1, 1, 1),
                                density=3.0, color=(0.2, 0.4, 0.6))
        dens, col = trilinear_query(f, (0.13, -0.31, 0.42))
        assert dens == pytest.approx(3.0, abs=1e-12)
        assert col == pytest.approx([0.2, 0.4, 0.6], abs=1e-12)

    def test_query_at_voxel_center_returns_stored_value(self):
        f = VoxelField.constant((4, 4, 4), (0, 0, 0), (4, 4, 4), density=0.0)
        f.density[1, 2, 3] = 7.0
        f.color[1, 2, 3] = (0.1, 0.9, 0.3)
        f.note_mutation()
        dens, col = trilinear_query(f, f.voxel_center(1, 2, 3))
        assert dens == pytest.approx(7.0, abs=1e-12)
        assert col == pytest.approx([0.1, 0.9, 0.3], abs=1e-12)

    def test_midpoint_of_adjacent_centers_averages(self):
        # densities 2 and 6 one voxel apart: the midpoint interpolates to 4
        f = VoxelField.constant((4, 4, 4), (0, 0, 0), (4, 4, 4), density=0.0)
        f.density[1, 1, 1] = 2.0
        f.density[2, 1, 1] = 6.0
        f.note_mutation()
        mid = 0.5 * (f.voxel_center(1, 1, 1) + f.voxel_center(2, 1, 1))
        assert trilinear_query(f, mid)[0] == pytest.approx(4.0, abs=1e-12)

    def test_outside_bounds_returns_zero_and_black(self):
        f = VoxelField.constant((4, 4, 4), (0, 0, 0), (1, 1, 1), density=9.0, color=(1, 1, 1))
        dens, col = trilinear_query(f, (2.0, 0.5, 0.5))
        assert dens == 0.0
        assert np.all(col == 0.0)

    def test_batched_query_matches_scalar(self):
        rng = np.random.default_rng(0)
        f = VoxelField((5, 6, 4), (-1, -1, -1), (1, 1, 1),
                       rng.random((5, 6, 4)), rng.random((5, 6, 4, 3)))
        pts = rng.uniform(-1.2, 1.2, size=(10, 3))
        dens, col = trilinear_query(f, pts)
        for i, p in enumerate(pts):
            d1, c1 = trilinear_query(f, p)
            assert dens[i] == d1
            assert np.array_equal(col[i], c1)

    def test_lipschitz_within_a_cell(self):
        # |query(p) - query(q)| <= L * |p - q| with L from adjacent-voxel diffs
        rng = np.random.default_rng(3)
        f = VoxelField((6, 6, 6), (0, 0, 0), (6, 6, 6),
                       rng.random((6, 6, 6)) * 4.0, rng.random((6, 6, 6, 3)))
        lip = sum(np.abs(np.diff(f.density, axis=a)).max() / f.voxel_size[a] for a in range(3))
        for _ in range(200):
            cell = rng.integers(0, 5, size=3)
            base = f.voxel_center(*cell)
            p = base + rng.random(3) * f.voxel_size
            q = base + rng.random(3) * f.voxel_size
            dp, _ = trilinear_query(f, p)
            dq, _ = trilinear_query(f, q)
            assert abs(dp - dq) <= lip * np.linalg.norm(p - q) + 1e-12


class TestSrtTransform:
    def test_identity_maps_point_to_itself(self):
        x = SrtTransform.identity()
        assert srt_world_to_canonical((1.0, 2.0, 3.0), x) == pytest.approx([1, 2, 3], abs=0)

    def test_uniform_scale_halves_coordinates(self):
        x = SrtTransform(2.0, np.eye(3), np.zeros(3), np.zeros(3))
        assert srt_world_to_canonical((1.0, 0.0, 0.0), x) == pytest.approx([0.5, 0, 0], abs=1e-15)

    def test_inverse_rotation_about_z(self):
        x = SrtTransform(1.0, rotation_about_axis((0, 0, 1), 90.0), np.zeros(3), np.zeros(3))
        assert srt_world_to_canonical((0.0, 1.0, 0.0), x) == pytest.approx([1, 0, 0], abs=1e-12)

    def test_round_trip_random_transforms(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = SrtTransform(rng.uniform(0.3, 3.0), random_rotation(rng),
                             rng.normal(size=3), rng.normal(size=3))
            p = rng.normal(size=3) * 2.0
            back = srt_world_to_canonical(srt_canonical_to_world(p, x), x)
            assert np.abs(back - p).max() < 1e-9

    def test_density_correction_is_reciprocal_scale(self):
        base = dict(rotation=np.eye(3), translation=np.zeros(3), centroid=np.zeros(3))
        assert srt_density_correction(SrtTransform(1.0, **base)) == 1.0
        assert srt_density_correction(SrtTransform(2.0, **base)) == 0.5
        assert srt_density_correction(SrtTransform(0.5, **base)) == 2.0

    def test_invalid_rotation_rejected(self):
        bad = np.eye(3) * 1.01
        with pytest.raises(ValueError, match="rotation"):
            SrtTransform(1.0, bad, np.zeros(3), np.zeros(3))

    def test_reflection_rejected(self):
        flip = np.diag([-1.0, 1.0, 1.0])
        with pytest.raises(ValueError, match="determinant"):
            SrtTransform(1.0, flip, np.zeros(3), np.zeros(3))

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError, match="scale"):
            SrtTransform(0.0, np.eye(3), np.zeros(3), np.zeros(3))

    def test_is_identity(self):
        assert SrtTransform.identity((1.0, 2.0, 3.0)).is_identity()
        assert not SrtTransform(2.0, np.eye(3), np.zeros(3), np.zeros(3)).is_identity()


class TestCameraAndRay:
    def test_camera_rejects_non_orthonormal_pose(self):
        m = np.eye(4)
        m[0, 1] = 0.2
        with pytest.raises(ValueError, match="orthonormal"):
            Camera(10, 10, 5, 5, 10, 10, m)

    def test_camera_rejects_bad_intrinsics(self):
        with pytest.raises(ValueError, match="focal"):
            Camera(0.0, 10, 5, 5, 10, 10, np.eye(4))

    def test_ray_direction_must_be_unit(self):
        with pytest.raises(ValueError, match="unit"):
            Ray((0, 0, 0), (0, 0, 2.0), 0.1, 1.0)

    def test_ray_range_must_be_ordered(self):
        with pytest.raises(ValueError, match="near"):
            Ray((0, 0, 0), (0, 0, 1.0), 2.0, 1.0)

    def test_ray_samples_sorted_by_depth_is_stable(self):
        s = RaySamples(np.array([2.0, 1.0, 2.0]), np.ones(3), np.arange(3.0),
                       np.zeros((3, 3)), np.array([0, 1, 1], dtype=np.uint8), 0.0, 3.0)
        out = s.sorted_by_depth()
        assert np.array_equal(out.depth, [1.0, 2.0, 2.0])
        assert np.array_equal(out.density, [1.0, 0.0, 2.0])  # ties keep original order

    def test_ray_samples_reject_nonpositive_delta(self):
        with pytest.raises(ValueError, match="delta"):
            RaySamples(np.array([1.0]), np.array([0.0]), np.array([1.0]),
                       np.zeros((1, 3)), np.zeros(1, dtype=np.uint8), 0.0, 2.0)


class TestImages:
    def test_rgba_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RgbaImage(np.full((2, 2, 3), 1.2), np.zeros((2, 2)))

    def test_mask_must_be_binary(self):
        with pytest.raises(ValueError, match="binary"):
            MaskImage(np.array([[0.0, 0.5]]))

    def test_mask_accepts_zero_one_floats(self):
        m = MaskImage(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert m.data.dtype == np.bool_
        assert m.data.sum() == 2
