import numpy as np
import pytest

from bevfuse.corruptions import (
    CorruptionSpec,
    apply_corruption,
    beam_reduction,
    drop_modality,
    limited_field,
    make_mask_bank,
    missing_objects,
    object_membership,
    obstacle_occlusion,
    view_drop,
    view_noise,
)
from bevfuse.world import Box, MultiViewSet, PointCloud, Scene, SceneSpec, default_rig, generate_scene, make_sample


@pytest.fixture(scope="module")
def rig():
    return default_rig(resolution=(16, 44))


@pytest.fixture(scope="module")
def sample(rig):
    return make_sample(3, rig, SceneSpec(box_count=(4, 6)))


def cloud_with_azimuths(az):
    az = np.asarray(az, dtype=float)
    n = len(az)
    return PointCloud(np.zeros((n, 3)), np.zeros(n), np.zeros(n, dtype=np.int64), az)


class TestLimitedField:
    def test_360_identity(self, sample):
        assert limited_field(sample.points, 360).equals(sample.points)

    def test_180_keeps_half(self):
        pc = cloud_with_azimuths(-180 + np.arange(360))
        assert len(limited_field(pc, 180)) == 180

    def test_boundary(self):
        pc = cloud_with_azimuths([59.9, 60.1, -60.0, 60.0])
        kept = limited_field(pc, 120).azimuth
        np.testing.assert_array_equal(kept, [59.9, -60.0])

    def test_invalid(self, sample):
        with pytest.raises(ValueError):
            limited_field(sample.points, 90)

    def test_order_preserved(self, sample):
        kept = limited_field(sample.points, 120)
        idx = np.nonzero((sample.points.azimuth >= -60) & (sample.points.azimuth < 60))[0]
        np.testing.assert_array_equal(kept.xyz, sample.points.xyz[idx])


class TestMissingObjects:
    def test_rate_zero_identity(self, sample):
        assert missing_objects(sample.points, sample.scene.boxes, 0.0, 1).equals(sample.points)

    def test_rate_one_removes_all_in_box(self, sample):
        owner = object_membership(sample.points, sample.scene.boxes)
        assert (owner >= 0).sum() > 0
        out = missing_objects(sample.points, sample.scene.boxes, 1.0, 1)
        assert len(out) == (owner < 0).sum()
        assert (object_membership(out, sample.scene.boxes) < 0).all()

    def test_removal_frequency(self):
        box = Box((10.0, 0.0), (2.0, 4.0), 0.0, 0)
        pc = PointCloud(np.array([[10.0, 0.0, 0.5]]), np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1))
        removed = sum(len(missing_objects(pc, [box], 0.5, seed)) == 0 for seed in range(1000))
        assert abs(removed / 1000 - 0.5) <= 0.05

    def test_invalid_rate(self, sample):
        with pytest.raises(ValueError):
            missing_objects(sample.points, sample.scene.boxes, 0.2, 0)


class TestBeamReduction:
    def test_32_identity(self, sample):
        assert beam_reduction(sample.points, 32).equals(sample.points)

    def test_1_beam(self, sample):
        assert set(beam_reduction(sample.points, 1).beam_id.tolist()) == {0}

    def test_16_even(self, sample):
        assert set(beam_reduction(sample.points, 16).beam_id.tolist()) == set(range(0, 32, 2)) & set(
            sample.points.beam_id.tolist()
        )

    def test_invalid(self, sample):
        with pytest.raises(ValueError):
            beam_reduction(sample.points, 3)


class TestViews:
    def test_drop_zero_identity(self, sample):
        out, _ = view_drop(sample.views, 0, 5)
        assert out.features.tobytes() == sample.views.features.tobytes()

    def test_drop_all(self, sample):
        out, picked = view_drop(sample.views, 6, 5)
        assert not out.features.any() and len(picked) == 6

    def test_drop_seeded(self, sample):
        _, a = view_drop(sample.views, 3, 11)
        _, b = view_drop(sample.views, 3, 11)
        np.testing.assert_array_equal(a, b)
        assert len(set(a.tolist())) == 3

    def test_drop_keeps_calibration(self, sample):
        out, _ = view_drop(sample.views, 2, 0)
        assert out.cameras is sample.views.cameras

    def test_drop_too_many(self, sample):
        with pytest.raises(ValueError):
            view_drop(sample.views, 7, 0)

    def test_noise_zero_identity(self, sample):
        out, _ = view_noise(sample.views, 0, 5)
        assert out.features.tobytes() == sample.views.features.tobytes()

    def test_noise_all_views_change(self, sample):
        out, _ = view_noise(sample.views, 6, 5)
        for v in range(6):
            assert np.max(np.abs(out.features[v] - sample.views.features[v])) > 0

    def test_noise_seeded(self, sample):
        a, _ = view_noise(sample.views, 4, 9)
        b, _ = view_noise(sample.views, 4, 9)
        assert a.features.tobytes() == b.features.tobytes()

    def test_occlusion_alpha_zero(self, sample):
        out, _ = obstacle_occlusion(sample.views, make_mask_bank(16, 44), 0.0, 1)
        assert out.features.tobytes() == sample.views.features.tobytes()

    def test_occlusion_full_mask(self, sample):
        bank = np.ones((1, 16, 44))
        out, _ = obstacle_occlusion(sample.views, bank, 1.0, 1, occluder_value=0.25)
        assert np.all(out.features == 0.25)

    def test_occlusion_half_blend(self):
        views = MultiViewSet(np.ones((2, 3, 4, 5)))
        out, _ = obstacle_occlusion(views, np.ones((1, 4, 5)), 0.5, 0, occluder_value=0.0)
        np.testing.assert_allclose(out.features, 0.5)

    def test_occlusion_validates(self, sample):
        with pytest.raises(ValueError):
            obstacle_occlusion(sample.views, np.zeros((0, 16, 44)), 0.5, 0)
        with pytest.raises(ValueError):
            obstacle_occlusion(sample.views, make_mask_bank(16, 44), 1.5, 0)


class TestDropModality:
    def test_drop_camera(self, sample):
        out = drop_modality(sample, "camera")
        assert out.modalities == ("lidar",)
        assert out.points.equals(sample.points)

    def test_drop_both_errors(self, sample):
        with pytest.raises(ValueError):
            drop_modality(drop_modality(sample, "lidar"), "camera")


class TestSpec:
    def test_short_names_and_coercion(self):
        s = CorruptionSpec("BR", "16", 3)
        assert s.kind == "BeamReduction" and s.degree == 16

    def test_invalid_degree(self):
        with pytest.raises(ValueError):
            CorruptionSpec("LF", 90)

    def test_identity_flags(self):
        assert CorruptionSpec("LF", 360).is_identity
        assert not CorruptionSpec("LF", 120).is_identity

    def test_manifest(self, sample):
        out, rec = apply_corruption(sample, CorruptionSpec("VD", 2, 4))
        assert rec["kind"] == "ViewDrop" and len(rec["views"]) == 2
        assert rec["retained_points"] == len(sample.points)
