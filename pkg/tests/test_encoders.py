import numpy as np
import pytest

from bevfuse.encoders import (
    CameraBranch,
    Conv1x1Stack,
    DepthBins,
    DepthDistribution,
    LidarBranch,
    SplatGeometry,
    encode,
    lift_splat,
    pillarize,
)
from bevfuse.grid import BEVGrid, GridSpec
from bevfuse.numerics import Tensor, finite_difference_grad, relative_error
from bevfuse.world import MultiViewSet, PointCloud, SensorRig, default_rig, make_camera, make_sample


def cloud(xyz, intensity=None):
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    n = len(xyz)
    inten = np.zeros(n) if intensity is None else np.asarray(intensity, dtype=float)
    return PointCloud(xyz, inten, np.zeros(n, dtype=np.int64), np.zeros(n))


class TestPillarize:
    def test_empty(self):
        g = pillarize(PointCloud.empty(), GridSpec())
        assert g.data.shape == (5, 40, 40) and not g.numpy().any()

    def test_cell_center_point(self):
        g = pillarize(cloud([[0.5, 0.5, 1.0]], [0.3]), GridSpec()).numpy()
        assert g[0].sum() == 1 and g[0, 20, 20] == 1
        assert g[1, 20, 20] == pytest.approx(0.3)
        assert g[3, 20, 20] == 0 and g[4, 20, 20] == 0

    def test_mean_height(self):
        g = pillarize(cloud([[0.2, 0.3, 1.0], [0.7, 0.6, 3.0]]), GridSpec()).numpy()
        assert g[0, 20, 20] == 2 and g[2, 20, 20] == pytest.approx(2.0)

    def test_boundary_goes_to_lower_cell(self):
        g = pillarize(cloud([[1.0, 2.0, 0.0]]), GridSpec()).numpy()
        assert g[0, 20, 21] == 1

    def test_out_of_bounds_ignored(self):
        g = pillarize(cloud([[100.0, 0.0, 0.0], [0.0, -25.0, 0.0]]), GridSpec()).numpy()
        assert not g.any()

    def test_count_equals_in_bounds_points(self):
        pc = make_sample(0, default_rig()).points
        grid = GridSpec()
        g = pillarize(pc, grid).numpy()
        _, _, inside = grid.cell_index(pc.xyz[:, :2])
        inside &= (pc.xyz[:, 2] >= grid.z_range[0]) & (pc.xyz[:, 2] <= grid.z_range[1])
        assert g[0].sum() == inside.sum()


def single_pixel_setup(depth_weights):
    cam = make_camera(0.0, resolution=(4, 6), pitch_deg=0.0)
    grid = GridSpec()
    bins = DepthBins()
    feats = np.zeros((1, 1, 4, 6))
    feats[0, 0, 3, 2] = 1.0
    w = np.zeros((1, bins.n_bins, 4, 6))
    w[0, :, 3, 2] = depth_weights
    return cam, grid, bins, feats, w


class TestLiftSplat:
    def test_zero_features(self):
        cam = make_camera(0.0, resolution=(4, 6))
        w = np.full((1, 16, 4, 6), 1 / 16)
        out = lift_splat(Tensor(np.zeros((1, 3, 4, 6))), DepthDistribution(Tensor(w)), (cam,), GridSpec())
        assert not out.numpy().any()

    def test_one_hot_depth_single_pillar(self):
        d = np.zeros(16)
        d[4] = 1.0
        cam, grid, bins, feats, w = single_pixel_setup(d)
        out = lift_splat(Tensor(feats), DepthDistribution(Tensor(w), bins), (cam,), grid).numpy()
        assert np.count_nonzero(out) == 1
        # hand back-projection of pixel (u=2, v=3) at the bin-4 center
        K = cam.intrinsics
        depth = bins.centers[4]
        x_cam = (2.5 - K[0, 2]) / K[0, 0] * depth
        y_cam = (3.5 - K[1, 2]) / K[1, 1] * depth
        ego = cam.translation + cam.rotation @ np.array([x_cam, y_cam, depth])
        i = int(np.floor((ego[0] - grid.origin[0]) / grid.cell_size))
        j = int(np.floor((ego[1] - grid.origin[1]) / grid.cell_size))
        assert out[0, i, j] == 1.0

    def test_mass_conservation_uniform_depth(self):
        cam, grid, bins, feats, w = single_pixel_setup(np.full(16, 1 / 16))
        grid = GridSpec(X=100, Y=100, z_range=(-50.0, 50.0))
        out = lift_splat(Tensor(feats), DepthDistribution(Tensor(w), bins), (cam,), grid).numpy()
        assert out.sum() == pytest.approx(1.0, rel=1e-12)

    def test_mass_conservation_random_in_bounds(self, rng):
        rig = default_rig(resolution=(8, 12))
        grid = GridSpec(X=120, Y=120, z_range=(-50.0, 50.0))
        geo = SplatGeometry(rig.cameras, grid)
        feats = rng.uniform(size=(6, 3, 8, 12))
        w = rng.uniform(size=(6, 16, 8, 12))
        w /= w.sum(axis=1, keepdims=True) * 1.25
        out = lift_splat(Tensor(feats), DepthDistribution(Tensor(w)), geometry=geo).numpy()
        expected = (feats * w.sum(axis=1, keepdims=True)).sum(axis=(0, 2, 3))
        np.testing.assert_allclose(out.sum(axis=(1, 2)), expected, rtol=1e-6)

    def test_gradient(self, f64, rng):
        cam = make_camera(0.0, resolution=(3, 4), pitch_deg=-20.0)
        grid = GridSpec(X=8, Y=8, cell_size=2.0)
        geo = SplatGeometry((cam,), grid, DepthBins(n_bins=4, far=16.0))
        f = Tensor(rng.normal(size=(1, 2, 3, 4)), requires_grad=True)
        logits = Tensor(rng.normal(size=(1, 4, 3, 4)), requires_grad=True)
        weights = rng.normal(size=(2, 8, 8))
        from bevfuse.numerics import softmax

        def loss():
            depth = DepthDistribution(softmax(logits, axis=1), geo.bins)
            return (lift_splat(f, depth, geometry=geo).data * weights).sum()

        loss().backward()
        for x in (f, logits):
            num = finite_difference_grad(lambda _: loss(), x)
            assert relative_error(x.grad, num) <= 1e-4

    def test_depth_distribution_validates(self):
        with pytest.raises(ValueError):
            DepthDistribution(Tensor(np.ones((1, 16, 2, 2))))


class TestEncode:
    def test_identity_passthrough(self, rng):
        x = BEVGrid(Tensor(rng.normal(size=(4, 5, 5))), GridSpec(X=5, Y=5))
        out = encode(x, Conv1x1Stack.identity(4))
        np.testing.assert_array_equal(out.numpy(), x.numpy())

    def test_zero_input_gives_bias(self, rng):
        enc = Conv1x1Stack([3, 5], rng)
        out = encode(BEVGrid(Tensor(np.zeros((3, 4, 4))), GridSpec(X=4, Y=4)), enc).numpy()
        np.testing.assert_allclose(out, np.broadcast_to(enc.layers[0].bias.data[:, None, None], out.shape))

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            encode(BEVGrid(Tensor(np.zeros((2, 4, 4))), GridSpec(X=4, Y=4)), Conv1x1Stack([3, 5], rng))

    def test_output_shape(self, rng):
        out = encode(BEVGrid(Tensor(np.zeros((3, 6, 7))), GridSpec(X=6, Y=7)), Conv1x1Stack([3, 8, 9], rng))
        assert out.data.shape == (9, 6, 7)

    def test_gradient_4x4(self, f64, rng):
        enc = Conv1x1Stack([3, 6, 4], rng)
        x = Tensor(rng.normal(size=(3, 4, 4)), requires_grad=True)
        w = rng.normal(size=(4, 4, 4))

        def loss():
            return (enc(x) * w).sum()

        for t in [x] + enc.parameters():
            t.grad = None
        loss().backward()
        for t in [x] + enc.parameters():
            num = finite_difference_grad(lambda _: loss(), t)
            assert relative_error(t.grad, num) <= 1e-4


def test_branches_produce_grid(rng):
    rig = default_rig(resolution=(8, 22))
    grid = GridSpec(X=16, Y=16, cell_size=2.0)
    s = make_sample(0, rig)
    cam = CameraBranch(8, 16, 8, 12, DepthBins(), rng)
    lid = LidarBranch(16, 12, rng)
    geo = SplatGeometry(rig.cameras, grid)
    assert cam(s.views, geo).data.shape == (12, 16, 16)
    assert lid(pillarize(s.points, grid)).data.shape == (12, 16, 16)
