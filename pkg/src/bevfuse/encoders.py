"""Camera and LiDAR paths into the shared BEV raster.

Cameras: per-pixel features and depth distributions are lifted along their
rays and splatted into pillars. LiDAR: points are scattered into pillar
statistics. Both then pass through small learned 1x1 stacks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import BEVGrid, GridSpec
from .numerics import Linear, Module, Tensor, as_tensor, gelu, softmax, sparse_matmul
from .world import Camera, MultiViewSet, PointCloud

PILLAR_CHANNELS = ("count", "intensity", "height", "offset_x", "offset_y")


@dataclass(frozen=True)
class DepthBins:
    near: float = 1.0
    far: float = 40.0
    n_bins: int = 16

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.near, self.far, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return (e[:-1] + e[1:]) / 2


@dataclass
class DepthDistribution:
    """Per-pixel categorical weights over depth bins, shape (V, D, H, W)."""

    weights: Tensor
    bins: DepthBins = DepthBins()

    def __post_init__(self):
        w = as_tensor(self.weights)
        self.weights = w
        if w.shape[1] != self.bins.n_bins:
            raise ValueError(f"expected {self.bins.n_bins} depth bins, got {w.shape[1]}")
        if np.any(w.data < 0) or np.any(w.data.sum(axis=1) > 1 + 1e-6):
            raise ValueError("depth weights must be nonnegative with per-pixel mass <= 1")


class SplatGeometry:
    """Fixed scatter from (view, pixel, depth bin) to BEV cells.

    ``matrix`` has shape (X*Y, V*H*W*D); row order of the source index is
    view-major, then pixel (row-major), then depth bin.
    """

    def __init__(self, cameras: tuple[Camera, ...], grid: GridSpec, bins: DepthBins = DepthBins()):
        if not cameras:
            raise ValueError("need at least one camera")
        res = {c.resolution for c in cameras}
        if len(res) != 1:
            raise ValueError("all cameras must share one resolution")
        self.resolution = res.pop()
        self.n_views = len(cameras)
        self.grid = grid
        self.bins = bins
        H, W = self.resolution
        D = bins.n_bins
        depths = bins.centers
        rows, cols = [], []
        base = 0
        for cam in cameras:
            rays = cam.pixel_rays()  # (HW, 3)
            pts = cam.translation + rays[:, None, :] * depths[None, :, None]  # (HW, D, 3)
            flat = pts.reshape(-1, 3)
            i, j, inside = grid.cell_index(flat[:, :2])
            inside &= (flat[:, 2] >= grid.z_range[0]) & (flat[:, 2] <= grid.z_range[1])
            src = base + np.nonzero(inside)[0]
            rows.append(i[inside] * grid.Y + j[inside])
            cols.append(src)
            base += H * W * D
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.matrix = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(grid.X * grid.Y, self.n_views * H * W * D)
        )
        self.density = np.asarray(self.matrix.sum(axis=1)).reshape(grid.X, grid.Y) / D


def lift_splat(
    views: MultiViewSet | Tensor,
    depth: DepthDistribution,
    cameras: tuple[Camera, ...] | None = None,
    grid: GridSpec | None = None,
    geometry: SplatGeometry | None = None,
) -> BEVGrid:
    """Spread each pixel feature along its ray by depth weight and sum into BEV pillars.

    ``views`` holds (V, C, H, W) features. Pass either ``geometry`` or
    ``cameras`` and ``grid``.
    """
    feats = as_tensor(views.features if isinstance(views, MultiViewSet) else views)
    if geometry is None:
        if cameras is None and isinstance(views, MultiViewSet):
            cameras = views.cameras
        if cameras is None or grid is None:
            raise ValueError("lift_splat needs a SplatGeometry or cameras plus a grid")
        geometry = SplatGeometry(tuple(cameras), grid, depth.bins)
    V, C, H, W = feats.shape
    if (V, H, W) != (geometry.n_views, *geometry.resolution):
        raise ValueError(f"views {feats.shape} do not match splat geometry")
    D = depth.bins.n_bins
    # (V, HW, 1, C) * (V, HW, D, 1) -> rows ordered (view, pixel, bin)
    f = feats.reshape(V, C, H * W).transpose(0, 2, 1).reshape(V, H * W, 1, C)
    w = depth.weights.reshape(V, D, H * W).transpose(0, 2, 1).reshape(V, H * W, D, 1)
    lifted = (f * w).reshape(V * H * W * D, C)
    g = geometry.grid
    bev = sparse_matmul(geometry.matrix, lifted)  # (XY, C)
    return BEVGrid(bev.transpose(1, 0).reshape(C, g.X, g.Y), g)


def pillarize(points: PointCloud, grid: GridSpec) -> BEVGrid:
    """Scatter points into per-cell count, mean intensity, mean height and mean in-cell offset."""
    out = np.zeros((len(PILLAR_CHANNELS), grid.X * grid.Y))
    if len(points):
        xyz = points.xyz
        i, j, inside = grid.cell_index(xyz[:, :2])
        inside &= (xyz[:, 2] >= grid.z_range[0]) & (xyz[:, 2] <= grid.z_range[1])
        idx = (i * grid.Y + j)[inside]
        n = grid.X * grid.Y
        count = np.bincount(idx, minlength=n).astype(np.float64)
        cx, cy = grid.cell_centers()
        offx = (xyz[inside, 0] - cx.reshape(-1)[idx]) / grid.cell_size
        offy = (xyz[inside, 1] - cy.reshape(-1)[idx]) / grid.cell_size
        safe = np.maximum(count, 1.0)
        out[0] = count
        for k, vals in enumerate((points.intensity[inside], xyz[inside, 2], offx, offy), start=1):
            out[k] = np.bincount(idx, weights=vals, minlength=n) / safe
    return BEVGrid(Tensor(out.reshape(-1, grid.X, grid.Y)), grid)


class Conv1x1Stack(Module):
    """Per-cell MLP over channels (a stack of 1x1 convolutions) with GELU between stages."""

    def __init__(self, channels: list[int], rng: np.random.Generator):
        if len(channels) < 2:
            raise ValueError("need input and output channel counts")
        self.layers = [Linear(a, b, rng) for a, b in zip(channels[:-1], channels[1:])]

    @classmethod
    def identity(cls, channels: int) -> "Conv1x1Stack":
        stack = cls.__new__(cls)
        layer = Linear(channels, channels, np.random.default_rng(0), zero_init=True)
        layer.weight.data = np.eye(channels, dtype=layer.weight.dtype)
        stack.layers = [layer]
        return stack

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_features

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_features

    def apply_cells(self, x: Tensor) -> Tensor:
        """Apply to (N, C_in) rows."""
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = gelu(x)
        return x

    def __call__(self, x: Tensor) -> Tensor:
        C, X, Y = x.shape
        rows = x.reshape(C, X * Y).transpose(1, 0)
        return self.apply_cells(rows).transpose(1, 0).reshape(self.out_channels, X, Y)


def encode(grid: BEVGrid, encoder: Conv1x1Stack) -> BEVGrid:
    if grid.channels != encoder.in_channels:
        raise ValueError(f"encoder expects {encoder.in_channels} channels, grid has {grid.channels}")
    return BEVGrid(encoder(grid.data), grid.spec)


class CameraPixelEncoder(Module):
    """Per-pixel features plus a softmax depth head, shared across views."""

    def __init__(self, in_channels: int, hidden: int, out_channels: int, bins: DepthBins, rng: np.random.Generator):
        self.bins = bins
        self.out_channels = out_channels
        self.mlp = Conv1x1Stack([in_channels, hidden, out_channels + bins.n_bins], rng)

    def __call__(self, views: Tensor) -> tuple[Tensor, DepthDistribution]:
        V, C, H, W = views.shape
        rows = views.transpose(0, 2, 3, 1).reshape(V * H * W, C)
        out = self.mlp.apply_cells(rows)
        feats = out[:, : self.out_channels]
        depth = softmax(out[:, self.out_channels :], axis=-1)
        feats = feats.reshape(V, H, W, self.out_channels).transpose(0, 3, 1, 2)
        depth = depth.reshape(V, H, W, self.bins.n_bins).transpose(0, 3, 1, 2)
        return feats, DepthDistribution(depth, self.bins)


class LidarBranch(Module):
    """Pillar statistics -> log-count transform -> learned 1x1 stack."""

    def __init__(self, hidden: int, out_channels: int, rng: np.random.Generator):
        self.encoder = Conv1x1Stack([len(PILLAR_CHANNELS), hidden, out_channels], rng)

    def __call__(self, pillars: BEVGrid) -> BEVGrid:
        raw = pillars.data.data.copy()
        raw[0] = np.log1p(raw[0])
        return encode(BEVGrid(Tensor(raw, dtype=self.encoder.layers[0].weight.dtype.type), pillars.spec), self.encoder)


class CameraBranch(Module):
    """Pixel encoder -> lift-splat -> frustum-density normalization -> 1x1 stack."""

    def __init__(self, in_channels: int, hidden: int, lift_channels: int, out_channels: int,
                 bins: DepthBins, rng: np.random.Generator):
        self.pixel = CameraPixelEncoder(in_channels, hidden, lift_channels, bins, rng)
        self.bev = Conv1x1Stack([lift_channels, hidden, out_channels], rng)

    def __call__(self, views: MultiViewSet, geometry: SplatGeometry) -> BEVGrid:
        x = Tensor(views.features, dtype=self.bev.layers[0].weight.dtype.type)
        feats, depth = self.pixel(x)
        splat = lift_splat(feats, depth, geometry=geometry)
        scale = Tensor(1.0 / (geometry.density + 1.0), dtype=x.dtype.type)
        return encode(BEVGrid(splat.data * scale, splat.spec), self.bev)


__all__ = [
    "BEVGrid",
    "CameraBranch",
    "CameraPixelEncoder",
    "Conv1x1Stack",
    "DepthBins",
    "DepthDistribution",
    "GridSpec",
    "LidarBranch",
    "PILLAR_CHANNELS",
    "SplatGeometry",
    "encode",
    "lift_splat",
    "pillarize",
]
