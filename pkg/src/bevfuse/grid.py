"""Metric BEV raster geometry shared by ground truth, encoders and the decoder."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor


@dataclass(frozen=True)
class GridSpec:
    """An X-by-Y raster of square cells; axis 0 runs along ego x, axis 1 along ego y.

    ``origin`` is the metric (x, y) of the outer corner of cell (0, 0).
    """

    X: int = 40
    Y: int = 40
    cell_size: float = 1.0
    origin: tuple[float, float] | None = None
    z_range: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        if self.X <= 0 or self.Y <= 0:
            raise ValueError("grid extents must be positive")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", (-self.X * self.cell_size / 2, -self.Y * self.cell_size / 2))

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return x0, x0 + self.X * self.cell_size, y0, y0 + self.Y * self.cell_size

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Metric centers as two (X, Y) arrays."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.X) + 0.5) * self.cell_size
        ys = y0 + (np.arange(self.Y) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys, indexing="ij")

    def cell_index(self, xy: np.ndarray):
        """Map metric points (N, 2) to (i, j, inside).

        A point exactly on a shared cell boundary goes to the lower-index
        cell; the closed outer boundary belongs to the grid.
        """
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        u = (xy[:, 0] - self.origin[0]) / self.cell_size
        v = (xy[:, 1] - self.origin[1]) / self.cell_size
        inside = (u >= 0) & (u <= self.X) & (v >= 0) & (v <= self.Y)
        i = np.maximum(np.ceil(u) - 1, 0)
        j = np.maximum(np.ceil(v) - 1, 0)
        i = np.where(inside, i, 0).astype(np.int64)
        j = np.where(inside, j, 0).astype(np.int64)
        return i, j, inside

    def to_dict(self) -> dict:
        return {
            "X": self.X,
            "Y": self.Y,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "z_range": list(self.z_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(d["X"], d["Y"], d["cell_size"], tuple(d["origin"]), tuple(d.get("z_range", (-5.0, 5.0))))


@dataclass
class BEVGrid:
    """A C x X x Y feature raster bound to its metric geometry."""

    data: Tensor
    spec: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if not isinstance(self.data, Tensor):
            self.data = Tensor(self.data)
        if self.data.ndim != 3 or self.data.shape[1:] != (self.spec.X, self.spec.Y):
            raise ValueError(f"data shape {self.data.shape} does not match grid {self.spec.X}x{self.spec.Y}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def numpy(self) -> np.ndarray:
        return self.data.data
