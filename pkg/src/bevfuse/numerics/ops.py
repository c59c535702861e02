"""Fused differentiable kernels shared by the encoders, decoder and heads."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.special import erf

from .tensor import Tensor, _sigmoid, as_tensor

LN_EPS = 1e-9


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain=None, bias=None, eps: float = LN_EPS) -> Tensor:
    """Standardize the last axis, then apply ``gain`` and ``bias`` (either may be None)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        return (
            inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True)),
        )

    out = Tensor._make(xhat, (x,), backward, "layer_norm")
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def gelu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    a = x.data
    cdf = 0.5 * (1.0 + erf(a / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    return Tensor._make((a * cdf).astype(a.dtype), (x,), lambda g: (g * (cdf + a * pdf),), "gelu")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise binary cross-entropy on logits (stable form)."""
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=logits.dtype)
    x = logits.data
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    return Tensor._make(out.astype(x.dtype), (logits,), lambda g: (g * (_sigmoid(x) - t),), "bce")


def sparse_matmul(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """``matrix @ x`` for a constant sparse ``matrix`` and a dense 2-D tensor."""
    x = as_tensor(x)
    mt = matrix.T.tocsr()
    out = np.asarray(matrix @ x.data, dtype=x.dtype)
    return Tensor._make(out, (x,), lambda g: (np.asarray(mt @ g, dtype=g.dtype),), "sparse_matmul")


def index_add(base: Tensor, rows: np.ndarray, values: Tensor) -> Tensor:
    """Return ``base`` with ``values[i]`` added into row ``rows[i]`` (repeats accumulate)."""
    base, values = as_tensor(base), as_tensor(values)
    rows = np.asarray(rows, dtype=np.int64)
    out = base.data.copy()
    np.add.at(out, rows, values.data)
    return Tensor._make(out, (base, values), lambda g: (g, g[rows]), "index_add")


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Gather rows along axis 0; the backward pass scatters with accumulation."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, rows, g)
        return (out,)

    return Tensor._make(x.data[rows], (x,), backward, "take_rows")


def take_along_last(x: Tensor, idx: np.ndarray) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(out, idx, g, axis=-1)
        return (out,)

    return Tensor._make(np.take_along_axis(x.data, idx, axis=-1), (x,), backward, "take_along")


# ---------------------------------------------------------------- sampling
def _corner_matrices(points: np.ndarray, G: int, H: int, W: int, with_derivs: bool):
    """Sparse interpolation matrices for grouped bilinear sampling.

    ``points`` has shape (G, N, 2) holding pixel (x, y). Returns ``A`` of
    shape (G*N, G*H*W) whose rows hold the four corner weights, plus the
    x- and y-derivative matrices when requested. Corners outside the grid
    are dropped (zero padding).
    """
    N = points.shape[1]
    x = points[..., 0].reshape(-1)
    y = points[..., 1].reshape(-1)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    g = np.repeat(np.arange(G, dtype=np.int64), N)
    row = np.arange(G * N, dtype=np.int64)

    corners = (
        (0, 0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)),
        (1, 0, fx * (1 - fy), (1 - fy), -fx),
        (0, 1, (1 - fx) * fy, -fy, (1 - fx)),
        (1, 1, fx * fy, fy, fx),
    )
    rows, cols, w, wx, wy = [], [], [], [], []
    for dx, dy, cw, cdx, cdy in corners:
        xc = x0 + dx
        yc = y0 + dy
        ok = (xc >= 0) & (xc <= W - 1) & (yc >= 0) & (yc <= H - 1)
        rows.append(row[ok])
        cols.append(g[ok] * (H * W) + yc[ok] * W + xc[ok])
        w.append(cw[ok])
        if with_derivs:
            wx.append(cdx[ok])
            wy.append(cdy[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (G * N, G * H * W)
    A = sp.csr_matrix((np.concatenate(w), (rows, cols)), shape=shape)
    if not with_derivs:
        return A, None, None
    Ax = sp.csr_matrix((np.concatenate(wx), (rows, cols)), shape=shape)
    Ay = sp.csr_matrix((np.concatenate(wy), (rows, cols)), shape=shape)
    return A, Ax, Ay


def grouped_bilinear_sample(values: Tensor, points: Tensor) -> Tensor:
    """Bilinear reads from ``values`` (G, C, H, W) at ``points`` (G, N, 2) -> (G, N, C).

    Points are pixel coordinates: cell (i, j) sits at x=j, y=i. Reads
    outside the grid are zero. Differentiable in both arguments.
    """
    values, points = as_tensor(values), as_tensor(points)
    if values.ndim != 4 or points.ndim != 3 or points.shape[-1] != 2 or points.shape[0] != values.shape[0]:
        raise ValueError(f"shape mismatch: values {values.shape}, points {points.shape}")
    if not np.all(np.isfinite(points.data)):
        raise ValueError("non-finite sampling coordinate")
    G, C, H, W = values.shape
    N = points.shape[1]
    table = np.ascontiguousarray(values.data.transpose(0, 2, 3, 1)).reshape(G * H * W, C)
    A, Ax, Ay = _corner_matrices(points.data.astype(np.float64), G, H, W, points.requires_grad)
    dtype = values.dtype
    out = np.asarray(A @ table, dtype=dtype).reshape(G, N, C)

    def backward(g):
        gflat = g.reshape(G * N, C)
        gv = gp = None
        if values.requires_grad:
            gt = np.asarray(A.T @ gflat, dtype=dtype).reshape(G, H, W, C)
            gv = np.ascontiguousarray(gt.transpose(0, 3, 1, 2))
        if points.requires_grad:
            dx = np.einsum("nc,nc->n", np.asarray(Ax @ table), gflat)
            dy = np.einsum("nc,nc->n", np.asarray(Ay @ table), gflat)
            gp = np.stack([dx, dy], axis=-1).reshape(G, N, 2).astype(points.dtype)
        return gv, gp

    return Tensor._make(out, (values, points), backward, "bilinear")


def bilinear_sample(grid: Tensor, points) -> Tensor:
    """Sample a (C, H, W) grid at a list of pixel (x, y) points -> (C, len(points))."""
    grid = as_tensor(grid)
    if grid.ndim != 3:
        raise ValueError(f"expected (C, H, W) grid, got {grid.shape}")
    pts = as_tensor(points, grid.dtype)
    C = grid.shape[0]
    if pts.size == 0:
        return Tensor(np.zeros((C, 0), dtype=grid.dtype))
    pts = pts.reshape(1, -1, 2)
    out = grouped_bilinear_sample(grid.reshape(1, *grid.shape), pts)
    return out.reshape(out.shape[1], C).transpose(1, 0)
