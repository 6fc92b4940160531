"""Placement objective terms and their analytic gradients.

Wirelength is the weighted half-perimeter metric; its differentiable proxy
is the per-net two-sided log-sum-exp with a max-shift guard, which upper
bounds HPWL for every net and tightens as gamma shrinks.  Density is a
quadratic bin-overflow penalty over a uniform grid with cells rasterized by
overlap area, giving a piecewise-linear (hence a.e. differentiable) gradient
with respect to cell centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netlist import BenchmarkCase

PRECOND_FLOOR = 1e-8


def pin_positions(case: BenchmarkCase, x: np.ndarray, y: np.ndarray):
    arr = case.arrays
    return x[arr.pin_cell] + arr.pin_ox, y[arr.pin_cell] + arr.pin_oy


def hpwl(case: BenchmarkCase, x: np.ndarray, y: np.ndarray) -> float:
    """Weighted half-perimeter wirelength: sum over nets of
    weight * ((max - min pin x) + (max - min pin y))."""
    arr = case.arrays
    px, py = pin_positions(case, x, y)
    starts = arr.net_ptr[:-1]
    wx = np.maximum.reduceat(px, starts) - np.minimum.reduceat(px, starts)
    wy = np.maximum.reduceat(py, starts) - np.minimum.reduceat(py, starts)
    return float(np.dot(arr.net_weight, wx + wy))


def _lse_axis(p: np.ndarray, arr, gamma: float):
    """Per-net gamma*(logsumexp(p/gamma) + logsumexp(-p/gamma)) and the per-pin
    gradient d/dp.  Max-shifted so finite inputs never overflow."""
    starts = arr.net_ptr[:-1]
    hi = np.maximum.reduceat(p, starts)
    lo = np.minimum.reduceat(p, starts)
    e_hi = np.exp((p - hi[arr.pin_net]) / gamma)
    e_lo = np.exp((lo[arr.pin_net] - p) / gamma)
    s_hi = np.add.reduceat(e_hi, starts)
    s_lo = np.add.reduceat(e_lo, starts)
    value = float(np.dot(arr.net_weight,
                         (hi - lo) + gamma * (np.log(s_hi) + np.log(s_lo))))
    grad_pin = arr.net_weight[arr.pin_net] * (
        e_hi / s_hi[arr.pin_net] - e_lo / s_lo[arr.pin_net])
    return value, grad_pin


def smooth_wl(case: BenchmarkCase, x: np.ndarray, y: np.ndarray,
              gamma: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Two-sided log-sum-exp wirelength and its exact gradient w.r.t. cell
    centers.  Requires gamma > 0."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    arr = case.arrays
    px, py = pin_positions(case, x, y)
    vx, gpx = _lse_axis(px, arr, gamma)
    vy, gpy = _lse_axis(py, arr, gamma)
    n = case.n_cells
    grad_x = np.bincount(arr.pin_cell, weights=gpx, minlength=n)
    grad_y = np.bincount(arr.pin_cell, weights=gpy, minlength=n)
    return vx + vy, grad_x, grad_y


@dataclass
class BinGrid:
    """Uniform density grid covering the layout region."""

    nx: int
    ny: int
    xmin: float
    ymin: float
    bw: float            # bin width
    bh: float            # bin height
    bin_capacity: float  # usable area per bin

    MAX_BINS_PER_AXIS = 128

    @staticmethod
    def for_case(case: BenchmarkCase, target_density: float = 1.0,
                 nx: int | None = None, ny: int | None = None) -> "BinGrid":
        arr = case.arrays
        n_movable = int(arr.movable.sum())
        base = max(8, math.ceil(math.sqrt(max(n_movable, 1))))
        r = case.region
        # Bins must be no wider than the smallest movable cell, else a cell
        # strictly inside one bin has zero overlap derivative and spreading
        # stalls.  0.8 keeps every cell straddling at least one boundary.
        if n_movable:
            min_w = float(arr.widths[arr.movable].min())
            min_h = float(arr.heights[arr.movable].min())
            want_x = math.ceil(r.width / (0.8 * min_w))
            want_y = math.ceil(r.height / (0.8 * min_h))
        else:
            want_x = want_y = base
        cap_axis = BinGrid.MAX_BINS_PER_AXIS
        nx = nx or min(max(base, want_x), cap_axis)
        ny = ny or min(max(base, want_y), cap_axis)
        bw = r.width / nx
        bh = r.height / ny
        return BinGrid(nx=nx, ny=ny, xmin=r.xmin, ymin=r.ymin, bw=bw, bh=bh,
                       bin_capacity=bw * bh * target_density)

    def x_edges(self) -> np.ndarray:
        return self.xmin + self.bw * np.arange(self.nx + 1)

    def y_edges(self) -> np.ndarray:
        return self.ymin + self.bh * np.arange(self.ny + 1)


def _axis_overlap(lo: np.ndarray, hi: np.ndarray, idx: np.ndarray,
                  gmin: float, step: float):
    """Overlap length of [lo, hi] with bin column ``idx`` plus its derivative
    w.r.t. the interval center: +1 where the right edge falls strictly inside
    the column, -1 where the left edge does."""
    edge_lo = gmin + idx * step
    edge_hi = edge_lo + step
    ov = np.minimum(hi, edge_hi) - np.maximum(lo, edge_lo)
    np.clip(ov, 0.0, None, out=ov)
    dov = (((hi > edge_lo) & (hi < edge_hi)).astype(np.float64)
           - ((lo > edge_lo) & (lo < edge_hi)).astype(np.float64))
    return ov, dov


def _stencil(case: BenchmarkCase, x, y, grid: BinGrid):
    """Per-cell bin index ranges and the stencil extent that covers them."""
    arr = case.arrays
    hw = arr.widths * 0.5
    hh = arr.heights * 0.5
    cl, cr = x - hw, x + hw
    cb, ct = y - hh, y + hh
    ix0 = np.clip(np.floor((cl - grid.xmin) / grid.bw).astype(np.int64), 0, grid.nx - 1)
    ix1 = np.clip(np.ceil((cr - grid.xmin) / grid.bw).astype(np.int64) - 1, 0, grid.nx - 1)
    iy0 = np.clip(np.floor((cb - grid.ymin) / grid.bh).astype(np.int64), 0, grid.ny - 1)
    iy1 = np.clip(np.ceil((ct - grid.ymin) / grid.bh).astype(np.int64) - 1, 0, grid.ny - 1)
    kx = int((ix1 - ix0).max()) + 1 if len(ix0) else 1
    ky = int((iy1 - iy0).max()) + 1 if len(iy0) else 1
    return (cl, cr, cb, ct), (ix0, ix1, iy0, iy1), (kx, ky)


def bin_occupancy(case: BenchmarkCase, x: np.ndarray, y: np.ndarray,
                  grid: BinGrid) -> np.ndarray:
    """Area of cells overlapping each bin, shape (nx, ny)."""
    occ = np.zeros((grid.nx, grid.ny))
    (cl, cr, cb, ct), (ix0, ix1, iy0, iy1), (kx, ky) = _stencil(case, x, y, grid)
    for di in range(kx):
        ix = ix0 + di
        ok_x = ix <= ix1
        ox, _ = _axis_overlap(cl, cr, ix, grid.xmin, grid.bw)
        ox *= ok_x
        for dj in range(ky):
            iy = iy0 + dj
            ok_y = iy <= iy1
            oy, _ = _axis_overlap(cb, ct, iy, grid.ymin, grid.bh)
            np.add.at(occ, (np.minimum(ix, grid.nx - 1), np.minimum(iy, grid.ny - 1)),
                      ox * (oy * ok_y))
    return occ


def density_penalty(case: BenchmarkCase, x: np.ndarray, y: np.ndarray,
                    grid: BinGrid, occ: np.ndarray | None = None
                    ) -> tuple[float, np.ndarray, np.ndarray]:
    """Quadratic overflow penalty sum(max(0, occ - cap)^2 / cap) and its
    gradient w.r.t. movable cell centers (piecewise-linear overlap rule)."""
    arr = case.arrays
    if occ is None:
        occ = bin_occupancy(case, x, y, grid)
    cap = grid.bin_capacity
    over = np.maximum(0.0, occ - cap)
    value = float(np.sum(over * over) / cap)
    dval = 2.0 * over / cap  # d value / d occ_b
    grad_x = np.zeros(case.n_cells)
    grad_y = np.zeros(case.n_cells)
    (cl, cr, cb, ct), (ix0, ix1, iy0, iy1), (kx, ky) = _stencil(case, x, y, grid)
    for di in range(kx):
        ix = ix0 + di
        ok_x = ix <= ix1
        ox, dox = _axis_overlap(cl, cr, ix, grid.xmin, grid.bw)
        ox *= ok_x
        dox *= ok_x
        ixc = np.minimum(ix, grid.nx - 1)
        for dj in range(ky):
            iy = iy0 + dj
            ok_y = iy <= iy1
            oy, doy = _axis_overlap(cb, ct, iy, grid.ymin, grid.bh)
            oy *= ok_y
            doy *= ok_y
            f = dval[ixc, np.minimum(iy, grid.ny - 1)]
            grad_x += f * dox * oy
            grad_y += f * ox * doy
    grad_x[~arr.movable] = 0.0
    grad_y[~arr.movable] = 0.0
    return value, grad_x, grad_y


def overflow(case: BenchmarkCase, x: np.ndarray, y: np.ndarray,
             grid: BinGrid, occ: np.ndarray | None = None) -> float:
    """Total bin overflow area as a fraction of movable area, clamped to [0, 1]."""
    if occ is None:
        occ = bin_occupancy(case, x, y, grid)
    over = float(np.maximum(0.0, occ - grid.bin_capacity).sum())
    movable_area = case.arrays.movable_area
    if movable_area <= 0:
        return 0.0
    return min(1.0, over / movable_area)


def default_precondition(case: BenchmarkCase, lambda_density: float) -> np.ndarray:
    """Per-cell gradient scaling: incident net weight sum plus
    lambda * area, floored at a small epsilon."""
    arr = case.arrays
    diag = arr.sum_net_weight + lambda_density * arr.areas
    return np.maximum(diag, PRECOND_FLOOR)
