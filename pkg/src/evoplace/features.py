"""Per-cell and global placement features exposed to strategy programs.

FEATURE_VERSION guards stored candidates against silent meaning changes:
additions bump the minor part, renames/removals the major part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netlist import BenchmarkCase

FEATURE_VERSION = "1.0"


@dataclass
class FeatureTable:
    vectors: dict[str, np.ndarray]
    scalars: dict[str, float]
    n_cells: int
    version: str = FEATURE_VERSION

    def names(self) -> dict[str, str]:
        """Identifier -> 'vector' | 'scalar' map for the type checker."""
        out = {k: "vector" for k in self.vectors}
        out.update({k: "scalar" for k in self.scalars})
        return out


def extract_features(case: BenchmarkCase) -> FeatureTable:
    """Deterministic feature extraction; every entry is finite."""
    arr = case.arrays
    r = case.region
    n = case.n_cells

    # Centroid of fixed pin positions sharing a net with each cell; cells
    # with no fixed neighbor default to the region center.
    cx, cy = r.center
    fixed_cnt = np.zeros(n)
    fixed_sx = np.zeros(n)
    fixed_sy = np.zeros(n)
    pin_fixed = ~arr.movable[arr.pin_cell]
    if pin_fixed.any():
        fpx = case.hint_x[arr.pin_cell] + arr.pin_ox
        fpy = case.hint_y[arr.pin_cell] + arr.pin_oy
        for net_id in np.unique(arr.pin_net[pin_fixed]):
            lo, hi = arr.net_ptr[net_id], arr.net_ptr[net_id + 1]
            sel = slice(lo, hi)
            mask = pin_fixed[sel]
            sx = float(fpx[sel][mask].sum())
            sy = float(fpy[sel][mask].sum())
            k = int(mask.sum())
            members = arr.pin_cell[sel]
            np.add.at(fixed_cnt, members, k)
            np.add.at(fixed_sx, members, sx)
            np.add.at(fixed_sy, members, sy)
    has_fixed = fixed_cnt > 0
    fnx = np.where(has_fixed, fixed_sx / np.maximum(fixed_cnt, 1), cx)
    fny = np.where(has_fixed, fixed_sy / np.maximum(fixed_cnt, 1), cy)

    movable_areas = arr.areas[arr.movable]
    region_area = r.width * r.height
    vectors = {
        "area": arr.areas.copy(),
        "width": arr.widths.copy(),
        "height": arr.heights.copy(),
        "degree": arr.degree.copy(),
        "pin_count": arr.pin_count.copy(),
        "sum_net_weight": arr.sum_net_weight.copy(),
        "is_macro": arr.is_macro.astype(np.float64),
        "is_fixed": (~arr.movable).astype(np.float64),
        "fixed_neighbor_x": fnx,
        "fixed_neighbor_y": fny,
    }
    scalars = {
        "xmin": r.xmin, "xmax": r.xmax, "ymin": r.ymin, "ymax": r.ymax,
        "center_x": cx, "center_y": cy,
        "region_w": r.width, "region_h": r.height,
        "min_region_dim": min(r.width, r.height),
        "span": r.span,
        "total_area": float(arr.areas.sum()),
        "movable_area": float(movable_areas.sum()),
        "utilization": float(movable_areas.sum()) / region_area,
        "num_cells": float(n),
        "num_movable": float(arr.movable.sum()),
        "num_nets": float(case.n_nets),
        "median_area": float(np.median(movable_areas)),
    }
    table = FeatureTable(vectors=vectors, scalars=scalars, n_cells=n)
    for k, v in vectors.items():
        assert len(v) == n and np.isfinite(v).all(), f"feature {k} invalid"
    for k, s in scalars.items():
        assert np.isfinite(s), f"scalar feature {k} invalid"
    return table


def feature_digest(table: FeatureTable, max_lines: int = 24) -> str:
    """Compact plain-text summary of the feature table for prompt context."""
    lines = [f"feature-set version {table.version}; {table.n_cells} cells"]
    for k in sorted(table.scalars):
        lines.append(f"{k} = {table.scalars[k]:.6g}")
    for k in sorted(table.vectors):
        v = table.vectors[k]
        lines.append(f"{k}: min={v.min():.4g} mean={v.mean():.4g} max={v.max():.4g}")
    return "\n".join(lines[: max_lines + 1])
