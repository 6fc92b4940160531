"""Seeded synthetic benchmark generator.

Two topologies:

* ``clustered_cliques`` — k cliques of equal size, each clique pairwise
  connected and anchored by 2-pin nets to a fixed pad in its own corner of
  the region.  Stacking every clique next to its pad is near optimal, so the
  case rewards initializers that exploit connectivity to fixed neighbors.
* ``uniform`` — random cells and random small nets, for parser/oracle tests.

Generation is a pure function of (spec, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .netlist import BenchmarkCase, Cell, LayoutRegion, Net, classify_kinds
from .seeding import rng_for, canonical_json


class InvalidSpecError(ValueError):
    pass


# Hints and random placements are snapped to this grid so that the
# center <-> lower-left corner conversion done by the .pl writer round-trips
# bit-exactly.
COORD_GRID = 1.0 / 256.0


def snap(values):
    return np.round(np.asarray(values, dtype=np.float64) / COORD_GRID) * COORD_GRID


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "clustered_cliques"
    n_cliques: int = 2
    clique_size: int = 10
    n_cells: int = 100          # uniform topology only
    n_nets: int = 150           # uniform topology only
    max_net_degree: int = 4     # uniform topology only
    cell_size: float = 1.0
    utilization: float = 0.25
    intra_weight: float = 1.0
    anchor_weight: float = 1.0
    n_macros: int = 0
    macro_size: float = 16.0
    random_pin_offsets: bool = False

    def cache_key(self) -> str:
        return canonical_json(asdict(self))


def synthetic_manifest(spec: SyntheticSpec) -> dict:
    """Expected structural counts, derived from the spec arithmetic alone."""
    if spec.kind == "clustered_cliques":
        k, s = spec.n_cliques, spec.clique_size
        n_movable = k * s + spec.n_macros
        n_nets = k * (s * (s - 1) // 2) + k * s
        n_pins = k * (s * (s - 1)) + 2 * k * s
        return {"n_cells": n_movable + k, "n_fixed": k, "n_nets": n_nets, "n_pins": n_pins}
    if spec.kind == "uniform":
        return {"n_cells": spec.n_cells, "n_fixed": 0, "n_nets": spec.n_nets, "n_pins": None}
    raise InvalidSpecError(f"unknown topology {spec.kind!r}")


def generate_synthetic(spec: SyntheticSpec, seed: int) -> BenchmarkCase:
    if spec.kind == "clustered_cliques":
        return _gen_cliques(spec, seed)
    if spec.kind == "uniform":
        return _gen_uniform(spec, seed)
    raise InvalidSpecError(f"unknown topology {spec.kind!r}")


def _region_for(movable_area: float, utilization: float) -> LayoutRegion:
    if not (0 < utilization <= 1):
        raise InvalidSpecError(f"utilization {utilization} outside (0, 1]")
    side = float(math.ceil(math.sqrt(movable_area / utilization)))
    return LayoutRegion(0.0, 0.0, side, side)


def _corner_positions(region: LayoutRegion, pad: float, k: int) -> list[tuple[float, float]]:
    inset = pad * 0.5
    corners = [
        (region.xmin + inset, region.ymin + inset),
        (region.xmax - inset, region.ymax - inset),
        (region.xmin + inset, region.ymax - inset),
        (region.xmax - inset, region.ymin + inset),
    ]
    if k > 4:
        raise InvalidSpecError("clustered_cliques supports at most 4 cliques")
    return corners[:k]


def _gen_cliques(spec: SyntheticSpec, seed: int) -> BenchmarkCase:
    k, s = spec.n_cliques, spec.clique_size
    if k < 1 or s < 2:
        raise InvalidSpecError("need at least one clique of two cells")
    rng = rng_for(seed, "synthetic", spec.cache_key())

    size = float(spec.cell_size)
    pad = 2.0 * size
    n_movable = k * s + spec.n_macros
    movable_area = k * s * size * size + spec.n_macros * spec.macro_size ** 2
    region = _region_for(movable_area, spec.utilization)
    pads = _corner_positions(region, pad, k)

    cells: list[Cell] = []
    widths, heights, fixed = [], [], []
    hint_x, hint_y = [], []
    names = []

    for ci in range(k):
        for j in range(s):
            names.append(f"c{ci}_{j}")
            widths.append(size)
            heights.append(size)
            fixed.append(False)
    for m in range(spec.n_macros):
        names.append(f"m{m}")
        widths.append(spec.macro_size)
        heights.append(spec.macro_size)
        fixed.append(False)
    pad_base = len(names)
    for ci in range(k):
        names.append(f"pad{ci}")
        widths.append(pad)
        heights.append(pad)
        fixed.append(True)

    hx = snap(rng.uniform(region.xmin + size, region.xmax - size, size=n_movable))
    hy = snap(rng.uniform(region.ymin + size, region.ymax - size, size=n_movable))
    hint_x.extend(hx.tolist())
    hint_y.extend(hy.tolist())
    for ci in range(k):
        hint_x.append(pads[ci][0])
        hint_y.append(pads[ci][1])

    kinds = classify_kinds(widths, heights, fixed)
    for i, nm in enumerate(names):
        cells.append(Cell(id=i, name=nm, width=widths[i], height=heights[i], kind=kinds[i]))

    nets: list[Net] = []
    for ci in range(k):
        base = ci * s
        for a in range(s):
            for b in range(a + 1, s):
                nets.append(Net(id=len(nets), weight=spec.intra_weight,
                                pins=((base + a, 0.0, 0.0), (base + b, 0.0, 0.0)),
                                name=f"q{ci}_{a}_{b}"))
        for a in range(s):
            nets.append(Net(id=len(nets), weight=spec.anchor_weight,
                            pins=((base + a, 0.0, 0.0), (pad_base + ci, 0.0, 0.0)),
                            name=f"a{ci}_{a}"))

    return BenchmarkCase(
        name=f"cliques{k}x{s}_u{spec.utilization:g}_s{seed}",
        cells=cells, nets=nets, region=region,
        hint_x=np.array(hint_x), hint_y=np.array(hint_y),
    )


def _gen_uniform(spec: SyntheticSpec, seed: int) -> BenchmarkCase:
    n = spec.n_cells
    if n < 2:
        raise InvalidSpecError("need at least 2 cells")
    rng = rng_for(seed, "synthetic", spec.cache_key())
    size = float(spec.cell_size)
    region = _region_for(n * size * size, spec.utilization)

    cells = [Cell(id=i, name=f"c{i}", width=size, height=size, kind=k)
             for i, k in enumerate(classify_kinds([size] * n, [size] * n, [False] * n))]
    hint_x = snap(rng.uniform(region.xmin + size, region.xmax - size, size=n))
    hint_y = snap(rng.uniform(region.ymin + size, region.ymax - size, size=n))

    nets = []
    for ni in range(spec.n_nets):
        deg = int(rng.integers(2, spec.max_net_degree + 1))
        members = rng.choice(n, size=deg, replace=False)
        pins = []
        for cid in members:
            if spec.random_pin_offsets:
                ox = float(rng.uniform(-0.5, 0.5) * size)
                oy = float(rng.uniform(-0.5, 0.5) * size)
            else:
                ox = oy = 0.0
            pins.append((int(cid), ox, oy))
        nets.append(Net(id=ni, pins=tuple(pins), name=f"n{ni}"))

    return BenchmarkCase(
        name=f"uniform{n}_s{seed}",
        cells=cells, nets=nets, region=region, hint_x=hint_x, hint_y=hint_y,
    )


def stacked_corner_placement(case: BenchmarkCase) -> tuple[np.ndarray, np.ndarray]:
    """Reference placement for clustered-clique cases: tile each clique's
    cells in a tight square grid next to its pad (clairvoyant baseline)."""
    arr = case.arrays
    x = case.hint_x.copy()
    y = case.hint_y.copy()
    groups: dict[str, list[int]] = {}
    for c in case.cells:
        if c.movable and c.name.startswith("c"):
            groups.setdefault(c.name.split("_")[0][1:], []).append(c.id)
    for gi, members in sorted(groups.items()):
        pad_id = case.cell_index(f"pad{gi}")
        px, py = case.hint_x[pad_id], case.hint_y[pad_id]
        side = math.ceil(math.sqrt(len(members)))
        step = float(arr.widths[members[0]])
        # Tile toward the region interior from the pad.
        sx = 1.0 if px < case.region.center[0] else -1.0
        sy = 1.0 if py < case.region.center[1] else -1.0
        for idx, cid in enumerate(members):
            gx, gy = idx % side, idx // side
            x[cid] = px + sx * (1.0 + gx) * step
            y[cid] = py + sy * (1.0 + gy) * step
    return x, y
