"""Netlist, layout region, and benchmark case model.

A BenchmarkCase is immutable after construction and safely shareable across
concurrent evaluators.  `CaseArrays` holds the flattened numpy views (CSR pin
lists per net, deduplicated cell/net incidence) the numeric kernels run on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np

MACRO_AREA_FACTOR = 100.0  # movable cell is a macro above this multiple of the median movable area


class CaseValidationError(ValueError):
    """A benchmark case violates a structural invariant."""


class CellKind(Enum):
    MOVABLE = "movable"
    FIXED = "fixed"
    MACRO = "macro"


@dataclass(frozen=True)
class Cell:
    id: int
    name: str
    width: float
    height: float
    kind: CellKind

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def movable(self) -> bool:
        return self.kind is not CellKind.FIXED


@dataclass(frozen=True)
class Net:
    """A net connects pins; each pin is (cell id, x offset, y offset) from the
    owning cell's center."""

    id: int
    pins: tuple[tuple[int, float, float], ...]
    weight: float = 1.0
    name: str = ""


@dataclass(frozen=True)
class LayoutRegion:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    @property
    def span(self) -> float:
        return max(self.width, self.height)


@dataclass
class BenchmarkCase:
    """One placement problem instance.

    ``hint_x``/``hint_y`` are cell-center coordinates taken from the .pl file
    (or the generator): authoritative for fixed cells, a starting hint for
    movable ones.
    """

    name: str
    cells: list[Cell]
    nets: list[Net]
    region: LayoutRegion
    hint_x: np.ndarray
    hint_y: np.ndarray
    source_paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.hint_x = np.asarray(self.hint_x, dtype=np.float64)
        self.hint_y = np.asarray(self.hint_y, dtype=np.float64)
        validate_case(self)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_nets(self) -> int:
        return len(self.nets)

    @cached_property
    def arrays(self) -> "CaseArrays":
        return CaseArrays.build(self)

    def cell_index(self, name: str) -> int:
        return self.arrays.name_to_id[name]


def validate_case(case: BenchmarkCase) -> None:
    if case.region.width <= 0 or case.region.height <= 0:
        raise CaseValidationError(f"{case.name}: degenerate layout region {case.region}")
    if not case.cells:
        raise CaseValidationError(f"{case.name}: no cells")
    names = set()
    any_movable = False
    for c in case.cells:
        if c.width <= 0 or c.height <= 0:
            raise CaseValidationError(f"cell {c.name}: nonpositive size {c.width}x{c.height}")
        if c.name in names:
            raise CaseValidationError(f"duplicate cell name {c.name}")
        names.add(c.name)
        any_movable = any_movable or c.movable
    if not any_movable:
        raise CaseValidationError(f"{case.name}: no movable cell")
    n = len(case.cells)
    for net in case.nets:
        if not net.pins:
            raise CaseValidationError(f"net {net.id}: empty pin list")
        if net.weight < 0:
            raise CaseValidationError(f"net {net.id}: negative weight")
        for cid, ox, oy in net.pins:
            if not (0 <= cid < n):
                raise CaseValidationError(f"net {net.id}: pin references cell {cid} out of range")
    if len(case.hint_x) != n or len(case.hint_y) != n:
        raise CaseValidationError("hint coordinate length mismatch")
    if not (np.isfinite(case.hint_x).all() and np.isfinite(case.hint_y).all()):
        raise CaseValidationError("non-finite hint coordinates")


def classify_kinds(widths, heights, fixed_flags, macro_factor: float = MACRO_AREA_FACTOR) -> list[CellKind]:
    """Assign Movable/Fixed/Macro kinds; a macro is a movable cell whose area
    exceeds ``macro_factor`` times the median movable area."""
    widths = np.asarray(widths, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    fixed = np.asarray(fixed_flags, dtype=bool)
    areas = widths * heights
    movable_areas = areas[~fixed]
    threshold = np.inf
    if movable_areas.size:
        threshold = macro_factor * float(np.median(movable_areas))
    kinds = []
    for i in range(len(widths)):
        if fixed[i]:
            kinds.append(CellKind.FIXED)
        elif areas[i] > threshold:
            kinds.append(CellKind.MACRO)
        else:
            kinds.append(CellKind.MOVABLE)
    return kinds


@dataclass(frozen=True)
class CaseArrays:
    """Flattened numpy views of a case, sorted so each net's pins are contiguous."""

    widths: np.ndarray
    heights: np.ndarray
    areas: np.ndarray
    movable: np.ndarray          # bool mask
    is_macro: np.ndarray         # bool mask
    pin_cell: np.ndarray         # int, grouped by net
    pin_ox: np.ndarray
    pin_oy: np.ndarray
    pin_net: np.ndarray
    net_ptr: np.ndarray          # CSR offsets, len n_nets + 1
    net_weight: np.ndarray
    inc_cell: np.ndarray         # deduplicated (net, cell) incidence
    inc_net: np.ndarray
    degree: np.ndarray           # nets touching each cell
    pin_count: np.ndarray        # pins on each cell
    sum_net_weight: np.ndarray   # sum of incident net weights per cell
    name_to_id: dict[str, int]

    @staticmethod
    def build(case: BenchmarkCase) -> "CaseArrays":
        n = case.n_cells
        widths = np.array([c.width for c in case.cells], dtype=np.float64)
        heights = np.array([c.height for c in case.cells], dtype=np.float64)
        movable = np.array([c.movable for c in case.cells], dtype=bool)
        is_macro = np.array([c.kind is CellKind.MACRO for c in case.cells], dtype=bool)

        pin_cell, pin_ox, pin_oy, pin_net = [], [], [], []
        net_ptr = [0]
        net_weight = []
        for net in case.nets:
            for cid, ox, oy in net.pins:
                pin_cell.append(cid)
                pin_ox.append(ox)
                pin_oy.append(oy)
                pin_net.append(net.id)
            net_ptr.append(len(pin_cell))
            net_weight.append(net.weight)
        pin_cell = np.array(pin_cell, dtype=np.int64)
        pin_net = np.array(pin_net, dtype=np.int64)

        if len(pin_cell):
            pairs = np.unique(np.stack([pin_net, pin_cell], axis=1), axis=0)
            inc_net, inc_cell = pairs[:, 0], pairs[:, 1]
        else:
            inc_net = inc_cell = np.zeros(0, dtype=np.int64)
        net_weight = np.array(net_weight, dtype=np.float64)
        degree = np.bincount(inc_cell, minlength=n).astype(np.float64)
        pin_count = np.bincount(pin_cell, minlength=n).astype(np.float64)
        snw = np.bincount(inc_cell, weights=net_weight[inc_net], minlength=n) if len(inc_cell) \
            else np.zeros(n)

        return CaseArrays(
            widths=widths, heights=heights, areas=widths * heights,
            movable=movable, is_macro=is_macro,
            pin_cell=pin_cell,
            pin_ox=np.array(pin_ox, dtype=np.float64),
            pin_oy=np.array(pin_oy, dtype=np.float64),
            pin_net=pin_net,
            net_ptr=np.array(net_ptr, dtype=np.int64),
            net_weight=net_weight,
            inc_cell=inc_cell, inc_net=inc_net,
            degree=degree, pin_count=pin_count, sum_net_weight=np.asarray(snw, dtype=np.float64),
            name_to_id={c.name: c.id for c in case.cells},
        )

    @property
    def movable_area(self) -> float:
        return float(self.areas[self.movable].sum())
