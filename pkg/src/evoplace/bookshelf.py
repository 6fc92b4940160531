"""Bookshelf (.aux/.nodes/.nets/.pl/.scl) reader and writer.

Supports the ISPD2005-style subset: NumNodes/NumTerminals in .nodes,
NetDegree blocks in .nets, and .scl rows parsed only to derive the layout
region.  Comment lines start with '#'.  A .wts member, when listed, is
ignored and net weights default to 1.

Coordinate convention: .pl files store the lower-left corner of each node
(the Bookshelf convention); in memory all coordinates are cell centers.
"""

from __future__ import annotations

import math
import os
from typing import Iterable, Optional

import numpy as np

from .netlist import (
    BenchmarkCase,
    Cell,
    CellKind,
    LayoutRegion,
    Net,
    classify_kinds,
)


class BookshelfError(Exception):
    """Base class for Bookshelf I/O failures."""


class MissingFileError(BookshelfError):
    pass


class BookshelfSyntaxError(BookshelfError):
    def __init__(self, path: str, line: int, token: str, message: str = ""):
        self.path = path
        self.line = line
        self.token = token
        super().__init__(f"{path}:{line}: unexpected {token!r} {message}".rstrip())


class DanglingPinReferenceError(BookshelfError):
    def __init__(self, path: str, line: int, name: str):
        self.path = path
        self.line = line
        self.name = name
        super().__init__(f"{path}:{line}: pin references undeclared cell {name!r}")


class EmptyNetlistError(BookshelfError):
    pass


class NonFiniteCoordinateError(BookshelfError):
    pass


def _content_lines(path: str) -> Iterable[tuple[int, list[str]]]:
    """Yield (1-based line number, tokens) for non-comment, non-empty lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.replace(":", " : ").split()


def _require(path: str) -> str:
    if not os.path.isfile(path):
        raise MissingFileError(path)
    return path


def _parse_float(path, lineno, token) -> float:
    try:
        return float(token)
    except ValueError:
        raise BookshelfSyntaxError(path, lineno, token, "(expected a number)") from None


def parse_case(aux_path: str, unfix_terminals: bool = False) -> BenchmarkCase:
    """Parse a .aux file and its members into a validated BenchmarkCase.

    ``unfix_terminals`` turns fixed terminals into movable cells without
    changing their shapes (for experiments on freed-I/O variants).
    """
    _require(aux_path)
    base_dir = os.path.dirname(os.path.abspath(aux_path))
    members: dict[str, str] = {}
    with open(aux_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            payload = line.split(":", 1)[1] if ":" in line else line
            for tok in payload.split():
                ext = os.path.splitext(tok)[1].lower().lstrip(".")
                if ext:
                    members[ext] = os.path.join(base_dir, tok)
    for ext in ("nodes", "nets", "pl", "scl"):
        if ext not in members:
            raise MissingFileError(f"{aux_path}: no .{ext} member listed")
        _require(members[ext])

    names, widths, heights, fixed_flags = _parse_nodes(members["nodes"])
    if not names:
        raise EmptyNetlistError(members["nodes"])
    name_to_id = {nm: i for i, nm in enumerate(names)}
    if unfix_terminals:
        fixed_flags = [False] * len(fixed_flags)

    nets = _parse_nets(members["nets"], name_to_id, widths, heights)
    if not nets:
        raise EmptyNetlistError(members["nets"])

    pl_x, pl_y, pl_fixed = _parse_pl(members["pl"], name_to_id)
    if not unfix_terminals:
        for i, fx in enumerate(pl_fixed):
            fixed_flags[i] = fixed_flags[i] or fx
    region = _parse_scl(members["scl"])

    kinds = classify_kinds(widths, heights, fixed_flags)
    cells = [
        Cell(id=i, name=names[i], width=widths[i], height=heights[i], kind=kinds[i])
        for i in range(len(names))
    ]
    # .pl stores the lower-left corner; shift to centers.
    hint_x = np.array([pl_x[i] + widths[i] * 0.5 for i in range(len(names))])
    hint_y = np.array([pl_y[i] + heights[i] * 0.5 for i in range(len(names))])
    return BenchmarkCase(
        name=os.path.splitext(os.path.basename(aux_path))[0],
        cells=cells,
        nets=nets,
        region=region,
        hint_x=hint_x,
        hint_y=hint_y,
        source_paths={"aux": os.path.abspath(aux_path), **members},
    )


def _parse_nodes(path: str):
    names, widths, heights, fixed = [], [], [], []
    expected = None
    for lineno, toks in _content_lines(path):
        if toks[0] == "UCLA":
            continue
        if toks[0] in ("NumNodes", "NumTerminals"):
            if len(toks) < 3 or toks[1] != ":":
                raise BookshelfSyntaxError(path, lineno, " ".join(toks))
            if toks[0] == "NumNodes":
                expected = int(toks[2])
            continue
        if len(toks) < 3:
            raise BookshelfSyntaxError(path, lineno, " ".join(toks), "(expected: name width height)")
        names.append(toks[0])
        widths.append(_parse_float(path, lineno, toks[1]))
        heights.append(_parse_float(path, lineno, toks[2]))
        fixed.append(len(toks) > 3 and toks[3].lower().startswith("terminal"))
    if expected is not None and expected != len(names):
        raise BookshelfSyntaxError(path, 0, f"NumNodes={expected}", f"but {len(names)} declared")
    return names, widths, heights, fixed


def _parse_nets(path: str, name_to_id: dict[str, int], widths, heights) -> list[Net]:
    nets: list[Net] = []
    pins: list[tuple[int, float, float]] = []
    degree_left = 0
    net_name = ""
    for lineno, toks in _content_lines(path):
        if toks[0] == "UCLA" or toks[0] in ("NumNets", "NumPins"):
            continue
        if toks[0] == "NetDegree":
            if degree_left:
                raise BookshelfSyntaxError(path, lineno, "NetDegree", "(previous net incomplete)")
            if pins:
                nets.append(Net(id=len(nets), pins=tuple(pins), name=net_name))
                pins = []
            if len(toks) < 3 or toks[1] != ":":
                raise BookshelfSyntaxError(path, lineno, " ".join(toks))
            degree_left = int(toks[2])
            net_name = toks[3] if len(toks) > 3 else f"n{len(nets)}"
            continue
        if degree_left <= 0:
            raise BookshelfSyntaxError(path, lineno, toks[0], "(pin outside a NetDegree block)")
        cell_name = toks[0]
        if cell_name not in name_to_id:
            raise DanglingPinReferenceError(path, lineno, cell_name)
        cid = name_to_id[cell_name]
        ox = oy = 0.0
        if ":" in toks:
            k = toks.index(":")
            rest = toks[k + 1:]
            if len(rest) >= 2:
                ox = _parse_float(path, lineno, rest[0])
                oy = _parse_float(path, lineno, rest[1])
        # Keep offsets inside the owning cell's bounding box.
        ox = min(max(ox, -widths[cid] * 0.5), widths[cid] * 0.5)
        oy = min(max(oy, -heights[cid] * 0.5), heights[cid] * 0.5)
        pins.append((cid, ox, oy))
        degree_left -= 1
    if degree_left:
        raise BookshelfSyntaxError(path, 0, "EOF", "(net incomplete)")
    if pins:
        nets.append(Net(id=len(nets), pins=tuple(pins), name=net_name))
    return nets


def _parse_pl(path: str, name_to_id: dict[str, int]):
    n = len(name_to_id)
    xs, ys = [0.0] * n, [0.0] * n
    fixed = [False] * n
    for lineno, toks in _content_lines(path):
        if toks[0] == "UCLA":
            continue
        if toks[0] not in name_to_id:
            raise DanglingPinReferenceError(path, lineno, toks[0])
        if len(toks) < 3:
            raise BookshelfSyntaxError(path, lineno, " ".join(toks), "(expected: name x y)")
        i = name_to_id[toks[0]]
        xs[i] = _parse_float(path, lineno, toks[1])
        ys[i] = _parse_float(path, lineno, toks[2])
        fixed[i] = any(t.upper().startswith("/FIXED") for t in toks)
    return xs, ys, fixed


def _parse_scl(path: str) -> LayoutRegion:
    xmin = ymin = math.inf
    xmax = ymax = -math.inf
    coord = height = origin = sites = None
    sitewidth = 1.0
    in_row = False

    def close_row():
        nonlocal xmin, xmax, ymin, ymax
        if coord is None or height is None or origin is None or sites is None:
            raise BookshelfSyntaxError(path, 0, "End", "(row missing fields)")
        xmin = min(xmin, origin)
        xmax = max(xmax, origin + sites * sitewidth)
        ymin = min(ymin, coord)
        ymax = max(ymax, coord + height)

    for lineno, toks in _content_lines(path):
        key = toks[0].lower()
        if toks[0] == "UCLA" or key == "numrows":
            continue
        if key == "corerow":
            in_row = True
            coord = height = origin = sites = None
            sitewidth = 1.0
            continue
        if key == "end":
            if in_row:
                close_row()
            in_row = False
            continue
        if not in_row:
            continue
        # Rows pack several "Key : value" pairs per line.
        j = 0
        while j < len(toks):
            k = toks[j].lower()
            if j + 2 < len(toks) and toks[j + 1] == ":":
                val = toks[j + 2]
                if k == "coordinate":
                    coord = _parse_float(path, lineno, val)
                elif k == "height":
                    height = _parse_float(path, lineno, val)
                elif k == "sitewidth":
                    sitewidth = _parse_float(path, lineno, val)
                elif k == "subroworigin":
                    origin = _parse_float(path, lineno, val)
                elif k == "numsites":
                    sites = _parse_float(path, lineno, val)
                j += 3
            else:
                j += 1
    if not math.isfinite(xmin) or xmax <= xmin or ymax <= ymin:
        raise BookshelfSyntaxError(path, 0, "scl", "(no usable rows; cannot derive region)")
    return LayoutRegion(xmin=xmin, ymin=ymin, xmax=xmax, ymax=ymax)


def write_placement(case: BenchmarkCase, x, y, path: str) -> None:
    """Write a .pl file for cell-center coordinates ``x, y``.

    Fixed cells are emitted with the /FIXED marker.  Raises
    NonFiniteCoordinateError if any coordinate is not finite.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != case.n_cells or len(y) != case.n_cells:
        raise ValueError("placement dimension does not match cell count")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NonFiniteCoordinateError(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("UCLA pl 1.0\n")
        for c in case.cells:
            px = repr(x[c.id] - c.width * 0.5)
            py = repr(y[c.id] - c.height * 0.5)
            marker = " /FIXED" if c.kind is CellKind.FIXED else ""
            fh.write(f"{c.name}\t{px}\t{py}\t: N{marker}\n")


def write_case(case: BenchmarkCase, directory: str, basename: Optional[str] = None) -> str:
    """Write the full five-file Bookshelf set for a case; returns the .aux path."""
    basename = basename or case.name
    os.makedirs(directory, exist_ok=True)
    paths = {ext: os.path.join(directory, f"{basename}.{ext}")
             for ext in ("aux", "nodes", "nets", "pl", "scl")}

    with open(paths["aux"], "w", encoding="utf-8") as fh:
        fh.write(f"RowBasedPlacement : {basename}.nodes {basename}.nets "
                 f"{basename}.pl {basename}.scl\n")

    n_term = sum(1 for c in case.cells if c.kind is CellKind.FIXED)
    with open(paths["nodes"], "w", encoding="utf-8") as fh:
        fh.write("UCLA nodes 1.0\n")
        fh.write(f"NumNodes : {case.n_cells}\nNumTerminals : {n_term}\n")
        for c in case.cells:
            suffix = "\tterminal" if c.kind is CellKind.FIXED else ""
            fh.write(f"\t{c.name}\t{repr(c.width)}\t{repr(c.height)}{suffix}\n")

    n_pins = sum(len(net.pins) for net in case.nets)
    with open(paths["nets"], "w", encoding="utf-8") as fh:
        fh.write("UCLA nets 1.0\n")
        fh.write(f"NumNets : {case.n_nets}\nNumPins : {n_pins}\n")
        for net in case.nets:
            fh.write(f"NetDegree : {len(net.pins)}\t{net.name or f'n{net.id}'}\n")
            for cid, ox, oy in net.pins:
                fh.write(f"\t{case.cells[cid].name}\tB : {repr(ox)} {repr(oy)}\n")

    write_placement(case, case.hint_x, case.hint_y, paths["pl"])

    r = case.region
    with open(paths["scl"], "w", encoding="utf-8") as fh:
        fh.write("UCLA scl 1.0\nNumRows : 1\n")
        fh.write("CoreRow Horizontal\n")
        fh.write(f"  Coordinate : {repr(r.ymin)}\n")
        fh.write(f"  Height : {repr(r.height)}\n")
        fh.write("  Sitewidth : 1\n  Sitespacing : 1\n")
        fh.write(f"  SubrowOrigin : {repr(r.xmin)}  NumSites : {repr(r.width)}\n")
        fh.write("End\n")
    return paths["aux"]
