"""Exploration knowledge: occupancy grids, merging, unknown regions.

Cell states are ordered ``UNKNOWN < FREE < OCCUPIED`` so merging is a
cell-wise maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .world import FREE_GLYPH, UNKNOWN_GLYPH, WALL_GLYPH, LidarScan, WorldMap, _fmt_number

UNKNOWN = np.int8(0)
FREE = np.int8(1)
OCCUPIED = np.int8(2)

MIN_REGION_CELLS = 4
SIZE_THRESHOLD = 40


class GridGeometryError(ValueError):
    pass


class Priority(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class Rect:
    """Half-open cell index box ``[iy0, iy1) x [ix0, ix1)``."""

    iy0: int
    iy1: int
    ix0: int
    ix1: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.iy0, self.iy1), slice(self.ix0, self.ix1)

    def contains(self, iy: int, ix: int) -> bool:
        return self.iy0 <= iy < self.iy1 and self.ix0 <= ix < self.ix1


class OccupancyGrid:
    def __init__(self, shape: tuple[int, int], cell_size_m: float, cells: np.ndarray | None = None):
        self.cell_size_m = float(cell_size_m)
        if cells is None:
            cells = np.zeros(shape, dtype=np.int8)
        else:
            cells = np.asarray(cells, dtype=np.int8)
            if cells.shape != tuple(shape):
                raise GridGeometryError(f"cells shape {cells.shape} != {shape}")
        self.cells = cells

    @classmethod
    def like(cls, world: WorldMap) -> "OccupancyGrid":
        return cls(world.shape, world.cell_size_m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def known(self) -> np.ndarray:
        return self.cells != UNKNOWN

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.shape, self.cell_size_m, self.cells.copy())

    def same_geometry(self, other: "OccupancyGrid") -> bool:
        return self.shape == other.shape and self.cell_size_m == other.cell_size_m

    def integrate(self, scan: LidarScan) -> None:
        """In-place scan integration; cells never return to Unknown."""
        flat = self.cells.reshape(-1)
        if scan.free_cells.size:
            sel = scan.free_cells
            flat[sel] = np.maximum(flat[sel], FREE)
        if scan.hit_cells.size:
            flat[scan.hit_cells] = OCCUPIED

    def mark_occupied(self, iy: int, ix: int) -> None:
        self.cells[iy, ix] = OCCUPIED

    def explored_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def cell_center(self, iy: int, ix: int) -> tuple[float, float]:
        c = self.cell_size_m
        return ((ix + 0.5) * c, (iy + 0.5) * c)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(y / self.cell_size_m)), int(math.floor(x / self.cell_size_m))

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.cells, other.cells)

    def __repr__(self):
        return f"OccupancyGrid(shape={self.shape}, cell={self.cell_size_m}, known={self.explored_count()})"


def integrate_scan(grid: OccupancyGrid, scan: LidarScan) -> OccupancyGrid:
    out = grid.copy()
    out.integrate(scan)
    return out


def merge(grids) -> OccupancyGrid:
    grids = list(grids)
    if not grids:
        raise ValueError("merge needs at least one grid")
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GridGeometryError("cannot merge grids with different raster geometry")
    cells = np.maximum.reduce([g.cells for g in grids]) if len(grids) > 1 else first.cells.copy()
    return OccupancyGrid(first.shape, first.cell_size_m, cells)


def dump_grid(grid: OccupancyGrid) -> str:
    """ASCII dump in the map-file layout, with ``?`` for Unknown cells."""
    ny, nx = grid.shape
    c = grid.cell_size_m
    lut = np.array([UNKNOWN_GLYPH, FREE_GLYPH, WALL_GLYPH])
    lines = [f"{_fmt_number(nx * c)} {_fmt_number(ny * c)} {_fmt_number(c)}"]
    for iy in range(ny - 1, -1, -1):
        lines.append("".join(lut[grid.cells[iy]]))
    return "\n".join(lines) + "\n"


def load_grid_dump(text: str) -> OccupancyGrid:
    lines = text.strip("\n").splitlines()
    w, h, c = (float(t) for t in lines[0].split())
    nx, ny = round(w / c), round(h / c)
    decode = {UNKNOWN_GLYPH: UNKNOWN, FREE_GLYPH: FREE, WALL_GLYPH: OCCUPIED}
    cells = np.zeros((ny, nx), dtype=np.int8)
    for r, row in enumerate(lines[1:]):
        cells[ny - 1 - r] = [decode[ch] for ch in row]
    return OccupancyGrid((ny, nx), c, cells)


# --------------------------------------------------------------------------
# traversability


@lru_cache(maxsize=32)
def inflation_kernel(radius_m: float, cell_size_m: float) -> np.ndarray:
    """Offsets whose cell square comes closer than ``radius_m`` to a cell center."""
    reach = int(math.ceil(radius_m / cell_size_m)) + 1
    k = np.zeros((2 * reach + 1, 2 * reach + 1), dtype=bool)
    for dy in range(-reach, reach + 1):
        for dx in range(-reach, reach + 1):
            gap_x = max(0.0, abs(dx) * cell_size_m - cell_size_m / 2)
            gap_y = max(0.0, abs(dy) * cell_size_m - cell_size_m / 2)
            k[dy + reach, dx + reach] = math.hypot(gap_x, gap_y) < radius_m
    k[reach, reach] = True
    return k


def inflate(occupied: np.ndarray, radius_m: float, cell_size_m: float) -> np.ndarray:
    if radius_m <= 0:
        return occupied.copy()
    return ndimage.binary_dilation(occupied, structure=inflation_kernel(radius_m, cell_size_m))


def traversable(grid: OccupancyGrid, robot_radius_m: float, allow_unknown: bool = False) -> np.ndarray:
    blocked = inflate(grid.cells == OCCUPIED, robot_radius_m, grid.cell_size_m)
    ok = ~blocked
    if not allow_unknown:
        ok &= grid.cells == FREE
    return ok


def reachable_from(passable: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """Cells connected to ``start`` by 8-moves that never cut a corner.

    Forbidding corner cuts makes this relation identical to 4-connectivity.
    """
    mask = passable.copy()
    mask[start] = True
    labels, _ = ndimage.label(mask)
    return labels == labels[start]


# --------------------------------------------------------------------------
# unknown regions


@dataclass
class UnknownRegion:
    cells: np.ndarray  # sorted flat indices into the full grid
    centroid: tuple[float, float]
    subarea: tuple[int, int] | None = None
    accessible: bool = False
    priority: Priority = Priority.LOW
    region_id: int = -1
    discovered_tick: int = 0
    cell_set: frozenset = field(init=False, repr=False)

    def __post_init__(self):
        self.cell_set = frozenset(int(c) for c in self.cells)

    @property
    def size_cells(self) -> int:
        return int(self.cells.size)


def find_unknown_regions(
    grid: OccupancyGrid,
    subarea: Rect,
    min_region_cells: int = MIN_REGION_CELLS,
    subarea_index: tuple[int, int] | None = None,
) -> list[UnknownRegion]:
    """Maximal 4-connected Unknown components inside ``subarea``, in scanline order."""
    sy, sx = subarea.slices
    unknown = grid.cells[sy, sx] == UNKNOWN
    labels, n = ndimage.label(unknown)
    if n == 0:
        return []
    nx = grid.shape[1]
    c = grid.cell_size_m
    regions = []
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    for lab in range(1, n + 1):
        if sizes[lab] < min_region_cells:
            continue
        ly, lx = np.nonzero(labels == lab)
        iy = ly + subarea.iy0
        ix = lx + subarea.ix0
        flat = np.sort(iy * nx + ix)
        centroid = (float(np.mean((ix + 0.5) * c)), float(np.mean((iy + 0.5) * c)))
        regions.append(UnknownRegion(flat, centroid, subarea_index))
    return regions


def region_frontier(grid: OccupancyGrid, region: UnknownRegion) -> np.ndarray:
    """Boolean mask of cells 4-adjacent to the region (excluding the region)."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask.reshape(-1)[region.cells] = True
    return ndimage.binary_dilation(mask) & ~mask


def is_sealed(grid: OccupancyGrid, region: UnknownRegion) -> bool:
    """True when no neighbour of the region is known Free, so nothing can approach it."""
    ring = region_frontier(grid, region)
    return not bool(np.any(grid.cells[ring] == FREE))


def approach_cells(grid: OccupancyGrid, region: UnknownRegion, reach: np.ndarray) -> np.ndarray:
    """Reachable cells adjacent to the region; flat indices."""
    return np.flatnonzero(region_frontier(grid, region) & reach)


def is_accessible(grid: OccupancyGrid, start, region: UnknownRegion, robot_radius_m: float) -> bool:
    passable = traversable(grid, robot_radius_m)
    reach = reachable_from(passable, grid.cell_of(*start))
    return approach_cells(grid, region, reach).size > 0


def classify_priority(region: UnknownRegion, grid: OccupancyGrid, subarea_grid, size_threshold: int = SIZE_THRESHOLD) -> Priority:
    """High for big regions or regions bordering an unexplored neighbour subarea."""
    if region.size_cells >= size_threshold:
        return Priority.HIGH
    nx = grid.shape[1]
    iy = region.cells // nx
    ix = region.cells % nx
    a, b = region.subarea if region.subarea is not None else subarea_grid.subarea_of_cell(int(iy[0]), int(ix[0]))
    rect = subarea_grid.rect(a, b)
    edges = (
        (iy == rect.iy0, (a - 1, b)),
        (iy == rect.iy1 - 1, (a + 1, b)),
        (ix == rect.ix0, (a, b - 1)),
        (ix == rect.ix1 - 1, (a, b + 1)),
    )
    rows, cols = subarea_grid.dims
    for on_edge, (na, nb) in edges:
        if 0 <= na < rows and 0 <= nb < cols and on_edge.any() and not subarea_grid.explored[na, nb]:
            return Priority.HIGH
    return Priority.LOW
