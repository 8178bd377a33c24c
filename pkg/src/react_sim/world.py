"""Ground-truth environment: ASCII maps, rasterization and LiDAR ray casting.

Grid arrays are indexed ``[iy, ix]`` with ``iy = 0`` at ``y = 0`` (the bottom
row of a map file). World coordinates are meters, x to the right, y up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FREE_GLYPH = "."
WALL_GLYPH = "#"
SPAWN_GLYPH = "S"
UNKNOWN_GLYPH = "?"


class MapError(ValueError):
    """Base class for map parsing and validation failures."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)


class MalformedHeaderError(MapError):
    pass


class RaggedRowError(MapError):
    pass


class UnknownGlyphError(MapError):
    pass


class NoSpawnError(MapError):
    pass


class RaycastError(RuntimeError):
    """Ray origin outside the map or inside an obstacle."""


@dataclass(frozen=True)
class WorldMap:
    width_m: float
    height_m: float
    cell_size_m: float
    occupied: np.ndarray  # bool, shape (ny, nx)
    spawn_points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        occ = np.array(self.occupied, dtype=bool)
        occ[0, :] = occ[-1, :] = True
        occ[:, 0] = occ[:, -1] = True
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    @property
    def nx(self) -> int:
        return self.occupied.shape[1]

    @property
    def ny(self) -> int:
        return self.occupied.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.occupied

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Return ``(iy, ix)`` of the cell containing the point."""
        return int(math.floor(y / self.cell_size_m)), int(math.floor(x / self.cell_size_m))

    def cell_center(self, iy: int, ix: int) -> tuple[float, float]:
        c = self.cell_size_m
        return ((ix + 0.5) * c, (iy + 0.5) * c)

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def is_free_point(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return False
        iy, ix = self.cell_of(x, y)
        return not self.occupied[iy, ix]


@dataclass
class LidarScan:
    """One 360 degree sweep.

    ``free_cells`` and ``hit_cells`` are flat raster indices recorded while
    casting, so the scan can be integrated without re-walking the rays.
    """

    origin: tuple[float, float]
    max_range_m: float
    angles: np.ndarray
    distances: np.ndarray
    hits: np.ndarray
    free_cells: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    hit_cells: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def rays(self) -> list[tuple[float, float, bool]]:
        return [(float(a), float(d), bool(h)) for a, d, h in zip(self.angles, self.distances, self.hits)]

    def __len__(self) -> int:
        return len(self.angles)


# --------------------------------------------------------------------------
# map file format


def _parse_number(token: str, line: int, column: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedHeaderError(f"expected a number, got {token!r}", line, column) from None
    if not math.isfinite(value) or value <= 0:
        raise MalformedHeaderError(f"header values must be positive, got {token!r}", line, column)
    return value


def _cells_along(length: float, cell: float, what: str) -> int:
    n = length / cell
    rounded = round(n)
    if rounded < 1 or abs(n - rounded) > 1e-9 * max(1.0, n):
        raise MalformedHeaderError(f"{what} {length:g} is not a positive multiple of cell size {cell:g}", 1)
    return int(rounded)


def load_map(source: str) -> WorldMap:
    """Parse ASCII map content (not a path; see :func:`read_map`)."""
    lines = source.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MalformedHeaderError("empty map source", 1)
    tokens = lines[0].split()
    if len(tokens) != 3:
        raise MalformedHeaderError(f"header must be 'W H CELL', got {lines[0]!r}", 1)
    col = 1
    values = []
    for tok in tokens:
        col = lines[0].index(tok, col - 1) + 1
        values.append(_parse_number(tok, 1, col))
    width_m, height_m, cell = values
    nx = _cells_along(width_m, cell, "width")
    ny = _cells_along(height_m, cell, "height")

    rows = lines[1:]
    if len(rows) != ny:
        raise RaggedRowError(f"expected {ny} rows after the header, found {len(rows)}", len(lines) + 1)
    occupied = np.zeros((ny, nx), dtype=bool)
    spawns_rc: list[tuple[int, int]] = []
    for r, text in enumerate(rows):
        line_no = r + 2
        text = text.rstrip("\r")
        if len(text) != nx:
            raise RaggedRowError(f"expected {nx} glyphs, found {len(text)}", line_no, min(len(text), nx) + 1)
        iy = ny - 1 - r
        for ix, ch in enumerate(text):
            if ch == WALL_GLYPH:
                occupied[iy, ix] = True
            elif ch == SPAWN_GLYPH:
                spawns_rc.append((iy, ix))
            elif ch != FREE_GLYPH:
                raise UnknownGlyphError(f"unknown glyph {ch!r}", line_no, ix + 1)

    occupied[0, :] = occupied[-1, :] = True
    occupied[:, 0] = occupied[:, -1] = True
    if occupied.all():
        raise NoSpawnError("map has no free cell", 2)
    spawns = []
    for iy, ix in spawns_rc:
        if occupied[iy, ix]:
            raise NoSpawnError("spawn point on the forced boundary ring", ny - iy + 1, ix + 1)
        spawns.append(((ix + 0.5) * cell, (iy + 0.5) * cell))
    if not spawns:
        raise NoSpawnError("map has no spawn point 'S'", 2)
    return WorldMap(width_m, height_m, cell, occupied, tuple(spawns))


def read_map(path: str | Path) -> WorldMap:
    return load_map(Path(path).read_text())


def _fmt_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def serialize_map(world: WorldMap) -> str:
    """Inverse of :func:`load_map` on the cell grid."""
    spawn_cells = {world.cell_of(x, y) for x, y in world.spawn_points}
    out = [" ".join(_fmt_number(v) for v in (world.width_m, world.height_m, world.cell_size_m))]
    for iy in range(world.ny - 1, -1, -1):
        row = []
        for ix in range(world.nx):
            if world.occupied[iy, ix]:
                row.append(WALL_GLYPH)
            elif (iy, ix) in spawn_cells:
                row.append(SPAWN_GLYPH)
            else:
                row.append(FREE_GLYPH)
        out.append("".join(row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# ray casting


def _check_origin(world: WorldMap, origin) -> None:
    x, y = origin
    if not world.in_bounds(x, y):
        raise RaycastError(f"ray origin ({x:.3f}, {y:.3f}) outside the map")
    if not world.is_free_point(x, y):
        raise RaycastError(f"ray origin ({x:.3f}, {y:.3f}) inside an occupied cell")


def raycast(world: WorldMap, origin, angle: float, max_range_m: float) -> tuple[float, bool]:
    """Walk grid-line crossings from ``origin`` until an occupied cell or range."""
    _check_origin(world, origin)
    c = world.cell_size_m
    ox, oy = origin
    dx, dy = math.cos(angle), math.sin(angle)
    # near-axis rays: avoid overflowing c / d, the crossing is at infinity anyway
    dx = 0.0 if abs(dx) < 1e-12 else dx
    dy = 0.0 if abs(dy) < 1e-12 else dy
    gx, gy = ox / c, oy / c
    ix, iy = int(math.floor(gx)), int(math.floor(gy))

    if dx > 0:
        step_x, t_max_x, t_delta_x = 1, (ix + 1 - gx) * c / dx, c / dx
    elif dx < 0:
        step_x, t_max_x, t_delta_x = -1, (gx - ix) * c / -dx, c / -dx
    else:
        step_x, t_max_x, t_delta_x = 0, math.inf, math.inf
    if dy > 0:
        step_y, t_max_y, t_delta_y = 1, (iy + 1 - gy) * c / dy, c / dy
    elif dy < 0:
        step_y, t_max_y, t_delta_y = -1, (gy - iy) * c / -dy, c / -dy
    else:
        step_y, t_max_y, t_delta_y = 0, math.inf, math.inf

    occ = world.occupied
    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_delta_y
        if t >= max_range_m:
            return float(max_range_m), False
        if occ[iy, ix]:
            return t, True


def cast_rays(world: WorldMap, origin, angles, max_range_m: float, *, collect: bool = True):
    """Vectorized counterpart of :func:`raycast` over many angles.

    Returns ``(distances, hits, free_cells, hit_cells)``; the cell arrays are
    flat indices (empty when ``collect`` is false).
    """
    _check_origin(world, origin)
    c = world.cell_size_m
    nx = world.nx
    occ_flat = world.occupied.ravel()
    angles = np.asarray(angles, dtype=float)
    n = angles.size
    ox, oy = origin
    dx, dy = np.cos(angles), np.sin(angles)
    dx[np.abs(dx) < 1e-12] = 0.0
    dy[np.abs(dy) < 1e-12] = 0.0
    gx, gy = ox / c, oy / c
    ix0, iy0 = math.floor(gx), math.floor(gy)

    with np.errstate(divide="ignore", invalid="ignore"):
        step_x = np.sign(dx).astype(np.int64)
        step_y = np.sign(dy).astype(np.int64)
        t_delta_x = np.where(dx != 0, c / np.abs(dx), np.inf)
        t_delta_y = np.where(dy != 0, c / np.abs(dy), np.inf)
        t_max_x = np.where(dx > 0, (ix0 + 1 - gx) * c / dx, np.where(dx < 0, (gx - ix0) * c / -dx, np.inf))
        t_max_y = np.where(dy > 0, (iy0 + 1 - gy) * c / dy, np.where(dy < 0, (gy - iy0) * c / -dy, np.inf))

    ix = np.full(n, ix0, dtype=np.int64)
    iy = np.full(n, iy0, dtype=np.int64)
    dist = np.full(n, float(max_range_m))
    hits = np.zeros(n, dtype=bool)
    active = np.arange(n)
    free_chunks = [np.array([iy0 * nx + ix0], dtype=np.int64)] if collect else []
    hit_chunks = []

    while active.size:
        tmx, tmy = t_max_x[active], t_max_y[active]
        take_x = tmx < tmy
        t = np.where(take_x, tmx, tmy)
        ax, ay = active[take_x], active[~take_x]
        ix[ax] += step_x[ax]
        t_max_x[ax] += t_delta_x[ax]
        iy[ay] += step_y[ay]
        t_max_y[ay] += t_delta_y[ay]

        flat = iy[active] * nx + ix[active]
        beyond = t >= max_range_m
        blocked = ~beyond & occ_flat[flat]
        stopped = beyond | blocked
        if blocked.any():
            idx = active[blocked]
            dist[idx] = t[blocked]
            hits[idx] = True
            if collect:
                hit_chunks.append(flat[blocked])
        if collect:
            free_chunks.append(flat[~stopped])
        active = active[~stopped]

    if collect:
        free_cells = np.unique(np.concatenate(free_chunks))
        hit_cells = np.unique(np.concatenate(hit_chunks)) if hit_chunks else np.empty(0, dtype=np.int64)
    else:
        free_cells = hit_cells = np.empty(0, dtype=np.int64)
    return dist, hits, free_cells, hit_cells


def scan_angles(n_rays: int) -> np.ndarray:
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    return 2.0 * np.pi * np.arange(n_rays) / n_rays


def scan(world: WorldMap, origin, n_rays: int = 360, max_range_m: float = 8.0) -> LidarScan:
    return scan_at(world, origin, scan_angles(n_rays), max_range_m)


def scan_at(world: WorldMap, origin, angles, max_range_m: float) -> LidarScan:
    angles = np.asarray(angles, dtype=float)
    dist, hits, free_cells, hit_cells = cast_rays(world, origin, angles, max_range_m)
    return LidarScan(
        origin=(float(origin[0]), float(origin[1])),
        max_range_m=float(max_range_m),
        angles=angles,
        distances=dist,
        hits=hits,
        free_cells=free_cells,
        hit_cells=hit_cells,
    )


def reachable_free(world: WorldMap) -> np.ndarray:
    """Free cells 4-connected to any spawn point."""
    from scipy import ndimage

    labels, _ = ndimage.label(world.free)
    keep = {labels[world.cell_of(x, y)] for x, y in world.spawn_points}
    keep.discard(0)
    return np.isin(labels, sorted(keep))


def observable_cells(world: WorldMap) -> np.ndarray:
    """Reachable free cells plus the obstacle cells that bound them.

    Wall interiors and sealed rooms can never be sensed and are excluded from
    coverage denominators.
    """
    from scipy import ndimage

    reach = reachable_free(world)
    touching = ndimage.binary_dilation(reach)
    return reach | (touching & world.occupied)


def sweep_anchors(world: WorldMap, subarea_size_m: float = 10.0) -> list[tuple[float, float]]:
    """Subarea centres snapped to the nearest reachable free cell.

    Subareas with no reachable free cell get no anchor.
    """
    from scipy import ndimage

    reach = reachable_free(world)
    _, (iy_near, ix_near) = ndimage.distance_transform_edt(~reach, return_indices=True)
    c = world.cell_size_m
    anchors = []
    for y0 in np.arange(0.0, world.height_m - 1e-9, subarea_size_m):
        for x0 in np.arange(0.0, world.width_m - 1e-9, subarea_size_m):
            x1, y1 = min(world.width_m, x0 + subarea_size_m), min(world.height_m, y0 + subarea_size_m)
            iy, ix = world.cell_of((x0 + x1) / 2, (y0 + y1) / 2)
            iy, ix = min(iy, world.ny - 1), min(ix, world.nx - 1)
            sy, sx = int(iy_near[iy, ix]), int(ix_near[iy, ix])
            # only count the snap if it stays in the same subarea
            if x0 <= (sx + 0.5) * c < x1 and y0 <= (sy + 0.5) * c < y1:
                anchors.append(world.cell_center(sy, sx))
    return anchors


def blind_spot_pockets(
    world: WorldMap,
    anchors=None,
    n_rays: int = 360,
    max_range_m: float = 8.0,
    min_cells: int = 4,
) -> list[np.ndarray]:
    """Reachable free components that no scan from ``anchors`` can see.

    Each pocket is returned as an array of ``(iy, ix)`` cells; components
    smaller than ``min_cells`` are treated as scan noise and dropped.
    """
    from scipy import ndimage

    if anchors is None:
        anchors = sweep_anchors(world)
    angles = scan_angles(n_rays)
    seen = np.zeros(world.ny * world.nx, dtype=bool)
    for a in anchors:
        s = scan_at(world, a, angles, max_range_m)
        seen[s.free_cells] = True
    dark = reachable_free(world) & ~seen.reshape(world.shape)
    labels, n = ndimage.label(dark)
    pockets = []
    for k in range(1, n + 1):
        cells = np.argwhere(labels == k)
        if len(cells) >= min_cells:
            pockets.append(cells)
    return pockets
