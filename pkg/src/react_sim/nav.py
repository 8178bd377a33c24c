"""Grid path planning and robot motion.

Moves are 8-connected with costs ``cell`` and ``cell * sqrt(2)``; a diagonal
move is allowed only when both orthogonal neighbours are passable, so paths
never clip an obstacle corner.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .energy import Battery, Depleted, PowerProfile, drain, step_energy
from .perception import OCCUPIED, OccupancyGrid, traversable

SQRT2 = math.sqrt(2.0)
_MOVES = (
    (-1, 0, False), (1, 0, False), (0, -1, False), (0, 1, False),
    (-1, -1, True), (-1, 1, True), (1, -1, True), (1, 1, True),
)


class NoPath(Exception):
    """Target unreachable on the current planning grid."""


class RobotStatus(str, Enum):
    IDLE = "Idle"
    MOVING = "Moving"
    STUCK = "Stuck"
    DEPLETED = "Depleted"


@dataclass(frozen=True)
class NavConfig:
    v_max: float = 1.0
    v_min: float = 0.1
    d_slow: float = 1.0
    robot_radius_m: float = 0.2
    stuck_timeout_s: float = 5.0

    def speed_for_clearance(self, clearance_m: float) -> float:
        if clearance_m >= self.d_slow:
            return self.v_max
        return min(self.v_max, max(self.v_min, self.v_max * clearance_m / self.d_slow))


@dataclass
class Path:
    cells: list[tuple[int, int]]
    waypoints: list[tuple[float, float]]
    length_m: float

    def __len__(self) -> int:
        return len(self.cells)


@dataclass
class RobotState:
    id: int
    pose: tuple[float, float]
    battery: Battery | Depleted
    speed_mps: float = 0.0
    sensing_on: bool = True
    current_path: list[tuple[float, float]] = field(default_factory=list)
    path_cells: list[tuple[int, int]] = field(default_factory=list)
    path_sensing: list[bool] = field(default_factory=list)
    status: RobotStatus = RobotStatus.IDLE
    blocked_s: float = 0.0

    @property
    def depleted(self) -> bool:
        return isinstance(self.battery, Depleted)

    @property
    def charge_j(self) -> float:
        return 0.0 if self.depleted else self.battery.charge_j

    @property
    def capacity_j(self) -> float:
        return self.battery.capacity_j


@dataclass
class MotionOutcome:
    state: RobotState
    moved_m: float
    energy_j: float
    blocked_by: str | None = None  # "robot", "wall" or None
    blocked_cell: tuple[int, int] | None = None


# --------------------------------------------------------------------------
# planning


def octile(a: tuple[int, int], b: tuple[int, int], cell: float) -> float:
    dy, dx = abs(a[0] - b[0]), abs(a[1] - b[1])
    return cell * (max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy))


def astar(passable: np.ndarray, start: tuple[int, int], goal: tuple[int, int], cell: float) -> list[tuple[int, int]]:
    """A* over cell indices; heap entries order by (f, h, row, col)."""
    ny, nx = passable.shape
    ok = passable.tolist()
    ok[start[0]][start[1]] = True
    if not ok[goal[0]][goal[1]]:
        raise NoPath(f"goal cell {goal} is not passable")
    diag = cell * SQRT2
    gy, gx = goal
    k = SQRT2 - 1.0

    def h(iy, ix):
        dy, dx = abs(iy - gy), abs(ix - gx)
        return cell * (dx + k * dy if dx > dy else dy + k * dx)

    g_score = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = h(*start)
    heap = [(h0, h0, start[0], start[1])]
    closed = set()
    while heap:
        _, _, iy, ix = heapq.heappop(heap)
        node = (iy, ix)
        if node in closed:
            continue
        if node == goal:
            out = [node]
            while node in parent:
                node = parent[node]
                out.append(node)
            return out[::-1]
        closed.add(node)
        g0 = g_score[node]
        for dy, dx, is_diag in _MOVES:
            y2, x2 = iy + dy, ix + dx
            if not (0 <= y2 < ny and 0 <= x2 < nx) or not ok[y2][x2]:
                continue
            if is_diag and not (ok[iy + dy][ix] and ok[iy][ix + dx]):
                continue
            nb = (y2, x2)
            if nb in closed:
                continue
            ng = g0 + (diag if is_diag else cell)
            if ng < g_score.get(nb, math.inf):
                g_score[nb] = ng
                parent[nb] = node
                hn = h(y2, x2)
                heapq.heappush(heap, (ng + hn, hn, y2, x2))
    raise NoPath(f"no path from {start} to {goal}")


def path_from_cells(cells: list[tuple[int, int]], cell: float) -> Path:
    waypoints = [((ix + 0.5) * cell, (iy + 0.5) * cell) for iy, ix in cells]
    length = 0.0
    for (y0, x0), (y1, x1) in zip(cells, cells[1:]):
        length += cell * SQRT2 if (y0 != y1 and x0 != x1) else cell
    return Path(cells, waypoints, length)


def plan_path(
    grid: OccupancyGrid,
    start,
    goal,
    robot_radius_m: float,
    allow_unknown: bool = False,
    passable: np.ndarray | None = None,
) -> Path:
    """Shortest 8-connected path between the cells containing two points."""
    if passable is None:
        passable = traversable(grid, robot_radius_m, allow_unknown)
    s = grid.cell_of(*start)
    g = grid.cell_of(*goal)
    if s == g:
        return path_from_cells([s], grid.cell_size_m)
    return path_from_cells(astar(passable, s, g, grid.cell_size_m), grid.cell_size_m)


def _move_graph(passable: np.ndarray, cell: float) -> csr_matrix:
    ny, nx = passable.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    rows, cols, w = [], [], []
    for dy, dx, is_diag in _MOVES:
        ys = slice(max(0, -dy), ny - max(0, dy))
        xs = slice(max(0, -dx), nx - max(0, dx))
        yd = slice(max(0, dy), ny - max(0, -dy))
        xd = slice(max(0, dx), nx - max(0, -dx))
        ok = passable[ys, xs] & passable[yd, xd]
        if is_diag:
            yo = yd
            ok &= passable[yo, xs] & passable[ys, xd]
        src = idx[ys, xs][ok]
        rows.append(src)
        cols.append(idx[yd, xd][ok])
        w.append(np.full(src.size, cell * SQRT2 if is_diag else cell))
    rows = np.concatenate(rows)
    return csr_matrix((np.concatenate(w), (rows, np.concatenate(cols))), shape=(ny * nx, ny * nx))


def shortest_tree(passable: np.ndarray, start: tuple[int, int], cell: float) -> tuple[np.ndarray, np.ndarray]:
    """Distances (m) and flat predecessor indices of a shortest-path tree rooted at ``start``."""
    mask = passable.copy()
    mask[start] = True
    graph = _move_graph(mask, cell)
    flat = start[0] * mask.shape[1] + start[1]
    dist, pred = dijkstra(graph, directed=True, indices=flat, return_predecessors=True)
    return dist.reshape(mask.shape), pred


def distance_field(passable: np.ndarray, start: tuple[int, int], cell: float) -> np.ndarray:
    """Shortest path length (m) from ``start`` to every cell; inf if unreachable."""
    return shortest_tree(passable, start, cell)[0]


def tree_path(pred: np.ndarray, goal: tuple[int, int], nx: int, cell: float) -> Path:
    """Walk predecessors back from ``goal`` to the tree root."""
    node = goal[0] * nx + goal[1]
    out = [node]
    while pred[node] >= 0:
        node = int(pred[node])
        out.append(node)
    return path_from_cells([divmod(n, nx) for n in reversed(out)], cell)


# --------------------------------------------------------------------------
# speed model


def clearance(grid: OccupancyGrid, pose, max_m: float) -> float:
    """Distance from a point to the nearest Occupied cell square, capped at ``max_m``."""
    c = grid.cell_size_m
    x, y = pose
    iy, ix = grid.cell_of(x, y)
    r = int(math.ceil(max_m / c)) + 1
    ny, nx = grid.shape
    y0, y1 = max(0, iy - r), min(ny, iy + r + 1)
    x0, x1 = max(0, ix - r), min(nx, ix + r + 1)
    occ_y, occ_x = np.nonzero(grid.cells[y0:y1, x0:x1] == OCCUPIED)
    if occ_y.size == 0:
        return max_m
    occ_y = occ_y + y0
    occ_x = occ_x + x0
    gap_x = np.maximum(0.0, np.maximum(occ_x * c - x, x - (occ_x + 1) * c))
    gap_y = np.maximum(0.0, np.maximum(occ_y * c - y, y - (occ_y + 1) * c))
    return float(min(max_m, np.min(np.hypot(gap_x, gap_y))))


def clearance_map(grid: OccupancyGrid) -> np.ndarray:
    """Per-cell approximate clearance (center to nearest obstacle edge)."""
    occ = grid.cells == OCCUPIED
    if not occ.any():
        return np.full(grid.shape, np.inf)
    edt = ndimage.distance_transform_edt(~occ) * grid.cell_size_m
    return np.maximum(0.0, edt - grid.cell_size_m / 2)


def estimate_traversal_s(path: Path, clearances: np.ndarray, nav: NavConfig) -> float:
    """Travel time along a path with the obstacle-proximity speed rule."""
    total = 0.0
    for (y0, x0), (y1, x1), (ax, ay), (bx, by) in zip(path.cells, path.cells[1:], path.waypoints, path.waypoints[1:]):
        seg = math.hypot(bx - ax, by - ay)
        total += seg / nav.speed_for_clearance(float(clearances[y0, x0]))
    return total


# --------------------------------------------------------------------------
# motion


def assign_path(state: RobotState, path: Path, sensing: list[bool] | None = None) -> RobotState:
    """Load a path (dropping the waypoint the robot already stands on)."""
    cells = list(path.cells)
    wps = list(path.waypoints)
    flags = list(sensing) if sensing is not None else [True] * len(cells)
    if cells and (len(cells) > 1 or _near(state.pose, wps[0])):
        cells, wps, flags = cells[1:], wps[1:], flags[1:]
    status = RobotStatus.MOVING if wps else RobotStatus.IDLE
    return replace(state, current_path=wps, path_cells=cells, path_sensing=flags, status=status, blocked_s=0.0)


def _near(a, b, eps: float = 1e-9) -> bool:
    return abs(a[0] - b[0]) <= eps and abs(a[1] - b[1]) <= eps


def step_motion(
    state: RobotState,
    grid: OccupancyGrid,
    dt_s: float,
    nav: NavConfig = NavConfig(),
    profile: PowerProfile = PowerProfile(),
    *,
    sensing_powered: bool | None = None,
    is_free=None,
    occupied_cells=frozenset(),
) -> MotionOutcome:
    """Advance one tick along ``state.current_path`` and charge the energy.

    ``is_free(iy, ix)`` is the ground-truth cross-check and
    ``occupied_cells`` the cells held by other robots this tick.
    """
    if state.depleted:
        return MotionOutcome(replace(state, speed_mps=0.0, status=RobotStatus.DEPLETED), 0.0, 0.0)
    powered = state.sensing_on if sensing_powered is None else sensing_powered
    pose = state.pose
    wps = list(state.current_path)
    cells = list(state.path_cells)
    flags = list(state.path_sensing)
    moved = 0.0
    blocked_by = None
    blocked_cell = None
    if wps:
        budget = nav.speed_for_clearance(clearance(grid, pose, nav.d_slow)) * dt_s
        here = grid.cell_of(*pose)
        while budget > 1e-12 and wps:
            target_cell = cells[0]
            if target_cell != here:
                if is_free is not None and not is_free(*target_cell):
                    blocked_by, blocked_cell = "wall", target_cell
                    break
                if target_cell in occupied_cells:
                    blocked_by, blocked_cell = "robot", target_cell
                    break
            wx, wy = wps[0]
            d = math.hypot(wx - pose[0], wy - pose[1])
            if d <= budget:
                pose = (wx, wy)
                budget -= d
                moved += d
                here = target_cell
                wps.pop(0)
                cells.pop(0)
                flags.pop(0)
            else:
                f = budget / d
                pose = (pose[0] + (wx - pose[0]) * f, pose[1] + (wy - pose[1]) * f)
                moved += budget
                budget = 0.0
                here = grid.cell_of(*pose)

    speed = moved / dt_s
    energy = step_energy(profile, speed, powered, dt_s)
    battery = drain(state.battery, energy)
    blocked_s = state.blocked_s + dt_s if (blocked_by and moved == 0.0) else 0.0
    if isinstance(battery, Depleted):
        status = RobotStatus.DEPLETED
        wps, cells, flags = [], [], []
        speed = 0.0
    elif not wps:
        status = RobotStatus.IDLE
    elif blocked_s >= nav.stuck_timeout_s - 1e-9:
        status = RobotStatus.STUCK
    else:
        status = RobotStatus.MOVING
    new = replace(
        state,
        pose=pose,
        speed_mps=speed,
        battery=battery,
        current_path=wps,
        path_cells=cells,
        path_sensing=flags,
        status=status,
        blocked_s=blocked_s,
    )
    return MotionOutcome(new, moved, energy, blocked_by, blocked_cell)
