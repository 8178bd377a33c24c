"""Slow reference implementations used by ``selftest`` and the test suite.

Each oracle is written the obvious way (fixed-step marching, per-cell loops,
breadth-first search, Dijkstra on a dict, brute-force enumeration) and shares
no code with the fast paths it checks.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import deque

import numpy as np


def step_march(occupied: np.ndarray, cell: float, origin, angle: float, max_range_m: float, step: float | None = None):
    """Distance to the first occupied cell found by fixed-size steps along the ray.

    The default step is a hundredth of a cell; coarser steps can hop over a
    corner the ray only clips.
    """
    step = cell / 100 if step is None else step
    ox, oy = origin
    dx, dy = math.cos(angle), math.sin(angle)
    ny, nx = occupied.shape
    n = int(max_range_m / step)
    for k in range(1, n + 1):
        t = k * step
        ix, iy = int(math.floor((ox + t * dx) / cell)), int(math.floor((oy + t * dy) / cell))
        if not (0 <= ix < nx and 0 <= iy < ny) or occupied[iy, ix]:
            return t, True
    return float(max_range_m), False


def cellwise_max(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    for iy in range(a.shape[0]):
        for ix in range(a.shape[1]):
            out[iy, ix] = a[iy, ix] if a[iy, ix] >= b[iy, ix] else b[iy, ix]
    return out


def flood_regions(unknown: np.ndarray, iy0: int, iy1: int, ix0: int, ix1: int, min_cells: int) -> set[frozenset]:
    """4-connected components of ``unknown`` inside the window, as sets of (iy, ix)."""
    seen = set()
    out = set()
    for sy in range(iy0, iy1):
        for sx in range(ix0, ix1):
            if not unknown[sy, sx] or (sy, sx) in seen:
                continue
            comp = []
            todo = deque([(sy, sx)])
            seen.add((sy, sx))
            while todo:
                y, x = todo.popleft()
                comp.append((y, x))
                for y2, x2 in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                    if iy0 <= y2 < iy1 and ix0 <= x2 < ix1 and unknown[y2, x2] and (y2, x2) not in seen:
                        seen.add((y2, x2))
                        todo.append((y2, x2))
            if len(comp) >= min_cells:
                out.add(frozenset(comp))
    return out


def ucs_length(passable: np.ndarray, start, goal, cell: float) -> float:
    """Uniform-cost search over 8 moves; diagonals may not clip a blocked corner."""
    ny, nx = passable.shape
    best = {tuple(start): 0.0}
    heap = [(0.0, tuple(start))]
    while heap:
        d, (y, x) = heapq.heappop(heap)
        if (y, x) == tuple(goal):
            return d
        if d > best[(y, x)]:
            continue
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == dx == 0:
                    continue
                y2, x2 = y + dy, x + dx
                if not (0 <= y2 < ny and 0 <= x2 < nx) or not passable[y2, x2]:
                    continue
                if dy and dx and not (passable[y, x2] and passable[y2, x]):
                    continue
                nd = d + (cell * math.sqrt(2) if dy and dx else cell)
                if nd < best.get((y2, x2), math.inf):
                    best[(y2, x2)] = nd
                    heapq.heappush(heap, (nd, (y2, x2)))
    return math.inf


def best_assignment_value(robot_ids, subareas, trip, charges: dict, sigma: float, horizon_s: float) -> float:
    """Best objective over every injective robot -> subarea map of largest size.

    ``trip(rid, s)`` returns ``(time_s, energy_j)`` or None when unreachable.
    """
    best_size, best = -1, -math.inf
    choices = [None, *subareas]
    for combo in itertools.product(choices, repeat=len(robot_ids)):
        picked = [s for s in combo if s is not None]
        if len(set(picked)) != len(picked):
            continue
        if any(s is not None and trip(r, s) is None for r, s in zip(robot_ids, combo)):
            continue
        size = len(picked)
        value = 0.0
        for r, s in zip(robot_ids, combo):
            used = 0.0
            if s is not None:
                t, e = trip(r, s)
                value += 1.0 if t <= horizon_s else 0.0
                used = e
            value += sigma * (charges[r] - used)
        if size > best_size or (size == best_size and value > best):
            best_size, best = size, value
    return best


def permutation_scores(score: np.ndarray) -> list[float]:
    """Total score of every perfect matching of a square score matrix."""
    n = score.shape[0]
    return [float(sum(score[i, p[i]] for i in range(n))) for p in itertools.permutations(range(n))]


def greedy_by_enumeration(score: np.ndarray) -> dict[int, int]:
    """Repeatedly take the smallest remaining score; ties go to lower row, then column."""
    rows, cols = set(range(score.shape[0])), set(range(score.shape[1]))
    out = {}
    while rows and cols:
        r, c = min(((r, c) for r in rows for c in cols), key=lambda rc: (score[rc], rc[0], rc[1]))
        out[r] = c
        rows.discard(r)
        cols.discard(c)
    return out
