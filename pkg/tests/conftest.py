from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from react_sim import load_scenario, run
from react_sim.config import build_scenario
from react_sim.world import load_map

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios" / "paper"
SEEDS = (1, 2, 3, 4, 5)


@lru_cache(maxsize=None)
def factory_run(name: str, seed: int = 1, always_on: bool = False):
    """Full mission on the bundled factory floor, cached for the session."""
    overrides = {"seed": seed, "always_on": always_on}
    return run(load_scenario(SCENARIOS / f"{name}.toml", overrides))


def text_map(rows: list[str], cell: float = 0.25) -> str:
    """Map file text from rows listed top to bottom."""
    return f"{len(rows[0]) * cell:g} {len(rows) * cell:g} {cell}\n" + "\n".join(rows) + "\n"


def room_rows(nx: int, ny: int, spawn=None) -> list[str]:
    rows = []
    for iy in range(ny - 1, -1, -1):
        row = ["#" if iy in (0, ny - 1) or ix in (0, nx - 1) else "." for ix in range(nx)]
        if spawn is not None and spawn[1] == iy:
            row[spawn[0]] = "S"
        rows.append("".join(row))
    return rows


def micro_scenario(rows: list[str], **settings):
    """Scenario on an inline map; ``settings`` use ``__`` for dotted keys."""
    text = text_map(rows)
    values = {k.replace("__", "."): v for k, v in settings.items()}
    return build_scenario(values, world=load_map(text), map_text=text)


# a 12 x 8 m room holding a shelf-screened closet in one corner
CLOSET_ROOM = [
    "#..............................#...#...........#",
    "#..............................#...#...........#",
    "#..............................#...#...........#",
    "#..............................#...#...........#",
    "#..............................#...#...........#",
    "#..............................#...#...........#",
    "#..............................................#",
    "#..............................................#",
    "#..............................#...#...........#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#.........S....................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................................#",
    "#..............................#...#...........#",
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
