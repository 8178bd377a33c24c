"""Author the bundled factory floor (50 m x 20 m, 0.25 m cells).

Coordinates are cell indices with y growing upward. Robots start in a bay
at the top middle. A hall opens to the west, a long corridor runs along the
south side and two halls lead east past a sealed machine block. Four side
rooms sit behind shield walls so their insides only open up from a short
vestibule. Two small closets hide behind shelves; they stay dark during a
normal sweep and are the pockets left for deferred inspection.

Usage: python3 scripts/make_factory_map.py [OUT]
"""
import sys
from pathlib import Path

import numpy as np

NX, NY, CELL = 200, 80, 0.25


class Canvas:
    def __init__(self):
        self.occ = np.zeros((NY, NX), dtype=bool)
        self.occ[0, :] = self.occ[-1, :] = True
        self.occ[:, 0] = self.occ[:, -1] = True
        self.spawns = []

    def box(self, x0, y0, x1, y1, value=True):
        """Fill cells x0..x1-1, y0..y1-1."""
        self.occ[y0:y1, x0:x1] = value

    def hwall(self, y, x0, x1, gaps=()):
        self.box(x0, y, x1, y + 1)
        for g0, g1 in gaps:
            self.box(g0, y, g1, y + 1, False)

    def vwall(self, x, y0, y1, gaps=()):
        self.box(x, y0, x + 1, y1)
        for g0, g1 in gaps:
            self.box(x, g0, x + 1, g1, False)

    def room(self, x0, y0, x1, y1, side, d0, d1, shield=0):
        """Walled room with outer corners (x0, y0)-(x1, y1) and one door.

        ``shield`` > 0 adds a wall parallel to the door side that many free
        cells away, covering the door plus two cells either side.
        """
        self.hwall(y0, x0, x1)
        self.hwall(y1 - 1, x0, x1)
        self.vwall(x0, y0, y1)
        self.vwall(x1 - 1, y0, y1)
        if side in "SN":
            y = y0 if side == "S" else y1 - 1
            self.box(d0, y, d1, y + 1, False)
            if shield:
                sy = y - shield - 1 if side == "S" else y + shield + 1
                self.hwall(sy, d0 - 3, d1 + 3)
        else:
            x = x0 if side == "W" else x1 - 1
            self.box(x, d0, x + 1, d1, False)
            if shield:
                sx = x - shield - 1 if side == "W" else x + shield + 1
                self.vwall(sx, d0 - 3, d1 + 3)

    def text(self):
        rows = []
        for iy in range(NY - 1, -1, -1):
            row = ["#" if o else "." for o in self.occ[iy]]
            for sx, sy in self.spawns:
                if sy == iy:
                    row[sx] = "S"
            rows.append("".join(row))
        return f"50 20 {CELL}\n" + "\n".join(rows) + "\n"


def side_room(c, x0, x1, y0, y1, door, shield):
    """Room spanning x0..x1 against the north or south outer wall.

    The door sits in the side wall at x1 (cells ``door`` along y) and faces
    a shield wall at column ``shield``, so the inside is only visible from
    the vestibule between the two.
    """
    lo, hi = min(x0, x1), max(x0, x1)
    if y0 == 0:
        c.hwall(y1, lo, hi + 1)
        c.vwall(x1, 0, y1 + 1, gaps=(door,))
        c.vwall(shield, 0, y1 - 1)
    else:
        c.hwall(y0, lo, hi + 1)
        c.vwall(x1, y0, NY, gaps=(door,))
        c.vwall(shield, y0 + 2, NY)


def closet(c, x0, north=True):
    """Three-cell-wide closet against the north or south wall, screened by a shelf."""
    if north:
        c.vwall(x0, 72, NY)
        c.vwall(x0 + 4, 72, NY)
        c.hwall(72, x0, x0 + 5, gaps=((x0 + 1, x0 + 4),))
        c.hwall(68, x0 - 4, x0 + 9)
    else:
        c.vwall(x0, 0, 8)
        c.vwall(x0 + 4, 0, 8)
        c.hwall(7, x0, x0 + 5, gaps=((x0 + 1, x0 + 4),))
        c.hwall(11, x0 - 4, x0 + 9)


def build():
    c = Canvas()
    # spawn bay (top middle) with three dead-end wings: a hall to the west,
    # a long corridor to the south-west and two halls to the east
    c.hwall(40, 0, 200, gaps=((84, 116), (164, 196)))
    c.vwall(80, 40, 80, gaps=((48, 72),))
    c.vwall(120, 40, 80, gaps=((48, 72),))
    c.box(120, 0, 164, 40)  # sealed machine block

    c.spawns = [(96, 60), (100, 60), (104, 60)]

    side_room(c, 0, 28, 63, NY, (72, 77), 35)      # west hall
    side_room(c, 40, 68, 63, NY, (72, 77), 75)
    side_room(c, 40, 68, 0, 16, (2, 7), 75)        # south corridor
    side_room(c, 199, 171, 63, NY, (72, 77), 164)  # east hall
    closet(c, 140)
    closet(c, 180, north=False)
    return c


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/react_sim/maps/factory.map"
    out.write_text(build().text())
    print(out)
