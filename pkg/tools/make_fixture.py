#!/usr/bin/env python3
"""Generate the bundled synthetic 3-floor building graph.

Layout per floor (z = 0/500/1000 cm): a 6-node corridor spine at y=0
(x = 0..7500, step 1500), side rooms at y = +-1000 (12 on the ground
floor, 10 on the upper floors), and a stair landing at each end of
the corridor (x = -1200 / 8700). The stair columns connect the floors;
the two ground-floor landings are the building exits.
60 vertices, 61 edges, one mid-edge sensor each.

Run from the repository root:  python tools/make_fixture.py
"""
from pathlib import Path

FLOOR_HEIGHT = 500.0
CORRIDOR_STEP = 1500.0
ROOM_OFFSET = 1000.0
STAIR_LEFT_X = -1200.0
STAIR_RIGHT_X = 8700.0
ROOMS_PER_FLOOR = {1: 12, 2: 12, 3: 12}

OUT = Path(__file__).resolve().parents[1] / "src" / "cpnevac" / "data" / "building3f.graph"


def corridor_id(floor: int, i: int) -> int:
    return 100 * floor + i


def room_id(floor: int, j: int) -> int:
    return 100 * floor + 10 + j


def stair_id(floor: int, side: int) -> int:  # side 0 = left, 1 = right
    return 100 * floor + 30 + side


def main() -> None:
    lines = ["# synthetic 3-floor office building: corridor spine, side rooms,"]
    lines.append("# stair columns at both ends, ground-floor landings are exits")
    vertices = []
    edges = []

    for floor in (1, 2, 3):
        z = FLOOR_HEIGHT * (floor - 1)
        for i in range(6):
            vertices.append((corridor_id(floor, i), i * CORRIDOR_STEP, 0.0, z, 0))
        for j in range(ROOMS_PER_FLOOR[floor]):
            x = (j // 2) * CORRIDOR_STEP
            y = ROOM_OFFSET if j % 2 == 0 else -ROOM_OFFSET
            vertices.append((room_id(floor, j), x, y, z, 0))
        is_exit = 1 if floor == 1 else 0
        vertices.append((stair_id(floor, 0), STAIR_LEFT_X, 0.0, z, is_exit))
        vertices.append((stair_id(floor, 1), STAIR_RIGHT_X, 0.0, z, is_exit))

        for i in range(5):
            edges.append((corridor_id(floor, i), corridor_id(floor, i + 1)))
        for j in range(ROOMS_PER_FLOOR[floor]):
            edges.append((room_id(floor, j), corridor_id(floor, j // 2)))
        edges.append((stair_id(floor, 0), corridor_id(floor, 0)))
        edges.append((stair_id(floor, 1), corridor_id(floor, 5)))

    for floor in (1, 2):
        for side in (0, 1):
            edges.append((stair_id(floor, side), stair_id(floor + 1, side)))

    for vid, x, y, z, ex in vertices:
        lines.append(f"V {vid} {x:g} {y:g} {z:g} {ex}")
    for eid, (a, b) in enumerate(edges, start=1):
        lines.append(f"E {eid} {a} {b}")
    for eid in range(1, len(edges) + 1):
        lines.append(f"S {1000 + eid} {eid} 0.5")

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(vertices)} vertices, {len(edges)} edges)")


if __name__ == "__main__":
    main()
