"""Generate the bundled synthetic campus graph (27 nodes, 106 directed links).

Nodes sit on a jittered 9x3 grid. The two outer rows and one cross street are
driven at street speed, everything else is a campus pathway. Every undirected
segment becomes two directed links.

    python scripts/make_campus_graph.py [out.json]
"""

import json
import sys
from pathlib import Path

import numpy as np

STREET_MPS = 11.0
PATHWAY_MPS = 4.0
COLS, ROWS = 9, 3
DX, DY = 150.0, 180.0
N_DIAGONALS = 11


def build(seed=2017):
    rng = np.random.default_rng(seed)
    nodes = []
    for r in range(ROWS):
        for c in range(COLS):
            x = c * DX + rng.uniform(-25, 25)
            y = r * DY + rng.uniform(-25, 25)
            nodes.append({"id": r * COLS + c, "x": round(x, 1), "y": round(y, 1)})

    def street(a, b):
        ra, ca = divmod(a, COLS)
        rb, cb = divmod(b, COLS)
        if ra == rb and ra in (0, ROWS - 1):
            return True
        return ca == cb == COLS // 2

    segs = []
    for r in range(ROWS):
        for c in range(COLS - 1):
            segs.append((r * COLS + c, r * COLS + c + 1))
    for r in range(ROWS - 1):
        for c in range(COLS):
            segs.append((r * COLS + c, (r + 1) * COLS + c))
    diagonals = []
    for r in range(ROWS - 1):
        for c in range(COLS - 1):
            if (r + c) % 2 == 0:
                diagonals.append((r * COLS + c, (r + 1) * COLS + c + 1))
            else:
                diagonals.append((r * COLS + c + 1, (r + 1) * COLS + c))
    pick = sorted(rng.choice(len(diagonals), size=N_DIAGONALS, replace=False))
    segs += [diagonals[i] for i in pick]

    xy = {n["id"]: (n["x"], n["y"]) for n in nodes}
    links = []
    for a, b in segs:
        (xa, ya), (xb, yb) = xy[a], xy[b]
        # paths bend a little; never shorter than the straight line
        length = round(float(np.hypot(xb - xa, yb - ya)) * rng.uniform(1.0, 1.15), 1)
        speed = STREET_MPS if street(a, b) else PATHWAY_MPS
        links.append({"from": a, "to": b, "length_m": length, "speed_mps": speed})
        links.append({"from": b, "to": a, "length_m": length, "speed_mps": speed})
    return {"nodes": nodes, "links": links}


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/modfleet/data/campus.json"
    doc = build()
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out}: {len(doc['nodes'])} nodes, {len(doc['links'])} links")
