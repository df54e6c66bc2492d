#!/usr/bin/env python3
"""Generates the bundled maze world and its scripted teleop tour.

Outputs (next to this script):
  worlds/maze8.json        8x8 m maze, 0.8 m corridors, one sealed cell
  scripts/maze_tour.json   command segments driving a tour through the maze

The tour is picked greedily: repeatedly drive to the cell whose shortest path
reveals the most not-yet-visible wall length per metre driven.
"""
import json
import math
import random
from collections import deque
from pathlib import Path

import numpy as np

N = 10
CELL = 0.8
SEED = 7
EXTRA_OPENINGS = 22
SEALED = (6, 3)  # (row, col)
SPEED = 0.4
TURN_STEPS = 32
DT = 0.05
MAX_RANGE = 4.0
TARGET_COVERAGE = 0.92


def build_walls():
    rng = random.Random(SEED)
    # walls[(r, c, 'E')] wall on the east side of cell (r, c); 'N' north side
    walls = set()
    for r in range(N):
        for c in range(N):
            if c < N - 1:
                walls.add((r, c, 'E'))
            if r < N - 1:
                walls.add((r, c, 'N'))
    # randomized DFS spanning tree
    seen = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        r, c = stack[-1]
        nbrs = [(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= r + dr < N and 0 <= c + dc < N and (r + dr, c + dc) not in seen]
        if not nbrs:
            stack.pop()
            continue
        nr, nc = rng.choice(nbrs)
        walls.discard(wall_between((r, c), (nr, nc)))
        seen.add((nr, nc))
        stack.append((nr, nc))
    # loops
    interior = sorted(walls)
    rng.shuffle(interior)
    for w in interior[:EXTRA_OPENINGS]:
        walls.discard(w)
    # seal one cell, then reconnect anything that lost its link to the start
    r, c = SEALED
    for nb in neighbours(r, c):
        walls.add(wall_between((r, c), nb))
    while True:
        reach = reachable(walls, (0, 0))
        missing = [(r2, c2) for r2 in range(N) for c2 in range(N)
                   if (r2, c2) not in reach and (r2, c2) != SEALED]
        if not missing:
            break
        for cell in missing:
            opened = False
            for nb in neighbours(*cell):
                if nb in reach and nb != SEALED:
                    walls.discard(wall_between(cell, nb))
                    opened = True
                    break
            if opened:
                break
    return walls


def neighbours(r, c):
    return [(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if 0 <= r + dr < N and 0 <= c + dc < N]


def wall_between(a, b):
    (r1, c1), (r2, c2) = sorted([a, b])
    if r1 == r2:
        return (r1, c1, 'E')
    return (r1, c1, 'N')


def reachable(walls, start):
    seen = {start}
    q = deque([start])
    while q:
        cell = q.popleft()
        for nb in neighbours(*cell):
            if nb not in seen and wall_between(cell, nb) not in walls:
                seen.add(nb)
                q.append(nb)
    return seen


def unit_segments(walls):
    segs = []
    for r, c, side in walls:
        if side == 'E':
            x = (c + 1) * CELL
            segs.append((x, r * CELL, x, (r + 1) * CELL))
        else:
            y = (r + 1) * CELL
            segs.append((c * CELL, y, (c + 1) * CELL, y))
    L = N * CELL
    for i in range(N):
        segs += [(i * CELL, 0, (i + 1) * CELL, 0), (i * CELL, L, (i + 1) * CELL, L),
                 (0, i * CELL, 0, (i + 1) * CELL), (L, i * CELL, L, (i + 1) * CELL)]
    return segs


def merge(segs):
    """Joins collinear unit pieces into maximal runs."""
    horiz, vert = {}, {}
    for x1, y1, x2, y2 in segs:
        if y1 == y2:
            horiz.setdefault(round(y1, 6), []).append((min(x1, x2), max(x1, x2)))
        else:
            vert.setdefault(round(x1, 6), []).append((min(y1, y2), max(y1, y2)))
    out = []
    for key, spans, horizontal in [(k, v, True) for k, v in sorted(horiz.items())] + \
                                   [(k, v, False) for k, v in sorted(vert.items())]:
        spans.sort()
        cur = list(spans[0])
        for a, b in spans[1:]:
            if a <= cur[1] + 1e-9:
                cur[1] = max(cur[1], b)
            else:
                out.append((cur, key, horizontal))
                cur = [a, b]
        out.append((cur, key, horizontal))
    result = []
    for (a, b), key, horizontal in out:
        a, b = round(a, 6), round(b, 6)
        result.append([a, key, b, key] if horizontal else [key, a, key, b])
    return result


def visibility(segments, cell_centres):
    """Boolean matrix [cell, wall-sample] of line-of-sight within MAX_RANGE."""
    samples = []
    for x1, y1, x2, y2 in segments:
        n = max(1, int(round(math.hypot(x2 - x1, y2 - y1) / 0.05)))
        for k in range(n):
            t = (k + 0.5) / n
            samples.append((x1 + t * (x2 - x1), y1 + t * (y2 - y1)))
    pts = np.array(samples)
    segs = np.array(segments, dtype=float)
    vis = np.zeros((len(cell_centres), len(pts)), dtype=bool)
    for i, (cx, cy) in enumerate(cell_centres):
        d = pts - np.array([cx, cy])
        dist = np.hypot(d[:, 0], d[:, 1])
        ok = dist <= MAX_RANGE
        # ray from centre towards sample point, stop just short of the point
        px, py = cx, cy
        rx, ry = d[:, 0] * 0.999, d[:, 1] * 0.999
        blocked = np.zeros(len(pts), dtype=bool)
        for x1, y1, x2, y2 in segs:
            ex, ey = x2 - x1, y2 - y1
            den = rx * ey - ry * ex
            with np.errstate(divide='ignore', invalid='ignore'):
                t = ((x1 - px) * ey - (y1 - py) * ex) / den
                u = ((x1 - px) * ry - (y1 - py) * rx) / den
            hit = (np.abs(den) > 1e-12) & (t > 1e-9) & (t < 1.0) & (u >= 0) & (u <= 1)
            blocked |= hit
        vis[i] = ok & ~blocked
    return vis


def shortest_path(walls, a, b):
    prev = {a: None}
    q = deque([a])
    while q:
        cell = q.popleft()
        if cell == b:
            break
        for nb in neighbours(*cell):
            if nb not in prev and wall_between(cell, nb) not in walls:
                prev[nb] = cell
                q.append(nb)
    path = [b]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def plan_tour(walls, vis):
    idx = lambda rc: rc[0] * N + rc[1]
    cells = [(r, c) for r in range(N) for c in range(N) if (r, c) != SEALED]
    route = [(0, 0)]
    seen = vis[idx((0, 0))].copy()
    while seen.mean() < TARGET_COVERAGE:
        best, best_gain = None, 0.0
        for cell in cells:
            if cell in route[-1:]:
                continue
            path = shortest_path(walls, route[-1], cell)
            covered = seen.copy()
            for p in path:
                covered |= vis[idx(p)]
            gain = (covered.sum() - seen.sum()) / (len(path) - 1)
            if gain > best_gain:
                best, best_gain = (path, covered), gain
        if best is None:
            break
        path, covered = best
        route += path[1:]
        seen = covered
    return route, seen.mean()


def commands(route):
    cmds = []
    heading = 0  # quarter turns, 0 = +x
    straight = 0
    dirs = {(0, 1): 0, (1, 0): 1, (0, -1): 2, (-1, 0): 3}
    w_turn = (math.pi / 2) / (TURN_STEPS * DT)

    def flush():
        nonlocal straight
        if straight:
            cmds.append({"duration": round(straight * CELL / SPEED, 6), "v": SPEED, "w": 0.0})
            straight = 0

    for a, b in zip(route, route[1:]):
        want = dirs[(b[0] - a[0], b[1] - a[1])]
        turn = (want - heading) % 4
        if turn:
            flush()
            if turn == 1:
                cmds.append({"duration": TURN_STEPS * DT, "v": 0.0, "w": w_turn})
            elif turn == 3:
                cmds.append({"duration": TURN_STEPS * DT, "v": 0.0, "w": -w_turn})
            else:
                cmds.append({"duration": 2 * TURN_STEPS * DT, "v": 0.0, "w": w_turn})
            heading = want
        straight += 1
    flush()
    cmds.append({"duration": 1.0, "v": 0.0, "w": 0.0})
    return cmds


def main():
    here = Path(__file__).resolve().parent
    walls = build_walls()
    segments = merge(unit_segments(walls))
    centres = [((c + 0.5) * CELL, (r + 0.5) * CELL) for r in range(N) for c in range(N)]
    vis = visibility(segments, centres)
    route, coverage = plan_tour(walls, vis)
    cmds = commands(route)
    world = {"bounds": [0.0, 0.0, N * CELL, N * CELL], "spawn": [CELL / 2, CELL / 2, 0.0], "segments": segments}
    (here / "worlds").mkdir(exist_ok=True)
    (here / "scripts").mkdir(exist_ok=True)
    with open(here / "worlds" / "maze8.json", "w") as f:
        f.write('{\n  "bounds": %s,\n  "spawn": %s,\n  "segments": [\n' % (world["bounds"], world["spawn"]))
        f.write(",\n".join("    " + json.dumps(s) for s in segments))
        f.write("\n  ]\n}\n")
    with open(here / "scripts" / "maze_tour.json", "w") as f:
        f.write('{\n  "commands": [\n')
        f.write(",\n".join("    " + json.dumps(c) for c in cmds))
        f.write("\n  ]\n}\n")
    duration = sum(c["duration"] for c in cmds)
    print(f"segments={len(segments)} route_cells={len(route)} coverage={coverage:.3f} "
          f"commands={len(cmds)} duration={duration:.1f}s")
    for r in reversed(range(N)):
        print("".join("X" if (r, c) == SEALED else ("o" if (r, c) in route else ".") for c in range(N)))


if __name__ == "__main__":
    main()
