"""Thinning, pixel adjacency and spur pruning on binary skeletons.

Skeletons are boolean ``(height, width)`` arrays. Adjacency follows the
8-neighbourhood except that a diagonal step is ignored when one of the two
pixels it cuts across is also on; this removes the spurious triangles that
make junction pixels ambiguous and keeps every edge path unique.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

SQRT2 = math.sqrt(2.0)

# (dy, dx) offsets in clockwise order starting north: P2..P9 in Zhang-Suen notation
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _ring(padded: np.ndarray) -> list[np.ndarray]:
    h, w = padded.shape[0] - 2, padded.shape[1] - 2
    return [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy, dx in RING]


def _zs_candidates(img: np.ndarray, first: bool) -> np.ndarray:
    p = _ring(np.pad(img, 1))
    b = np.zeros(img.shape, dtype=np.uint8)
    for q in p:
        b += q
    a = np.zeros(img.shape, dtype=np.uint8)
    for k in range(8):
        a += ~p[k] & p[(k + 1) % 8]
    p2, p4, p6, p8 = p[0], p[2], p[4], p[6]
    cand = img & (b >= 3) & (b <= 6) & (a == 1)
    if first:
        cand &= ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
    else:
        cand &= ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
    # a 2x2 block whose four pixels are all removable would vanish in one
    # parallel step; keep its bottom-right pixel
    block = cand[:-1, :-1] & cand[:-1, 1:] & cand[1:, :-1] & cand[1:, 1:]
    if block.any():
        cand[1:, 1:] &= ~block
    return cand


def _ring_components(members: list[int], max_step: int) -> list[set[int]]:
    """Group ring positions into components; ``max_step`` 1 is 4-adjacency, 2 is 8-adjacency."""
    comps: list[set[int]] = []
    left = set(members)
    while left:
        stack, comp = [left.pop()], set()
        while stack:
            i = stack.pop()
            comp.add(i)
            for j in list(left):
                dy, dx = abs(RING[i][0] - RING[j][0]), abs(RING[i][1] - RING[j][1])
                if (dy + dx if max_step == 1 else max(dy, dx)) <= 1:
                    left.discard(j)
                    stack.append(j)
        comps.append(comp)
    return comps


def _build_removable_lut() -> np.ndarray:
    """For each 8-bit ring pattern: is the centre a simple, non-end, non-junction pixel?

    Simple means one 8-connected foreground component among the neighbours
    and one 4-connected background component touching the centre's
    4-neighbours. A centre with three or more 4-neighbours and no filled
    corner between them is a T junction; deleting it would reroute the
    branches diagonally and shorten one of them.
    """
    lut = np.zeros(256, dtype=bool)
    for code in range(256):
        fg = [k for k in range(8) if (code >> k) & 1]
        if len(fg) < 2:
            continue
        bg = [k for k in range(8) if not (code >> k) & 1]
        n_fg = len(_ring_components(fg, 2))
        n_bg = sum(1 for c in _ring_components(bg, 1) if any(k % 2 == 0 for k in c))
        on = set(fg)
        four = [k for k in range(0, 8, 2) if k in on]
        blocked = any(k in on and (k + 2) % 8 in on and k + 1 in on for k in range(0, 8, 2))
        t_corner = len(four) >= 3 and not blocked
        lut[code] = n_fg == 1 and n_bg == 1 and not t_corner
    return lut


_REMOVABLE = _build_removable_lut()


def _ring_codes(img: np.ndarray) -> np.ndarray:
    code = np.zeros(img.shape, dtype=np.uint8)
    for k, q in enumerate(_ring(np.pad(img, 1))):
        code |= q.astype(np.uint8) << k
    return code


def _strip_redundant(img: np.ndarray) -> bool:
    """Sequentially delete simple non-end pixels left over by the parallel passes."""
    cand = img & _REMOVABLE[_ring_codes(img)]
    if not cand.any():
        return False
    changed = False
    h, w = img.shape
    for y, x in np.argwhere(cand).tolist():
        code = 0
        for k, (dy, dx) in enumerate(RING):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and img[yy, xx]:
                code |= 1 << k
        if _REMOVABLE[code]:
            img[y, x] = False
            changed = True
    return changed


def thin(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning to a one-pixel-wide, homotopy-preserving skeleton.

    The subiterations use the Lu-Wang end condition (at least three
    neighbours) so line ends are not eroded. Once they stall, any remaining
    simple non-end pixels (staircase corners, clumps at junctions) are
    removed one at a time, so no pixel of the result can be deleted without
    changing connectivity or shortening a branch.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    img = mask[y0:y1, x0:x1].copy()
    changed = True
    while changed:
        changed = False
        for first in (True, False):
            cand = _zs_candidates(img, first)
            if cand.any():
                img &= ~cand
                changed = True
        if not changed:
            changed = _strip_redundant(img)
    _extend_tips(img, mask[y0:y1, x0:x1])
    out = np.zeros_like(mask)
    out[y0:y1, x0:x1] = img
    return out


def _extend_tips(skel: np.ndarray, mask: np.ndarray) -> None:
    """Walk each end pixel outward along its last step while it stays inside ``mask``.

    Thinning erodes about half the stroke width off every line end; this
    restores it without touching any other skeleton pixel.
    """
    h, w = skel.shape
    counts = np.zeros(skel.shape, dtype=np.uint8)
    for q in _ring(np.pad(skel, 1)):
        counts += q
    for y, x in np.argwhere(skel & (counts == 1)).tolist():
        ny, nx = next((y + dy, x + dx) for dy, dx in RING
                      if 0 <= y + dy < h and 0 <= x + dx < w and skel[y + dy, x + dx])
        dy, dx = y - ny, x - nx
        cy, cx = y, x
        while True:
            ty, tx = cy + dy, cx + dx
            if not (0 <= ty < h and 0 <= tx < w) or not mask[ty, tx] or skel[ty, tx]:
                break
            touching = [
                (ty + ry, tx + rx) for ry, rx in RING
                if 0 <= ty + ry < h and 0 <= tx + rx < w and skel[ty + ry, tx + rx]
            ]
            if touching != [(cy, cx)]:
                break
            skel[ty, tx] = True
            cy, cx = ty, tx


def adjacency_masks(skel: np.ndarray) -> list[np.ndarray]:
    """Boolean arrays, one per ring direction, true where the step from a pixel to that neighbour is an edge."""
    skel = np.asarray(skel, dtype=bool)
    p = _ring(np.pad(skel, 1))
    out = []
    for k, (dy, dx) in enumerate(RING):
        if dy == 0 or dx == 0:
            out.append(skel & p[k])
        else:
            # diagonal: the two 4-neighbours it cuts across are ring k-1 and k+1
            out.append(skel & p[k] & ~p[k - 1] & ~p[(k + 1) % 8])
    return out


def degree_map(skel: np.ndarray) -> np.ndarray:
    deg = np.zeros(np.shape(skel), dtype=np.int16)
    for m in adjacency_masks(skel):
        deg += m
    return deg


def neighbour_table(skel: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Map each on-pixel ``(y, x)`` to its adjacent on-pixels, in ring order."""
    table: dict[tuple[int, int], list[tuple[int, int]]] = {}
    ys, xs = np.nonzero(skel)
    for y, x in zip(ys.tolist(), xs.tolist()):
        table[(y, x)] = []
    for (dy, dx), m in zip(RING, adjacency_masks(skel)):
        ys, xs = np.nonzero(m)
        for y, x in zip(ys.tolist(), xs.tolist()):
            table[(y, x)].append((y + dy, x + dx))
    return table


def step_length(a: tuple[int, int], b: tuple[int, int]) -> float:
    return SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0


def path_length_px(path) -> float:
    """Pixel-step length of a path of ``(y, x)`` or ``(x, y)`` pixels, diagonals weighted sqrt(2)."""
    arr = np.asarray(path, dtype=float)
    if len(arr) < 2:
        return 0.0
    d = np.abs(np.diff(arr, axis=0))
    return float(np.sum(np.where((d[:, 0] > 0) & (d[:, 1] > 0), SQRT2, 1.0)))


def skeleton_length_px(skel: np.ndarray) -> float:
    """Total length of all adjacency edges, each counted once."""
    masks = adjacency_masks(skel)
    # ring directions 0..3 (N, NE, E, SE) cover every undirected edge once
    total = 0.0
    for k in range(4):
        dy, dx = RING[k]
        total += (SQRT2 if dy and dx else 1.0) * int(masks[k].sum())
    return total


def _spurs(skel: np.ndarray, min_branch_px: int) -> list[list[tuple[int, int]]]:
    table = neighbour_table(skel)
    deg = {p: len(n) for p, n in table.items()}
    by_junction: dict[tuple[int, int], list[list[tuple[int, int]]]] = {}
    for tip, d in deg.items():
        if d != 1:
            continue
        path = [tip]
        prev, cur = None, tip
        junction = None
        while True:
            nxt = [q for q in table[cur] if q != prev]
            if not nxt:
                break  # reached another tip: isolated line, never a spur
            prev, cur = cur, nxt[0]
            if deg[cur] >= 3:
                junction = cur
                break
            if deg[cur] == 1:
                break
            path.append(cur)
        if junction is not None and len(path) < min_branch_px:
            by_junction.setdefault(junction, []).append(path)
    spurs = []
    for junction, paths in by_junction.items():
        keep_count = max(0, 2 - (deg[junction] - len(paths)))
        if keep_count:
            # the junction would lose every long branch; keep the longest stubs as a line
            paths = sorted(paths, key=lambda p: (-len(p), p[0]))[keep_count:]
        spurs.extend(paths)
    return spurs


def prune_spurs(skel: np.ndarray, min_branch_px: int = 5) -> np.ndarray:
    """Remove dangling tip-to-junction branches shorter than ``min_branch_px`` pixels.

    Branch length counts the branch's own pixels (the junction pixel is not
    part of it). Pruning and re-thinning repeat until nothing changes.
    """
    out = np.asarray(skel, dtype=bool).copy()
    while True:
        spurs = _spurs(out, min_branch_px)
        if not spurs:
            return out
        for path in spurs:
            for y, x in path:
                out[y, x] = False
        out = thin(out)


def longest_path_px(skel: np.ndarray) -> float:
    """Longest geodesic path (pixel-step metric) within any component of a skeleton.

    Uses a double Dijkstra sweep per component, exact on trees.
    """
    table = neighbour_table(skel)
    if not table:
        return 0.0

    def sweep(src):
        dist = {src: 0.0}
        heap = [(0.0, src)]
        while heap:
            d, p = heapq.heappop(heap)
            if d > dist[p]:
                continue
            for q in table[p]:
                nd = d + step_length(p, q)
                if nd < dist.get(q, math.inf):
                    dist[q] = nd
                    heapq.heappush(heap, (nd, q))
        far = max(dist, key=lambda p: (dist[p], p))
        return far, dist

    best = 0.0
    seen: set = set()
    for start in sorted(table):
        if start in seen:
            continue
        far, dist = sweep(start)
        seen.update(dist)
        _, dist2 = sweep(far)
        best = max(best, max(dist2.values()))
    return best
