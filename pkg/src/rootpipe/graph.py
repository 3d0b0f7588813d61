"""Root graphs: node detection, DFS edge tracing, main/lateral classification.

Coordinates in this module are ``(x, y)`` pixel pairs with y pointing down,
matching image row/column order ``labels[y, x]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .skeleton import SQRT2, neighbour_table, path_length_px

MAX_SIMPLE_PATHS = 20000


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[int, int]
    kind: str  # "base" | "branch" | "tip"


@dataclass(frozen=True)
class Edge:
    id: int
    node_a: int
    node_b: int
    polyline: np.ndarray  # (k, 2) int pixel path (x, y) from node_a to node_b
    length_mm: float
    root_class: str | None = None  # "main" | "lateral" once classified

    @property
    def length_px(self) -> float:
        return path_length_px(self.polyline)


@dataclass(frozen=True)
class LateralRoot:
    """A lateral root as one chain from its emergence point on the main path to its farthest tip."""

    emergence_node: int
    base: tuple[int, int]
    polyline: np.ndarray
    edge_ids: tuple[int, ...]  # every edge attributed to this lateral (its whole branch)
    length_mm: float  # summed over edge_ids

    @property
    def tip(self) -> tuple[int, int]:
        return tuple(int(v) for v in self.polyline[-1])


@dataclass(frozen=True)
class RootGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    seed_position: tuple[float, float]
    mm_per_pixel: float
    base_id: int = 0
    main_path: tuple[tuple[int, bool], ...] | None = None  # (edge id, reversed) from the base

    @property
    def classified(self) -> bool:
        return self.main_path is not None

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def degree(self, node_id: int) -> int:
        return sum((e.node_a == node_id) + (e.node_b == node_id) for e in self.edges)

    def incident(self) -> dict[int, list[tuple[int, int]]]:
        """node id -> [(edge id, other node id)]; a self-loop appears twice."""
        out: dict[int, list[tuple[int, int]]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            out[e.node_a].append((e.id, e.node_b))
            out[e.node_b].append((e.id, e.node_a))
        return out

    @property
    def total_length_mm(self) -> float:
        return float(sum(e.length_mm for e in self.edges))

    def edges_of_class(self, root_class: str) -> list[Edge]:
        return [e for e in self.edges if e.root_class == root_class]

    def main_polyline(self) -> np.ndarray:
        """Pixel path of the main root from the base to its tip, ``(k, 2)`` in (x, y)."""
        if not self.main_path:
            base = self.nodes[self.base_id].position
            return np.array([base], dtype=int)
        parts = []
        for eid, rev in self.main_path:
            poly = self.edges[eid].polyline
            poly = poly[::-1] if rev else poly
            parts.append(poly if not parts else poly[1:])
        return np.concatenate(parts)

    def main_node_ids(self) -> list[int]:
        ids = [self.base_id]
        for eid, rev in self.main_path or ():
            e = self.edges[eid]
            ids.append(e.node_a if rev else e.node_b)
        return ids

    def pixels(self) -> np.ndarray:
        """All distinct pixels covered by the graph, ``(k, 2)`` in (x, y)."""
        if not self.edges:
            return np.array([n.position for n in self.nodes], dtype=int).reshape(-1, 2)
        return np.unique(np.concatenate([e.polyline for e in self.edges]), axis=0)

    def lateral_roots(self) -> list[LateralRoot]:
        if not self.classified:
            raise GraphError("graph is not classified")
        return _lateral_roots(self)


def _nearest_pixel(table, seed) -> tuple[tuple[int, int], float]:
    pts = np.array(sorted(table), dtype=float)  # (y, x), sorted for deterministic ties
    d = np.hypot(pts[:, 1] - seed[0], pts[:, 0] - seed[1])
    i = int(np.argmin(d))
    return (int(pts[i, 0]), int(pts[i, 1])), float(d[i])


def _slide_to_tip(table, start, max_px: int):
    """The nearest tip within ``max_px`` path pixels of a degree-2 ``start``, else ``start``."""
    if max_px <= 0 or len(table[start]) != 2:
        return start
    best = None
    for first in sorted(table[start]):
        prev, cur, steps = start, first, 1
        while len(table[cur]) == 2 and steps < max_px:
            prev, cur = cur, next(q for q in table[cur] if q != prev)
            steps += 1
        if len(table[cur]) == 1 and steps < max_px and (best is None or steps < best[0]):
            best = (steps, cur)
    return start if best is None else best[1]


def build_graph(
    skel: np.ndarray,
    seed: tuple[float, float] | None,
    mm_per_pixel: float,
    snap_radius_px: float = math.inf,
    base_stub_px: int = 0,
) -> RootGraph:
    """Trace a skeleton into a graph by depth-first search from the base pixel.

    The base is the on-pixel nearest ``seed`` (x, y), or the topmost pixel
    when no seed is given. If that pixel is mid-path and a tip lies fewer
    than ``base_stub_px`` pixels away along the path, the base moves onto
    the tip so the root's own end is not left as a stub. Only the component
    containing the base is traced. Nodes sit at pixels whose adjacency
    degree differs from 2, plus the base.
    """
    table = neighbour_table(skel)
    if not table:
        raise GraphError("empty skeleton")
    if seed is None:
        base_px = min(table)  # smallest y, then smallest x
        seed_xy = (float(base_px[1]), float(base_px[0]))
    else:
        base_px, dist = _nearest_pixel(table, seed)
        if dist > snap_radius_px:
            raise GraphError(
                f"seed {tuple(seed)} is {dist:.1f} px from the skeleton (snap radius {snap_radius_px:.1f} px)"
            )
        seed_xy = (float(seed[0]), float(seed[1]))
    base_px = _slide_to_tip(table, base_px, base_stub_px)

    def is_node(p):
        return p == base_px or len(table[p]) != 2

    node_ids: dict[tuple[int, int], int] = {base_px: 0}
    order = [base_px]
    edges: list[tuple[int, int, list[tuple[int, int]]]] = []
    visited: set[frozenset] = set()
    stack = [base_px]
    while stack:
        start = stack.pop()
        found = []
        for first in table[start]:
            key = frozenset((start, first))
            if key in visited:
                continue
            visited.add(key)
            path = [start, first]
            prev, cur = start, first
            while not is_node(cur):
                nxt = table[cur][0] if table[cur][0] != prev else table[cur][1]
                visited.add(frozenset((cur, nxt)))
                path.append(nxt)
                prev, cur = cur, nxt
            if cur not in node_ids:
                node_ids[cur] = len(order)
                order.append(cur)
                found.append(cur)
            edges.append((node_ids[start], node_ids[cur], path))
        # reversed so the first-discovered branch is explored first
        stack.extend(reversed(found))

    nodes = []
    for p in order:
        nid = node_ids[p]
        deg = len(table[p])
        kind = "base" if nid == 0 else ("tip" if deg == 1 else "branch")
        nodes.append(Node(nid, (p[1], p[0]), kind))
    edge_objs = []
    for eid, (a, b, path) in enumerate(edges):
        poly = np.array([(x, y) for y, x in path], dtype=int)
        edge_objs.append(Edge(eid, a, b, poly, path_length_px(poly) * mm_per_pixel))
    return RootGraph(tuple(nodes), tuple(edge_objs), seed_xy, mm_per_pixel, 0)


def _simple_paths(graph: RootGraph, source: int, targets: set[int]):
    """Yield edge-step lists [(edge id, reversed)] of node-simple paths from source to any target."""
    inc = graph.incident()
    count = 0
    path: list[tuple[int, bool]] = []
    on_path = {source}

    def walk(node):
        nonlocal count
        if count >= MAX_SIMPLE_PATHS:
            return
        if node in targets and path:
            count += 1
            yield list(path)
        for eid, other in inc[node]:
            if other in on_path:
                continue
            e = graph.edges[eid]
            path.append((eid, e.node_a != node))
            on_path.add(other)
            yield from walk(other)
            on_path.discard(other)
            path.pop()

    yield from walk(source)


def _path_pixels(graph: RootGraph, steps) -> np.ndarray:
    parts = []
    for eid, rev in steps:
        poly = graph.edges[eid].polyline
        poly = poly[::-1] if rev else poly
        parts.append(poly if not parts else poly[1:])
    return np.concatenate(parts)


def classify_main(
    graph: RootGraph,
    previous_main: np.ndarray | None = None,
    overlap_radius_px: float = 3.0,
) -> RootGraph:
    """Pick the main root and class every other edge as lateral.

    The main root is the simple base-to-tip path maximising, in order: its
    length (mm) running within ``overlap_radius_px`` of the previous frame's
    main polyline, its total length, and then its tip position (lowest,
    then leftmost) so the choice never depends on node numbering.
    """
    tips = {n.id for n in graph.nodes if n.kind == "tip"}
    if not tips:
        tips = {n.id for n in graph.nodes if n.id != graph.base_id}
    tree = None
    if previous_main is not None and len(previous_main) > 0:
        tree = cKDTree(np.asarray(previous_main, dtype=float))

    best_key, best = None, []
    for steps in _simple_paths(graph, graph.base_id, tips):
        pixels = _path_pixels(graph, steps)
        if tree is not None:
            d, _ = tree.query(pixels.astype(float), distance_upper_bound=overlap_radius_px + 1e-9)
            near = np.isfinite(d)
            steps_px = np.where(np.all(np.diff(pixels, axis=0) != 0, axis=1), SQRT2, 1.0)
            overlap = round(float(steps_px[near[:-1] & near[1:]].sum()) * graph.mm_per_pixel, 9)
        else:
            overlap = 0.0
        length = round(sum(graph.edges[eid].length_mm for eid, _ in steps), 9)
        tip = pixels[-1]
        key = (overlap, length, int(tip[1]), -int(tip[0]))
        if best_key is None or key > best_key:
            best_key, best = key, [(steps, pixels)]
        elif key == best_key:
            best.append((steps, pixels))
    if best:
        steps, _ = min(best, key=lambda sp: tuple(map(tuple, sp[1].tolist())))
        main_ids = {eid for eid, _ in steps}
    else:
        steps, main_ids = [], set()
    edges = tuple(
        replace(e, root_class="main" if e.id in main_ids else "lateral") for e in graph.edges
    )
    return replace(graph, edges=edges, main_path=tuple(steps))


def _lateral_roots(graph: RootGraph) -> list[LateralRoot]:
    main_nodes = graph.main_node_ids()
    position = {nid: i for i, nid in enumerate(main_nodes)}
    inc = graph.incident()
    claimed: set[int] = {eid for eid, _ in graph.main_path}
    laterals = []
    # emergence edges in order along the main path, then by edge id
    starts = []
    for nid in main_nodes:
        for eid, other in sorted(inc[nid]):
            if eid not in claimed and graph.edges[eid].root_class == "lateral":
                starts.append((nid, eid, other))
    for nid, eid, other in starts:
        if eid in claimed:
            continue
        claimed.add(eid)
        # collect the branch hanging off this emergence edge
        branch = [eid]
        frontier = [other] if other not in position else []
        seen_nodes = {nid, other}
        while frontier:
            cur = frontier.pop()
            for e2, nxt in sorted(inc[cur]):
                if e2 in claimed:
                    continue
                claimed.add(e2)
                branch.append(e2)
                if nxt not in seen_nodes and nxt not in position:
                    seen_nodes.add(nxt)
                    frontier.append(nxt)
        first = graph.edges[eid]
        first_poly = first.polyline if first.node_a == nid else first.polyline[::-1]
        polyline = _longest_chain(graph, set(branch), eid, other, first_poly, position)
        laterals.append(
            LateralRoot(
                emergence_node=nid,
                base=tuple(int(v) for v in first_poly[0]),
                polyline=polyline,
                edge_ids=tuple(branch),
                length_mm=float(sum(graph.edges[b].length_mm for b in branch)),
            )
        )
    return laterals


def _longest_chain(graph, branch_edges, first_eid, first_far, first_poly, main_position):
    """Longest simple continuation of a lateral through its own branch edges."""
    inc = graph.incident()
    best = (first_poly, path_length_px(first_poly))
    stack = [(first_far, first_poly, {first_eid}, {first_far})]
    explored = 0
    while stack and explored < MAX_SIMPLE_PATHS:
        node, poly, used, nodes_seen = stack.pop()
        explored += 1
        length = path_length_px(poly)
        if length > best[1] + 1e-9:
            best = (poly, length)
        if node in main_position:
            continue
        for eid, other in sorted(inc[node]):
            if eid in used or eid not in branch_edges or other in nodes_seen:
                continue
            e = graph.edges[eid]
            ext = e.polyline if e.node_a == node else e.polyline[::-1]
            stack.append((other, np.concatenate([poly, ext[1:]]), used | {eid}, nodes_seen | {other}))
    return best[0]


@dataclass(frozen=True)
class LateralIdentityMap:
    """Stable lateral-root identities across frames.

    ``assignments`` maps a lateral's index in the current frame (the order of
    ``RootGraph.lateral_roots()``) to its stable id; ``known`` remembers the
    last base position (mm) of every id ever issued.
    """

    tolerance_mm: float = 1.0
    assignments: dict[int, int] = field(default_factory=dict)
    known: dict[int, tuple[float, float]] = field(default_factory=dict)
    next_id: int = 0


def match_laterals(
    laterals: list[LateralRoot] | RootGraph,
    identity: LateralIdentityMap,
    mm_per_pixel: float | None = None,
) -> LateralIdentityMap:
    """Greedy nearest-base matching of current laterals to previously seen ids."""
    if isinstance(laterals, RootGraph):
        mm_per_pixel = laterals.mm_per_pixel
        laterals = laterals.lateral_roots()
    if mm_per_pixel is None:
        raise ValueError("mm_per_pixel is required when passing lateral roots directly")
    bases = [(lr.base[0] * mm_per_pixel, lr.base[1] * mm_per_pixel) for lr in laterals]
    pairs = []
    for i, b in enumerate(bases):
        for sid, k in identity.known.items():
            d = math.hypot(b[0] - k[0], b[1] - k[1])
            if d <= identity.tolerance_mm:
                pairs.append((d, i, sid))
    pairs.sort()
    assignments: dict[int, int] = {}
    used: set[int] = set()
    for d, i, sid in pairs:
        if i in assignments or sid in used:
            continue
        assignments[i] = sid
        used.add(sid)
    next_id = identity.next_id
    for i in range(len(laterals)):
        if i not in assignments:
            assignments[i] = next_id
            next_id += 1
    known = dict(identity.known)
    for i, sid in assignments.items():
        known[sid] = bases[i]
    return LateralIdentityMap(identity.tolerance_mm, assignments, known, next_id)

