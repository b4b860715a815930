"""Simplified elastic band: shortest wrap path over the robot surface.

The band is reduced to a tuple (b0, b1, d_b, L): fixed anchors, a
mode-dependent deformation direction, and the length of the shortest path
between the anchors that does not pass through the allowed links. The path
is found by A* over a deterministic graph of link-surface samples; vertices
whose outward normal disagrees with the deformation direction carry a
penalty so the path settles on the side the interaction mode prescribes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from . import kinematics as kin

MODE_FREE = 0
MODE_ABOVE = 1
MODE_BELOW = 2
MODES = (MODE_FREE, MODE_ABOVE, MODE_BELOW)


class DisconnectedGraph(Exception):
    """Anchors cannot be joined by any non-penetrating path."""


@dataclass(frozen=True)
class BandSpec:
    """Scenario-level band description: anchors, elastic limit, stiffness."""

    b0: np.ndarray
    b1: np.ndarray
    l_max: float
    k_band: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b0", np.asarray(self.b0, dtype=float))
        object.__setattr__(self, "b1", np.asarray(self.b1, dtype=float))
        if self.l_max < np.linalg.norm(self.b1 - self.b0):
            raise ValueError("l_max shorter than the anchor separation")

    @property
    def rest_length(self) -> float:
        return float(np.linalg.norm(self.b1 - self.b0))


@dataclass
class BandState:
    """Band tuple plus the realized wrap path polyline."""

    b0: np.ndarray
    b1: np.ndarray
    sigma: int
    d_b: np.ndarray
    length: float
    path: np.ndarray  # (M, 3), path[0] == b0, path[-1] == b1

    @property
    def rest_length(self) -> float:
        return float(np.linalg.norm(self.b1 - self.b0))

    @property
    def stretch(self) -> float:
        return self.length - self.rest_length

    def tension_exceeded(self, l_max: float) -> bool:
        return self.length > l_max


@dataclass
class SurfaceGraph:
    """k-NN graph over allowed-link surface samples plus the two anchors."""

    points: np.ndarray       # (N, 3); last two rows are b0, b1
    normals: np.ndarray      # (N, 3); zero rows for the anchors
    link_index: np.ndarray   # (N,); -1 for the anchors
    penalties: np.ndarray    # (N,) vertex mode penalties in {0, 2}
    adjacency: list          # adjacency[i] = list of (j, weight, length)
    b0_index: int
    b1_index: int
    built_at: np.ndarray = field(default=None)


def compute_vertex_penalty(v_normal, b0, b1, d_b) -> float:
    """0 when the normal's component across the anchor line agrees with d_b, else 2.

    The normal is first projected onto the plane orthogonal to the anchor
    direction; a degenerate projection costs nothing.
    """
    u = np.asarray(b1, dtype=float) - np.asarray(b0, dtype=float)
    u = u / np.linalg.norm(u)
    n_band = np.asarray(v_normal, dtype=float) - (v_normal @ u) * u
    if np.linalg.norm(n_band) < 1e-9:
        return 0.0
    return 0.0 if float(np.asarray(d_b) @ n_band) >= 0.0 else 2.0


def _straight_state(spec: BandSpec, sigma: int = MODE_FREE) -> BandState:
    return BandState(
        b0=spec.b0.copy(),
        b1=spec.b1.copy(),
        sigma=sigma,
        d_b=np.zeros(3),
        length=spec.rest_length,
        path=np.vstack([spec.b0, spec.b1]),
    )


def _allowed_capsules(model, frames):
    caps = []
    for link in model.allowed_links:
        a, b, r = kin.link_capsule_world(model, frames, link)
        caps.append((link, a, b, r))
    return caps


def _blocking_links(spec, caps):
    blocked = []
    for link, a, b, r in caps:
        *_, dist = geo.segment_segment_closest(spec.b0, spec.b1, a, b)
        if dist < r - 1e-9:
            blocked.append(link)
    return blocked


def _edges_clear(starts, ends, caps, sag_allow):
    """Batched edge validity: each edge [starts[i], ends[i]] must not cut into
    any allowed capsule deeper than the chord-sag allowance of its grid."""
    ok = np.ones(len(starts), dtype=bool)
    for link, a, b, r in caps:
        dist = geo.segments_to_segment_distance(starts, ends, a, b)
        ok &= dist >= r - sag_allow[link] - 1e-9
    return ok


def build_surface_graph(model, q, b0, b1, sigma, density=20.0, k_neighbors=8,
                        l_max=None, d_b=None) -> SurfaceGraph:
    """Sample allowed-link surfaces near the anchors and wire a k-NN graph.

    Vertices are kept when a path through them could still respect l_max
    (sum of anchor distances at most l_max). Edges are rejected when the
    connecting chord cuts into an allowed capsule deeper than the sampling
    grid's own chord sag, so wrap paths hugging the surface stay legal while
    shortcuts through the interior are not. Mode penalties are folded into
    the incident edge weights, keeping the plain distance-to-goal heuristic
    admissible.
    """
    if density <= 0.0 or k_neighbors < 3:
        raise ValueError("need positive density and k_neighbors >= 3")
    b0 = np.asarray(b0, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    d_b = np.zeros(3) if d_b is None else np.asarray(d_b, dtype=float)
    frames = kin.forward_kinematics(model, q)
    caps = _allowed_capsules(model, frames)
    reach = l_max if l_max is not None else 2.0 * np.linalg.norm(b1 - b0)

    pts_list, nrm_list, idx_list = [], [], []
    sag_allow = {}
    for link, a, b, r in caps:
        pts, nrm = kin.sample_link_surface(model, q, link, density)
        keep = (np.linalg.norm(pts - b0, axis=1) + np.linalg.norm(pts - b1, axis=1)) <= reach
        pts_list.append(pts[keep])
        nrm_list.append(nrm[keep])
        idx_list.append(np.full(int(keep.sum()), link))
        n_ring = max(10, int(round(2.0 * np.pi * r * density)))
        n_ring += n_ring % 2
        sag_allow[link] = r * (1.0 - np.cos(2.0 * np.pi / n_ring))

    if pts_list:
        surf_pts = np.vstack(pts_list)
        surf_nrm = np.vstack(nrm_list)
        surf_idx = np.concatenate(idx_list)
    else:
        surf_pts = np.zeros((0, 3))
        surf_nrm = np.zeros((0, 3))
        surf_idx = np.zeros(0, dtype=int)

    points = np.vstack([surf_pts, b0[None, :], b1[None, :]])
    normals = np.vstack([surf_nrm, np.zeros((2, 3))])
    link_index = np.concatenate([surf_idx, [-1, -1]])
    n_surf = len(surf_pts)
    i0, i1 = n_surf, n_surf + 1

    # vertex penalties, vectorized form of compute_vertex_penalty
    penalties = np.zeros(len(points))
    if n_surf:
        u = (b1 - b0) / np.linalg.norm(b1 - b0)
        n_band = surf_nrm - np.outer(surf_nrm @ u, u)
        proj_norm = np.linalg.norm(n_band, axis=1)
        wrong_side = (n_band @ d_b < 0.0) & (proj_norm >= 1e-9)
        penalties[:n_surf] = np.where(wrong_side, 2.0, 0.0)

    # candidate edges: k nearest neighbors, anchors included
    pairs = set()
    if len(points) > 1:
        tree = cKDTree(points)
        k = min(k_neighbors + 1, len(points))
        _, nbrs = tree.query(points, k=k)
        nbrs = np.atleast_2d(nbrs)
        rows = np.repeat(np.arange(len(points)), nbrs.shape[1])
        cols = nbrs.ravel()
        keep = rows != cols
        lo = np.minimum(rows[keep], cols[keep])
        hi = np.maximum(rows[keep], cols[keep])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    pairs.add((min(i0, i1), max(i0, i1)))  # direct anchor edge, validity-checked below

    pair_arr = np.array(sorted(pairs), dtype=int)
    starts = points[pair_arr[:, 0]]
    ends = points[pair_arr[:, 1]]
    valid = _edges_clear(starts, ends, caps, sag_allow)
    # the straight anchor chord must clear the full capsule radius
    direct_mask = (pair_arr[:, 0] == min(i0, i1)) & (pair_arr[:, 1] == max(i0, i1))
    if direct_mask.any():
        di = int(np.nonzero(direct_mask)[0][0])
        clear = all(
            geo.segment_segment_closest(points[i0], points[i1], a, b)[-1] >= r - 1e-9
            for _, a, b, r in caps
        )
        valid[di] = clear

    lengths = np.linalg.norm(starts - ends, axis=1)
    weights = lengths + 0.5 * (penalties[pair_arr[:, 0]] + penalties[pair_arr[:, 1]])
    adjacency = [[] for _ in range(len(points))]
    for (i, j), w, length, ok in zip(pair_arr.tolist(), weights, lengths, valid):
        if not ok:
            continue
        adjacency[i].append((j, float(w), float(length)))
        adjacency[j].append((i, float(w), float(length)))

    return SurfaceGraph(
        points=points,
        normals=normals,
        link_index=link_index,
        penalties=penalties,
        adjacency=adjacency,
        b0_index=i0,
        b1_index=i1,
        built_at=np.asarray(q, dtype=float).copy(),
    )


def astar_path(graph: SurfaceGraph):
    """A* from b0 to b1 with the distance-to-goal heuristic.

    Edge weights already include the mode penalties, so the heuristic stays
    admissible and the returned cost matches Dijkstra exactly. Returns
    (vertex indices, penalized cost, geometric length).
    """
    goal = graph.b1_index
    goal_pt = graph.points[goal]
    h = np.linalg.norm(graph.points - goal_pt, axis=1)

    start = graph.b0_index
    g_score = {start: 0.0}
    length_score = {start: 0.0}
    parent = {start: -1}
    counter = 0
    heap = [(h[start], counter, start)]
    closed = set()
    while heap:
        _, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        closed.add(u)
        if u == goal:
            order = []
            node = u
            while node != -1:
                order.append(node)
                node = parent[node]
            order.reverse()
            return order, g_score[goal], length_score[goal]
        for v, w, length in graph.adjacency[u]:
            cand = g_score[u] + w
            if v not in closed and cand < g_score.get(v, np.inf):
                g_score[v] = cand
                length_score[v] = length_score[u] + length
                parent[v] = u
                counter += 1
                heapq.heappush(heap, (cand + h[v], counter, v))
    raise DisconnectedGraph("no path between band anchors")


def simplified_eb_model(model, q, sigma, spec: BandSpec, density=20.0,
                        k_neighbors=8) -> BandState:
    """Band state for a robot configuration under interaction mode sigma.

    Mode 0 always yields the straight band. For modes 1 and 2, if no allowed
    link obstructs the straight anchor chord the band falls back to the
    straight (mode 0) state; otherwise the wrap path is the penalized A*
    shortest path over the surface graph, with the deformation direction
    d_b = +/- (b0 - b1) x l_r taken from the lowest-index obstructing link.
    """
    if sigma not in MODES:
        raise ValueError(f"sigma must be one of {MODES}")
    q = np.asarray(q, dtype=float)
    if sigma == MODE_FREE:
        return _straight_state(spec)

    frames = kin.forward_kinematics(model, q)
    caps = _allowed_capsules(model, frames)
    blocked = _blocking_links(spec, caps)
    if not blocked:
        return _straight_state(spec)

    link = min(blocked)
    a, b, _r = next((a, b, r) for lk, a, b, r in caps if lk == link)
    l_r = geo.normalize(b - a)
    sign = 1.0 if sigma == MODE_ABOVE else -1.0
    d_b = sign * np.cross(spec.b0 - spec.b1, l_r)
    nd = np.linalg.norm(d_b)
    d_b = d_b / nd if nd > 1e-12 else np.zeros(3)

    graph = build_surface_graph(
        model, q, spec.b0, spec.b1, sigma,
        density=density, k_neighbors=k_neighbors, l_max=spec.l_max, d_b=d_b,
    )
    order, _cost, length = astar_path(graph)
    path = graph.points[order]
    return BandState(
        b0=spec.b0.copy(), b1=spec.b1.copy(), sigma=sigma,
        d_b=d_b, length=length, path=path,
    )


def band_length_jacobian(model, q, sigma, spec: BandSpec, density=20.0,
                         k_neighbors=8, h=1e-4) -> np.ndarray:
    """Row vector dL/dq by central differences, rebuilding the wrap per sample."""
    q = np.asarray(q, dtype=float)
    row = np.zeros(model.n_q)
    for j in range(model.n_q):
        qp = q.copy()
        qm = q.copy()
        qp[j] += h
        qm[j] -= h
        Lp = simplified_eb_model(model, qp, sigma, spec, density, k_neighbors).length
        Lm = simplified_eb_model(model, qm, sigma, spec, density, k_neighbors).length
        row[j] = (Lp - Lm) / (2.0 * h)
    return row
