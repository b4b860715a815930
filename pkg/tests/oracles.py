"""Independent oracles shared across the test suite.

These deliberately avoid the library code paths they are used to check:
finite differences instead of analytic Jacobians, grid search instead of the
QP solver, Dijkstra instead of A*, batch least squares instead of RLS.
"""

import heapq

import numpy as np

from contactarm import geometry as geo
from contactarm import kinematics as kin


def fd_point_jacobian(model, q, link, p_local, h=1e-6):
    """Central finite differences of forward kinematics."""
    J = np.zeros((3, model.n_q))
    for j in range(model.n_q):
        qp = np.asarray(q, dtype=float).copy()
        qm = qp.copy()
        qp[j] += h
        qm[j] -= h
        fp = geo.apply_transform(kin.forward_kinematics(model, qp)[link], p_local)
        fm = geo.apply_transform(kin.forward_kinematics(model, qm)[link], p_local)
        J[:, j] = (fp - fm) / (2.0 * h)
    return J


def grid_search_scalar(objective, lo=-5.0, hi=5.0, step=1e-4, feasible=None):
    xs = np.arange(lo, hi + step, step)
    if feasible is not None:
        xs = xs[feasible(xs)]
    vals = objective(xs)
    return float(xs[np.argmin(vals)])


def dijkstra_cost(adjacency, start, goal):
    """Plain Dijkstra over an adjacency list of (neighbor, weight) pairs."""
    dist = {start: 0.0}
    heap = [(0.0, start)]
    visited = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in visited:
            continue
        visited.add(u)
        if u == goal:
            return d
        for v, w in adjacency[u]:
            nd = d + w
            if v not in visited and nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.inf


def batch_least_squares(H_rows, z_rows):
    """Stacked least squares estimate for scalar regressions."""
    H = np.asarray(H_rows, dtype=float).reshape(-1, 1)
    z = np.asarray(z_rows, dtype=float).ravel()
    sol, *_ = np.linalg.lstsq(H, z, rcond=None)
    return float(sol[0])
