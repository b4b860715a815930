"""Closed-form distance queries between segments, capsules, boxes and polylines.

All queries are deterministic and allocation-light; they back contact
detection, band wrapping and planner validity checks.
"""

from __future__ import annotations

import numpy as np


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero vector")
    return v / n


def point_segment_closest(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Closest point on segment [a, b] to p. Returns (t, closest)."""
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return 0.0, a.copy()
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return t, a + t * ab


def segment_segment_closest(p0, p1, q0, q1):
    """Closest points between segments [p0,p1] and [q0,q1].

    Returns (s, t, cp, cq, dist) with cp = p0 + s*(p1-p0), cq = q0 + t*(q1-q0).
    Standard clamped quadratic minimization (Ericson, Real-Time Collision
    Detection, 5.1.9).
    """
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a < 1e-18 and e < 1e-18:
        s, t = 0.0, 0.0
    elif a < 1e-18:
        s = 0.0
        t = float(np.clip(f / e, 0.0, 1.0))
    else:
        c = float(d1 @ r)
        if e < 1e-18:
            t = 0.0
            s = float(np.clip(-c / a, 0.0, 1.0))
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = float(np.clip(-c / a, 0.0, 1.0))
            elif t > 1.0:
                t = 1.0
                s = float(np.clip((b - c) / a, 0.0, 1.0))
    cp = p0 + s * d1
    cq = q0 + t * d2
    return s, t, cp, cq, float(np.linalg.norm(cp - cq))


def point_box_signed_distance(p, center, half):
    """Signed distance from p to an axis-aligned box, with outward normal.

    Returns (sdist, surface_point, normal). Negative sdist means p is inside;
    the normal is then that of the nearest face (lowest axis index on ties).
    """
    d = np.abs(p - center) - half
    if np.any(d > 0.0):
        q = np.maximum(d, 0.0)
        dist = float(np.linalg.norm(q))
        closest = np.clip(p, center - half, center + half)
        return dist, closest, (p - closest) / dist
    k = int(np.argmax(d))
    sgn = 1.0 if p[k] >= center[k] else -1.0
    normal = np.zeros(3)
    normal[k] = sgn
    surface = p.copy()
    surface[k] = center[k] + sgn * half[k]
    return float(d[k]), surface, normal


def segment_box_closest(a, b, center, half, iters: int = 90):
    """Minimize the box signed distance over the segment [a, b].

    The signed distance to a convex set is convex, so ternary search over the
    segment parameter converges to the global minimum (deepest point when the
    segment enters the box). Returns (t, sdist, surface_point, normal).
    """

    def sd(t):
        return point_box_signed_distance(a + t * (b - a), center, half)[0]

    def ternary(keep_left: bool) -> float:
        lo, hi = 0.0, 1.0
        for _ in range(iters):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            s1, s2 = sd(m1), sd(m2)
            take_right = s1 > s2 or (s1 == s2 and not keep_left)
            if take_right:
                lo = m1
            else:
                hi = m2
        return 0.5 * (lo + hi)

    # flat minima (segment parallel to a face) form a plateau; bracket it
    # from both sides and use the midpoint so the contact normal is clean
    t_left = ternary(keep_left=True)
    t_right = ternary(keep_left=False)
    t = 0.5 * (t_left + t_right)
    if sd(t) > min(sd(t_left), sd(t_right)) + 1e-15:
        t = t_left if sd(t_left) <= sd(t_right) else t_right
    sdist, surface, normal = point_box_signed_distance(a + t * (b - a), center, half)
    return t, sdist, surface, normal


def segment_polyline_closest(a, b, polyline: np.ndarray):
    """Closest approach between segment [a, b] and a polyline (M, 3).

    Returns (dist, cp_seg, cp_poly, segment_index).
    """
    best = (np.inf, None, None, -1)
    for i in range(len(polyline) - 1):
        s, t, cp, cq, dist = segment_segment_closest(a, b, polyline[i], polyline[i + 1])
        if dist < best[0]:
            best = (dist, cp, cq, i)
    return best


def segments_to_segment_distance(starts: np.ndarray, ends: np.ndarray, a, b) -> np.ndarray:
    """Batched min distance from each segment (starts[i], ends[i]) to [a, b].

    Vectorized version of segment_segment_closest used for graph edge
    validity, where thousands of candidate edges are tested per build.
    """
    d1 = ends - starts           # (N, 3)
    d2 = b - a                   # (3,)
    r = starts - a               # (N, 3)
    aa = np.einsum("ij,ij->i", d1, d1)
    e = float(d2 @ d2)
    f = r @ d2
    c = np.einsum("ij,ij->i", d1, r)
    bb = d1 @ d2

    s = np.zeros(len(starts))
    t = np.zeros(len(starts))
    if e < 1e-18:
        np.divide(-c, aa, out=s, where=aa > 1e-18)
        s = np.clip(s, 0.0, 1.0)
    else:
        denom = aa * e - bb * bb
        s = np.where(denom > 1e-18, np.clip((bb * f - c * e) / np.where(denom > 1e-18, denom, 1.0), 0.0, 1.0), 0.0)
        t = (bb * s + f) / e
        low = t < 0.0
        high = t > 1.0
        t = np.clip(t, 0.0, 1.0)
        s = np.where(low, np.clip(-c / np.where(aa > 1e-18, aa, 1.0), 0.0, 1.0), s)
        s = np.where(high, np.clip((bb - c) / np.where(aa > 1e-18, aa, 1.0), 0.0, 1.0), s)
        s = np.where(aa > 1e-18, s, 0.0)
    cp = starts + s[:, None] * d1
    cq = a + t[:, None] * d2[None, :]
    return np.linalg.norm(cp - cq, axis=1)


def rot_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def transform(rotation: np.ndarray = None, translation: np.ndarray = None) -> np.ndarray:
    """Build a 4x4 rigid transform."""
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if translation is not None:
        T[:3, 3] = translation
    return T


def apply_transform(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 transform to one point (3,) or a stack (N, 3)."""
    R = T[:3, :3]
    p = T[:3, 3]
    return points @ R.T + p


def orthonormal_frame(w: np.ndarray):
    """Two unit vectors completing w to a right-handed frame, deterministically."""
    k = int(np.argmin(np.abs(w)))
    e = np.zeros(3)
    e[k] = 1.0
    u = normalize(np.cross(w, e))
    v = np.cross(w, u)
    return u, v
