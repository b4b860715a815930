"""Contact detection and bookkeeping: boxes, band polyline, reduced Jacobians.

Contact directions n_C point from the environment into the robot, forces are
scalar magnitudes along n_C and are unilateral (never negative).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import kinematics as kin

SOURCE_BOX = "box"
SOURCE_BAND = "band"


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle. stiffness is N/m, or math.inf for a rigid wall."""

    center: np.ndarray
    half_extents: np.ndarray
    stiffness: float = np.inf
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        if np.any(self.half_extents <= 0.0):
            raise ValueError("box half extents must be positive")

    @property
    def rigid(self) -> bool:
        return not np.isfinite(self.stiffness)


@dataclass
class ContactPoint:
    link: int
    p_world: np.ndarray
    p_local: np.ndarray
    n_c: np.ndarray
    penetration: float
    source: tuple  # (SOURCE_BOX, box name) or (SOURCE_BAND, "")

    def __post_init__(self):
        self.n_c = np.asarray(self.n_c, dtype=float)
        n = np.linalg.norm(self.n_c)
        if abs(n - 1.0) > 1e-9:
            self.n_c = self.n_c / n

    @property
    def key(self) -> tuple:
        return (self.link, *self.source)


@dataclass
class ContactSet:
    """Active contacts with stacked force vector and reduced Jacobian."""

    contacts: list
    f_c: np.ndarray
    k_c: np.ndarray  # diagonal entries, one stiffness per contact
    j_u: np.ndarray  # (n_c, n_q)

    def __post_init__(self):
        self.f_c = np.asarray(self.f_c, dtype=float).ravel()
        self.k_c = np.asarray(self.k_c, dtype=float).ravel()
        self.j_u = np.atleast_2d(np.asarray(self.j_u, dtype=float)) if np.size(self.j_u) else np.zeros((0, 0))
        n = len(self.contacts)
        if self.f_c.shape != (n,) or self.k_c.shape != (n,):
            raise ValueError("force/stiffness length must match contact count")
        if np.any(self.f_c < 0.0):
            raise ValueError("contact forces are unilateral (>= 0)")

    @property
    def n_c(self) -> int:
        return len(self.contacts)


def empty_contact_set(n_q: int) -> ContactSet:
    return ContactSet(contacts=[], f_c=np.zeros(0), k_c=np.zeros(0), j_u=np.zeros((0, n_q)))


def detect_contacts(model: kin.RobotModel, q, boxes, band=None, activation_dist: float = 1e-3):
    """Geometric contact candidates at configuration q.

    One contact per (link, box) pair whose capsule-to-box distance is at most
    activation_dist, and one per allowed link touching the band polyline.
    Output is sorted by (link, source kind, source name) so box enumeration
    order never matters.
    """
    if activation_dist < 0.0:
        raise ValueError("activation_dist must be nonnegative")
    q = np.asarray(q, dtype=float)
    frames = kin.forward_kinematics(model, q)
    found = []
    for link in range(model.n_q):
        a, b, r = kin.link_capsule_world(model, frames, link)
        for box in boxes:
            t, sdist, surface, normal = geo.segment_box_closest(a, b, box.center, box.half_extents)
            gap = sdist - r
            if gap <= activation_dist:
                axis_point = a + t * (b - a)
                p_world = axis_point - r * normal
                T_inv = np.linalg.inv(frames[link])
                found.append(
                    ContactPoint(
                        link=link,
                        p_world=p_world,
                        p_local=geo.apply_transform(T_inv, p_world),
                        n_c=normal,
                        penetration=max(r - sdist, 0.0),
                        source=(SOURCE_BOX, box.name),
                    )
                )
        if band is not None and link in model.allowed_links and len(band.path) >= 2:
            dist, cp_seg, cp_poly, _ = geo.segment_polyline_closest(a, b, band.path)
            if dist <= r + activation_dist:
                direction = cp_seg - cp_poly
                nn = np.linalg.norm(direction)
                if nn < 1e-12:
                    continue  # band passes exactly through the axis: degenerate
                n_c = direction / nn
                p_world = cp_seg - r * n_c
                T_inv = np.linalg.inv(frames[link])
                found.append(
                    ContactPoint(
                        link=link,
                        p_world=p_world,
                        p_local=geo.apply_transform(T_inv, p_world),
                        n_c=n_c,
                        penetration=max(r - dist, 0.0),
                        source=(SOURCE_BAND, ""),
                    )
                )
    found.sort(key=lambda c: (c.link, c.source[0], c.source[1]))
    return found


def reduced_jacobian(model: kin.RobotModel, q, contacts) -> np.ndarray:
    """Stack n_C' J_C rows; maps joint velocity to normal contact velocity."""
    q = np.asarray(q, dtype=float)
    rows = np.zeros((len(contacts), model.n_q))
    for i, c in enumerate(contacts):
        J = kin.point_jacobian(model, q, c.link, c.p_local)
        rows[i] = c.n_c @ J
    return rows


def spring_force_update(k_c, j_u, dq, f_prev):
    """Linear spring step: f_next = f_prev - K_c J_u dq, clamped at zero.

    A clamped entry means the unilateral contact let go; callers deactivate
    it.
    """
    k_c = np.asarray(k_c, dtype=float).ravel()
    j_u = np.atleast_2d(np.asarray(j_u, dtype=float))
    dq = np.asarray(dq, dtype=float).ravel()
    f_prev = np.asarray(f_prev, dtype=float).ravel()
    raw = f_prev - k_c * (j_u @ dq)
    return np.maximum(raw, 0.0)
