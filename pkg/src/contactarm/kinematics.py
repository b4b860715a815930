"""Serial-link arm model: forward kinematics, point Jacobians, link geometry.

Links are capsules, one per revolute joint, expressed in the frame of the
joint that carries them. Joint impedance gains live on the model because the
simulator and every controller read them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo


@dataclass(frozen=True)
class Capsule:
    """Segment-plus-radius volume in the owning link's frame."""

    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True)
class Joint:
    """Revolute joint: unit rotation axis and fixed transform from the parent frame."""

    axis: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", axis / np.linalg.norm(axis))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))


@dataclass
class RobotModel:
    """Kinematic chain with capsule link geometry and joint impedance gains."""

    joints: list
    links: list
    k_q: np.ndarray
    d_q: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    allowed_links: tuple = ()
    ee_link: int = -1
    ee_local: np.ndarray = None

    def __post_init__(self):
        self.k_q = np.asarray(self.k_q, dtype=float).ravel()
        self.d_q = np.asarray(self.d_q, dtype=float).ravel()
        self.q_min = np.asarray(self.q_min, dtype=float).ravel()
        self.q_max = np.asarray(self.q_max, dtype=float).ravel()
        n = len(self.joints)
        if len(self.links) != n:
            raise ValueError("expected one link per joint")
        for arr in (self.k_q, self.d_q, self.q_min, self.q_max):
            if arr.shape != (n,):
                raise ValueError("gain/limit vectors must have one entry per joint")
        if np.any(self.k_q <= 0.0) or np.any(self.d_q <= 0.0):
            raise ValueError("K_q and D_q entries must be positive")
        self.allowed_links = tuple(int(i) for i in self.allowed_links)
        if any(i < 0 or i >= n for i in self.allowed_links):
            raise ValueError("allowed_links out of range")
        if self.ee_link < 0:
            self.ee_link = n - 1
        if self.ee_local is None:
            self.ee_local = self.links[self.ee_link].p1.copy()
        self.ee_local = np.asarray(self.ee_local, dtype=float)

    @property
    def n_q(self) -> int:
        return len(self.joints)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.q_min, self.q_max)

    def within_limits(self, q: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(q >= self.q_min - tol) and np.all(q <= self.q_max + tol))


def _check_q(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float).ravel()
    if q.shape != (model.n_q,):
        raise ValueError(f"expected {model.n_q} joint values, got {q.shape}")
    return q


def forward_kinematics(model: RobotModel, q: np.ndarray) -> list:
    """World transform of every link frame (list of 4x4 arrays)."""
    q = _check_q(model, q)
    frames = []
    T = np.eye(4)
    for i, joint in enumerate(model.joints):
        T = T @ joint.origin @ geo.transform(rotation=geo.rot_axis_angle(joint.axis, q[i]))
        frames.append(T.copy())
    return frames


def link_capsule_world(model: RobotModel, frames: list, link: int):
    """World-frame endpoints and radius of a link capsule."""
    cap = model.links[link]
    T = frames[link]
    return geo.apply_transform(T, cap.p0), geo.apply_transform(T, cap.p1), cap.radius


def ee_position(model: RobotModel, q: np.ndarray, frames=None) -> np.ndarray:
    frames = forward_kinematics(model, q) if frames is None else frames
    return geo.apply_transform(frames[model.ee_link], model.ee_local)


def point_jacobian(model: RobotModel, q: np.ndarray, link: int, p_local: np.ndarray) -> np.ndarray:
    """3 x n_q linear-velocity Jacobian of a material point on a link.

    Columns for joints beyond the supporting link are zero by chain
    structure.
    """
    q = _check_q(model, q)
    if link < 0 or link >= model.n_q:
        raise ValueError(f"invalid link index {link}")
    frames = forward_kinematics(model, q)
    p_world = geo.apply_transform(frames[link], np.asarray(p_local, dtype=float))
    J = np.zeros((3, model.n_q))
    for j in range(link + 1):
        R = frames[j][:3, :3]
        omega = R @ model.joints[j].axis
        origin = frames[j][:3, 3]
        J[:, j] = np.cross(omega, p_world - origin)
    return J


def ee_jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    return point_jacobian(model, q, model.ee_link, model.ee_local)


def sample_link_surface(model: RobotModel, q: np.ndarray, link: int, density: float):
    """Deterministic grid of surface points and outward normals on a link capsule.

    `density` is the grid resolution in samples per meter along each surface
    direction, so doubling it roughly quadruples the point count. Points sit
    exactly at the capsule radius; normals are unit length.

    Returns (points, normals) as (N, 3) arrays in world frame.
    """
    if density <= 0.0:
        raise ValueError("density must be positive")
    q = _check_q(model, q)
    cap = model.links[link]
    frames = forward_kinematics(model, q)

    axis = cap.p1 - cap.p0
    length = float(np.linalg.norm(axis))
    pts, nrm = [], []
    if length > 1e-12:
        w = axis / length
    else:
        w = np.array([0.0, 0.0, 1.0])
    u, v = geo.orthonormal_frame(w)
    r = cap.radius

    n_ring = max(10, int(round(2.0 * np.pi * r * density)))
    n_ring += n_ring % 2  # even count keeps mirror-symmetric scenes symmetric
    angles = 2.0 * np.pi * np.arange(n_ring) / n_ring
    ring_dirs = np.outer(np.cos(angles), u) + np.outer(np.sin(angles), v)

    if length > 1e-12:
        n_axial = max(2, int(round(length * density)) + 1)
        for s in np.linspace(0.0, 1.0, n_axial):
            center = cap.p0 + s * axis
            pts.append(center + r * ring_dirs)
            nrm.append(ring_dirs)

    # spherical caps: latitude bands plus the pole point
    n_lat = max(1, int(round(0.5 * np.pi * r * density)))
    for tip, sign in ((cap.p0, -1.0), (cap.p1, 1.0)):
        for j in range(1, n_lat):
            phi = 0.5 * np.pi * j / n_lat
            band_dirs = np.cos(phi) * ring_dirs + np.sin(phi) * sign * w
            pts.append(tip + r * band_dirs)
            nrm.append(band_dirs)
        pole = (sign * w)[None, :]
        pts.append(tip + r * pole)
        nrm.append(pole)

    points = np.vstack(pts)
    normals = np.vstack(nrm)
    T = frames[link]
    return geo.apply_transform(T, points), normals @ T[:3, :3].T


def planar_arm(link_lengths, radius=0.05, k_q=100.0, d_q=1.0, limit=np.pi,
               axis=(0.0, 0.0, 1.0), allowed_links=()) -> RobotModel:
    """Convenience constructor: serial arm with equal joint axes, links along +x."""
    joints = []
    links = []
    for i, L in enumerate(link_lengths):
        offset = np.zeros(3) if i == 0 else np.array([link_lengths[i - 1], 0.0, 0.0])
        joints.append(Joint(axis=np.asarray(axis, dtype=float), origin=geo.transform(translation=offset)))
        links.append(Capsule(p0=np.zeros(3), p1=np.array([L, 0.0, 0.0]), radius=radius))
    n = len(link_lengths)
    return RobotModel(
        joints=joints,
        links=links,
        k_q=np.full(n, float(k_q)),
        d_q=np.full(n, float(d_q)),
        q_min=np.full(n, -float(limit)),
        q_max=np.full(n, float(limit)),
        allowed_links=allowed_links,
    )
