import numpy as np

from contactarm import geometry as geo


def test_point_segment_endpoints_and_interior():
    a, b = np.zeros(3), np.array([2.0, 0.0, 0.0])
    t, c = geo.point_segment_closest(np.array([-1.0, 1.0, 0.0]), a, b)
    assert t == 0.0 and np.allclose(c, a)
    t, c = geo.point_segment_closest(np.array([1.0, 5.0, 0.0]), a, b)
    assert abs(t - 0.5) < 1e-12 and np.allclose(c, [1.0, 0.0, 0.0])


def test_segment_segment_crossing():
    *_, dist = geo.segment_segment_closest(
        np.array([-1.0, 0.0, 0.0]),
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, -1.0, 1.0]),
        np.array([0.0, 1.0, 1.0]),
    )
    assert abs(dist - 1.0) < 1e-12


def test_segment_segment_matches_sampled_minimum():
    rng = np.random.default_rng(5)
    ts = np.linspace(0.0, 1.0, 2001)
    for _ in range(40):
        p0, p1, q0, q1 = rng.normal(size=(4, 3))
        *_, dist = geo.segment_segment_closest(p0, p1, q0, q1)
        P = p0 + ts[:, None] * (p1 - p0)
        Q = q0 + ts[:, None] * (q1 - q0)
        brute = np.min(np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2))
        assert dist <= brute + 1e-9
        assert dist >= brute - 2e-3


def test_point_box_outside_and_inside():
    c, h = np.zeros(3), np.array([1.0, 1.0, 1.0])
    d, surf, n = geo.point_box_signed_distance(np.array([3.0, 0.0, 0.0]), c, h)
    assert abs(d - 2.0) < 1e-12
    assert np.allclose(n, [1.0, 0.0, 0.0])
    assert np.allclose(surf, [1.0, 0.0, 0.0])
    d, surf, n = geo.point_box_signed_distance(np.array([0.5, 0.0, 0.0]), c, h)
    assert abs(d + 0.5) < 1e-12
    assert np.allclose(n, [1.0, 0.0, 0.0])


def test_segment_box_closest_matches_sampling():
    rng = np.random.default_rng(9)
    ts = np.linspace(0.0, 1.0, 20001)
    for _ in range(25):
        a = rng.uniform(-3, 3, size=3)
        b = rng.uniform(-3, 3, size=3)
        c = rng.uniform(-1, 1, size=3)
        h = rng.uniform(0.2, 1.5, size=3)
        _, sdist, _, _ = geo.segment_box_closest(a, b, c, h)
        pts = a + ts[:, None] * (b - a)
        brute = min(geo.point_box_signed_distance(p, c, h)[0] for p in pts)
        # ternary search may find a slightly deeper point than the coarse grid
        assert sdist <= brute + 1e-9
        assert sdist >= brute - 1e-3


def test_segment_box_tangent_case():
    # segment grazing the box face plane exactly
    c, h = np.zeros(3), np.array([1.0, 1.0, 1.0])
    a = np.array([-2.0, 1.0, 0.0])
    b = np.array([2.0, 1.0, 0.0])
    _, sdist, _, n = geo.segment_box_closest(a, b, c, h)
    assert abs(sdist) < 1e-9


def test_batched_segment_distance_matches_scalar():
    rng = np.random.default_rng(13)
    a = rng.normal(size=3)
    b = rng.normal(size=3)
    starts = rng.normal(size=(50, 3))
    ends = rng.normal(size=(50, 3))
    batched = geo.segments_to_segment_distance(starts, ends, a, b)
    for i in range(50):
        *_, dist = geo.segment_segment_closest(starts[i], ends[i], a, b)
        assert abs(batched[i] - dist) < 1e-10


def test_rotation_matrix_properties():
    axis = geo.normalize(np.array([1.0, 2.0, -0.5]))
    R = geo.rot_axis_angle(axis, 0.7)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.allclose(R @ axis, axis, atol=1e-12)


def test_orthonormal_frame():
    w = geo.normalize(np.array([0.2, -0.7, 0.4]))
    u, v = geo.orthonormal_frame(w)
    M = np.stack([u, v, w])
    assert np.allclose(M @ M.T, np.eye(3), atol=1e-12)
