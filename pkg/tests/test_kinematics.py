import numpy as np
import pytest

from contactarm import geometry as geo
from contactarm import kinematics as kin

from oracles import fd_point_jacobian


@pytest.fixture
def two_link():
    return kin.planar_arm([1.0, 1.0])


def test_fk_straight(two_link):
    frames = kin.forward_kinematics(two_link, np.zeros(2))
    tip = geo.apply_transform(frames[1], np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(tip, [2.0, 0.0, 0.0], atol=1e-12)


def test_fk_bent(two_link):
    frames = kin.forward_kinematics(two_link, np.array([np.pi / 2, 0.0]))
    tip = geo.apply_transform(frames[1], np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(tip, [0.0, 2.0, 0.0], atol=1e-12)


def test_fk_closed_form(two_link):
    q = np.array([np.pi / 4, np.pi / 4])
    frames = kin.forward_kinematics(two_link, q)
    tip = geo.apply_transform(frames[1], np.array([1.0, 0.0, 0.0]))
    expected = [np.cos(np.pi / 4) + np.cos(np.pi / 2), np.sin(np.pi / 4) + np.sin(np.pi / 2), 0.0]
    np.testing.assert_allclose(tip, expected, atol=1e-12)


def test_tip_jacobian_matches_finite_differences(two_link):
    q = np.zeros(2)
    p_local = np.array([1.0, 0.0, 0.0])
    J = kin.point_jacobian(two_link, q, link=1, p_local=p_local)
    np.testing.assert_allclose(J, [[0.0, 0.0], [2.0, 1.0], [0.0, 0.0]], atol=1e-9)
    np.testing.assert_allclose(J, fd_point_jacobian(two_link, q, 1, p_local), atol=1e-6)


def test_one_link_jacobian():
    arm = kin.planar_arm([1.0])
    J = kin.point_jacobian(arm, np.zeros(1), 0, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(J, [[0.0], [1.0], [0.0]], atol=1e-12)
    np.testing.assert_allclose(J, fd_point_jacobian(arm, np.zeros(1), 0, np.array([1.0, 0.0, 0.0])), atol=1e-6)


def test_chain_structure_zero_columns(two_link):
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = rng.uniform(-np.pi, np.pi, size=2)
        J = kin.point_jacobian(two_link, q, link=0, p_local=np.array([0.5, 0.0, 0.0]))
        np.testing.assert_allclose(J[:, 1], 0.0, atol=1e-15)


def test_jacobian_random_configurations():
    rng = np.random.default_rng(42)
    model = kin.planar_arm([0.6, 0.5, 0.4], axis=(0.0, 1.0, 0.0))
    for _ in range(100):
        q = rng.uniform(-1.5, 1.5, size=3)
        link = int(rng.integers(0, 3))
        p_local = rng.uniform(-0.2, 0.5, size=3)
        J = kin.point_jacobian(model, q, link, p_local)
        J_fd = fd_point_jacobian(model, q, link, p_local)
        scale = max(1.0, np.abs(J_fd).max())
        assert np.abs(J - J_fd).max() / scale <= 1e-5


def test_fk_rigidity(two_link):
    # distances between material points on one link never change with q
    rng = np.random.default_rng(8)
    a_local = np.array([0.2, 0.03, -0.01])
    b_local = np.array([0.9, -0.04, 0.02])
    ref = None
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, size=2)
        frames = kin.forward_kinematics(two_link, q)
        d = np.linalg.norm(
            geo.apply_transform(frames[1], a_local) - geo.apply_transform(frames[1], b_local)
        )
        ref = d if ref is None else ref
        assert abs(d - ref) <= 1e-12


def test_surface_samples_on_capsule():
    model = kin.planar_arm([0.8], radius=0.1)
    q = np.array([0.3])
    pts, nrm = kin.sample_link_surface(model, q, 0, density=25.0)
    frames = kin.forward_kinematics(model, q)
    a, b, r = kin.link_capsule_world(model, frames, 0)
    for p in pts:
        _, c = geo.point_segment_closest(p, a, b)
        assert abs(np.linalg.norm(p - c) - r) <= 1e-9
    np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-12)


def test_surface_density_doubling():
    model = kin.planar_arm([0.8], radius=0.1)
    q = np.zeros(1)
    n1 = len(kin.sample_link_surface(model, q, 0, density=40.0)[0])
    n2 = len(kin.sample_link_surface(model, q, 0, density=80.0)[0])
    assert 3.5 <= n2 / n1 <= 4.5


def test_dimension_mismatch_rejected(two_link):
    with pytest.raises(ValueError):
        kin.forward_kinematics(two_link, np.zeros(3))
    with pytest.raises(ValueError):
        kin.point_jacobian(two_link, np.zeros(2), 5, np.zeros(3))
