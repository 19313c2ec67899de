import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dh2comp.geometry import Box3, bounding_box, diam, dist, make_sphere_cloud, random_sphere_cloud, read_xyz, write_xyz

coords = hnp.arrays(np.float64, (3,), elements=st.floats(-10, 10))


def test_mesh_m16_has_2048_points():
    assert len(make_sphere_cloud(16)) == 2048


def test_mesh_m1_one_point_per_octant():
    pts = make_sphere_cloud(1).points
    assert pts.shape == (8, 3)
    octants = {tuple(np.sign(p).astype(int)) for p in pts}
    assert len(octants) == 8


def test_mesh_m4_points_on_unit_sphere():
    pts = make_sphere_cloud(4).points
    assert pts.shape == (128, 3)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) <= 1e-12


@pytest.mark.parametrize("m", [2, 3, 5])
def test_mesh_points_distinct(m):
    pts = make_sphere_cloud(m).points
    assert len(np.unique(np.round(pts, 12), axis=0)) == 8 * m * m


def test_mesh_rejects_zero():
    with pytest.raises(ValueError):
        make_sphere_cloud(0)


def test_random_cloud_on_sphere_and_seeded():
    a = random_sphere_cloud(50, seed=3).points
    b = random_sphere_cloud(50, seed=3).points
    np.testing.assert_array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)


def test_bounding_box_two_points():
    b = bounding_box(np.array([[0.0, 0, 0], [1, 2, 3]]))
    np.testing.assert_array_equal(b.lower, [0, 0, 0])
    np.testing.assert_array_equal(b.upper, [1, 2, 3])


def test_bounding_box_single_point_is_degenerate():
    p = np.array([[0.3, -1.0, 2.0]])
    b = bounding_box(p)
    np.testing.assert_array_equal(b.lower, b.upper)
    assert diam(b) == 0.0


def test_bounding_box_empty_raises():
    with pytest.raises(ValueError):
        bounding_box(np.zeros((0, 3)))


def test_bounding_box_is_minimal():
    pts = np.random.default_rng(0).standard_normal((100, 3))
    b = bounding_box(pts)
    assert np.all(b.contains(pts))
    for axis in range(3):
        for side in (0, 1):
            lo, hi = b.lower.copy(), b.upper.copy()
            if side == 0:
                lo[axis] += 1e-9
            else:
                hi[axis] -= 1e-9
            assert not np.all(Box3(lo, hi).contains(pts))


def test_dist_separated_cubes():
    a = Box3(np.zeros(3), np.ones(3))
    b = Box3(np.full(3, 3.0), np.full(3, 4.0))
    assert dist(a, b) == pytest.approx(2 * np.sqrt(3), abs=1e-14)


def test_dist_self_and_diam():
    a = Box3(np.zeros(3), np.ones(3))
    assert dist(a, a) == 0.0
    assert diam(a) == pytest.approx(np.sqrt(3), abs=1e-15)


def test_invalid_box_rejected():
    with pytest.raises(ValueError):
        Box3(np.ones(3), np.zeros(3))


@given(coords, coords, coords, coords)
def test_dist_bounded_by_center_distance(p1, q1, p2, q2):
    b1 = Box3(np.minimum(p1, q1), np.maximum(p1, q1))
    b2 = Box3(np.minimum(p2, q2), np.maximum(p2, q2))
    assert dist(b1, b2) <= np.linalg.norm(b1.center - b2.center) + 1e-12
    assert dist(b1, b2) == pytest.approx(dist(b2, b1))


@settings(max_examples=50)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=st.floats(-5, 5)))
def test_pairwise_distance_bounded_by_diam(pts):
    b = bounding_box(pts)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    assert d.max() <= diam(b) * (1 + 1e-12) + 1e-12
    assert np.all(b.contains(pts))


def test_xyz_roundtrip(tmp_path):
    pts = make_sphere_cloud(3).points
    path = tmp_path / "cloud.xyz"
    write_xyz(path, pts)
    np.testing.assert_array_equal(read_xyz(path), pts)
