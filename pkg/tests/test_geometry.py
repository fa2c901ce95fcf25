import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from contactgrasp.errors import DegenerateCloud
from contactgrasp.geometry import (PointCloud, canonicalize, compute_pca,
                                   detect_cylindricality, rot_x, rot_y, rot_z,
                                   rotation_about_axis, rotation_angle,
                                   slice_cloud)
from conftest import box_surface, cylinder_surface


def box_volume(n, dims, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, size=(n, 3)) * np.asarray(dims, dtype=float)


# ---------------------------------------------------------------- compute_pca

def test_pca_elongated_box_dominant_axis_is_plus_x():
    cloud = PointCloud(points=box_volume(4000, (2.0, 1.0, 0.5)))
    axes = compute_pca(cloud)
    assert abs(axes.axes[0] @ np.array([1.0, 0, 0])) > 0.999
    assert axes.axes[0, 0] > 0  # sign canonicalized
    assert axes.variances[0] > axes.variances[1] > axes.variances[2]


def test_pca_centroid_is_mean():
    pts = box_volume(500, (1, 1, 1), seed=2) + np.array([0.3, -0.2, 0.9])
    axes = compute_pca(PointCloud(points=pts))
    assert np.allclose(axes.centroid, pts.mean(axis=0), atol=1e-12)


def test_pca_repeated_point_degenerate():
    pts = np.tile(np.array([[0.1, 0.2, 0.3]]), (5, 1))
    with pytest.raises(DegenerateCloud):
        compute_pca(PointCloud(points=pts))


def test_pca_too_few_points():
    with pytest.raises(DegenerateCloud):
        compute_pca(PointCloud(points=np.array([[0., 0, 0], [1., 0, 0]])))


def test_pca_collinear_rejected():
    t = np.linspace(0, 1, 50)
    pts = np.outer(t, np.array([1.0, 2.0, -0.5]))
    with pytest.raises(DegenerateCloud):
        compute_pca(PointCloud(points=pts))


def test_pca_upright_cylinder_axis_within_2_degrees_of_z():
    pts = cylinder_surface(n=1000, radius=0.03, height=0.30, seed=1)
    axes = compute_pca(PointCloud(points=pts))
    ang = np.degrees(np.arccos(min(1.0, abs(axes.axes[0, 2]))))
    assert ang < 2.0


def test_pca_matches_svd_of_centered_points():
    pts = box_volume(800, (0.9, 0.5, 0.2), seed=7)
    axes = compute_pca(PointCloud(points=pts))
    centered = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    for i in range(3):
        assert abs(abs(axes.axes[i] @ vt[i]) - 1.0) < 1e-9
        assert abs(axes.variances[i] - s[i] ** 2 / len(pts)) < 1e-12


def test_pca_rotation_equivariance():
    rng = np.random.default_rng(12)
    pts = box_volume(600, (1.2, 0.6, 0.3), seed=3)
    base = compute_pca(PointCloud(points=pts))
    for _ in range(10):
        quat = rng.normal(size=4)
        rot = Rotation.from_quat(quat / np.linalg.norm(quat)).as_matrix()
        turned = compute_pca(PointCloud(points=pts @ rot.T))
        assert np.allclose(turned.variances, base.variances, atol=1e-9)
        for i in range(3):
            assert abs(abs(turned.axes[i] @ (rot @ base.axes[i])) - 1.0) < 1e-6


# ------------------------------------------------------- detect_cylindricality

def test_cylindricality_cylinder_true():
    pts = cylinder_surface(n=1000, radius=0.03, height=0.30, seed=1)
    axes = compute_pca(PointCloud(points=pts))
    assert detect_cylindricality(axes.variances, 1.5)


def test_cylindricality_cube_false():
    axes = compute_pca(PointCloud(points=box_volume(3000, (1, 1, 1), seed=4)))
    assert not detect_cylindricality(axes.variances, 1.5)


def test_cylindricality_flat_plate_false():
    axes = compute_pca(PointCloud(points=box_volume(3000, (2, 2, 0.05), seed=5)))
    assert not detect_cylindricality(axes.variances, 1.5)


def test_cylindricality_zero_minor_variance_false():
    assert not detect_cylindricality(np.array([1.0, 0.0, 0.0]), 1.5)


# ----------------------------------------------------------------- canonicalize

def mirrored_box(n, half, seed):
    """Box sample mirrored across all three coordinate planes.

    The eightfold symmetry makes the sample covariance exactly diagonal,
    so the principal axes are the coordinate axes to machine precision
    (a plain random sample is only aligned to ~1e-2).
    """
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.05, 1.0, size=(n, 3)) * np.asarray(half, dtype=float)
    signs = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1)
                      for sz in (1, -1)], dtype=float)
    return (signs[:, None, :] * base[None, :, :]).reshape(-1, 3)


def test_canonicalize_already_canonical_box_identity():
    pts = mirrored_box(250, (0.45, 0.25, 0.10), seed=6)
    cloud = PointCloud(points=pts)
    pose, canon = canonicalize(cloud, compute_pca(cloud))
    assert np.linalg.norm(pose.rotation - np.eye(3)) < 1e-9
    assert np.allclose(canon.points, pts - pts.mean(axis=0), atol=1e-10)


def test_canonicalize_undoes_90_degree_z_rotation():
    pts = mirrored_box(250, (0.45, 0.25, 0.10), seed=6)
    turned = pts @ rot_z(np.pi / 2).T
    cloud = PointCloud(points=turned)
    pose, canon = canonicalize(cloud, compute_pca(cloud))
    assert np.linalg.norm(pose.rotation - rot_z(-np.pi / 2)) < 1e-9
    assert np.allclose(canon.points, pts - pts.mean(axis=0), atol=1e-9)


def test_canonicalize_cylindrical_recovers_yaw():
    pts = cylinder_surface(n=1500, radius=0.012, height=0.16, seed=4,
                           lying=True)
    cloud = PointCloud(points=pts)
    axes = compute_pca(cloud)
    pose0, canon0 = canonicalize(cloud, axes, cylindrical=True)

    yaw = np.deg2rad(30.0)
    turned = PointCloud(points=pts @ rot_z(yaw).T)
    pose1, canon1 = canonicalize(turned, compute_pca(turned), cylindrical=True)

    assert pose1.cylindrical
    assert np.linalg.norm(pose1.rotation - rot_z(-yaw) @ pose0.rotation) < 1e-6
    assert np.allclose(canon1.points, canon0.points, atol=1e-9)


def test_canonicalize_cylindrical_upright_keeps_z():
    pts = cylinder_surface(n=1500, radius=0.035, height=0.14, seed=3)
    cloud = PointCloud(points=pts)
    pose, _ = canonicalize(cloud, compute_pca(cloud), cylindrical=True)
    assert np.allclose(pose.rotation @ np.array([0, 0, 1.0]),
                       np.array([0, 0, 1.0]), atol=1e-12)


def test_canonicalize_idempotent():
    pts = box_volume(2000, (1.4, 0.7, 0.3), seed=9) @ rot_y(0.4).T
    cloud = PointCloud(points=pts)
    _, canon = canonicalize(cloud, compute_pca(cloud))
    pose2, _ = canonicalize(canon, compute_pca(canon))
    assert np.linalg.norm(pose2.rotation - np.eye(3)) < 1e-6


# ------------------------------------------------------------------ slice_cloud

def test_slice_uniform_ladder_one_point_each():
    z = np.arange(0.05, 1.0, 0.1)
    pts = np.zeros((10, 3))
    pts[:, 2] = z
    slices = slice_cloud(PointCloud(points=pts), np.array([0, 0, 1.0]), 10)
    assert len(slices) == 10
    assert all(len(s) == 1 for s in slices)
    # order follows the projection
    assert [int(s[0]) for s in slices] == list(range(10))


def test_slice_single_bin_returns_everything():
    cloud = PointCloud(points=box_volume(77, (1, 1, 1), seed=10))
    slices = slice_cloud(cloud, np.array([1.0, 0, 0]), 1)
    assert len(slices) == 1
    assert sorted(slices[0].tolist()) == list(range(77))


def test_slice_conservation_and_disjointness():
    rng = np.random.default_rng(11)
    cloud = PointCloud(points=rng.normal(size=(500, 3)))
    for n_slices in (2, 3, 8, 13):
        slices = slice_cloud(cloud, np.array([0.3, -0.5, 0.8]), n_slices)
        flat = np.concatenate([s for s in slices])
        assert len(flat) == 500
        assert len(np.unique(flat)) == 500


def test_slice_counts_near_uniform_on_cylinder_side():
    # caps excluded: only the lateral surface is uniform along z
    rng = np.random.default_rng(13)
    n = 4096
    theta = rng.uniform(0, 2 * np.pi, n)
    pts = np.column_stack([0.035 * np.cos(theta), 0.035 * np.sin(theta),
                           rng.uniform(-0.07, 0.07, n)])
    slices = slice_cloud(PointCloud(points=pts), np.array([0, 0, 1.0]), 8)
    for s in slices:
        assert abs(len(s) - n / 8) < 0.2 * n / 8


def test_slice_zero_span_degenerate():
    pts = np.zeros((20, 3))
    pts[:, 0] = np.linspace(0, 1, 20)
    with pytest.raises(DegenerateCloud):
        slice_cloud(PointCloud(points=pts), np.array([0, 0, 1.0]), 4)


# ------------------------------------------------------------- rotation helpers

def test_rot_helpers_match_scipy():
    for theta in (-1.2, 0.0, 0.4, 2.9):
        assert np.allclose(rot_x(theta),
                           Rotation.from_euler("x", theta).as_matrix(), atol=1e-12)
        assert np.allclose(rot_y(theta),
                           Rotation.from_euler("y", theta).as_matrix(), atol=1e-12)
        assert np.allclose(rot_z(theta),
                           Rotation.from_euler("z", theta).as_matrix(), atol=1e-12)


def test_rotation_about_axis_matches_scipy():
    rng = np.random.default_rng(14)
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(-np.pi, np.pi)
        want = Rotation.from_rotvec(theta * axis).as_matrix()
        assert np.allclose(rotation_about_axis(axis, theta), want, atol=1e-12)


def test_rotation_angle_known_values():
    assert rotation_angle(np.eye(3)) == 0.0
    assert abs(rotation_angle(rot_z(0.7)) - 0.7) < 1e-12
    assert abs(rotation_angle(rot_x(np.pi)) - np.pi) < 1e-9
