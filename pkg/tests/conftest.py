import numpy as np
import pytest

from contactgrasp.config import PipelineConfig
from contactgrasp.geometry import PointCloud
from contactgrasp.hand import load_hand_model, bundled_hand_path


def box_surface(n=2048, dims=(0.06, 0.04, 0.10), seed=42):
    """Points sampled uniformly over the surface of an origin-centered box."""
    rng = np.random.default_rng(seed)
    d = np.asarray(dims, dtype=float)
    areas = np.array([d[1] * d[2], d[1] * d[2],
                      d[0] * d[2], d[0] * d[2],
                      d[0] * d[1], d[0] * d[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 2))
    pts = np.empty((n, 3))
    for i in range(n):
        ax = face[i] // 2
        rest = [a for a in range(3) if a != ax]
        pts[i, ax] = (0.5 if face[i] % 2 == 0 else -0.5) * d[ax]
        pts[i, rest[0]] = u[i, 0] * d[rest[0]]
        pts[i, rest[1]] = u[i, 1] * d[rest[1]]
    return pts


def cylinder_surface(n=2048, radius=0.035, height=0.14, seed=3, lying=False):
    """Side + caps of a z-aligned cylinder; ``lying`` flips it onto the x axis."""
    rng = np.random.default_rng(seed)
    a_side = 2.0 * np.pi * radius * height
    a_cap = np.pi * radius * radius
    which = rng.choice(3, size=n, p=np.array([a_side, a_cap, a_cap])
                       / (a_side + 2 * a_cap))
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.empty((n, 3))
    for i in range(n):
        if which[i] == 0:
            pts[i] = (radius * np.cos(theta[i]), radius * np.sin(theta[i]),
                      rng.uniform(-height / 2, height / 2))
        else:
            r = radius * np.sqrt(rng.uniform())
            z = height / 2 if which[i] == 1 else -height / 2
            pts[i] = (r * np.cos(theta[i]), r * np.sin(theta[i]), z)
    if lying:
        pts = pts[:, [2, 0, 1]]
    return pts


def sphere_surface(n=2048, radius=0.04, seed=5):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius


def plane_patch(n=1024, side=0.12, seed=8):
    """A flat single-sided patch at z=0 — nothing to oppose against."""
    rng = np.random.default_rng(seed)
    pts = np.zeros((n, 3))
    pts[:, :2] = rng.uniform(-side / 2, side / 2, size=(n, 2))
    return pts


@pytest.fixture(scope="session")
def box_cloud():
    return PointCloud(points=box_surface())


@pytest.fixture(scope="session")
def cyl_cloud():
    return PointCloud(points=cylinder_surface())


@pytest.fixture(scope="session")
def rod_cloud():
    return PointCloud(points=cylinder_surface(radius=0.012, height=0.16,
                                              seed=4, lying=True))


@pytest.fixture(scope="session")
def sphere_cloud():
    return PointCloud(points=sphere_surface())


@pytest.fixture(scope="session")
def plane_cloud():
    return PointCloud(points=plane_patch())


@pytest.fixture(scope="session")
def hand16():
    return load_hand_model(bundled_hand_path("five_finger_16dof"))


@pytest.fixture(scope="session")
def hand2():
    return load_hand_model(bundled_hand_path("planar_two_link"))


@pytest.fixture()
def default_config():
    return PipelineConfig()
