"""Point-cloud geometry: PCA pose analysis, canonical alignment, slicing.

All clouds are plain numpy arrays wrapped in :class:`PointCloud`. Units are
meters throughout; frames are right-handed with z up.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateCloud

# Relative eigenvalue floor below which the cloud counts as collinear.
_COLLINEAR_RTOL = 1e-10
_ABS_VAR_FLOOR = 1e-18


@dataclass
class PointCloud:
    """N x 3 point set, optionally with per-point outward unit normals."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DegenerateCloud(f"points must be Nx3, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateCloud("points contain non-finite values")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float)
            if self.normals.shape != self.points.shape:
                raise DegenerateCloud("normals shape does not match points")
            norms = np.linalg.norm(self.normals, axis=1)
            if not np.all(np.isfinite(norms)) or np.any(np.abs(norms - 1.0) > 1e-6):
                raise DegenerateCloud("normals must be unit length")

    def __len__(self):
        return self.points.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def extents(self) -> np.ndarray:
        """Axis-aligned bounding-box extents (3,)."""
        return self.points.max(axis=0) - self.points.min(axis=0)


@dataclass
class PrincipalAxes:
    """Principal directions of a cloud, strongest first.

    axes: 3x3, row i is the unit direction with variance ``variances[i]``.
    Variances descend; each axis has its largest-magnitude component
    positive so repeated runs agree on signs.
    """

    axes: np.ndarray
    variances: np.ndarray
    centroid: np.ndarray


@dataclass
class CanonicalPose:
    """Rigid transform that carried a cloud into its canonical frame.

    The canonical cloud is ``rotation @ (p - centroid)`` per point.
    ``cylindrical`` records that only a z-rotation was applied.
    """

    rotation: np.ndarray
    centroid: np.ndarray
    cylindrical: bool = False


def compute_pca(cloud: PointCloud) -> PrincipalAxes:
    """Principal component analysis of a cloud.

    Covariance uses the 1/N convention. Raises DegenerateCloud when the
    cloud has fewer than 3 points or all points are collinear (the second
    principal variance vanishes), since no stable frame exists then.
    """
    pts = cloud.points
    if len(pts) < 3:
        raise DegenerateCloud(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    # eigh: ascending eigenvalues for a symmetric matrix; flip to descending.
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    variances = np.clip(w[order], 0.0, None)
    axes = v[:, order].T.copy()
    if variances[0] <= _ABS_VAR_FLOOR:
        raise DegenerateCloud("cloud has no spatial extent")
    if variances[1] <= _COLLINEAR_RTOL * variances[0]:
        raise DegenerateCloud("points are collinear")
    # Deterministic signs: make the largest-|.| component of each axis positive.
    for i in range(3):
        j = np.argmax(np.abs(axes[i]))
        if axes[i, j] < 0:
            axes[i] = -axes[i]
    return PrincipalAxes(axes=axes, variances=variances, centroid=centroid)


def detect_cylindricality(variances: np.ndarray, ratio_threshold: float = 1.5) -> bool:
    """True when one axis dominates and the other two are comparable.

    That is variances[0]/variances[1] > ratio_threshold while
    variances[1]/variances[2] <= ratio_threshold.
    """
    v = np.asarray(variances, dtype=float)
    if v[2] <= 0.0:
        return False  # two vanishing minor variances cannot be comparable
    return (v[0] / v[1] > ratio_threshold) and (v[1] / v[2] <= ratio_threshold)


def canonicalize(cloud: PointCloud, axes: PrincipalAxes,
                 cylindrical: bool = False) -> tuple[CanonicalPose, PointCloud]:
    """Center the cloud and rotate it into its canonical frame.

    Non-cylindrical: the principal axes map onto +x/+y/+z. When the
    sign-fixed PCA triple is left-handed, the middle axis is flipped; this
    keeps the dominant axis on +x and the minor (usually near-vertical)
    axis on +z, so upright content is not turned upside down.

    Cylindrical: rotational symmetry about the cylinder axis makes a full
    alignment meaningless, so only a rotation about world z is applied,
    bringing the horizontal trace of the principal frame onto +x.
    """
    centroid = axes.centroid
    if cylindrical:
        h = axes.axes[0].copy()
        h[2] = 0.0
        if np.linalg.norm(h) < 1e-9:
            h = axes.axes[1].copy()
            h[2] = 0.0
        if np.linalg.norm(h) < 1e-9:
            rot = np.eye(3)
        else:
            theta = np.arctan2(h[1], h[0])
            rot = rot_z(-theta)
        pose = CanonicalPose(rotation=rot, centroid=centroid, cylindrical=True)
    else:
        a = axes.axes.copy()
        if np.linalg.det(a.T) < 0.0:
            a[1] = np.cross(a[2], a[0])  # restore right-handedness
        rot = a  # rows are the target basis -> rot @ axes[i] = e_i
        pose = CanonicalPose(rotation=rot, centroid=centroid, cylindrical=False)
    pts = (cloud.points - centroid) @ pose.rotation.T
    normals = None
    if cloud.normals is not None:
        normals = cloud.normals @ pose.rotation.T
    return pose, PointCloud(points=pts, normals=normals)


def slice_cloud(cloud: PointCloud, axis: np.ndarray, n_slices: int) -> list[np.ndarray]:
    """Partition point indices into equal-width bins along a direction.

    Intervals are half-open [lo, hi) over the projection span except the
    last, which is closed so the maximum point lands in the final slice.
    Every index appears in exactly one slice. Raises DegenerateCloud when
    the span along the axis is zero.
    """
    if n_slices < 1:
        raise DegenerateCloud(f"n_slices must be >= 1, got {n_slices}")
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    proj = cloud.points @ axis
    lo, hi = proj.min(), proj.max()
    span = hi - lo
    if span <= 0.0:
        raise DegenerateCloud("cloud has zero extent along slicing axis")
    idx = np.floor((proj - lo) / span * n_slices).astype(int)
    np.clip(idx, 0, n_slices - 1, out=idx)
    return [np.flatnonzero(idx == i) for i in range(n_slices)]


# --- small rotation helpers used across modules ---

def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def rotation_about_axis(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rodrigues rotation matrix about an arbitrary unit axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic magnitude of a rotation matrix (axis-angle norm)."""
    t = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(t, -1.0, 1.0)))
