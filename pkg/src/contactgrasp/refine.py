"""Collision-aware grasp refinement with a lightweight PD proxy.

Joints track the retargeted pose under PD control in a kinematic
simulation (unit joint inertia, semi-implicit Euler). Fingertips are
spheres; a penalty spring pushes back once a sphere overlaps the cloud,
and any finger whose contact force crosses the freeze threshold has its
whole chain's target pinned at the current angles, so it stops pressing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .contacts import estimate_normals
from .geometry import PointCloud
from .hand import HandModel, clamp_to_limits, forward_kinematics


@dataclass
class GraspPose:
    rotation: np.ndarray     # world-from-wrist (3,3)
    translation: np.ndarray  # wrist origin, world (3,)
    q: np.ndarray            # joint angles (J,)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        self.q = np.asarray(self.q, dtype=float)


@dataclass
class RefineConfig:
    kp: float = 50.0
    kd: float = 14.0
    dt: float = 0.005
    max_steps: int = 1200
    freeze_force: float = 2.0        # proxy newtons
    stiffness: float = 1000.0        # N/m penalty spring
    fingertip_radius: float = 0.008
    penetration_tol: float = 0.001
    settle_vel: float = 1e-4


@dataclass
class RefineResult:
    final_pose: GraspPose
    frozen_fingers: list[str]
    frozen_joints: list[str]
    freeze_events: list[tuple[int, str]]   # (step, finger), in freeze order
    max_penetration: float                 # worst surface crossing seen
    final_penetration: float               # surface crossing at rest
    steps_used: int
    converged: bool


def fingertip_contact_force(tip: np.ndarray, cloud: PointCloud,
                            stiffness: float = 1000.0,
                            radius: float = 0.008) -> np.ndarray:
    """Penalty force on a spherical fingertip from the nearest cloud point.

    Magnitude stiffness * max(0, radius - nearest distance), directed from
    the surface point toward the tip center (straight up when the two
    coincide exactly).
    """
    tree = cKDTree(cloud.points)
    return _tip_force(np.asarray(tip, dtype=float), tree, cloud.points,
                      stiffness, radius)[0]


def _tip_force(tip, tree, pts, stiffness, radius):
    d, i = tree.query(tip)
    overlap = radius - d
    if overlap <= 0.0:
        return np.zeros(3), int(i), float(d)
    if d < 1e-12:
        direction = np.array([0.0, 0.0, 1.0])
    else:
        direction = (tip - pts[i]) / d
    return stiffness * overlap * direction, int(i), float(d)


def pd_step(model: HandModel, q: np.ndarray, qd: np.ndarray, q_desired: np.ndarray,
            config: RefineConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One semi-implicit Euler step of the unit-inertia PD law.

    Returns (torque, next q, next qd); q is clamped to the joint box.
    """
    tau = config.kp * (q_desired - q) - config.kd * qd
    qd_next = qd + config.dt * tau
    q_next = clamp_to_limits(model, q + config.dt * qd_next)
    return tau, q_next, qd_next


def simulate_refinement(model: HandModel, cloud: PointCloud, pose: GraspPose,
                        q_desired: np.ndarray,
                        config: RefineConfig | None = None) -> RefineResult:
    """Drive the hand toward q_desired, freezing fingers on hard contact.

    The wrist stays fixed at the given pose. Once a fingertip's penalty
    force exceeds freeze_force, every joint on that finger's chain has its
    target replaced by the current angle, and the set of frozen fingers
    only grows. Penetration is measured as how far a tip center crosses
    the local surface plane (cloud normals, estimated when absent), so a
    touching fingertip scores zero.

    Runs to max_steps unless all joint speeds settle below settle_vel;
    the result's ``converged`` flag records which happened.
    """
    config = config or RefineConfig()
    pts = cloud.points
    tree = cKDTree(pts)
    normals = cloud.normals
    if normals is None:
        normals = estimate_normals(cloud, np.arange(len(pts)))

    q = clamp_to_limits(model, pose.q)
    qd = np.zeros_like(q)
    target = clamp_to_limits(model, np.asarray(q_desired, dtype=float)).copy()

    frozen: set[int] = set()
    events: list[tuple[int, str]] = []
    max_pen = 0.0
    final_pen = 0.0
    steps = 0
    converged = False
    for step in range(1, config.max_steps + 1):
        steps = step
        tips = forward_kinematics(model, q, pose.rotation, pose.translation)
        pen_now = 0.0
        for f, label in enumerate(model.finger_order):
            force, ni, _ = _tip_force(tips[f], tree, pts, config.stiffness,
                                      config.fingertip_radius)
            crossing = float((pts[ni] - tips[f]) @ normals[ni])
            pen_now = max(pen_now, crossing)
            # A tip center past the surface plane means the spring zone was
            # stepped over (sparse cloud or a fast sweep); treat it as hard
            # contact too.
            if f not in frozen and (np.linalg.norm(force) > config.freeze_force
                                    or crossing > 0.0):
                frozen.add(f)
                events.append((step, label))
                for j in model.chains[f]:
                    target[j] = q[j]
        max_pen = max(max_pen, pen_now)
        final_pen = pen_now
        _, q, qd = pd_step(model, q, qd, target, config)
        if np.max(np.abs(qd)) < config.settle_vel:
            converged = True
            break

    frozen_fingers = [model.finger_order[f] for f in sorted(frozen)]
    frozen_joints = [model.joint_names[j] for f in sorted(frozen)
                     for j in model.chains[f]]
    out_pose = GraspPose(rotation=pose.rotation.copy(),
                         translation=pose.translation.copy(), q=q.copy())
    return RefineResult(final_pose=out_pose, frozen_fingers=frozen_fingers,
                        frozen_joints=frozen_joints, freeze_events=events,
                        max_penetration=max(0.0, max_pen),
                        final_penetration=max(0.0, final_pen),
                        steps_used=steps, converged=converged)


def derive_pregrasp(pose: GraspPose, model: HandModel, approach: np.ndarray,
                    offset: float = 0.02) -> GraspPose:
    """Back the wrist off along the approach line and open the mid joints.

    The translation retreats exactly ``offset`` meters against the
    approach direction; the joints named intermediate in the hand config
    reset to the middle of their range so the fingers clear the surface
    on the way in. Orientation and all other joints are untouched.
    """
    a = np.asarray(approach, dtype=float)
    norm = np.linalg.norm(a)
    if norm < 1e-12:
        raise ValueError("approach direction must be nonzero")
    a = a / norm
    t_init = pose.translation - offset * a
    q_init = pose.q.copy()
    mid = model.midrange()
    for j in model.intermediate:
        q_init[j] = mid[j]
    return GraspPose(rotation=pose.rotation.copy(), translation=t_init,
                     q=clamp_to_limits(model, q_init))
