"""Kinematic hand models: revolute chains loaded from a JSON config.

The config format is documented in docs/hand_config_schema.md. Frames
follow the wrist convention used by the retargeting stage: x points from
the wrist toward the fingers, y from the middle finger toward the little
finger, z away from the palm surface. Fingers curl toward -z.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import rot_x, rot_y, rot_z, rotation_about_axis

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data", "hands")


@dataclass
class HandModel:
    name: str
    joint_names: list[str]
    parents: np.ndarray          # (J,) int, -1 for wrist-rooted joints
    origins: np.ndarray          # (J,4,4) fixed parent-link -> joint transforms
    axes: np.ndarray             # (J,3) unit rotation axes in the joint frame
    lower: np.ndarray            # (J,)
    upper: np.ndarray            # (J,)
    finger_order: list[str]
    fingertip_links: list[int]   # joint index whose link carries each tip
    fingertip_offsets: np.ndarray  # (F,3) offsets in the tip link frame
    chains: list[list[int]]      # per finger, joint indices from root to tip
    intermediate: list[int]      # joint indices reset by the pre-grasp stage
    middle_finger_length: float

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_fingers(self) -> int:
        return len(self.finger_order)

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    def midrange(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def bundled_hand_path(name: str) -> str:
    """Path to a hand config shipped with the package."""
    return os.path.join(_DATA_DIR, name + ".json")


def load_hand_model(source) -> HandModel:
    """Build a HandModel from a config path or an already-parsed dict.

    Raises ConfigError naming the offending field for malformed configs.
    Parents must be declared before the joints that reference them, which
    also rules out cycles.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    else:
        cfg = source
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "hand config must be a JSON object")

    name = cfg.get("name", "hand")
    joints = cfg.get("joints")
    if not isinstance(joints, list) or not joints:
        raise ConfigError("joints", "must be a non-empty list")

    jnames: list[str] = []
    parents, origins, axes, lower, upper = [], [], [], [], []
    for i, j in enumerate(joints):
        fp = f"joints[{i}]"
        jn = j.get("name")
        if not jn or jn in jnames:
            raise ConfigError(f"{fp}.name", "missing or duplicate joint name")
        parent = j.get("parent", "")
        if parent in ("", "wrist"):
            pidx = -1
        elif parent in jnames:
            pidx = jnames.index(parent)
        else:
            raise ConfigError(f"{fp}.parent",
                              f"unknown parent {parent!r} (must be declared earlier)")
        xyz = np.asarray(j.get("origin_xyz", [0, 0, 0]), dtype=float)
        rpy = np.asarray(j.get("origin_rpy", [0, 0, 0]), dtype=float)
        if xyz.shape != (3,) or not np.all(np.isfinite(xyz)):
            raise ConfigError(f"{fp}.origin_xyz", "must be a finite 3-vector")
        if rpy.shape != (3,) or not np.all(np.isfinite(rpy)):
            raise ConfigError(f"{fp}.origin_rpy", "must be a finite 3-vector")
        ax = np.asarray(j.get("axis", [0, 0, 1]), dtype=float)
        if ax.shape != (3,) or np.linalg.norm(ax) < 1e-12:
            raise ConfigError(f"{fp}.axis", "must be a nonzero 3-vector")
        lim = j.get("limits")
        if (not isinstance(lim, (list, tuple)) or len(lim) != 2
                or not np.all(np.isfinite(lim)) or lim[0] > lim[1]):
            raise ConfigError(f"{fp}.limits", "must be [lower, upper] with lower <= upper")
        t = np.eye(4)
        t[:3, :3] = rot_z(rpy[2]) @ rot_y(rpy[1]) @ rot_x(rpy[0])
        t[:3, 3] = xyz
        jnames.append(jn)
        parents.append(pidx)
        origins.append(t)
        axes.append(ax / np.linalg.norm(ax))
        lower.append(float(lim[0]))
        upper.append(float(lim[1]))

    tips = cfg.get("fingertips")
    if not isinstance(tips, dict) or not tips:
        raise ConfigError("fingertips", "must be a non-empty mapping")
    finger_order = cfg.get("finger_order", sorted(tips))
    if sorted(finger_order) != sorted(tips):
        raise ConfigError("finger_order", "must list exactly the fingertip labels")

    tip_links, tip_offsets, chains = [], [], []
    for label in finger_order:
        spec_tip = tips[label]
        fp = f"fingertips.{label}"
        link = spec_tip.get("link")
        if link not in jnames:
            raise ConfigError(f"{fp}.link", f"unknown link {link!r}")
        off = np.asarray(spec_tip.get("offset", [0, 0, 0]), dtype=float)
        if off.shape != (3,) or not np.all(np.isfinite(off)):
            raise ConfigError(f"{fp}.offset", "must be a finite 3-vector")
        li = jnames.index(link)
        chain = []
        k = li
        while k >= 0:
            chain.append(k)
            k = parents[k]
        chains.append(chain[::-1])
        tip_links.append(li)
        tip_offsets.append(off)

    inter_names = cfg.get("intermediate_joints", [])
    inter = []
    for i, nm in enumerate(inter_names):
        if nm not in jnames:
            raise ConfigError(f"intermediate_joints[{i}]", f"unknown joint {nm!r}")
        inter.append(jnames.index(nm))

    lp = cfg.get("middle_finger_length")
    if lp is None or not np.isfinite(lp) or lp <= 0:
        raise ConfigError("middle_finger_length", "must be a positive number (meters)")

    return HandModel(
        name=name, joint_names=jnames, parents=np.asarray(parents, dtype=int),
        origins=np.asarray(origins), axes=np.asarray(axes),
        lower=np.asarray(lower), upper=np.asarray(upper),
        finger_order=list(finger_order), fingertip_links=tip_links,
        fingertip_offsets=np.asarray(tip_offsets), chains=chains,
        intermediate=inter, middle_finger_length=float(lp),
    )


def link_transforms(model: HandModel, q: np.ndarray) -> np.ndarray:
    """Wrist-frame pose of every joint's child link, config order. (J,4,4)."""
    q = np.asarray(q, dtype=float)
    out = np.empty((model.n_joints, 4, 4))
    for j in range(model.n_joints):
        t = model.origins[j].copy()
        t[:3, :3] = t[:3, :3] @ rotation_about_axis(model.axes[j], q[j])
        p = model.parents[j]
        out[j] = out[p] @ t if p >= 0 else t
    return out


def forward_kinematics(model: HandModel, q: np.ndarray,
                       base_rotation: np.ndarray | None = None,
                       base_translation: np.ndarray | None = None) -> np.ndarray:
    """Fingertip positions, one row per finger in ``model.finger_order``.

    Positions are in the wrist frame unless a base pose is given, in which
    case they are mapped through it (p_world = R p + t).
    """
    lt = link_transforms(model, q)
    tips = np.empty((model.n_fingers, 3))
    for f in range(model.n_fingers):
        t = lt[model.fingertip_links[f]]
        tips[f] = t[:3, :3] @ model.fingertip_offsets[f] + t[:3, 3]
    if base_rotation is not None:
        tips = tips @ np.asarray(base_rotation, dtype=float).T
    if base_translation is not None:
        tips = tips + np.asarray(base_translation, dtype=float)
    return tips


def fingertip_jacobian(model: HandModel, q: np.ndarray) -> np.ndarray:
    """Analytic position Jacobian, shape (F, 3, J), wrist frame.

    Column j of finger f is axis_j x (tip_f - origin_j) when joint j lies
    on that finger's chain and zero otherwise (revolute joints only).
    """
    lt = link_transforms(model, q)
    jac = np.zeros((model.n_fingers, 3, model.n_joints))
    for f in range(model.n_fingers):
        t = lt[model.fingertip_links[f]]
        tip = t[:3, :3] @ model.fingertip_offsets[f] + t[:3, 3]
        for j in model.chains[f]:
            z = lt[j][:3, :3] @ model.axes[j]
            jac[f, :, j] = np.cross(z, tip - lt[j][:3, 3])
    return jac


def clamp_to_limits(model: HandModel, q: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(q, dtype=float), model.lower, model.upper)


def position_groups(model: HandModel, exclude: str = "thumb") -> list[list[int]]:
    """Joint indices grouped by in-chain position across the non-thumb fingers.

    Used by the finger-consistency reward: each group holds the j-th joint
    of every non-excluded finger. Requires those chains to share a length.
    """
    fingers = [i for i, lbl in enumerate(model.finger_order) if lbl != exclude]
    if not fingers:
        return []
    length = len(model.chains[fingers[0]])
    if any(len(model.chains[f]) != length for f in fingers):
        raise ConfigError("finger_order", "non-thumb chains differ in length")
    return [[model.chains[f][k] for f in fingers] for k in range(length)]
