"""Grasp record files: JSON-lines with a versioned schema.

One record per line. Unknown fields are preserved through a read/write
round trip so future additions do not break older tooling.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from .contacts import Contact, ContactSet, FINGER_LABELS, estimate_normals
from .errors import InvalidContacts, MissingCloud, SchemaError
from .geometry import PointCloud
from .hand import HandModel, forward_kinematics
from .refine import GraspPose

SCHEMA_VERSION = 1

_KNOWN_FIELDS = {
    "schema", "object_id", "category", "split", "cloud_ref", "strategy",
    "cylindrical", "canonical_rotation", "canonical_centroid", "contacts",
    "grasp", "pregrasp", "approach", "pregrasp_offset", "quality",
    "stage_success", "provenance",
}


@dataclass
class GraspRecord:
    object_id: str
    category: str = ""
    split: str = "train"
    cloud_ref: str = ""
    strategy: str = ""
    cylindrical: bool = False
    canonical_rotation: list = field(default_factory=lambda: np.eye(3).tolist())
    canonical_centroid: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    contacts: list = field(default_factory=list)   # [{"finger","p","n"}]
    grasp: dict = field(default_factory=dict)      # {"R","t","q"}
    pregrasp: dict = field(default_factory=dict)
    approach: list = field(default_factory=lambda: [0.0, 0.0, -1.0])
    pregrasp_offset: float = 0.02
    quality: float = 0.0
    stage_success: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)      # unknown fields, preserved

    def contact_set(self) -> ContactSet:
        return ContactSet([Contact(c["finger"], np.asarray(c["p"], dtype=float),
                                   np.asarray(c["n"], dtype=float))
                           for c in self.contacts])

    def grasp_pose(self) -> GraspPose:
        return _pose_from_dict(self.grasp)

    def pregrasp_pose(self) -> GraspPose:
        return _pose_from_dict(self.pregrasp)


def _pose_from_dict(d: dict) -> GraspPose:
    return GraspPose(rotation=np.asarray(d["R"], dtype=float),
                     translation=np.asarray(d["t"], dtype=float),
                     q=np.asarray(d["q"], dtype=float))


def pose_to_dict(pose: GraspPose) -> dict:
    return {"R": pose.rotation.tolist(), "t": pose.translation.tolist(),
            "q": pose.q.tolist()}


def contacts_to_list(contacts: ContactSet) -> list:
    return [{"finger": c.finger, "p": c.position.tolist(), "n": c.normal.tolist()}
            for c in contacts.contacts]


def record_to_json(rec: GraspRecord) -> str:
    body = asdict(rec)
    extra = body.pop("extra")
    body.update(extra)
    body["schema"] = SCHEMA_VERSION
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def write_records(path: str, records: list[GraspRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(record_to_json(rec) + "\n")


def read_records(path: str) -> list[GraspRecord]:
    """Parse a record file; SchemaError carries the offending line number."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                body = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(lineno, f"invalid JSON: {e.msg}") from e
            if not isinstance(body, dict):
                raise SchemaError(lineno, "record must be a JSON object")
            if body.get("schema") != SCHEMA_VERSION:
                raise SchemaError(lineno,
                                  f"schema must be {SCHEMA_VERSION}, got {body.get('schema')!r}")
            if "object_id" not in body:
                raise SchemaError(lineno, "record lacks object_id")
            known = {k: v for k, v in body.items() if k in _KNOWN_FIELDS}
            extra = {k: v for k, v in body.items() if k not in _KNOWN_FIELDS}
            known.pop("schema")
            out.append(GraspRecord(extra=extra, **known))
    return out


def dataset_stats(records: list[GraspRecord]) -> dict:
    """Counts per split and category, plus cross-split duplicate ids."""
    splits: dict[str, int] = {}
    categories: dict[str, int] = {}
    seen: dict[str, set] = {}
    for rec in records:
        splits[rec.split] = splits.get(rec.split, 0) + 1
        categories[rec.category] = categories.get(rec.category, 0) + 1
        seen.setdefault(rec.object_id, set()).add(rec.split)
    dupes = sorted(oid for oid, ss in seen.items() if len(ss) > 1)
    return {"total": len(records), "splits": splits, "categories": categories,
            "cross_split_duplicates": dupes}


def _resolve_cloud(rec: GraspRecord, cloud_root: str) -> PointCloud:
    from .cloud_io import read_cloud
    path = rec.cloud_ref
    if not path:
        raise MissingCloud(f"{rec.object_id}: record has no cloud_ref")
    if not os.path.isabs(path):
        path = os.path.join(cloud_root, path)
    if not os.path.exists(path):
        raise MissingCloud(f"{rec.object_id}: cloud {path!r} not found")
    return read_cloud(path)


def validate_records(records: list[GraspRecord], model: HandModel | None = None,
                     cloud_root: str = ".", eps_surf: float = 0.005,
                     penetration_tol: float = 0.001,
                     strict: bool = False) -> list[dict]:
    """Semantic audit of a record batch.

    Checks contact structure, joint limits, the pre-grasp offset contract,
    and fingertip penetration against the referenced cloud. Returns one
    report per record with the issues found; with strict=True the first
    failure raises instead.
    """
    reports = []
    for rec in records:
        issues: list[str] = []

        def flag(msg):
            if strict:
                raise InvalidContacts(f"{rec.object_id}: {msg}")
            issues.append(msg)

        cloud = None
        try:
            cloud = _resolve_cloud(rec, cloud_root)
        except MissingCloud as e:
            if strict:
                raise
            issues.append(str(e))

        canon = None
        if cloud is not None:
            rot = np.asarray(rec.canonical_rotation, dtype=float)
            cen = np.asarray(rec.canonical_centroid, dtype=float)
            canon = PointCloud(points=(cloud.points - cen) @ rot.T)

        try:
            cs = rec.contact_set()
            cs.validate(cloud=canon, eps_surf=eps_surf)
        except InvalidContacts as e:
            flag(f"contacts: {e}")

        if model is not None and rec.grasp:
            q = np.asarray(rec.grasp.get("q", []), dtype=float)
            if q.shape != (model.n_joints,):
                flag(f"grasp.q: expected {model.n_joints} joints, got {q.shape}")
            elif np.any(q < model.lower - 1e-9) or np.any(q > model.upper + 1e-9):
                flag("grasp.q: joint limits violated")

        if rec.grasp and rec.pregrasp:
            t = np.asarray(rec.grasp["t"], dtype=float)
            t0 = np.asarray(rec.pregrasp["t"], dtype=float)
            a = np.asarray(rec.approach, dtype=float)
            d = t - t0
            if abs(np.linalg.norm(d) - rec.pregrasp_offset) > 1e-9:
                flag(f"pregrasp: offset {np.linalg.norm(d):.6f} != {rec.pregrasp_offset}")
            if np.linalg.norm(np.cross(d, a)) > 1e-9 * max(np.linalg.norm(a), 1e-12):
                flag("pregrasp: retreat is not along the approach axis")
            if model is not None:
                qg = np.asarray(rec.pregrasp.get("q", []), dtype=float)
                mid = model.midrange()
                if qg.shape == (model.n_joints,):
                    for j in model.intermediate:
                        if abs(qg[j] - mid[j]) > 1e-9:
                            flag(f"pregrasp: joint {model.joint_names[j]} not at midrange")
                            break

        if model is not None and canon is not None and rec.grasp:
            pose = rec.grasp_pose()
            if pose.q.shape == (model.n_joints,):
                tips = forward_kinematics(model, pose.q, pose.rotation, pose.translation)
                normals = canon.normals
                if normals is None:
                    normals = estimate_normals(canon, np.arange(len(canon.points)))
                tree = cKDTree(canon.points)
                _, ni = tree.query(tips)
                crossing = np.einsum("ij,ij->i", canon.points[ni] - tips, normals[ni])
                worst = float(np.max(crossing))
                if worst > penetration_tol:
                    flag(f"grasp: fingertip penetration {worst:.4f} m > {penetration_tol}")

        reports.append({"object_id": rec.object_id, "ok": not issues, "issues": issues})
    return reports
