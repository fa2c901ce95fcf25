"""Readers and writers for simple point-cloud file formats.

Supported: ASCII PLY (vertex positions, optional nx/ny/nz), OBJ vertex
lines, and plain XYZ text (3 or 6 columns). Binary PLY is rejected.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import DegenerateCloud
from .geometry import PointCloud


def read_cloud(path: str) -> PointCloud:
    """Dispatch on file extension (.ply, .obj, anything else = xyz text)."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ply":
        return read_ply(path)
    if ext == ".obj":
        return read_obj(path)
    return read_xyz(path)


def read_ply(path: str) -> PointCloud:
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        line = f.readline().strip()
        if line != "ply":
            raise DegenerateCloud(f"{path}: not a PLY file")
        n_vertex = 0
        props: list[str] = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise DegenerateCloud(f"{path}: unterminated PLY header")
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format":
                if tok[1] != "ascii":
                    raise DegenerateCloud(f"{path}: only ascii PLY is supported")
            elif tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    n_vertex = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        for name in ("x", "y", "z"):
            if name not in props:
                raise DegenerateCloud(f"{path}: vertex element lacks property {name}")
        cols = {name: props.index(name) for name in props}
        rows = []
        for _ in range(n_vertex):
            line = f.readline()
            if not line:
                raise DegenerateCloud(f"{path}: vertex data truncated")
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise DegenerateCloud(f"{path}: non-numeric vertex data") from None
    try:
        data = np.asarray(rows, dtype=float).reshape(len(rows), -1)
        pts = data[:, [cols["x"], cols["y"], cols["z"]]]
    except (ValueError, IndexError):
        raise DegenerateCloud(f"{path}: malformed vertex rows") from None
    normals = None
    if all(n in cols for n in ("nx", "ny", "nz")):
        normals = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
        lens = np.linalg.norm(normals, axis=1)
        lens[lens == 0] = 1.0
        normals = normals / lens[:, None]
    return PointCloud(points=pts, normals=normals)


def read_obj(path: str) -> PointCloud:
    """Vertex positions only; faces and other elements are ignored."""
    rows = []
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line in f:
            if line.startswith("v "):
                tok = line.split()
                try:
                    rows.append([float(tok[1]), float(tok[2]), float(tok[3])])
                except (ValueError, IndexError):
                    raise DegenerateCloud(f"{path}: malformed vertex line") from None
    if not rows:
        raise DegenerateCloud(f"{path}: no vertex lines found")
    return PointCloud(points=np.asarray(rows, dtype=float))


def read_xyz(path: str) -> PointCloud:
    """Whitespace-separated text, 3 columns (xyz) or 6 (xyz + normal)."""
    rows = []
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise DegenerateCloud(f"{path}: non-numeric cloud data") from None
    if not rows:
        raise DegenerateCloud(f"{path}: empty cloud file")
    try:
        data = np.asarray(rows, dtype=float)
    except ValueError:
        raise DegenerateCloud(f"{path}: inconsistent column counts") from None
    if data.shape[1] == 3:
        return PointCloud(points=data)
    if data.shape[1] >= 6:
        return PointCloud(points=data[:, :3], normals=data[:, 3:6])
    raise DegenerateCloud(f"{path}: expected 3 or 6 columns, got {data.shape[1]}")


def write_xyz(path: str, cloud: PointCloud) -> None:
    """Write with %.17g so coordinates survive a round trip exactly."""
    with open(path, "w", encoding="utf-8") as f:
        if cloud.normals is None:
            for p in cloud.points:
                f.write("%.17g %.17g %.17g\n" % tuple(p))
        else:
            for p, n in zip(cloud.points, cloud.normals):
                f.write("%.17g %.17g %.17g %.17g %.17g %.17g\n" % (*p, *n))
