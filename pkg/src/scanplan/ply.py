"""ASCII PLY input/output for pointclouds and triangle meshes.

Vertices carry x y z and optionally nx ny nz. Every file written here
includes a `comment scanplan` header line. Floats are serialized with
%.17g so that round-trips and repeated runs are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ScanplanError
from .geometry import PointCloud


class PlyFormatError(ScanplanError):
    """The file is not in the supported ASCII PLY subset."""


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in values)


def write_cloud(path, cloud: PointCloud) -> None:
    with_normals = cloud.normals is not None
    lines = [
        "ply",
        "format ascii 1.0",
        "comment scanplan",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if with_normals:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    if with_normals:
        rows = np.hstack([cloud.points, cloud.normals])
    else:
        rows = cloud.points
    lines.extend(_fmt(row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud(path) -> PointCloud:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "ply":
            raise PlyFormatError(f"{path}: missing ply magic")
        props: list[str] = []
        n_vertex = None
        in_vertex_element = False
        while True:
            line = fh.readline()
            if not line:
                raise PlyFormatError(f"{path}: truncated header")
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "format":
                if tokens[1] != "ascii":
                    raise PlyFormatError(f"{path}: only ascii PLY is supported")
            elif tokens[0] == "element":
                in_vertex_element = tokens[1] == "vertex"
                if in_vertex_element:
                    n_vertex = int(tokens[2])
            elif tokens[0] == "property" and in_vertex_element:
                props.append(tokens[-1])
            elif tokens[0] == "end_header":
                break
        if n_vertex is None:
            raise PlyFormatError(f"{path}: no vertex element")
        try:
            cols = [props.index(name) for name in ("x", "y", "z")]
        except ValueError:
            raise PlyFormatError(f"{path}: vertex element lacks x/y/z") from None
        has_normals = all(name in props for name in ("nx", "ny", "nz"))
        if has_normals:
            cols += [props.index(name) for name in ("nx", "ny", "nz")]
        data = np.zeros((n_vertex, len(cols)))
        for i in range(n_vertex):
            line = fh.readline()
            if not line:
                raise PlyFormatError(f"{path}: expected {n_vertex} vertices")
            values = line.split()
            data[i] = [float(values[c]) for c in cols]
    points = data[:, :3]
    normals = data[:, 3:6] if has_normals else None
    return PointCloud(points, normals)


def write_mesh(path, triangles: np.ndarray) -> None:
    """Write a triangle soup (n, 3, 3) as vertices plus triangulated faces."""
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    verts = tris.reshape(-1, 3)
    lines = [
        "ply",
        "format ascii 1.0",
        "comment scanplan",
        f"element vertex {len(verts)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(tris)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines.extend(_fmt(v) for v in verts)
    lines.extend(f"3 {3 * i} {3 * i + 1} {3 * i + 2}" for i in range(len(tris)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
