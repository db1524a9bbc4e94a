"""Legacy ASCII VTK point clouds.

Numbers are written with 17 significant digits so a file read back gives
the same binary doubles; identical inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

HEADER = "# vtk DataFile Version 3.0"


class VTKError(IOError):
    pass


def _fmt(v: float) -> str:
    s = format(float(v), ".17g")
    return "0" if s == "-0" else s


@dataclass
class VTKData:
    points: np.ndarray
    vectors: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    title: str = ""


def write_vtk(
    path: str,
    points,
    vectors: Optional[Mapping[str, np.ndarray]] = None,
    scalars: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "pdpum point data",
) -> None:
    """Write 2D points (z = 0) with point-data vectors and scalars.

    Raises:
        VTKError: for an empty point set, mismatched field lengths or I/O failure.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise VTKError(f"{path}: no points to write")
    lines = [HEADER, title.replace("\n", " ")[:255], "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in pts]
    vectors = dict(vectors or {})
    scalars = dict(scalars or {})
    if vectors or scalars:
        lines.append(f"POINT_DATA {n}")
    for name, v in vectors.items():
        v = np.asarray(v, dtype=float).reshape(n, -1)
        if v.shape[1] not in (2, 3):
            raise VTKError(f"{path}: vector field {name!r} needs 2 or 3 components")
        lines.append(f"VECTORS {name} double")
        if v.shape[1] == 2:
            lines += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in v]
        else:
            lines += [f"{_fmt(a)} {_fmt(b)} {_fmt(c)}" for a, b, c in v]
    for name, s in scalars.items():
        s = np.asarray(s, dtype=float).reshape(-1)
        if len(s) != n:
            raise VTKError(f"{path}: scalar field {name!r} has {len(s)} values for {n} points")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(a) for a in s]
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise VTKError(f"cannot write {path}: {exc.strerror}") from exc


def write_pd_snapshot(path: str, nodes, u, damage, title: str = "pdpum PD snapshot") -> None:
    write_vtk(path, nodes, {"displacement": u}, {"damage": damage}, title)


def read_vtk(path: str) -> VTKData:
    """Read files produced by :func:`write_vtk`."""
    try:
        with open(path) as fh:
            tokens = fh.read().split("\n")
    except OSError as exc:
        raise VTKError(f"cannot read {path}: {exc.strerror}") from exc
    if not tokens or tokens[0].strip() != HEADER:
        raise VTKError(f"{path}: not a legacy VTK file")
    title = tokens[1]
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET POLYDATA":
        raise VTKError(f"{path}: only ASCII POLYDATA is supported")
    head = tokens[4].split()
    if head[0] != "POINTS":
        raise VTKError(f"{path}: expected POINTS on line 5")
    n = int(head[1])
    i = 5
    pts = np.array([[float(t) for t in tokens[i + k].split()[:2]] for k in range(n)]).reshape(n, 2)
    i += n
    data = VTKData(pts, title=title)
    while i < len(tokens):
        line = tokens[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINT_DATA":
            i += 1
        elif line[0] == "VECTORS":
            data.vectors[line[1]] = np.array([[float(t) for t in tokens[i + 1 + k].split()] for k in range(n)]).reshape(n, 3)
            i += 1 + n
        elif line[0] == "SCALARS":
            if tokens[i + 1].split()[0] != "LOOKUP_TABLE":
                raise VTKError(f"{path}: missing LOOKUP_TABLE after line {i + 1}")
            data.scalars[line[1]] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += 2 + n
        else:
            raise VTKError(f"{path}: unexpected section {line[0]!r} on line {i + 1}")
    return data
