"""File output: legacy VTK, CSV tables and JSON run reports."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
from pathlib import Path

import numpy as np

from .mesh import Mesh


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "ramified") -> Path:
    """Legacy ASCII VTK unstructured grid with optional nodal scalars."""
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines.extend(f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist())
    nt = len(mesh.triangles)
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(v) for v in values.tolist())
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_points(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Minimal reader for files written by ``write_vtk``; used by tests."""
    tokens = Path(path).read_text().split("\n")
    i = 0
    nodes = tris = None
    data: dict = {}
    while i < len(tokens):
        line = tokens[i].split()
        if line and line[0] == "POINTS":
            n = int(line[1])
            nodes = np.array([list(map(float, tokens[i + 1 + k].split()[:2])) for k in range(n)])
            i += n
        elif line and line[0] == "CELLS":
            n = int(line[1])
            tris = np.array([list(map(int, tokens[i + 1 + k].split()[1:])) for k in range(n)])
            i += n
        elif line and line[0] == "SCALARS":
            name = line[1]
            n = len(nodes)
            data[name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return nodes, tris, data


def write_mesh_csv(directory, mesh: Mesh) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    with open(directory / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for k, (x, y) in enumerate(mesh.nodes.tolist()):
            w.writerow([k, repr(x), repr(y)])
    out.append(directory / "nodes.csv")
    with open(directory / "tris.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "a", "b", "c"])
        for k, tri in enumerate(mesh.triangles.tolist()):
            w.writerow([k, *tri])
    out.append(directory / "tris.csv")
    from .geometry import format_word

    with open(directory / "bedges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "kind", "word"])
        for (a, b), kind, word in zip(mesh.boundary_edges.tolist(), mesh.boundary_kind, mesh.boundary_word):
            w.writerow([a, b, kind, "" if word is None else format_word(word)])
    out.append(directory / "bedges.csv")
    return out


def write_table_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def to_jsonable(obj):
    """Convert numpy scalars and arrays; floats keep 17 significant digits."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return float(format(x, ".17g"))
        return str(x)
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def environment_info() -> dict:
    import scipy

    from . import __version__

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "pid": os.getpid(),
    }
