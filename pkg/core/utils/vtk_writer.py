# core/utils/vtk_writer.py

from pathlib import Path

import meshio
import numpy as np


def _checked(data, expected, kind, unit):
    checked = {}
    for name, values in (data or {}).items():
        arr = np.asarray(values, dtype=float)
        if arr.shape != (expected,):
            raise ValueError(f"{kind} data {name!r} has {arr.shape[0] if arr.ndim else 0} values, "
                             f"mesh has {expected} {unit}")
        checked[name] = arr
    return checked


def to_meshio(mesh, point_data=None, cell_data=None):
    """meshio triangle mesh with P1 point data and P0 cell data"""
    points = np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)])
    point_data = _checked(point_data, mesh.n_vertices, "point", "vertices")
    cell_data = _checked(cell_data, mesh.n_triangles, "cell", "triangles")
    return meshio.Mesh(points, [("triangle", np.asarray(mesh.triangles, dtype=np.int64))],
                       point_data=point_data,
                       cell_data={name: [values] for name, values in cell_data.items()})


def write_vtk(path, mesh, point_data=None, cell_data=None):
    """Legacy ASCII VTK unstructured grid"""
    path = Path(path)
    out = to_meshio(mesh, point_data, cell_data)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.vtk.write(path, out, fmt_version="4.2", binary=False)
    return path
