# core/mesh.py

import os
import sys
from functools import cached_property

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.utils.errors import MeshError
from utils.logger import log_event

EPS = np.finfo(float).eps

# local edges (0,1), (1,2), (2,0)
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class TriMesh:
    """Immutable conforming triangulation of an axis-aligned rectangle.

    Vertices are ordered lexicographically by (y, x); triangles are counter-clockwise.
    A refined mesh keeps a reference to its parent and the parent index of every
    child triangle, so fields can be moved between levels of the same lineage.
    """

    def __init__(self, vertices, triangles, bounds, level=0, parent=None, parent_of=None):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (N, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (M, 3) array")
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle references a vertex index out of range")
        if level < 0:
            raise MeshError(f"level must be >= 0, got {level}")
        if (parent is None) != (parent_of is None):
            raise MeshError("parent and parent_of must be given together")

        x0, x1, y0, y1 = (float(b) for b in bounds)
        if not (x1 > x0 and y1 > y0):
            raise MeshError(f"degenerate rectangle bounds {bounds}")

        scale = max(1.0, abs(x0), abs(x1), abs(y0), abs(y1))
        tol = 10 * EPS * scale
        x, y = vertices[:, 0], vertices[:, 1]
        boundary = (np.abs(x - x0) <= tol) | (np.abs(x - x1) <= tol) | \
                   (np.abs(y - y0) <= tol) | (np.abs(y - y1) <= tol)

        if parent_of is not None:
            parent_of = np.array(parent_of, dtype=np.int64)
            if parent_of.shape != (len(triangles),):
                raise MeshError("parent_of must hold one parent index per triangle")

        for arr in (vertices, triangles, boundary) + ((parent_of,) if parent_of is not None else ()):
            arr.setflags(write=False)

        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "bounds", (x0, x1, y0, y1))
        object.__setattr__(self, "level", int(level))
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "parent_of", parent_of)

        if len(triangles) and np.any(self.signed_areas <= 0):
            bad = int(np.argmin(self.signed_areas))
            raise MeshError(f"triangle {bad} has non-positive area {self.signed_areas[bad]:.3e}")

    def __setattr__(self, name, value):
        raise AttributeError("TriMesh is immutable")

    def __repr__(self):
        return (f"TriMesh(vertices={self.n_vertices}, triangles={self.n_triangles}, "
                f"level={self.level}, h={self.h:.6g})")

    # --- sizes ---

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def interior(self):
        """Indices of vertices that carry a degree of freedom"""
        idx = np.flatnonzero(~self.boundary)
        idx.setflags(write=False)
        return idx

    @property
    def n_interior(self):
        return len(self.interior)

    @cached_property
    def dof_index(self):
        """Vertex -> interior DOF position, -1 on Dirichlet vertices"""
        dof = np.full(self.n_vertices, -1, dtype=np.int64)
        dof[self.interior] = np.arange(self.n_interior)
        dof.setflags(write=False)
        return dof

    # --- geometry ---

    @cached_property
    def corners(self):
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self):
        p = self.corners
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self):
        a = np.abs(self.signed_areas)
        a.setflags(write=False)
        return a

    @property
    def total_area(self):
        return float(np.sum(self.areas))

    @cached_property
    def edge_lengths(self):
        p = self.corners
        return np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)

    @cached_property
    def diameters(self):
        return self.edge_lengths.max(axis=1)

    @cached_property
    def inradii(self):
        return 2.0 * self.areas / self.edge_lengths.sum(axis=1)

    @cached_property
    def barycenters(self):
        return self.corners.mean(axis=1)

    @cached_property
    def h(self):
        return float(self.diameters.max()) if self.n_triangles else 0.0

    @cached_property
    def shape_regularity(self):
        """max over T of diam(T) / inradius(T)"""
        return float(np.max(self.diameters / self.inradii))

    @cached_property
    def gradients(self):
        """Gradients of the three barycentric functions per element, shape (M, 3, 2)"""
        p = self.corners
        two_area = 2.0 * self.signed_areas
        # grad lambda_i = rot90(p_{i+2} - p_{i+1}) / (2|T|)
        e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        grads = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return grads / two_area[:, None, None]

    @cached_property
    def edges(self):
        """Unique edges (E, 2) with sorted endpoints, and per-triangle local edge ids (M, 3)"""
        pairs = np.sort(self.triangles[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
        keys = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        unique_pairs = np.stack([unique_keys // self.n_vertices, unique_keys % self.n_vertices], axis=1)
        return unique_pairs, np.asarray(inverse).reshape(self.n_triangles, 3)

    # --- lineage ---

    def descends_from(self, coarse):
        mesh = self
        while mesh is not None:
            if mesh is coarse:
                return True
            mesh = mesh.parent
        return False

    def ancestor_map(self, coarse):
        """Index of the ancestor triangle in `coarse` for every triangle of this mesh"""
        idx = np.arange(self.n_triangles)
        mesh = self
        while mesh is not coarse:
            if mesh.parent is None:
                raise MeshError("meshes are not in the same refinement lineage")
            idx = mesh.parent_of[idx]
            mesh = mesh.parent
        return idx

    def to_vtk(self, path, point_data=None, cell_data=None):
        from core.utils.vtk_writer import write_vtk
        return write_vtk(path, self, point_data=point_data, cell_data=cell_data)


def mesh_size(m):
    """Maximum element diameter"""
    return m.h


def build_uniform_rectangle(nx, ny=None, bounds=(0.0, 1.0, 0.0, 1.0)):
    """Uniform right-triangle mesh with one consistent diagonal per cell"""
    ny = nx if ny is None else ny
    for name, value in (("nx", nx), ("ny", ny)):
        if int(value) != value or value < 1:
            raise MeshError(f"{name} must be a positive integer, got {value}")
    nx, ny = int(nx), int(ny)
    x0, x1, y0, y1 = bounds

    xs = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    ys = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    triangles = np.stack([
        np.column_stack([v00, v10, v11]),
        np.column_stack([v00, v11, v01]),
    ], axis=1).reshape(-1, 3)

    mesh = TriMesh(vertices, triangles, bounds=bounds, level=0)
    log_event("mesh_built", {"nx": nx, "ny": ny, "vertices": mesh.n_vertices,
                             "triangles": mesh.n_triangles, "h": mesh.h}, "DEBUG")
    return mesh


def build_uniform_square(n):
    """(n+1)^2 vertices and 2 n^2 triangles on the unit square; h = sqrt(2)/n"""
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n}")
    return build_uniform_rectangle(n, n, (0.0, 1.0, 0.0, 1.0))


def _canonical_order(vertices, bounds):
    x0, x1, y0, y1 = bounds
    scale = max(x1 - x0, y1 - y0)
    ky = np.round((vertices[:, 1] - y0) / scale, 12)
    kx = np.round((vertices[:, 0] - x0) / scale, 12)
    return np.lexsort((kx, ky))


def refine_uniform(m):
    """Split every triangle into four congruent children through its edge midpoints"""
    edges, edge_of = m.edges
    midpoints = 0.5 * (m.vertices[edges[:, 0]] + m.vertices[edges[:, 1]])
    vertices = np.concatenate([m.vertices, midpoints])

    a, b, c = m.triangles[:, 0], m.triangles[:, 1], m.triangles[:, 2]
    mab = m.n_vertices + edge_of[:, 0]
    mbc = m.n_vertices + edge_of[:, 1]
    mca = m.n_vertices + edge_of[:, 2]
    children = np.stack([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ], axis=1).reshape(-1, 3)

    order = _canonical_order(vertices, m.bounds)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))

    fine = TriMesh(
        vertices[order],
        rank[children],
        bounds=m.bounds,
        level=m.level + 1,
        parent=m,
        parent_of=np.repeat(np.arange(m.n_triangles), 4),
    )
    log_event("mesh_refined", {"level": fine.level, "triangles": fine.n_triangles, "h": fine.h}, "DEBUG")
    return fine


def refine_times(m, times):
    for _ in range(times):
        m = refine_uniform(m)
    return m


def refinement_ladder(base_n, levels):
    """`levels` meshes starting from build_uniform_square(base_n), each the refinement of the previous"""
    meshes = [build_uniform_square(base_n)]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


if __name__ == "__main__":
    mesh = build_uniform_square(4)
    print(mesh, "area", mesh.total_area, "shape", mesh.shape_regularity)
    print(refine_uniform(mesh))
