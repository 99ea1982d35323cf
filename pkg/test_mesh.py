# test_mesh.py

import meshio
import numpy as np
import pytest

from core.mesh import (TriMesh, build_uniform_rectangle, build_uniform_square, mesh_size,
                       refine_times, refine_uniform, refinement_ladder)
from core.utils.errors import MeshError

EPS = np.finfo(float).eps


def _triangle_set(m):
    return {tuple(sorted(t)) for t in m.triangles.tolist()}


def test_smallest_mesh():
    m = build_uniform_square(1)
    assert m.n_vertices == 4
    assert m.n_triangles == 2
    assert m.boundary.all()
    assert m.n_interior == 0


def test_n2_has_one_interior_vertex():
    m = build_uniform_square(2)
    assert (m.n_vertices, m.n_triangles, m.n_interior) == (9, 8, 1)
    assert np.allclose(m.vertices[m.interior[0]], [0.5, 0.5])


def test_n32_size_and_area():
    m = build_uniform_square(32)
    assert m.h == pytest.approx(np.sqrt(2) / 32, rel=1e-14)
    assert mesh_size(m) == m.h
    assert abs(m.total_area - 1.0) <= 10 * EPS


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_rejects_bad_n(n):
    with pytest.raises(MeshError):
        build_uniform_square(n)


def test_counterclockwise_orientation():
    m = build_uniform_square(5)
    assert np.all(m.signed_areas > 0)


def test_boundary_flags_match_geometry():
    m = build_uniform_square(6)
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    on_edge = np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1)
    assert np.array_equal(m.boundary, on_edge)


def test_vertex_order_is_lexicographic_in_y_then_x():
    m = refine_uniform(build_uniform_square(3))
    keys = np.round(m.vertices[:, 1] * 1e9) * 1e10 + np.round(m.vertices[:, 0] * 1e9)
    assert np.all(np.diff(keys) > 0)


def test_refine_n1():
    coarse = build_uniform_square(1)
    fine = refine_uniform(coarse)
    assert fine.n_triangles == 8
    assert fine.h == pytest.approx(coarse.h / 2, rel=1e-15)
    assert fine.level == coarse.level + 1
    assert fine.parent is coarse


def test_children_have_quarter_area():
    coarse = build_uniform_square(3)
    fine = refine_uniform(coarse)
    assert np.allclose(fine.areas, coarse.areas[fine.parent_of] / 4, rtol=1e-14, atol=0)


def test_two_refinements_match_direct_construction():
    refined = refine_times(build_uniform_square(8), 2)
    direct = build_uniform_square(32)
    assert np.allclose(refined.vertices, direct.vertices, atol=1e-14)
    assert _triangle_set(refined) == _triangle_set(direct)
    assert refined.h == pytest.approx(direct.h, rel=1e-14)


def test_shape_regularity_constant_across_levels():
    ladder = refinement_ladder(2, 4)
    values = [m.shape_regularity for m in ladder]
    assert np.allclose(values, values[0], rtol=1e-12)
    assert np.all([abs(m.total_area - 1.0) <= 10 * EPS for m in ladder])


def test_ancestor_map_and_lineage():
    coarse = build_uniform_square(2)
    fine = refine_times(coarse, 2)
    anc = fine.ancestor_map(coarse)
    assert anc.shape == (fine.n_triangles,)
    assert np.array_equal(np.bincount(anc), np.full(coarse.n_triangles, 16))
    # every fine barycenter lies inside its ancestor
    for t in (0, 17, fine.n_triangles - 1):
        a, b, c = coarse.corners[anc[t]]
        p = fine.barycenters[t]
        lam = np.linalg.solve(np.column_stack([b - a, c - a]), p - a)
        assert lam.min() > 0 and lam.sum() < 1
    assert fine.descends_from(coarse)
    assert not coarse.descends_from(fine)


def test_unrelated_meshes_are_rejected():
    other = build_uniform_square(2)
    fine = refine_uniform(build_uniform_square(2))
    with pytest.raises(MeshError):
        fine.ancestor_map(other)


def test_mesh_is_immutable():
    m = build_uniform_square(2)
    with pytest.raises(AttributeError):
        m.level = 3
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 0.25


def test_degenerate_triangle_rejected():
    vertices = [[0, 0], [1, 0], [2, 0], [0, 1]]
    with pytest.raises(MeshError):
        TriMesh(vertices, [[0, 1, 2]], bounds=(0, 2, 0, 1))


def test_clockwise_triangle_rejected():
    with pytest.raises(MeshError):
        TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], bounds=(0, 1, 0, 1))


def test_rectangle_bounds():
    m = build_uniform_rectangle(4, 2, bounds=(0.0, 2.0, -1.0, 0.0))
    assert m.n_triangles == 16
    assert m.total_area == pytest.approx(2.0, rel=1e-14)
    assert m.n_interior == 3


def test_edges_are_unique():
    m = build_uniform_square(3)
    edges, edge_of = m.edges
    # Euler: V - E + F = 1 for a triangulated disk
    assert m.n_vertices - len(edges) + m.n_triangles == 1
    assert edge_of.max() == len(edges) - 1


def test_vtk_dump(tmp_path):
    m = build_uniform_square(2)
    path = m.to_vtk(tmp_path / "mesh.vtk", point_data={"x": m.vertices[:, 0]},
                    cell_data={"id": np.arange(m.n_triangles)})
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "CELLS 8 32" in text
    assert "POINT_DATA 9" in text and "CELL_DATA 8" in text

    back = meshio.read(path)
    assert np.allclose(back.points[:, :2], m.vertices)
    assert np.array_equal(back.cells_dict["triangle"], m.triangles)
    assert np.allclose(back.point_data["x"], m.vertices[:, 0])
    assert np.allclose(back.cell_data["id"][0], np.arange(m.n_triangles))


def test_vtk_dump_rejects_wrong_lengths(tmp_path):
    m = build_uniform_square(2)
    with pytest.raises(ValueError, match="9 vertices"):
        m.to_vtk(tmp_path / "bad.vtk", point_data={"x": np.zeros(8)})
    with pytest.raises(ValueError, match="8 triangles"):
        m.to_vtk(tmp_path / "bad.vtk", cell_data={"u": np.zeros(9)})
    assert not (tmp_path / "bad.vtk").exists()
