import numpy as np
import pytest

from lsbrink import (
    TriangleMesh,
    geometry,
    make_lshape_mesh,
    make_unit_square_mesh,
    read_mesh,
    refine_nvb,
    uniform_refine,
    write_mesh,
)
from lsbrink.mesh import MeshError


def single_triangle():
    return TriangleMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 2]])


def test_unit_square_n1_counts():
    mesh = make_unit_square_mesh(1)
    assert mesh.n_triangles == 2
    assert mesh.n_vertices == 4
    assert mesh.n_edges == 5
    assert mesh.areas == pytest.approx([0.5, 0.5])


def test_unit_square_n2_counts():
    mesh = make_unit_square_mesh(2)
    assert mesh.n_triangles == 8
    assert mesh.n_vertices == 9


def test_unit_square_refinement_edge_is_diagonal():
    mesh = make_unit_square_mesh(1)
    for t in range(2):
        e = mesh.tri_edges[t, mesh.refinement_edge[t]]
        assert mesh.edge_lengths[e] == pytest.approx(np.sqrt(2.0))


def test_lshape_geometry():
    mesh = make_lshape_mesh()
    assert mesh.n_triangles == 6
    assert mesh.domain_area == pytest.approx(3.0)
    assert (mesh.areas > 0).all()
    corner = np.where((mesh.vertices == 0.0).all(axis=1))[0]
    assert len(corner) == 1
    # refinement edges are the diagonals through the reentrant corner
    for t in range(6):
        e = mesh.tri_edges[t, mesh.refinement_edge[t]]
        assert mesh.edge_lengths[e] == pytest.approx(np.sqrt(2.0))


def test_refine_single_triangle():
    mesh = refine_nvb(single_triangle(), {0})
    assert mesh.n_triangles == 2
    assert mesh.n_vertices == 4  # one midpoint added


def test_refine_closure_two_triangle_square():
    # Hand-executed: the diagonal is both triangles' refinement edge, so
    # marking one element bisects the neighbour too.
    mesh = refine_nvb(make_unit_square_mesh(1), {0})
    assert mesh.n_triangles == 4
    assert mesh.n_vertices == 5


def test_refine_empty_marked_is_noop():
    mesh = make_unit_square_mesh(2)
    out = refine_nvb(mesh, set())
    assert out.n_triangles == mesh.n_triangles


def test_refine_rejects_bad_index():
    with pytest.raises(IndexError):
        refine_nvb(make_unit_square_mesh(1), {7})


def test_refine_rejects_nonconforming_mesh():
    # Hanging node: right triangle pair where one side is split.
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
    )
    triangles = [[0, 1, 2], [0, 2, 4], [0, 4, 3]]
    # constructing checks as well
    with pytest.raises(MeshError):
        TriangleMesh(vertices, triangles)
    bad = TriangleMesh(vertices, triangles, check=False)
    with pytest.raises(MeshError):
        refine_nvb(bad, {0})


def test_uniform_refine_two_sweeps():
    # Hand-executed: pass one bisects both triangles through the diagonal,
    # pass two bisects each of the 4 children once.
    mesh = uniform_refine(make_unit_square_mesh(1))
    assert mesh.n_triangles == 8
    assert mesh.domain_area == pytest.approx(1.0, rel=1e-12)
    assert mesh.diameters.max() == pytest.approx(np.sqrt(2.0) / 2.0)


def test_uniform_refine_quarters_every_element():
    mesh = make_lshape_mesh()
    fine = uniform_refine(mesh)
    assert fine.areas.max() <= mesh.areas.max() / 4 + 1e-15
    assert fine.domain_area == pytest.approx(3.0, rel=1e-12)


def test_conformity_after_refinement():
    rng = np.random.default_rng(7)
    mesh = make_lshape_mesh()
    for _ in range(6):
        marked = rng.choice(
            mesh.n_triangles, size=max(1, mesh.n_triangles // 4), replace=False
        )
        mesh = refine_nvb(mesh, marked)
        counts = mesh.edge_triangle_count
        assert set(np.unique(counts)) <= {1, 2}
        mesh.validate()


def test_area_preserved_under_refinement():
    mesh = make_unit_square_mesh(2)
    rng = np.random.default_rng(3)
    for _ in range(5):
        mesh = refine_nvb(mesh, rng.choice(mesh.n_triangles, size=3, replace=False))
        assert mesh.domain_area == pytest.approx(1.0, rel=1e-12)


def test_children_contain_refinement_edge_midpoint():
    mesh = make_unit_square_mesh(1)
    marked = [0]
    refined, parents, _ = __import__("lsbrink.mesh", fromlist=["_refine"])._refine(
        mesh, marked
    )
    for child, parent in zip(range(refined.n_triangles), parents):
        e = mesh.tri_edges[parent, mesh.refinement_edge[parent]]
        mid = 0.5 * (mesh.vertices[mesh.edges[e, 0]] + mesh.vertices[mesh.edges[e, 1]])
        child_coords = refined.vertices[refined.triangles[child]]
        assert (np.abs(child_coords - mid).sum(axis=1) < 1e-14).any()


def test_min_angle_bounded_over_ten_uniform_refinements():
    # Newest-vertex bisection creates finitely many similarity classes:
    # the smallest angle never drops below half the initial one.
    mesh = make_unit_square_mesh(1)
    floor = mesh.min_angles.min() / 2.0
    for _ in range(10):
        mesh = uniform_refine(mesh)
        assert mesh.min_angles.min() >= floor
    assert mesh.domain_area == pytest.approx(1.0, rel=1e-12)


def test_geometry_reference_triangle():
    geo = geometry(single_triangle(), 0)
    assert geo.area == pytest.approx(0.5)
    assert geo.diameter == pytest.approx(np.sqrt(2.0))


def test_geometry_scaled_triangle():
    mesh = TriangleMesh(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), [[0, 1, 2]])
    assert geometry(mesh, 0).area == pytest.approx(2.0)


def test_geometry_normals_outward_unit():
    mesh = make_lshape_mesh()
    for t in range(mesh.n_triangles):
        geo = geometry(mesh, t)
        centroid = mesh.centroids[t]
        p = mesh.corners[t]
        for i in range(3):
            assert np.linalg.norm(geo.normals[i]) == pytest.approx(1.0)
            edge_mid = 0.5 * (p[(i + 1) % 3] + p[(i + 2) % 3])
            assert geo.normals[i] @ (edge_mid - centroid) > 0


def test_geometry_affine_map():
    mesh = make_lshape_mesh()
    geo = geometry(mesh, 3)
    corners = mesh.corners[3]
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mapped = geo.origin + ref @ geo.jacobian.T
    assert mapped == pytest.approx(corners)
    assert geo.area == pytest.approx(np.linalg.det(geo.jacobian) / 2.0)


def test_mesh_export_roundtrip(tmp_path):
    mesh = refine_nvb(make_lshape_mesh(), {0, 3})
    write_mesh(mesh, tmp_path / "nodes.txt", tmp_path / "elements.txt")
    back = read_mesh(tmp_path / "nodes.txt", tmp_path / "elements.txt")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.refinement_edge, mesh.refinement_edge)
