import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biotcgp.mesh import (facet_geometry, refine_uniform, structured_mesh,
                          write_vtk_edges, write_vtk_mesh)


def test_unit_square_single_quad_counts(mesh1):
    assert mesh1.num_cells == 2
    assert mesh1.num_edges == 5
    assert mesh1.num_vertices == 4
    assert int(mesh1.boundary_edge.sum()) == 4
    assert int((~mesh1.boundary_edge).sum()) == 1


def test_2x2_counts_and_area(mesh2):
    assert mesh2.num_cells == 8
    assert abs(mesh2.domain_area - 1.0) <= 1e-14


def test_euler_4x4():
    mesh = structured_mesh(4, 4)
    assert (mesh.num_vertices, mesh.num_edges, mesh.num_cells) == (25, 56, 32)
    assert mesh.num_vertices - mesh.num_edges + mesh.num_cells == 1


@settings(max_examples=15, deadline=None)
@given(nx=st.integers(1, 6), ny=st.integers(1, 6))
def test_structured_invariants(nx, ny):
    mesh = structured_mesh(nx, ny, ((0.0, 0.0), (2.0, 1.5)))
    mesh.validate()
    assert mesh.num_cells == 2 * nx * ny
    assert abs(mesh.domain_area - 3.0) <= 1e-12 * 3.0


def test_degenerate_rectangle_rejected():
    with pytest.raises(ValueError):
        structured_mesh(2, 2, ((0.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        structured_mesh(0, 2)


def test_refinement_counts_and_sizes():
    coarse = structured_mesh(2, 3)
    fine = refine_uniform(coarse)
    fine.validate()
    assert fine.num_cells == 4 * coarse.num_cells
    assert int(fine.boundary_edge.sum()) == 2 * int(coarse.boundary_edge.sum())
    assert abs(fine.h_cell.max() - 0.5 * coarse.h_cell.max()) <= 1e-14
    assert abs(fine.domain_area - coarse.domain_area) <= 1e-13


def test_refinement_preserves_min_angle():
    mesh = structured_mesh(2, 2)
    refined = refine_uniform(refine_uniform(mesh))
    assert abs(refined.min_angle() - mesh.min_angle()) <= 1e-12


def test_facet_geometry_orientation(mesh2):
    facets = facet_geometry(mesh2)
    for f in facets:
        assert abs(np.linalg.norm(f.normal) - 1.0) <= 1e-14
        edge_vec = (mesh2.vertices[mesh2.edges[f.edge, 1]]
                    - mesh2.vertices[mesh2.edges[f.edge, 0]])
        assert abs(np.dot(f.normal, edge_vec)) <= 1e-13
        # outward from the first (lower-index) cell
        first = f.cells[0]
        centroid = mesh2.vertices[mesh2.cells[first]].mean(axis=0)
        assert np.dot(f.normal, f.midpoint - centroid) > 0.0
        if f.cells[1] >= 0:
            other = mesh2.vertices[mesh2.cells[f.cells[1]]].mean(axis=0)
            assert np.dot(-f.normal, f.midpoint - other) > 0.0


def test_boundary_normal_points_outward(mesh1):
    facets = facet_geometry(mesh1)
    right = [f for f in facets if abs(f.midpoint[0] - 1.0) < 1e-14]
    assert len(right) == 1
    assert np.allclose(right[0].normal, [1.0, 0.0], atol=1e-14)


def test_vtk_exports(tmp_path, mesh2):
    mesh_path = os.path.join(tmp_path, "mesh.vtk")
    write_vtk_mesh(mesh2, mesh_path, {"p": np.arange(mesh2.num_cells, dtype=float)})
    text = open(mesh_path).read()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert f"CELLS {mesh2.num_cells}" in text
    assert "SCALARS p double 1" in text

    edge_path = os.path.join(tmp_path, "edges.vtk")
    write_vtk_edges(mesh2, edge_path, {"w": np.ones((mesh2.num_edges, 2))})
    text = open(edge_path).read()
    assert "DATASET POLYDATA" in text
    assert "VECTORS w double" in text
