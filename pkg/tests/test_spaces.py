import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biotcgp import spaces as sps
from biotcgp.mesh import refine_uniform, structured_mesh


def _random_point_in_cell(mesh, cell, rng):
    lam = rng.dirichlet([1.0, 1.0, 1.0])
    return lam @ mesh.vertices[mesh.cells[cell]]


# --- DOF counting ------------------------------------------------------------

def test_bdm1_counts_two_cell(mesh1):
    space = sps.build_space(mesh1, "BDM", 1, bc="zero_normal")
    assert space.ndofs == 10                       # 2 per edge x 5 edges
    assert int(space.constrained.sum()) == 8       # 4 boundary edges x 2
    assert space.n_free == 2


def test_dgp_counts(mesh1):
    space = sps.build_space(mesh1, "DGP", 0)
    assert space.ndofs == 2
    assert int(space.constrained.sum()) == 0


def test_counts_follow_mesh_quantities():
    mesh = structured_mesh(3, 2)
    fine = refine_uniform(mesh)
    for m in (mesh, fine):
        bdm1 = sps.build_space(m, "BDM", 1)
        assert bdm1.ndofs == 2 * m.num_edges
        bdm2 = sps.build_space(m, "BDM", 2)
        assert bdm2.ndofs == 3 * m.num_edges + 3 * m.num_cells
        p0 = sps.build_space(m, "DGP", 0)
        assert p0.ndofs == m.num_cells
        p1 = sps.build_space(m, "DGP", 1)
        assert p1.ndofs == 3 * m.num_cells


# --- evaluation ----------------------------------------------------------------

def test_zero_coefficients_zero_field(mesh2, rng):
    space = sps.build_space(mesh2, "BDM", 1)
    pt = _random_point_in_cell(mesh2, 3, rng)
    assert np.allclose(sps.eval_field(space, np.zeros(space.ndofs), 3, pt), 0.0)


def test_constant_interpolation_and_div(mesh2, rng):
    space = sps.build_space(mesh2, "BDM", 1)
    coeffs = sps.interpolate_vector_field(
        space, lambda x: np.broadcast_to([1.0, 0.0], x.shape).copy())
    for _ in range(10):
        cell = int(rng.integers(0, mesh2.num_cells))
        pt = _random_point_in_cell(mesh2, cell, rng)
        assert np.allclose(sps.eval_field(space, coeffs, cell, pt), [1.0, 0.0],
                           atol=1e-13)
        assert abs(sps.eval_div(space, coeffs, cell, pt)) <= 1e-12


def test_linear_interpolation_div_two(mesh2, rng):
    space = sps.build_space(mesh2, "BDM", 1)
    coeffs = sps.interpolate_vector_field(space, lambda x: x.copy())
    for _ in range(10):
        cell = int(rng.integers(0, mesh2.num_cells))
        pt = _random_point_in_cell(mesh2, cell, rng)
        assert np.allclose(sps.eval_field(space, coeffs, cell, pt), pt, atol=1e-12)
        assert abs(sps.eval_div(space, coeffs, cell, pt) - 2.0) <= 1e-12
        grad = sps.eval_gradient(space, coeffs, cell, pt)
        assert np.allclose(grad, np.eye(2), atol=1e-12)


def test_point_outside_cell_rejected(mesh2):
    space = sps.build_space(mesh2, "BDM", 1)
    with pytest.raises(ValueError):
        sps.eval_field(space, np.zeros(space.ndofs), 0, [0.95, 0.95])
    with pytest.raises(ValueError):
        sps.eval_field(space, np.zeros(space.ndofs), 99, [0.1, 0.1])


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(-3.0, 3.0), shift=st.floats(-2.0, 2.0))
def test_evaluation_linear_in_coefficients(scale, shift):
    mesh = structured_mesh(2, 2)
    space = sps.build_space(mesh, "BDM", 1)
    rng = np.random.default_rng(11)
    c1 = rng.standard_normal(space.ndofs)
    c2 = rng.standard_normal(space.ndofs)
    pt = np.array([0.3, 0.2])
    cell = 0 if np.sum(np.abs(pt)) else 0
    v = sps.eval_field(space, scale * c1 + shift * c2, cell, pt)
    v_lin = (scale * np.asarray(sps.eval_field(space, c1, cell, pt))
             + shift * np.asarray(sps.eval_field(space, c2, cell, pt)))
    assert np.allclose(v, v_lin, atol=1e-11)


# --- conformity invariants --------------------------------------------------------

@pytest.mark.parametrize("degree", [1, 2])
def test_normal_trace_continuity(degree, rng):
    mesh = structured_mesh(3, 3)
    space = sps.build_space(mesh, "BDM", degree)
    coeffs = rng.standard_normal(space.ndofs)
    tr = space.edge_traces
    interior = tr.interior
    pick = interior[rng.integers(0, interior.size, 6)]
    for e in pick:
        idx = int(np.flatnonzero(interior == e)[0])
        c0, c1 = mesh.edge_cells[e]
        t0 = np.einsum("qia,i->qa", tr.values0[e], coeffs[space.cell_dofs[c0]])
        t1 = np.einsum("qia,i->qa", tr.values1[idx], coeffs[space.cell_dofs[c1]])
        n = tr.normals[e]
        assert np.abs((t0 - t1) @ n).max() <= 1e-11 * max(1.0, np.abs(t0).max())


def test_shared_edge_trace_from_both_cells(mesh1, rng):
    # single interior edge of the 2-cell mesh, 5 sample points
    space = sps.build_space(mesh1, "BDM", 1)
    coeffs = rng.standard_normal(space.ndofs)
    e = int(np.flatnonzero(~mesh1.boundary_edge)[0])
    a, b = mesh1.vertices[mesh1.edges[e]]
    n = mesh1.edge_normals[e]
    c0, c1 = mesh1.edge_cells[e]
    for s in np.linspace(0.05, 0.95, 5):
        pt = a + s * (b - a)
        v0 = np.asarray(sps.eval_field(space, coeffs, int(c0), pt)) @ n
        v1 = np.asarray(sps.eval_field(space, coeffs, int(c1), pt)) @ n
        assert abs(v0 - v1) <= 1e-12 * max(1.0, abs(v0))


@pytest.mark.parametrize("degree", [1, 2])
def test_div_compatibility_with_scalar_space(degree, rng):
    mesh = structured_mesh(3, 3)
    space = sps.build_space(mesh, "BDM", degree)
    pspace = sps.build_space(mesh, "DGP", degree - 1)
    coeffs = rng.standard_normal(space.ndofs)
    divq = space.divs_on_quadrature(coeffs)
    # L2 projection onto the scalar space (diagonal modal mass)
    vals = pspace.volume.values
    w = pspace.volume.weights
    diag = np.repeat(mesh.areas, pspace.element.dim)
    proj = (np.einsum("cq,cq,cqi->ci", w, divq, vals).reshape(-1)) / diag
    recon = pspace.values_on_quadrature(proj)
    num = np.sqrt(np.einsum("cq,cq->", w, (divq - recon) ** 2))
    den = max(np.sqrt(np.einsum("cq,cq->", w, divq ** 2)), 1e-30)
    assert num / den <= 1e-12


@pytest.mark.parametrize("degree", [1, 2])
def test_vector_polynomial_reproduction(degree, rng):
    mesh = structured_mesh(2, 3)
    space = sps.build_space(mesh, "BDM", degree)
    coeff = rng.standard_normal((2, degree + 1, degree + 1))

    def poly(x):
        out = np.zeros_like(x)
        for comp in range(2):
            for a in range(degree + 1):
                for b in range(degree + 1 - a):
                    out[:, comp] += coeff[comp, a, b] * x[:, 0] ** a * x[:, 1] ** b
        return out

    coeffs = sps.interpolate_vector_field(space, poly)
    for _ in range(10):
        cell = int(rng.integers(0, mesh.num_cells))
        pt = _random_point_in_cell(mesh, cell, rng)
        assert np.allclose(sps.eval_field(space, coeffs, cell, pt), poly(pt[None])[0],
                           atol=1e-10)


@pytest.mark.parametrize("degree", [0, 1])
def test_scalar_polynomial_reproduction(degree, rng):
    mesh = structured_mesh(2, 2)
    space = sps.build_space(mesh, "DGP", degree)
    coeff = rng.standard_normal((degree + 1, degree + 1))

    def poly(x):
        out = np.zeros(x.shape[0])
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                out += coeff[a, b] * x[:, 0] ** a * x[:, 1] ** b
        return out

    coeffs = sps.project_scalar_field(space, poly)
    vals = space.values_on_quadrature(coeffs)
    expect = poly(space.volume.points.reshape(-1, 2)).reshape(vals.shape)
    assert np.abs(vals - expect).max() <= 1e-12 * max(1.0, np.abs(expect).max())


def test_remove_mean(mesh2):
    space = sps.build_space(mesh2, "DGP", 1)
    coeffs = sps.project_scalar_field(space, lambda x: 1.7 + x[:, 0])
    balanced = sps.remove_mean(space, coeffs)
    vals = space.values_on_quadrature(balanced)
    mean = np.einsum("cq,cq->", space.volume.weights, vals)
    assert abs(mean) <= 1e-12
