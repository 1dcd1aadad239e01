import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biotcgp import elements as el


# --- quadrature on the reference triangle --------------------------------------

@pytest.mark.parametrize("degree", range(1, 11))
def test_triangle_rule_exactness(degree):
    qp, qw = el.triangle_rule(degree)
    assert abs(qw.sum() - 0.5) <= 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = float(qw @ (qp[:, 0] ** a * qp[:, 1] ** b))
            assert abs(got - exact) <= 5e-15, (degree, a, b)


def test_triangle_rule_range():
    with pytest.raises(ValueError):
        el.triangle_rule(0)
    with pytest.raises(ValueError):
        el.triangle_rule(13)


# --- reference elements ----------------------------------------------------------

@pytest.mark.parametrize("degree,dim", [(1, 6), (2, 12)])
def test_bdm_dimension(degree, dim):
    elem = el.reference_element("BDM", degree)
    assert elem.dim == dim == (degree + 1) * (degree + 2)


@pytest.mark.parametrize("degree,dim", [(0, 1), (1, 3)])
def test_dgp_dimension(degree, dim):
    elem = el.reference_element("DGP", degree)
    assert elem.dim == dim == (degree + 1) * (degree + 2) // 2


def test_dgp_constant_mode_is_one():
    elem = el.reference_element("DGP", 0)
    pts = np.array([[0.1, 0.2], [0.4, 0.4], [0.05, 0.9]])
    assert np.allclose(elem.tabulate(pts)[:, 0], 1.0, atol=1e-14)


@pytest.mark.parametrize("degree", [1, 2])
def test_bdm_duality_identity(degree):
    elem = el.reference_element("BDM", degree)
    duality = np.empty((elem.dim, elem.dim))
    for i in range(elem.dim):
        duality[:, i] = elem.apply_dofs_bdm(
            lambda pts, i=i: elem.tabulate(pts)[:, i, :])
    assert np.abs(duality - np.eye(elem.dim)).max() <= 1e-12


@pytest.mark.parametrize("degree", [0, 1])
def test_dgp_duality_identity(degree):
    # DOFs are the scaled L2 moments matching the modal basis
    elem = el.reference_element("DGP", degree)
    qp, qw = el.triangle_rule(2 * degree + 2)
    vals = elem.tabulate(qp)
    duality = 2.0 * np.einsum("q,qi,qj->ij", qw, vals, vals)
    assert np.abs(duality - np.eye(elem.dim)).max() <= 1e-12


def test_bdm1_divergence_constant_per_cell():
    elem = el.reference_element("BDM", 1)
    pts = np.array([[0.2, 0.2], [0.5, 0.25], [0.15, 0.6]])
    divs = elem.tabulate_div(pts)
    spread = np.abs(divs - divs[0]).max()
    assert spread <= 1e-12


@pytest.mark.parametrize("degree", [1, 2])
def test_bdm_div_lies_in_lower_space(degree):
    # L2-project div(basis) onto P_{degree-1} and check zero residual
    elem = el.reference_element("BDM", degree)
    scalar = el.reference_element("DGP", degree - 1)
    qp, qw = el.triangle_rule(2 * degree + 2)
    divs = elem.tabulate_div(qp)                    # (nq, nd)
    modal = scalar.tabulate(qp)                     # (nq, np)
    coeffs = 2.0 * np.einsum("q,qi,qm->mi", qw, divs, modal)
    recon = np.einsum("qm,mi->qi", modal, coeffs)
    num = np.sqrt(np.einsum("q,qi,qi->", qw, divs - recon, divs - recon))
    den = max(np.sqrt(np.einsum("q,qi,qi->", qw, divs, divs)), 1.0)
    assert num / den <= 1e-12


def test_unsupported_degrees():
    with pytest.raises(ValueError):
        el.reference_element("BDM", 3)
    with pytest.raises(ValueError):
        el.reference_element("DGP", 2)
    with pytest.raises(ValueError):
        el.reference_element("RT", 1)


# --- Piola map ---------------------------------------------------------------------

def test_piola_identity_map():
    geom = el.CellGeometry.from_vertices([0, 0], [1, 0], [0, 1])
    field = lambda xi: np.stack([xi[:, 0] ** 2, xi[:, 1]], axis=-1)
    div = lambda xi: 2.0 * xi[:, 0] + 1.0
    v, dv = el.piola_map(geom, field, div)
    pts = np.array([[0.3, 0.1], [0.2, 0.5]])
    assert np.allclose(v(pts), field(pts), atol=1e-15)
    assert np.allclose(dv(pts), div(pts), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.2, 3.0))
def test_piola_uniform_scaling(s):
    geom = el.CellGeometry.from_vertices([0, 0], [s, 0], [0, s])
    field = lambda xi: np.stack([xi[:, 0], xi[:, 0] * xi[:, 1]], axis=-1)
    div = lambda xi: 1.0 + xi[:, 0]
    v, dv = el.piola_map(geom, field, div)
    pts_ref = np.array([[0.25, 0.25], [0.1, 0.6]])
    pts = geom.to_physical(pts_ref)
    # det J = s^2: the divergence scales by 1/s^2 relative to the pullback
    assert np.allclose(dv(pts), div(pts_ref) / s ** 2, rtol=1e-13)
    assert np.allclose(v(pts), field(pts_ref) @ geom.matrix.T / s ** 2, rtol=1e-13)


def test_piola_rejects_flipped_cells():
    with pytest.raises(el.GeometryError):
        el.CellGeometry.from_vertices([0, 0], [0, 1], [1, 0])


def test_piola_gradient_chain_rule(rng):
    geom = el.CellGeometry.from_vertices([0.2, 0.1], [1.1, 0.3], [0.4, 0.9])
    # reference linear field: gradient is constant and known
    g_ref = rng.standard_normal((2, 2))

    def field(xi):
        return xi @ g_ref.T

    grads_ref = np.broadcast_to(g_ref, (4, 2, 2))
    grads_phys = el.piola_gradients(geom, grads_ref)
    expected = geom.matrix @ g_ref @ geom.inverse / geom.det
    assert np.allclose(grads_phys, expected, atol=1e-14)
