"""Global H(div)-conforming BDM and discontinuous modal P spaces.

Global BDM degrees of freedom are normal point values at Gauss points of the
globally oriented edges (shared verbatim by both adjacent cells, which is what
makes the normal trace continuous) plus, for BDM_2, the classical interior
moments.  Each cell stores the transformation from Piola-mapped reference
monomials to the basis dual to those global functionals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import elements as el
from .mesh import Mesh
from .time_basis import gauss_rule, _gauss_rule_any

__all__ = ["FunctionSpace", "build_space", "eval_field", "eval_div", "eval_gradient",
           "interpolate_vector_field", "project_scalar_field", "remove_mean"]

DENSE_EDGE_POINTS = 10   # moment quadrature for interpolating analytic data


@dataclass
class VolumeTabulation:
    points: np.ndarray          # (nc, nq, 2) physical quadrature points
    weights: np.ndarray         # (nc, nq) physical weights
    values: np.ndarray          # (nc, nq, nd, [2])
    divs: np.ndarray | None     # (nc, nq, nd) vector spaces only
    grads: np.ndarray | None    # (nc, nq, nd, 2, 2)


@dataclass
class EdgeTraces:
    """Basis traces at edge quadrature points, both sides for interior edges.

    Normals point out of the first (lowest-index) adjacent cell; the quadrature
    parameter runs along the globally oriented edge so both sides see the same
    physical points.
    """

    s_nodes: np.ndarray         # (nq,) parameter nodes on [0, 1]
    s_weights: np.ndarray       # (nq,) weights summing to 1
    points: np.ndarray          # (ne, nq, 2)
    normals: np.ndarray         # (ne, 2) out of first cell
    values0: np.ndarray         # (ne, nq, nd, 2)
    strains0: np.ndarray        # (ne, nq, nd, 2, 2) symmetrized gradients
    interior: np.ndarray        # indices of interior edges
    values1: np.ndarray         # (n_int, nq, nd, 2) second-cell traces
    strains1: np.ndarray


class FunctionSpace:
    """Finite element space over a mesh with a global cell-to-DOF map.

    Parameters
    ----------
    mesh : Mesh
    family : "BDM" (vector, H(div)) or "DGP" (scalar, discontinuous)
    degree : polynomial degree (BDM: 1 or 2; DGP: 0 or 1)
    bc : None or "zero_normal" (pins all boundary-edge normal DOFs)
    quad_degree : exactness degree of the volume/edge quadrature
    """

    def __init__(self, mesh: Mesh, family: str, degree: int, bc: str | None,
                 quad_degree: int):
        if bc not in (None, "zero_normal"):
            raise ValueError(f"unknown bc {bc!r}")
        if bc == "zero_normal" and family != "BDM":
            raise ValueError("normal-trace constraints only apply to BDM spaces")
        self.mesh = mesh
        self.element = el.reference_element(family, degree)
        self.family = family
        self.degree = degree
        self.bc = bc
        self.quad_degree = quad_degree

        cells = mesh.cells
        verts = mesh.vertices[cells]                       # (nc, 3, 2)
        b = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=-1)
        det = b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]
        if np.any(det <= 0):
            raise el.GeometryError("negatively oriented cell")
        self.cell_matrix = b
        self.cell_origin = verts[:, 0]
        self.cell_det = det
        self.cell_inverse = np.linalg.inv(b)

        if family == "BDM":
            self._init_bdm()
        else:
            self._init_dgp()

        if bc == "zero_normal":
            constrained = np.zeros(self.ndofs, dtype=bool)
            npe = self.element.n_edge_dofs
            for e in np.flatnonzero(mesh.boundary_edge):
                constrained[e * npe:(e + 1) * npe] = True
            self.constrained = constrained
        else:
            self.constrained = np.zeros(self.ndofs, dtype=bool)
        self.free = np.flatnonzero(~self.constrained)

    # -- construction ------------------------------------------------------

    def _init_dgp(self) -> None:
        nloc = self.element.dim
        nc = self.mesh.num_cells
        self.ndofs = nc * nloc
        self.cell_dofs = np.arange(self.ndofs, dtype=np.int64).reshape(nc, nloc)
        self.dof_transform = None

    def _init_bdm(self) -> None:
        mesh = self.mesh
        elem = self.element
        npe = elem.n_edge_dofs
        ni = elem.n_interior_dofs
        nloc = elem.dim
        nc = mesh.num_cells
        self.ndofs = mesh.num_edges * npe + nc * ni

        cell_dofs = np.empty((nc, nloc), dtype=np.int64)
        for le in range(3):
            eids = mesh.cell_edges[:, le]
            for j in range(npe):
                cell_dofs[:, le * npe + j] = eids * npe + j
        interior_offset = mesh.num_edges * npe
        for m in range(ni):
            cell_dofs[:, 3 * npe + m] = interior_offset + np.arange(nc) * ni + m
        self.cell_dofs = cell_dofs

        # rows of T: global functionals applied to Piola-mapped monomials
        exps = elem.exponents
        spt = elem.edge_points
        t = np.empty((nc, nloc, nloc))
        for le in range(3):
            eids = mesh.cell_edges[:, le]
            a = mesh.vertices[mesh.edges[eids, 0]]
            bv = mesh.vertices[mesh.edges[eids, 1]]
            normals = mesh.edge_normals[eids]              # global orientation
            pts = a[:, None, :] + spt[None, :, None] * (bv - a)[:, None, :]
            ref = np.einsum("cab,cqb->cqa", self.cell_inverse, pts - self.cell_origin[:, None, :])
            monos = el.eval_vector_monomials(exps, ref)    # (2nm, nc, npe, 2)
            phys = np.einsum("cab,mcqb->mcqa", self.cell_matrix, monos) / self.cell_det[None, :, None, None]
            t[:, le * npe:(le + 1) * npe, :] = np.einsum("mcqa,ca->cqm", phys, normals)
        if ni:
            qp, qw = el.triangle_rule(max(self.quad_degree, 2 * self.degree + 2))
            monos = el.eval_vector_monomials(exps, qp)     # (2nm, nq, 2)
            phys = np.einsum("cab,mqb->mcqa", self.cell_matrix, monos) / self.cell_det[None, :, None, None]
            # interior moments normalized by cell area for uniform conditioning
            area = 0.5 * self.cell_det
            w = self.cell_det[:, None] * qw[None, :] / area[:, None]
            t[:, 3 * npe + 0, :] = np.einsum("cq,mcq->cm", w, phys[..., 0])
            t[:, 3 * npe + 1, :] = np.einsum("cq,mcq->cm", w, phys[..., 1])
            curl = self._bubble_curl_physical(qp)          # (nc, nq, 2)
            t[:, 3 * npe + 2, :] = np.einsum("cq,mcqa,cqa->cm", w, phys, curl)
        # dual coefficients: basis_i = sum_m dof_transform[c, m, i] piola(mono_m)
        self.dof_transform = np.linalg.inv(t)

    def _bubble_curl_physical(self, ref_points: np.ndarray) -> np.ndarray:
        """curl of the physical cubic bubble at reference points; (nc, nq, 2)."""
        lam = np.stack([1.0 - ref_points[:, 0] - ref_points[:, 1],
                        ref_points[:, 0], ref_points[:, 1]])          # (3, nq)
        grad_ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])   # (3, 2)
        grad_lam = np.einsum("ia,cab->cib", grad_ref, self.cell_inverse)  # (nc, 3, 2)
        grad_b = (grad_lam[:, 0, None, :] * (lam[1] * lam[2])[None, :, None]
                  + grad_lam[:, 1, None, :] * (lam[0] * lam[2])[None, :, None]
                  + grad_lam[:, 2, None, :] * (lam[0] * lam[1])[None, :, None])
        return np.stack([grad_b[..., 1], -grad_b[..., 0]], axis=-1)

    # -- counting ------------------------------------------------------------

    @property
    def n_free(self) -> int:
        return self.free.size

    def geometry(self, cell: int) -> el.CellGeometry:
        return el.CellGeometry(self.cell_matrix[cell], self.cell_origin[cell],
                               float(self.cell_det[cell]), self.cell_inverse[cell])

    # -- tabulation ----------------------------------------------------------

    @cached_property
    def volume(self) -> VolumeTabulation:
        qp, qw = el.triangle_rule(self.quad_degree)
        points = np.einsum("cab,qb->cqa", self.cell_matrix, qp) + self.cell_origin[:, None, :]
        weights = self.cell_det[:, None] * qw[None, :]
        if self.family == "DGP":
            vals = self.element.tabulate(qp)               # same on every cell
            values = np.broadcast_to(vals, (self.mesh.num_cells,) + vals.shape)
            return VolumeTabulation(points, weights, values, None, None)
        monos = el.eval_vector_monomials(self.element.exponents, qp)
        mdivs = el.eval_vector_monomial_divs(self.element.exponents, qp)
        mgrads = el.eval_vector_monomial_grads(self.element.exponents, qp)
        c = self.dof_transform
        det = self.cell_det
        values = np.einsum("cmi,cab,mqb->cqia", c, self.cell_matrix, monos) / det[:, None, None, None]
        divs = np.einsum("cmi,mq->cqi", c, mdivs) / det[:, None, None]
        grads = np.einsum("cmi,cab,mqbd,cde->cqiae", c, self.cell_matrix, mgrads,
                          self.cell_inverse) / det[:, None, None, None, None]
        return VolumeTabulation(points, weights, values, divs, grads)

    @cached_property
    def edge_traces(self) -> EdgeTraces:
        if self.family != "BDM":
            raise ValueError("edge traces tabulated for vector spaces only")
        mesh = self.mesh
        n_pts = (self.quad_degree + 3) // 2
        rule = gauss_rule(n_pts)
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        pts = a[:, None, :] + rule.nodes[None, :, None] * (b - a)[:, None, :]
        first = mesh.edge_cells[:, 0]
        centroids = mesh.vertices[mesh.cells[first]].mean(axis=1)
        sign = np.sign(np.einsum("ea,ea->e", mesh.edge_normals,
                                 mesh.edge_midpoints - centroids))
        normals = mesh.edge_normals * sign[:, None]
        vals0, grads0 = self.tabulate_at(first, pts, grads=True)
        interior = np.flatnonzero(~mesh.boundary_edge)
        vals1, grads1 = self.tabulate_at(mesh.edge_cells[interior, 1], pts[interior],
                                         grads=True)
        return EdgeTraces(rule.nodes, rule.weights, pts, normals,
                          vals0, 0.5 * (grads0 + np.swapaxes(grads0, -1, -2)),
                          interior,
                          vals1, 0.5 * (grads1 + np.swapaxes(grads1, -1, -2)))

    @cached_property
    def volume_seconds(self) -> np.ndarray:
        """Second derivatives at volume quadrature points; (nc, nq, nd, 2, 2, 2)."""
        if self.family != "BDM":
            raise ValueError("second-derivative tabulation only for BDM spaces")
        qp, _ = el.triangle_rule(self.quad_degree)
        msec = el.eval_vector_monomial_seconds(self.element.exponents, qp)
        return np.einsum("cmi,cab,mqbde,cdf,ceg->cqiafg", self.dof_transform,
                         self.cell_matrix, msec, self.cell_inverse,
                         self.cell_inverse) / self.cell_det[:, None, None, None, None, None]

    def tabulate_at(self, cells: np.ndarray, points: np.ndarray,
                    grads: bool = False):
        """Basis values (and gradients) at arbitrary physical points.

        cells: (n,) cell index per point row group; points: (n, nq, 2).
        Returns values (n, nq, nd, [2]) and optionally gradients.
        """
        cells = np.asarray(cells)
        binv = self.cell_inverse[cells]
        ref = np.einsum("nab,nqb->nqa", binv, points - self.cell_origin[cells][:, None, :])
        if self.family == "DGP":
            monos = el.eval_scalar_monomials(self.element.exponents, ref)  # (nm, n, nq)
            vals = np.einsum("mi,mnq->nqi", self.element.dual_coeffs, monos)
            return (vals, None) if grads else vals
        monos = el.eval_vector_monomials(self.element.exponents, ref)      # (2nm, n, nq, 2)
        c = self.dof_transform[cells]
        det = self.cell_det[cells]
        bmat = self.cell_matrix[cells]
        vals = np.einsum("nmi,nab,mnqb->nqia", c, bmat, monos) / det[:, None, None, None]
        if not grads:
            return vals
        mgrads = el.eval_vector_monomial_grads(self.element.exponents, ref)
        g = np.einsum("nmi,nab,mnqbd,nde->nqiae", c, bmat, mgrads, binv) / det[:, None, None, None, None]
        return vals, g

    # -- field evaluation ------------------------------------------------------

    def values_on_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values at the volume quadrature points; (nc, nq, [2])."""
        local = np.asarray(coeffs)[self.cell_dofs]
        if self.family == "DGP":
            return np.einsum("cqi,ci->cq", self.volume.values, local)
        return np.einsum("cqia,ci->cqa", self.volume.values, local)

    def divs_on_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        local = np.asarray(coeffs)[self.cell_dofs]
        return np.einsum("cqi,ci->cq", self.volume.divs, local)

    def grads_on_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        local = np.asarray(coeffs)[self.cell_dofs]
        return np.einsum("cqiab,ci->cqab", self.volume.grads, local)

    def seconds_on_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        local = np.asarray(coeffs)[self.cell_dofs]
        return np.einsum("cqiabd,ci->cqabd", self.volume_seconds, local)

    def lift(self, free_values: np.ndarray) -> np.ndarray:
        """Embed free-DOF values into a full vector (constrained entries zero)."""
        full = np.zeros(free_values.shape[:-1] + (self.ndofs,))
        full[..., self.free] = free_values
        return full


def build_space(mesh: Mesh, family: str, degree: int, bc: str | None = None,
                quad_degree: int | None = None) -> FunctionSpace:
    """Construct a global space; quadrature defaults to the exactness degree
    2(l+2) of the discretization pair (l = scalar degree)."""
    if quad_degree is None:
        ell = degree - 1 if family == "BDM" else degree
        quad_degree = 2 * (ell + 2)
    return FunctionSpace(mesh, family, degree, bc, quad_degree)


def _locate(space: FunctionSpace, cell: int, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if not (0 <= cell < space.mesh.num_cells):
        raise ValueError(f"cell {cell} out of range")
    ref = space.cell_inverse[cell] @ (point - space.cell_origin[cell])
    tol = 1e-12
    if ref[0] < -tol or ref[1] < -tol or ref[0] + ref[1] > 1.0 + tol:
        raise ValueError(f"point {point} lies outside cell {cell}")
    return ref


def eval_field(space: FunctionSpace, coeffs: np.ndarray, cell: int, point):
    """Point evaluation; scalar for DGP, length-2 vector for BDM."""
    ref = _locate(space, cell, point)
    local = np.asarray(coeffs)[space.cell_dofs[cell]]
    if space.family == "DGP":
        monos = el.eval_scalar_monomials(space.element.exponents, ref[None, :])
        vals = np.einsum("mi,mq->qi", space.element.dual_coeffs, monos)[0]
        return float(vals @ local)
    geom = space.geometry(cell)
    monos = el.eval_vector_monomials(space.element.exponents, ref[None, :])
    vals = el.piola_values(geom, np.einsum("mi,mqa->qia", space.dof_transform[cell], monos))[0]
    return vals.T @ local


def eval_div(space: FunctionSpace, coeffs: np.ndarray, cell: int, point) -> float:
    ref = _locate(space, cell, point)
    local = np.asarray(coeffs)[space.cell_dofs[cell]]
    divs = el.eval_vector_monomial_divs(space.element.exponents, ref[None, :])
    nodal = np.einsum("mi,mq->qi", space.dof_transform[cell], divs)[0] / space.cell_det[cell]
    return float(nodal @ local)


def eval_gradient(space: FunctionSpace, coeffs: np.ndarray, cell: int, point) -> np.ndarray:
    ref = _locate(space, cell, point)
    local = np.asarray(coeffs)[space.cell_dofs[cell]]
    geom = space.geometry(cell)
    mg = el.eval_vector_monomial_grads(space.element.exponents, ref[None, :])
    nodal = el.piola_gradients(geom, np.einsum("mi,mqab->qiab", space.dof_transform[cell], mg))[0]
    return np.einsum("iab,i->ab", nodal, local)


# -- canonical interpolation / projection of analytic data ---------------------

def interpolate_vector_field(space: FunctionSpace, fn) -> np.ndarray:
    """Canonical BDM interpolant: edge moments against P_degree per edge plus
    the interior moments, evaluated with dense quadrature for analytic data.

    ``fn`` maps an (n, 2) array of points to (n, 2) values.
    """
    if space.family != "BDM":
        raise ValueError("vector interpolation requires a BDM space")
    mesh = space.mesh
    r = space.degree
    npe = space.element.n_edge_dofs
    coeffs = np.zeros(space.ndofs)

    rule = _gauss_rule_any(DENSE_EDGE_POINTS)
    s_dense, w_dense = rule.nodes, rule.weights
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + s_dense[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(fn(pts.reshape(-1, 2))).reshape(mesh.num_edges, -1, 2)
    vn = np.einsum("eqa,ea->eq", vals, mesh.edge_normals)
    # L2(edge) projection of v.n onto P_r in the edge parameter, then nodal values
    powers = s_dense[None, :] ** np.arange(r + 1)[:, None]          # (r+1, nq)
    moments = np.einsum("q,iq,eq->ei", w_dense, powers, vn)
    gram = 1.0 / (np.arange(r + 1)[:, None] + np.arange(r + 1)[None, :] + 1.0)
    trace_coeff = np.linalg.solve(gram, moments.T).T                 # (ne, r+1)
    nodal = trace_coeff @ (space.element.edge_points[None, :] ** np.arange(r + 1)[:, None])
    coeffs[:mesh.num_edges * npe] = nodal.reshape(-1)

    ni = space.element.n_interior_dofs
    if ni:
        qp, qw = el.triangle_rule(min(space.quad_degree + 4, 12))
        points = np.einsum("cab,qb->cqa", space.cell_matrix, qp) + space.cell_origin[:, None, :]
        area = 0.5 * space.cell_det
        w = space.cell_det[:, None] * qw[None, :] / area[:, None]
        v = np.asarray(fn(points.reshape(-1, 2))).reshape(points.shape)
        base = mesh.num_edges * npe
        coeffs[base + 0::ni] = np.einsum("cq,cq->c", w, v[..., 0])
        coeffs[base + 1::ni] = np.einsum("cq,cq->c", w, v[..., 1])
        curl = space._bubble_curl_physical(qp)
        coeffs[base + 2::ni] = np.einsum("cq,cqa,cqa->c", w, v, curl)
    return coeffs


def project_scalar_field(space: FunctionSpace, fn, quad_degree: int | None = None) -> np.ndarray:
    """Cell-local L2 projection onto the modal basis (diagonal mass)."""
    if space.family != "DGP":
        raise ValueError("scalar projection requires a DGP space")
    degree = quad_degree if quad_degree is not None else min(space.quad_degree + 4, 12)
    qp, qw = el.triangle_rule(degree)
    points = np.einsum("cab,qb->cqa", space.cell_matrix, qp) + space.cell_origin[:, None, :]
    f = np.asarray(fn(points.reshape(-1, 2))).reshape(points.shape[:2])
    vals = space.element.tabulate(qp)                                # (nq, nloc)
    # physical cell mass is diag(cell area) for the scaled modal basis
    return 2.0 * np.einsum("q,cq,qi->ci", qw, f, vals).reshape(-1)


def remove_mean(space: FunctionSpace, coeffs: np.ndarray) -> np.ndarray:
    """Shift the constant mode so the field integrates to zero over the domain."""
    if space.family != "DGP":
        raise ValueError("mean removal applies to scalar spaces")
    vals = space.values_on_quadrature(coeffs)
    total = float(np.einsum("cq,cq->", space.volume.weights, vals))
    area = float(space.volume.weights.sum())
    out = np.array(coeffs, dtype=float, copy=True)
    const_value = space.element.tabulate(np.zeros((1, 2)))[0, 0]     # constant mode height
    nloc = space.element.dim
    out[0::nloc] -= (total / area) / const_value
    return out
