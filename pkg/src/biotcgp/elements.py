"""Reference-triangle bases, spatial quadrature, and the contravariant map.

The reference triangle has vertices (0,0), (1,0), (0,1).  Vector elements are
built from the full polynomial space [P_r]^2 with normal-trace DOFs realized at
Gauss points of each edge plus the classical interior moments; scalar DG
elements use an L2-orthonormal modal basis so cell mass matrices are diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .time_basis import gauss_rule

__all__ = ["GeometryError", "ReferenceElement", "reference_element", "triangle_rule",
           "CellGeometry", "piola_map", "piola_values", "piola_divs", "piola_gradients",
           "piola_seconds"]


class GeometryError(ValueError):
    """Degenerate or negatively oriented cell map."""


# --- reference triangle data ----------------------------------------------

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edges (v0,v1), (v1,v2), (v2,v0) with outward unit normals
REF_EDGES = ((0, 1), (1, 2), (2, 0))
REF_EDGE_NORMALS = np.array([[0.0, -1.0], [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
                             [-1.0, 0.0]])


def scalar_exponents(degree: int) -> list[tuple[int, int]]:
    """Monomial exponents of P_degree, ordered by total degree."""
    return [(a, d - a) for d in range(degree + 1) for a in range(d, -1, -1)]


def _tri_moment(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


# --- symmetric quadrature on the triangle ----------------------------------

_DUNAVANT = {
    1: [((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 1.0)],
    2: [((2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 1.0 / 3.0)],
    4: [((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322)],
    5: [((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827)],
}


def _permute_barycentric(group):
    (b0, b1, b2), w = group
    seen = []
    for perm in {(b0, b1, b2), (b0, b2, b1), (b1, b0, b2), (b1, b2, b0),
                 (b2, b0, b1), (b2, b1, b0)}:
        seen.append(perm)
    seen.sort()
    return [(p, w) for p in seen]


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference triangle exact for total degree ``degree``.

    Symmetric tabulated rules up to degree 5; a collapsed tensor Gauss rule
    (exact by construction) above that.  Weights sum to the area 1/2.
    """
    if degree < 1 or degree > 12:
        raise ValueError(f"triangle rule degree {degree} unsupported (1..12)")
    table_degree = next((d for d in (1, 2, 4, 5) if d >= degree), None)
    if table_degree is not None:
        pts, wts = [], []
        for group in _DUNAVANT[table_degree]:
            for (b0, b1, b2), w in _permute_barycentric(group):
                pts.append((b1, b2))
                wts.append(w)
        points = np.asarray(pts)
        weights = 0.5 * np.asarray(wts)
    else:
        n = (degree + 3) // 2  # covers the extra (1-u) factor of the collapse
        line = gauss_rule(n)
        u, wu = line.nodes, line.weights
        uu, vv = np.meshgrid(u, u, indexing="ij")
        ww = np.outer(wu, wu) * (1.0 - uu)
        points = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
        weights = ww.ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


# --- monomial tabulation ----------------------------------------------------

def eval_scalar_monomials(exps, points: np.ndarray) -> np.ndarray:
    """Values of x^a y^b; shape (n_monomials, n_points)."""
    x, y = points[..., 0], points[..., 1]
    return np.stack([x ** a * y ** b for a, b in exps])


def eval_scalar_monomial_grads(exps, points: np.ndarray) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    out = []
    for a, b in exps:
        gx = a * x ** (a - 1) * y ** b if a > 0 else np.zeros_like(x)
        gy = b * x ** a * y ** (b - 1) if b > 0 else np.zeros_like(x)
        out.append(np.stack([gx, gy], axis=-1))
    return np.stack(out)


def _scalar_second(a, b, x, y):
    sxx = a * (a - 1) * x ** (a - 2) * y ** b if a > 1 else np.zeros_like(x)
    syy = b * (b - 1) * x ** a * y ** (b - 2) if b > 1 else np.zeros_like(x)
    sxy = a * b * x ** (a - 1) * y ** (b - 1) if (a > 0 and b > 0) else np.zeros_like(x)
    return np.stack([np.stack([sxx, sxy], axis=-1), np.stack([sxy, syy], axis=-1)], axis=-2)


def eval_vector_monomials(exps, points: np.ndarray) -> np.ndarray:
    """[P_r]^2 monomials as (m,0) block then (0,m) block; shape (2*nm, np, 2)."""
    scal = eval_scalar_monomials(exps, points)
    nm = scal.shape[0]
    zeros = np.zeros_like(scal)
    top = np.stack([scal, zeros], axis=-1)
    bot = np.stack([zeros, scal], axis=-1)
    return np.concatenate([top, bot])


def eval_vector_monomial_grads(exps, points: np.ndarray) -> np.ndarray:
    """Shape (2*nm, ..., 2, 2); axes: component, derivative direction."""
    g = eval_scalar_monomial_grads(exps, points)      # (nm, ..., 2)
    nm = g.shape[0]
    out = np.zeros((2 * nm,) + g.shape[1:-1] + (2, 2))
    out[:nm, ..., 0, :] = g
    out[nm:, ..., 1, :] = g
    return out


def eval_vector_monomial_seconds(exps, points: np.ndarray) -> np.ndarray:
    """Shape (2*nm, ..., 2, 2, 2); axes: component, d_a, d_b."""
    x, y = points[..., 0], points[..., 1]
    nm = len(exps)
    out = np.zeros((2 * nm,) + x.shape + (2, 2, 2))
    for m, (a, b) in enumerate(exps):
        h = _scalar_second(a, b, x, y)
        out[m, ..., 0, :, :] = h
        out[nm + m, ..., 1, :, :] = h
    return out


def eval_vector_monomial_divs(exps, points: np.ndarray) -> np.ndarray:
    g = eval_scalar_monomial_grads(exps, points)
    return np.concatenate([g[..., 0], g[..., 1]])


# --- reference elements -----------------------------------------------------

@dataclass(frozen=True)
class ReferenceElement:
    """Dual (nodal) basis for BDM_r vectors or orthonormal modal P_l scalars.

    For BDM the DOFs are r+1 normal point values at Gauss points per edge plus
    (for r = 2) the interior moments against constant fields and the bubble
    curl; ``dual_coeffs[m, i]`` expands basis i in the monomial list.  For DGP
    the basis is orthonormal on the reference triangle and the DOFs are the
    matching L2 moments, so duality is exact by construction.
    """

    family: str
    degree: int
    exponents: tuple = field(repr=False)
    dual_coeffs: np.ndarray = field(repr=False)
    edge_points: np.ndarray = field(repr=False)   # Gauss nodes on [0,1]; empty for DGP

    @property
    def dim(self) -> int:
        return self.dual_coeffs.shape[1]

    @property
    def n_edge_dofs(self) -> int:
        return self.edge_points.size if self.family == "BDM" else 0

    @property
    def n_interior_dofs(self) -> int:
        if self.family == "BDM":
            return self.dim - 3 * self.n_edge_dofs
        return self.dim

    # tabulation of the nodal basis on the reference element
    def tabulate(self, points: np.ndarray) -> np.ndarray:
        if self.family == "BDM":
            monos = eval_vector_monomials(self.exponents, points)
            return np.einsum("mi,mqa->qia", self.dual_coeffs, monos)
        monos = eval_scalar_monomials(self.exponents, points)
        return np.einsum("mi,mq->qi", self.dual_coeffs, monos)

    def tabulate_div(self, points: np.ndarray) -> np.ndarray:
        if self.family != "BDM":
            raise ValueError("divergence tabulation only for vector elements")
        divs = eval_vector_monomial_divs(self.exponents, points)
        return np.einsum("mi,mq->qi", self.dual_coeffs, divs)

    def apply_dofs_bdm(self, fn) -> np.ndarray:
        """Apply the reference DOF functionals to a vector field callable."""
        values = []
        for (v0, v1), normal in zip(REF_EDGES, REF_EDGE_NORMALS):
            a, b = REF_VERTICES[v0], REF_VERTICES[v1]
            pts = a[None, :] + self.edge_points[:, None] * (b - a)[None, :]
            values.extend(np.asarray(fn(pts)) @ normal)
        if self.n_interior_dofs:
            qp, qw = triangle_rule(2 * self.degree + 2)
            vals = np.asarray(fn(qp))
            values.append(float(qw @ vals[:, 0]))
            values.append(float(qw @ vals[:, 1]))
            values.append(float(qw @ np.einsum("qa,qa->q", vals, _bubble_curl(qp))))
        return np.asarray(values)


def _bubble_curl(points: np.ndarray) -> np.ndarray:
    """curl of the cubic bubble (1-x-y)xy on the reference triangle."""
    x, y = points[..., 0], points[..., 1]
    bx = y - 2.0 * x * y - y * y
    by = x - x * x - 2.0 * x * y
    return np.stack([by, -bx], axis=-1)


def _orthonormal_modal(degree: int) -> tuple[tuple, np.ndarray]:
    """Modal basis with int_ref b_i b_j = area * delta_ij and constant mode 1.

    The scaling makes every physical cell mass matrix diag(cell area) and the
    lowest mode literally the constant function 1.
    """
    exps = tuple(scalar_exponents(degree))
    n = len(exps)
    gram = np.empty((n, n))
    for i, (a1, b1) in enumerate(exps):
        for j, (a2, b2) in enumerate(exps):
            gram[i, j] = _tri_moment(a1 + a2, b1 + b2)
    lower = np.linalg.cholesky(gram)
    coeffs = np.linalg.inv(lower).T / math.sqrt(2.0)   # basis_i = sum coeffs[m, i] mono_m
    return exps, coeffs


@lru_cache(maxsize=None)
def reference_element(family: str, degree: int) -> ReferenceElement:
    if family == "DGP":
        if degree not in (0, 1):
            raise ValueError(f"DGP degree {degree} unsupported (0 or 1)")
        exps, coeffs = _orthonormal_modal(degree)
        coeffs.setflags(write=False)
        return ReferenceElement(family, degree, exps, coeffs, np.zeros(0))
    if family != "BDM":
        raise ValueError(f"unknown element family {family!r}")
    if degree not in (1, 2):
        raise ValueError(f"BDM degree {degree} unsupported (1 or 2)")

    exps = tuple(scalar_exponents(degree))
    edge_points = gauss_rule(degree + 1).nodes
    ndofs = (degree + 1) * (degree + 2)

    rows = []
    for (v0, v1), normal in zip(REF_EDGES, REF_EDGE_NORMALS):
        a, b = REF_VERTICES[v0], REF_VERTICES[v1]
        pts = a[None, :] + edge_points[:, None] * (b - a)[None, :]
        monos = eval_vector_monomials(exps, pts)           # (2nm, npe, 2)
        rows.append(np.einsum("mqa,a->qm", monos, normal))
    dof_matrix = np.concatenate(rows)
    if degree == 2:
        qp, qw = triangle_rule(2 * degree + 2)
        monos = eval_vector_monomials(exps, qp)
        const_x = np.einsum("q,mq->m", qw, monos[..., 0])
        const_y = np.einsum("q,mq->m", qw, monos[..., 1])
        bubble = np.einsum("q,mqa,qa->m", qw, monos, _bubble_curl(qp))
        dof_matrix = np.vstack([dof_matrix, const_x, const_y, bubble])
    if dof_matrix.shape != (ndofs, ndofs):
        raise AssertionError("BDM DOF matrix has wrong shape")
    dual = np.linalg.inv(dof_matrix)
    dual.setflags(write=False)
    return ReferenceElement("BDM", degree, exps, dual, edge_points)


# --- contravariant (Piola) mapping ------------------------------------------

@dataclass(frozen=True)
class CellGeometry:
    """Affine map x = B xi + origin of one cell (det B > 0)."""

    matrix: np.ndarray
    origin: np.ndarray
    det: float
    inverse: np.ndarray

    @classmethod
    def from_vertices(cls, p0, p1, p2) -> "CellGeometry":
        b = np.column_stack([np.asarray(p1) - p0, np.asarray(p2) - p0])
        det = float(np.linalg.det(b))
        if det <= 0.0:
            raise GeometryError(f"cell map has det J = {det:.3e} <= 0")
        return cls(b, np.asarray(p0, dtype=float), det, np.linalg.inv(b))

    def to_physical(self, ref_points: np.ndarray) -> np.ndarray:
        return ref_points @ self.matrix.T + self.origin

    def to_reference(self, points: np.ndarray) -> np.ndarray:
        return (points - self.origin) @ self.inverse.T


def piola_values(geom: CellGeometry, ref_values: np.ndarray) -> np.ndarray:
    """v = (1/det J) J v_ref; trailing axis is the vector component."""
    return ref_values @ geom.matrix.T / geom.det


def piola_divs(geom: CellGeometry, ref_divs: np.ndarray) -> np.ndarray:
    return ref_divs / geom.det


def piola_gradients(geom: CellGeometry, ref_grads: np.ndarray) -> np.ndarray:
    """Physical gradient of a Piola-mapped field; axes (..., component, deriv)."""
    return np.einsum("ab,...bc,cd->...ad", geom.matrix, ref_grads, geom.inverse) / geom.det


def piola_seconds(geom: CellGeometry, ref_seconds: np.ndarray) -> np.ndarray:
    return np.einsum("ab,...bcd,ce,df->...aef", geom.matrix, ref_seconds,
                     geom.inverse, geom.inverse) / geom.det


def piola_map(geom: CellGeometry, v_ref, div_ref=None):
    """Push a reference vector field to the physical cell.

    Returns callables (v, div_v) on physical coordinates; ``div_ref`` may be
    omitted when the divergence is not needed.
    """
    def v(x):
        return piola_values(geom, np.asarray(v_ref(geom.to_reference(np.asarray(x)))))

    if div_ref is None:
        return v, None

    def div_v(x):
        return piola_divs(geom, np.asarray(div_ref(geom.to_reference(np.asarray(x)))))

    return v, div_v
