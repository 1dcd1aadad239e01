"""cGP(k) time marching for the three-field dynamic poroelastic system.

Per slab the trial functions are degree-k polynomials pinned to the incoming
state at the left end (nodal G0 basis: left end + k Gauss nodes); tests are
degree k-1 (Gauss-node Lagrange basis).  Eliminating the known left-end block
leaves k coupled spatial systems; the slab matrix is identical for every slab
of an equidistant grid, so it is factorized once and reused while marching.
Because the temporal product integrals are evaluated exactly by the k-point
Gauss rule, the scheme is equivalent to collocation at the Gauss points, which
is what yields pointwise mass conservation there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .linalg import LinearSystem, SolverError, factor_system
from .mesh import Mesh, write_vtk_edges, write_vtk_mesh
from .spaces import (FunctionSpace, build_space, interpolate_vector_field,
                     project_scalar_field, remove_mean)
from .time_basis import gauss_rule, gauss_lobatto_rule, lagrange_basis

__all__ = ["TimeGrid", "SlabState", "SourceSet", "Discretization", "SlabOperators",
           "Trajectory", "project_initial_data", "build_slab_system", "solve_slab",
           "march", "eval_trajectory", "export_snapshots"]

FIELDS = ("u", "v", "w", "p")


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant slabs covering [0, T]."""

    total_time: float
    num_slabs: int

    def __post_init__(self):
        if self.total_time <= 0.0:
            raise ValueError("final time must be positive")
        if self.num_slabs < 1:
            raise ValueError("need at least one slab")

    @property
    def tau(self) -> float:
        return self.total_time / self.num_slabs

    @property
    def endpoints(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.num_slabs + 1)


@dataclass
class SlabState:
    """Full-DOF coefficient vectors of the four fields at one time point."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, disc: "Discretization") -> "SlabState":
        n, m = disc.bdm.ndofs, disc.dgp.ndofs
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(m))


@dataclass
class SourceSet:
    """Momentum source f, Darcy source g, and the optional mass-balance source
    used only by manufactured-solution runs (the physical model has zero)."""

    f: object | None = None
    g: object | None = None
    mass: object | None = None


class Discretization:
    """Meshed spaces and assembled spatial operators for one parameter set.

    ``vector_degree`` defaults to ell+1 (the conservative pairing); passing a
    different value deliberately breaks div-compatibility, which the
    mass-conservation negative control exploits.
    """

    def __init__(self, mesh: Mesh, ell: int, params: asm.PhysicalParams,
                 vector_degree: int | None = None):
        self.mesh = mesh
        self.ell = ell
        self.params = params
        degree = ell + 1 if vector_degree is None else vector_degree
        quad_degree = 2 * (max(degree - 1, ell) + 2)
        self.bdm = build_space(mesh, "BDM", degree, bc="zero_normal",
                               quad_degree=quad_degree)
        self.dgp = build_space(mesh, "DGP", ell, bc=None, quad_degree=quad_degree)

    @cached_property
    def mass_bdm(self) -> sp.csr_matrix:
        return asm.assemble_mass(self.bdm, 1.0)

    @cached_property
    def elasticity(self) -> sp.csr_matrix:
        p = self.params
        return asm.assemble_elasticity(self.bdm, p.mu, p.lam, p.eta)

    @cached_property
    def mass_kinv(self) -> sp.csr_matrix:
        return asm.assemble_mass(self.bdm, self.params.kappa_inv)

    @cached_property
    def div_w(self) -> sp.csr_matrix:
        """(p_j, div w_i) with unit coefficient."""
        return asm.assemble_div_coupling(self.bdm, self.dgp, 1.0)

    @cached_property
    def div_u_alpha(self) -> sp.csr_matrix:
        return asm.assemble_div_coupling(self.bdm, self.dgp, self.params.alpha)

    @cached_property
    def mass_p(self) -> sp.csr_matrix:
        return asm.assemble_mass(self.dgp, 1.0)

    @cached_property
    def p_volume(self) -> np.ndarray:
        """Load vector of the constant 1 against the pressure basis."""
        return asm.assemble_load(self.dgp, asm.AnalyticSource(
            lambda x, t: np.ones(x.shape[0])), 0.0)

    @cached_property
    def mass_p_diag(self) -> np.ndarray:
        diag = self.mass_p.diagonal()
        off = self.mass_p - sp.diags(diag)
        if abs(off).max() > 1e-12 * diag.max():
            raise AssertionError("modal pressure mass matrix is not diagonal")
        return diag

    def div_coefficients(self, coeffs: np.ndarray, matrix: sp.csr_matrix | None = None) -> np.ndarray:
        """Coefficients of div(field) in the pressure space (exact when the
        pairing is div-compatible)."""
        mat = self.div_w if matrix is None else matrix
        return (mat.T @ coeffs) / self.mass_p_diag

    def pressure_load(self, source, t: float) -> np.ndarray:
        """Mass-balance load with its constant-mode component removed.

        The pressure test space is the zero-mean subspace, so the load of the
        constant 1 never acts; removing it here keeps quadrature-level mean
        defects of analytic sources out of the mean-pinning multipliers.
        """
        load = asm.assemble_load(self.dgp, source, t)
        nloc = self.dgp.element.dim
        total = load[0::nloc].sum()           # functional applied to the constant 1
        area = self.p_volume[0::nloc].sum()   # = |Omega|
        return load - (total / area) * self.p_volume


class SlabOperators:
    """Per-slab block system for fixed k and slab length tau."""

    def __init__(self, disc: Discretization, k: int, tau: float):
        if k < 1:
            raise ValueError("cGP order k must be >= 1")
        self.disc = disc
        self.k = k
        self.tau = float(tau)
        p = disc.params
        free = disc.bdm.free
        self.free = free
        self.n_bdm = free.size
        self.n_p = disc.dgp.ndofs
        self.block_size = 3 * self.n_bdm + self.n_p

        mf = disc.mass_bdm[np.ix_(free, free)]
        af = disc.elasticity[np.ix_(free, free)]
        mkf = disc.mass_kinv[np.ix_(free, free)]
        b1f = disc.div_w[free, :]
        baf = disc.div_u_alpha[free, :]
        mp = disc.mass_p

        self.time_derivative_block = sp.bmat([
            [None, p.rho_bar * mf, p.rho_f * mf, None],
            [mf, None, None, None],
            [None, p.rho_f * mf, p.rho_w * mf, None],
            [baf.T, None, None, p.s0 * mp]], format="csr")
        self.stationary_block = sp.bmat([
            [af, None, None, -baf],
            [None, -mf, None, None],
            [None, None, mkf, -b1f],
            [None, None, b1f.T, None]], format="csr")

        g = gauss_rule(k)
        basis_g0 = lagrange_basis("G0", k)
        basis_gl = lagrange_basis("GL", k)
        # exact temporal weights (integrands of degree <= 2k-1)
        self.theta_dt = g.weights[:, None] * basis_g0.deriv_all(g.nodes)    # (k, k+1)
        self.theta_mass = g.weights[:, None] * basis_g0.eval_all(g.nodes)   # (k, k+1)
        self.theta_src = g.weights[:, None] * basis_gl.eval_all(g.nodes)    # (k, k+1)
        self.gl_nodes = gauss_lobatto_rule(k).nodes
        self.g_nodes = g.nodes
        self.end_weights = basis_g0.eval_all(np.asarray(1.0))               # (k+1,)

        self.inner_matrix = (
            sp.kron(self.theta_dt[:, 1:], self.time_derivative_block, format="csr")
            + self.tau * sp.kron(self.theta_mass[:, 1:], self.stationary_block,
                                 format="csr"))
        # one zero-mean multiplier per trial node; kept out of the sparse
        # factorization (dense rows poison the ordering)
        cons = np.zeros((k, k * self.block_size))
        p_offset = 3 * self.n_bdm
        for j in range(k):
            cons[j, j * self.block_size + p_offset:
                 j * self.block_size + p_offset + self.n_p] = disc.p_volume
        self.constraint_rows = cons
        self._factor = None

    def restrict_state(self, state: SlabState) -> np.ndarray:
        return np.concatenate([state.u[self.free], state.v[self.free],
                               state.w[self.free], state.p])

    def _load_stack(self, sources: SourceSet, t: float) -> np.ndarray:
        disc = self.disc
        out = np.zeros(self.block_size)
        if sources.f is not None:
            out[:self.n_bdm] = asm.assemble_load(disc.bdm, sources.f, t)[self.free]
        if sources.g is not None:
            base = 2 * self.n_bdm
            out[base:base + self.n_bdm] = asm.assemble_load(disc.bdm, sources.g, t)[self.free]
        if sources.mass is not None:
            out[3 * self.n_bdm:] = disc.pressure_load(sources.mass, t)
        return out

    def rhs(self, state: SlabState, t_left: float, sources: SourceSet) -> np.ndarray:
        x0 = self.restrict_state(state)
        tx0 = self.time_derivative_block @ x0
        sx0 = self.stationary_block @ x0
        loads = [self._load_stack(sources, t_left + self.tau * s) for s in self.gl_nodes]
        parts = []
        for m in range(self.k):
            rhs_m = -self.theta_dt[m, 0] * tx0 - self.tau * self.theta_mass[m, 0] * sx0
            for a, load in enumerate(loads):
                rhs_m = rhs_m + self.tau * self.theta_src[m, a] * load
            parts.append(rhs_m)
        return np.concatenate(parts + [np.zeros(self.k)])

    def system(self, rhs_inner: np.ndarray) -> LinearSystem:
        return LinearSystem(self.inner_matrix, rhs_inner,
                            constraints=(self.constraint_rows, np.zeros(self.k)))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        system = self.system(rhs[:self.k * self.block_size])
        if self._factor is None:
            self._factor = factor_system(system)
        x = self._factor.solve(rhs)
        if np.linalg.norm(rhs) > 0.0:
            residual = system.residual(x)
            if not residual <= 1e-10:
                raise SolverError(f"slab residual {residual:.3e} exceeds 1e-10")
        return x

    def split_nodes(self, solution: np.ndarray) -> list[SlabState]:
        """Unpack the k trial-node blocks into full-DOF states."""
        disc = self.disc
        states = []
        for j in range(self.k):
            blk = solution[j * self.block_size:(j + 1) * self.block_size]
            u = disc.bdm.lift(blk[:self.n_bdm])
            v = disc.bdm.lift(blk[self.n_bdm:2 * self.n_bdm])
            w = disc.bdm.lift(blk[2 * self.n_bdm:3 * self.n_bdm])
            p = blk[3 * self.n_bdm:]
            states.append(SlabState(u, v, w, p))
        return states


@dataclass
class Trajectory:
    """Globally continuous piecewise-polynomial solution in the G0 nodal basis.

    ``coeffs[field]`` has shape (N, k+1, ndofs); slab endpoints are shared
    storage: row [n, 0] of slab n+1 is the evaluated right end of slab n.
    """

    grid: TimeGrid
    k: int
    disc: Discretization
    coeffs: dict[str, np.ndarray]
    g0_nodes: np.ndarray = field(repr=False)
    end_weights: np.ndarray = field(repr=False)

    def endpoint(self, field_name: str, n: int) -> np.ndarray:
        """Field coefficients at t_n (n = 0..N).

        Interior endpoints return the stored node-0 row of the following slab,
        which is exactly the value the march evaluated at the right end of
        slab n (shared storage), so both adjacent slabs agree bitwise.
        """
        c = self.coeffs[field_name]
        if n == 0:
            return c[0, 0]
        if n < self.grid.num_slabs:
            return c[n, 0]
        return np.einsum("i,id->d", self.end_weights, c[n - 1])

    def state_at_endpoint(self, n: int) -> SlabState:
        return SlabState(*(self.endpoint(f, n) for f in FIELDS))

    def _locate(self, t: float) -> tuple[int, float]:
        grid = self.grid
        if t < -1e-12 or t > grid.total_time * (1.0 + 1e-12) + 1e-12:
            raise ValueError(f"time {t} outside [0, {grid.total_time}]")
        ends = grid.endpoints
        n = int(np.searchsorted(ends, min(max(t, 0.0), grid.total_time), side="left"))
        n = max(1, min(grid.num_slabs, n))
        return n, ends[n - 1]

    def eval(self, field_name: str, t: float) -> np.ndarray:
        """Coefficient vector at time t (Lagrange evaluation within the slab)."""
        ends = self.grid.endpoints
        hit = np.flatnonzero(ends == t)
        if hit.size:  # endpoints resolve to the shared stored values
            return self.endpoint(field_name, int(hit[0]))
        n, t_left = self._locate(t)
        s = (t - t_left) / self.grid.tau
        basis = lagrange_basis("G0", self.k)
        return np.einsum("i,id->d", basis.eval_all(np.asarray(s)), self.coeffs[field_name][n - 1])

    def eval_derivative(self, field_name: str, t: float) -> np.ndarray:
        n, t_left = self._locate(t)
        s = (t - t_left) / self.grid.tau
        basis = lagrange_basis("G0", self.k)
        return np.einsum("i,id->d", basis.deriv_all(np.asarray(s)),
                         self.coeffs[field_name][n - 1]) / self.grid.tau


def eval_trajectory(traj: Trajectory, field_name: str, t: float) -> np.ndarray:
    return traj.eval(field_name, t)


def project_initial_data(disc: Discretization, u0, v0, w0, p0) -> SlabState:
    """Interpolate the vector data, project the pressure, remove its mean.

    Boundary-normal DOFs are pinned to exact zeros afterwards (the data must
    be compatible with the strong zero-normal-trace constraint).
    """
    state = SlabState(
        interpolate_vector_field(disc.bdm, u0),
        interpolate_vector_field(disc.bdm, v0),
        interpolate_vector_field(disc.bdm, w0),
        remove_mean(disc.dgp, project_scalar_field(disc.dgp, p0)),
    )
    for vec in (state.u, state.v, state.w):
        vec[disc.bdm.constrained] = 0.0
    return state


def build_slab_system(ops: SlabOperators, state: SlabState, n: int, grid: TimeGrid,
                      sources: SourceSet) -> LinearSystem:
    """Assemble one slab system standalone; ``march`` reuses the cached LU."""
    if not 1 <= n <= grid.num_slabs:
        raise ValueError(f"slab index {n} outside 1..{grid.num_slabs}")
    if abs(ops.tau - grid.tau) > 1e-14 * grid.tau:
        raise ValueError("operators were built for a different slab length")
    t_left = grid.endpoints[n - 1]
    rhs = ops.rhs(state, t_left, sources)
    return ops.system(rhs[:ops.k * ops.block_size])


def solve_slab(ops: SlabOperators, system: LinearSystem) -> list[SlabState]:
    from .linalg import lu_solve
    solution = lu_solve(system)
    return ops.split_nodes(solution)


def march(disc: Discretization, k: int, grid: TimeGrid, initial: SlabState,
          sources: SourceSet) -> Trajectory:
    """Slab-by-slab solve over the whole grid; continuity is exact by
    construction (each slab starts from the evaluated end of the previous)."""
    ops = SlabOperators(disc, k, grid.tau)
    nb, npp = disc.bdm.ndofs, disc.dgp.ndofs
    coeffs = {f: np.zeros((grid.num_slabs, k + 1, nb if f != "p" else npp))
              for f in FIELDS}
    state = initial
    for n in range(1, grid.num_slabs + 1):
        rhs = ops.rhs(state, grid.endpoints[n - 1], sources)
        nodes = ops.split_nodes(ops.solve(rhs))
        for fname in FIELDS:
            coeffs[fname][n - 1, 0] = getattr(state, fname)
            for j, node_state in enumerate(nodes):
                coeffs[fname][n - 1, j + 1] = getattr(node_state, fname)
        state = SlabState(*(np.einsum("i,id->d", ops.end_weights, coeffs[f][n - 1])
                            for f in FIELDS))
    basis = lagrange_basis("G0", k)
    return Trajectory(grid, k, disc, coeffs, basis.nodes, ops.end_weights)


def export_snapshots(traj: Trajectory, out_dir: str, stem: str = "snapshot") -> list[str]:
    """Write slab-endpoint snapshots: cell pressures plus edge-sampled vectors."""
    import os

    disc = traj.disc
    mesh = disc.mesh
    nloc = disc.dgp.element.dim
    mid_cells = mesh.edge_cells[:, 0]
    paths = []
    for n in range(traj.grid.num_slabs + 1):
        state = traj.state_at_endpoint(n)
        p_cells = state.p[0::nloc]   # constant modal component per cell
        mesh_path = os.path.join(out_dir, f"{stem}_{n:04d}.vtk")
        write_vtk_mesh(mesh, mesh_path, {"pressure": p_cells})
        vec_path = os.path.join(out_dir, f"{stem}_{n:04d}_edges.vtk")
        vectors = {}
        for fname in ("u", "v", "w"):
            vals = _edge_midpoint_values(disc.bdm, getattr(state, fname), mid_cells)
            vectors[fname] = vals
        write_vtk_edges(mesh, vec_path, vectors)
        paths.extend([mesh_path, vec_path])
    return paths


def _edge_midpoint_values(space: FunctionSpace, coeffs: np.ndarray,
                          cells: np.ndarray) -> np.ndarray:
    pts = space.mesh.edge_midpoints[:, None, :]
    vals = space.tabulate_at(cells, pts)
    local = coeffs[space.cell_dofs[cells]]
    return np.einsum("eqia,ei->ea", vals, local)
