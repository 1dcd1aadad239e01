"""Error norms, projection operators, conservation audit, and EOC studies.

The mesh-dependent displacement norm combines the broken H1 seminorm, the
h_e^{-1}-weighted tangential jumps over all edges, the h_K^2-weighted broken
H2 seminorm, and (for the full graph norm) the divergence; the combined error
measure adds the density-weighted velocity/flux norm, the K^{-1/2} flux norm,
and the sqrt(s0)-scaled pressure norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from .ioutil import atomic_write_text, fmt17
from .linalg import LinearSystem, lu_solve
from .mesh import structured_mesh
from .mms import DiscreteCase, default_mms, discrete_case
from .slab import Discretization, SourceSet, TimeGrid, Trajectory, march
from .spaces import interpolate_vector_field, project_scalar_field
from .time_basis import gauss_rule, lagrange_basis

__all__ = ["field_error_norms", "sample_error_norms", "trajectory_errors",
           "mass_conservation_audit",
           "kinematic_consistency", "energy_at_endpoints", "projection_p1",
           "projection_p2", "projection_p3", "eoc", "StudyResult",
           "temporal_study", "spatial_study", "projection_study"]


# --- spatial error norms -----------------------------------------------------

def _values_or_zero(closure, points):
    if closure is None:
        return 0.0
    return np.asarray(closure(points.reshape(-1, 2))).reshape(
        points.shape[:-1] + np.asarray(closure(points[:1].reshape(-1, 2))).shape[1:])


def field_error_norms(disc: Discretization, coeffs: dict[str, np.ndarray],
                      exact: dict | None = None) -> dict[str, float]:
    """Norms of (discrete field - exact closure); ``exact=None`` measures the
    discrete fields themselves (used when the error is a coefficient vector).

    Returns squared-norm building blocks reduced to the final norms:
    u_L2, u_DG, u_Uh, mrho_vw, w_Kinv, p_L2.
    """
    bdm, dgp = disc.bdm, disc.dgp
    prm = disc.params
    vol = bdm.volume
    w = vol.weights
    pts = vol.points

    e_u = bdm.values_on_quadrature(coeffs["u"]) - _values_or_zero(
        exact and exact.get("u"), pts)
    e_v = bdm.values_on_quadrature(coeffs["v"]) - _values_or_zero(
        exact and exact.get("v"), pts)
    e_w = bdm.values_on_quadrature(coeffs["w"]) - _values_or_zero(
        exact and exact.get("w"), pts)
    e_p = dgp.values_on_quadrature(coeffs["p"]) - _values_or_zero(
        exact and exact.get("p"), pts)

    u_l2_sq = float(np.einsum("cq,cqa,cqa->", w, e_u, e_u))
    mrho_sq = float(np.einsum("cq,cqa,cqa->", w, e_v, e_v) * prm.rho_bar
                    + 2.0 * prm.rho_f * np.einsum("cq,cqa,cqa->", w, e_v, e_w)
                    + prm.rho_w * np.einsum("cq,cqa,cqa->", w, e_w, e_w))
    ki = prm.kappa_inv
    wk_sq = float(np.einsum("cq,cqa,ab,cqb->", w, e_w, ki, e_w))
    p_sq = float(np.einsum("cq,cq,cq->", w, e_p, e_p))

    grad_err = bdm.grads_on_quadrature(coeffs["u"]) - _values_or_zero(
        exact and exact.get("grad_u"), pts)
    h1_sq = float(np.einsum("cq,cqab,cqab->", w, grad_err, grad_err))
    div_err = bdm.divs_on_quadrature(coeffs["u"]) - _values_or_zero(
        exact and exact.get("div_u"), pts)
    div_sq = float(np.einsum("cq,cq,cq->", w, div_err, div_err))

    if bdm.degree >= 2:
        sec = bdm.seconds_on_quadrature(coeffs["u"])
    else:
        sec = 0.0
    sec_err = sec - _values_or_zero(exact and exact.get("second_u"), pts)
    if np.isscalar(sec_err):
        h2_sq = 0.0
    else:
        h2_sq = float(np.einsum("c,cq,cqabd,cqabd->", disc.mesh.h_cell ** 2, w,
                                sec_err, sec_err))

    # tangential jumps of the displacement error over every edge
    tr = bdm.edge_traces
    mesh = disc.mesh
    local0 = np.asarray(coeffs["u"])[bdm.cell_dofs[mesh.edge_cells[:, 0]]]
    trace0 = np.einsum("eqia,ei->eqa", tr.values0, local0)
    exact_u = exact.get("u") if exact else None
    ex_tr = _values_or_zero(exact_u, tr.points)
    err0 = trace0 - ex_tr
    jump_sq = 0.0
    interior = tr.interior
    if interior.size:
        local1 = np.asarray(coeffs["u"])[bdm.cell_dofs[mesh.edge_cells[interior, 1]]]
        trace1 = np.einsum("eqia,ei->eqa", tr.values1, local1)
        err1 = trace1 - (ex_tr[interior] if exact_u is not None else 0.0)
        jump = err0[interior] - err1
        n = tr.normals[interior]
        jn = np.einsum("eqa,ea->eq", jump, n)
        tang = jump - jn[..., None] * n[:, None, :]
        # the h_e from ds and the h_e^{-1} weight cancel
        jump_sq += float(np.einsum("q,eqa,eqa->", tr.s_weights, tang, tang))
    boundary = np.flatnonzero(mesh.boundary_edge)
    if boundary.size:
        n = tr.normals[boundary]
        jump = err0[boundary]
        jn = np.einsum("eqa,ea->eq", jump, n)
        tang = jump - jn[..., None] * n[:, None, :]
        jump_sq += float(np.einsum("q,eqa,eqa->", tr.s_weights, tang, tang))

    dg_sq = h1_sq + jump_sq + h2_sq
    return {
        "u_L2": np.sqrt(u_l2_sq),
        "u_DG": np.sqrt(dg_sq),
        "u_DG_no_h2": np.sqrt(h1_sq + jump_sq),
        "u_Uh": np.sqrt(dg_sq + div_sq),
        "u_div": np.sqrt(div_sq),
        "mrho_vw": np.sqrt(mrho_sq),
        "w_Kinv": np.sqrt(wk_sq),
        "p_L2": np.sqrt(p_sq),
    }


def sample_error_norms(traj: Trajectory, case, t: float) -> dict[str, float]:
    disc = traj.disc
    if isinstance(case, DiscreteCase):
        ex = case.exact_state(t)
        coeffs = {f: traj.eval(f, t) - getattr(ex, f) for f in ("u", "v", "w", "p")}
        exact = None
    else:
        coeffs = {f: traj.eval(f, t) for f in ("u", "v", "w", "p")}
        exact = case.exact_closures(t)
    return field_error_norms(disc, coeffs, exact)


def trajectory_errors(traj: Trajectory, case) -> dict[str, float]:
    """Reduce the per-time error norms over the run.

    Linf norms are maxima over slab endpoints plus the interior Gauss-Lobatto
    points of every slab; the endpoint-only combined measure (graph norm of u,
    density norm of (v, w), sqrt(s0)-scaled pressure) is reported separately;
    L2-in-time norms use a dense Gauss rule per slab.
    """
    grid, k = traj.grid, traj.k
    prm = traj.disc.params
    from .time_basis import gauss_lobatto_rule
    gl = gauss_lobatto_rule(k).nodes

    linf: dict[str, float] = {}
    combined_endpoint = 0.0
    endpoint_times = list(grid.endpoints)
    sample_times = set()
    for n in range(grid.num_slabs):
        t0 = grid.endpoints[n]
        for s in gl[1:-1]:
            sample_times.add(t0 + grid.tau * float(s))
    sample_times.update(endpoint_times)

    for t in sorted(sample_times):
        norms = sample_error_norms(traj, case, t)
        for key, val in norms.items():
            linf[key] = max(linf.get(key, 0.0), val)
        if t in endpoint_times:
            combined = norms["u_Uh"] + norms["mrho_vw"] + np.sqrt(prm.s0) * norms["p_L2"]
            combined_endpoint = max(combined_endpoint, combined)

    rule = gauss_rule(min(k + 2, 6))
    l2i_sq: dict[str, float] = {}
    for n in range(grid.num_slabs):
        t0 = grid.endpoints[n]
        for s, wq in zip(rule.nodes, rule.weights):
            norms = sample_error_norms(traj, case, t0 + grid.tau * float(s))
            for key, val in norms.items():
                l2i_sq[key] = l2i_sq.get(key, 0.0) + grid.tau * wq * val * val

    out = {f"{key}_Linf": val for key, val in linf.items()}
    out.update({f"{key}_L2I": float(np.sqrt(val)) for key, val in l2i_sq.items()})
    out["combined_endpoint"] = combined_endpoint
    out["combined_Linf"] = (linf["u_Uh"] + linf["mrho_vw"]
                            + float(np.sqrt(prm.s0)) * linf["p_L2"])
    return out


# --- conservation and consistency audits ----------------------------------------

def mass_conservation_audit(traj: Trajectory, sources: SourceSet) -> float:
    """Worst relative L2(Omega) residual of the discrete mass balance
    evaluated pointwise at the Gauss points of every slab.

    The divergence terms are evaluated pointwise (not projected), so a
    pairing whose divergences do not live in the pressure space fails loudly;
    the source is audited as it enters the system (pressure-space projection
    of its Gauss-Lobatto time interpolant, zero-mean part).
    """
    disc, k, grid = traj.disc, traj.k, traj.grid
    prm = disc.params
    basis_g0 = lagrange_basis("G0", k)
    basis_gl = lagrange_basis("GL", k)
    g_nodes = gauss_rule(k).nodes
    val_w = basis_g0.eval_all(g_nodes)              # (k, k+1)
    der_w = basis_g0.deriv_all(g_nodes) / grid.tau
    gl_w = basis_gl.eval_all(g_nodes)               # (k, k+1)
    diag = disc.mass_p_diag
    qw = disc.bdm.volume.weights

    def l2(values):
        return float(np.sqrt(np.einsum("cq,cq,cq->", qw, values, values)))

    worst = 0.0
    for n in range(grid.num_slabs):
        dp = der_w @ traj.coeffs["p"][n]            # (k, np)
        du = der_w @ traj.coeffs["u"][n]
        wv = val_w @ traj.coeffs["w"][n]
        if sources.mass is not None:
            t0 = grid.endpoints[n]
            m_nodes = np.stack([
                disc.pressure_load(sources.mass, t0 + grid.tau * float(s)) / diag
                for s in basis_gl.nodes])
            m_at_g = gl_w @ m_nodes
        else:
            m_at_g = np.zeros((k, diag.size))
        for i in range(k):
            terms = [prm.s0 * disc.dgp.values_on_quadrature(dp[i]),
                     prm.alpha * disc.bdm.divs_on_quadrature(du[i]),
                     disc.bdm.divs_on_quadrature(wv[i]),
                     -disc.dgp.values_on_quadrature(m_at_g[i])]
            res_norm = l2(sum(terms))
            scale = max(l2(tm) for tm in terms)
            worst = max(worst, res_norm / scale if scale > 0.0 else res_norm)
    return worst


def kinematic_consistency(traj: Trajectory) -> float:
    """Worst relative mass-norm of d/dt u - v at the Gauss points."""
    disc, k, grid = traj.disc, traj.k, traj.grid
    basis_g0 = lagrange_basis("G0", k)
    g_nodes = gauss_rule(k).nodes
    val_w = basis_g0.eval_all(g_nodes)
    der_w = basis_g0.deriv_all(g_nodes) / grid.tau
    m = disc.mass_bdm
    worst = 0.0
    for n in range(grid.num_slabs):
        du = der_w @ traj.coeffs["u"][n]
        vv = val_w @ traj.coeffs["v"][n]
        for i in range(k):
            d = du[i] - vv[i]
            dn = np.sqrt(float(d @ (m @ d)))
            scale = max(np.sqrt(float(vv[i] @ (m @ vv[i]))), 1e-30)
            worst = max(worst, dn / scale)
    return worst


def energy_at_endpoints(traj: Trajectory) -> np.ndarray:
    """a_h(u,u) + density norm of (v,w) squared + s0 |p|^2 at each t_n."""
    disc = traj.disc
    prm = disc.params
    a = disc.elasticity
    m = disc.mass_bdm
    mp = disc.mass_p
    out = []
    for n in range(traj.grid.num_slabs + 1):
        st = traj.state_at_endpoint(n)
        e = (float(st.u @ (a @ st.u))
             + prm.rho_bar * float(st.v @ (m @ st.v))
             + 2.0 * prm.rho_f * float(st.v @ (m @ st.w))
             + prm.rho_w * float(st.w @ (m @ st.w))
             + prm.s0 * float(st.p @ (mp @ st.p)))
        out.append(e)
    return np.asarray(out)


# --- projection operators -------------------------------------------------------

def projection_p1(disc: Discretization, value_fn, grad_fn) -> np.ndarray:
    """Elliptic projection: matches the interior-penalty form of the input."""
    prm = disc.params
    rhs = asm.assemble_elasticity_rhs(disc.bdm, value_fn, grad_fn, prm.mu, prm.lam,
                                      prm.eta)
    free = disc.bdm.free
    a_ff = disc.elasticity[np.ix_(free, free)]
    x = lu_solve(LinearSystem(a_ff, rhs[free]))
    return disc.bdm.lift(x)


def projection_p2(disc: Discretization, value_fn) -> np.ndarray:
    """Canonical interpolant (matches the divergence moments by construction)."""
    return interpolate_vector_field(disc.bdm, value_fn)


def projection_p3(disc: Discretization, value_fn) -> np.ndarray:
    """Cell-local L2 projection onto the pressure space."""
    return project_scalar_field(disc.dgp, value_fn)


# --- EOC -------------------------------------------------------------------------

def eoc(values, steps) -> list[float | None]:
    """log-ratio convergence rates; ``None`` flags an exactly-resolved level."""
    values = list(values)
    steps = list(steps)
    if len(values) != len(steps) or len(values) < 2:
        raise ValueError("need matching lists with at least two levels")
    rates: list[float | None] = []
    for i in range(len(values) - 1):
        if values[i] <= 0.0 or values[i + 1] <= 0.0:
            rates.append(None)
            continue
        rates.append(float(np.log(values[i] / values[i + 1])
                           / np.log(steps[i] / steps[i + 1])))
    return rates


@dataclass
class StudyResult:
    """One refinement study: per-level mesh/slab sizes, error columns, EOCs.

    ``steps`` is the refined quantity (h for spatial studies, tau for temporal
    ones); both h and tau are emitted per level in the CSV.
    """

    kind: str
    steps: list[float]
    h_values: list[float] = field(default_factory=list)
    tau_values: list[float] = field(default_factory=list)
    meta: dict[str, float | int] = field(default_factory=dict)
    columns: dict[str, list[float]] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)

    def rates(self) -> dict[str, list[float | None]]:
        return {key: eoc(vals, self.steps) for key, vals in self.columns.items()}

    def to_csv(self, path: str) -> None:
        names = sorted(self.columns)
        rates = self.rates()
        header = ["level", "h", "tau"] + names + [f"eoc_{n}" for n in names]
        lines = [",".join(header)]
        for i in range(len(self.steps)):
            row = [str(i), fmt17(self.h_values[i]), fmt17(self.tau_values[i])]
            row += [fmt17(self.columns[n][i]) for n in names]
            for n in names:
                if i == 0:
                    row.append("")
                else:
                    r = rates[n][i - 1]
                    row.append("exact" if r is None else fmt17(r))
            lines.append(",".join(row))
        atomic_write_text(path, "\n".join(lines) + "\n")


# --- study drivers ------------------------------------------------------------------

def temporal_study(params: asm.PhysicalParams, k: int, ell: int, slab_counts,
                   mesh_n: int = 4, total_time: float = 0.5,
                   omega: float = 4.0) -> StudyResult:
    """Convergence in tau on a fixed mesh with a spatially exact solution."""
    mesh = structured_mesh(mesh_n, mesh_n)
    disc = Discretization(mesh, ell, params)
    case = discrete_case(disc, k, "trig", omega)
    result = StudyResult("time", steps=[], meta={"k": k, "ell": ell, "mesh_n": mesh_n,
                                                 "T": total_time, "omega": omega})
    audit_worst = 0.0
    for n_slabs in slab_counts:
        grid = TimeGrid(total_time, int(n_slabs))
        traj = march(disc, k, grid, case.initial_state(), case.sources())
        errs = trajectory_errors(traj, case)
        audit_worst = max(audit_worst, mass_conservation_audit(traj, case.sources()))
        result.steps.append(grid.tau)
        result.h_values.append(1.0 / mesh_n)
        result.tau_values.append(grid.tau)
        for key in ("combined_endpoint", "u_Uh_Linf", "mrho_vw_Linf", "w_Kinv_Linf",
                    "p_L2_Linf", "u_L2_Linf"):
            result.columns.setdefault(key, []).append(errs[key])
    result.extras["mass_audit"] = audit_worst
    return result


def spatial_study(params: asm.PhysicalParams, ell: int, mesh_sizes, k: int = 2,
                  n_slabs: int = 8, total_time: float = 0.5, omega: float = 2.0,
                  tau_check: bool = True) -> StudyResult:
    """Convergence in h with the trigonometric solution and tau fixed small.

    The finest level is re-run with halved tau to verify the temporal error is
    subdominant; the worst relative change is reported in ``extras``.
    """
    result = StudyResult("space", steps=[], meta={"k": k, "ell": ell, "N": n_slabs,
                                                  "T": total_time, "omega": omega})
    audit_worst = 0.0
    last = None
    for nx in mesh_sizes:
        mesh = structured_mesh(int(nx), int(nx))
        disc = Discretization(mesh, ell, params)
        case = default_mms(params, omega)
        grid = TimeGrid(total_time, n_slabs)
        traj = march(disc, k, grid, case.initial_state(disc), case.sources())
        errs = trajectory_errors(traj, case)
        audit_worst = max(audit_worst, mass_conservation_audit(traj, case.sources()))
        result.steps.append(1.0 / nx)
        result.h_values.append(1.0 / nx)
        result.tau_values.append(grid.tau)
        for key in ("combined_Linf", "u_Uh_Linf", "u_L2_Linf", "mrho_vw_Linf",
                    "w_Kinv_Linf", "p_L2_Linf"):
            result.columns.setdefault(key, []).append(errs[key])
        last = (disc, case, errs)
    result.extras["mass_audit"] = audit_worst

    if tau_check and last is not None:
        disc, case, errs = last
        grid2 = TimeGrid(total_time, 2 * n_slabs)
        traj2 = march(disc, k, grid2, case.initial_state(disc), case.sources())
        errs2 = trajectory_errors(traj2, case)
        rel = max(abs(errs2[key] - errs[key]) / errs[key]
                  for key in ("combined_Linf", "u_L2_Linf"))
        result.extras["tau_halving_change"] = rel
    return result


def projection_study(params: asm.PhysicalParams, ell: int, mesh_sizes,
                     omega: float = 4.0, t_star: float = 0.0) -> StudyResult:
    """Measured orders of the three projection operators on the default fields."""
    result = StudyResult("projection", steps=[], meta={"ell": ell, "omega": omega,
                                                       "t": t_star})
    for nx in mesh_sizes:
        mesh = structured_mesh(int(nx), int(nx))
        disc = Discretization(mesh, ell, params)
        case = default_mms(params, omega)
        ex = case.exact_closures(t_star)

        p1 = projection_p1(disc, ex["u"], ex["grad_u"])
        norms_u = field_error_norms(disc, {"u": p1, "v": np.zeros(disc.bdm.ndofs),
                                           "w": np.zeros(disc.bdm.ndofs),
                                           "p": np.zeros(disc.dgp.ndofs)},
                                    {"u": ex["u"], "grad_u": ex["grad_u"],
                                     "div_u": ex["div_u"], "second_u": ex["second_u"]})
        p2 = projection_p2(disc, ex["w"])
        w_vals = disc.bdm.values_on_quadrature(p2) - np.asarray(
            ex["w"](disc.bdm.volume.points.reshape(-1, 2))).reshape(
                disc.bdm.volume.points.shape)
        w_l2 = float(np.sqrt(np.einsum("cq,cqa,cqa->", disc.bdm.volume.weights,
                                       w_vals, w_vals)))
        div_w_fn = lambda x: case.div_w(x, t_star)
        w_div = disc.bdm.divs_on_quadrature(p2) - div_w_fn(
            disc.bdm.volume.points.reshape(-1, 2)).reshape(
                disc.bdm.volume.points.shape[:2])
        w_divn = float(np.sqrt(np.einsum("cq,cq,cq->", disc.bdm.volume.weights,
                                         w_div, w_div)))
        p3 = projection_p3(disc, ex["p"])
        p_vals = disc.dgp.values_on_quadrature(p3) - np.asarray(
            ex["p"](disc.dgp.volume.points.reshape(-1, 2))).reshape(
                disc.dgp.volume.points.shape[:2])
        p_l2 = float(np.sqrt(np.einsum("cq,cq,cq->", disc.dgp.volume.weights,
                                       p_vals, p_vals)))

        result.steps.append(1.0 / nx)
        result.h_values.append(1.0 / nx)
        result.tau_values.append(0.0)
        for key, val in (("u_p1_L2", norms_u["u_L2"]), ("u_p1_DG", norms_u["u_DG"]),
                         ("u_p1_div", norms_u["u_div"]), ("w_p2_L2", w_l2),
                         ("w_p2_div", w_divn), ("p_p3_L2", p_l2)):
            result.columns.setdefault(key, []).append(val)
    return result
