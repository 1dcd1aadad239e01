import numpy as np
import pytest

from biotcgp import mms
from biotcgp.mesh import structured_mesh
from biotcgp.slab import Discretization


def _boundary_points(n=60, seed=4):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 1.0, n)
    zero, one = np.zeros(n), np.ones(n)
    return {
        "bottom": np.stack([s, zero], axis=-1),
        "top": np.stack([s, one], axis=-1),
        "left": np.stack([zero, s], axis=-1),
        "right": np.stack([one, s], axis=-1),
    }


def test_displacement_vanishes_on_boundary(params):
    case = mms.default_mms(params, omega=4.0)
    for pts in _boundary_points().values():
        assert np.abs(case.u(pts, 0.37)).max() <= 1e-14


def test_flux_normal_trace_vanishes(params):
    case = mms.default_mms(params, omega=4.0)
    sides = _boundary_points()
    t = 0.81
    assert np.abs(case.w(sides["bottom"], t)[:, 1]).max() <= 1e-14
    assert np.abs(case.w(sides["top"], t)[:, 1]).max() <= 1e-14
    assert np.abs(case.w(sides["left"], t)[:, 0]).max() <= 1e-14
    assert np.abs(case.w(sides["right"], t)[:, 0]).max() <= 1e-14


def test_pressure_zero_mean(params):
    # 2D composite Simpson over the square at several times
    case = mms.default_mms(params, omega=4.0)
    n = 81
    x = np.linspace(0.0, 1.0, n)
    w1 = np.ones(n)
    w1[1:-1:2], w1[2:-1:2] = 4.0, 2.0
    w1 /= 3.0 * (n - 1) / 1.0
    gx, gy = np.meshgrid(x, x)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    w2 = np.outer(w1, w1).ravel()
    for t in (0.0, 0.2, 0.9):
        assert abs(w2 @ case.p(pts, t)) <= 1e-10


def test_source_derivation_self_check(params):
    case = mms.default_mms(params, omega=4.0)
    report = mms.self_check(case, n_points=100)
    assert report["residual_momentum"] <= 1e-9
    assert report["residual_darcy"] <= 1e-9
    assert report["residual_mass"] <= 1e-9
    for key, value in report.items():
        if key.startswith("fd_"):
            assert value <= 1e-6, (key, value)


def test_self_check_with_anisotropic_permeability():
    import biotcgp.assembly as asm
    prm = asm.PhysicalParams(kappa=np.array([[2.0, 0.3], [0.3, 1.0]]), alpha=0.75,
                             s0=0.5, lam=2.0, mu=0.7)
    case = mms.default_mms(prm, omega=3.0)
    report = mms.self_check(case, n_points=60)
    assert report["residual_momentum"] <= 1e-9
    assert report["residual_darcy"] <= 1e-9
    assert report["residual_mass"] <= 1e-9


def test_invalid_frequency(params):
    with pytest.raises(ValueError):
        mms.default_mms(params, omega=0.0)


def test_poly_factors_derivative_consistency():
    tf = mms.poly_factors(3)
    h = 1e-6
    for t in (0.1, 0.45, 0.8):
        assert abs((tf.a(t + h) - tf.a(t - h)) / (2 * h) - tf.da(t)) <= 1e-7
        assert abs((tf.da(t + h) - tf.da(t - h)) / (2 * h) - tf.dda(t)) <= 1e-7
        assert abs((tf.b(t + h) - tf.b(t - h)) / (2 * h) - tf.db(t)) <= 1e-7
        assert abs((tf.c(t + h) - tf.c(t - h)) / (2 * h) - tf.dc(t)) <= 1e-7


def test_discrete_case_exactly_in_space(params):
    disc = Discretization(structured_mesh(3, 3), ell=0, params=params)
    case = mms.discrete_case(disc, 1, temporal="trig", omega=2.0)
    # profiles respect the strong constraints and the zero mean
    assert np.abs(case.u_hat[disc.bdm.constrained]).max() == 0.0
    assert np.abs(case.w_hat[disc.bdm.constrained]).max() == 0.0
    vals = disc.dgp.values_on_quadrature(case.p_hat)
    assert abs(np.einsum("cq,cq->", disc.dgp.volume.weights, vals)) <= 1e-12


def test_discrete_case_semidiscrete_residual(params):
    """The Riesz-lifted sources make the exact coefficients solve the
    semi-discrete equations identically at any time."""
    disc = Discretization(structured_mesh(2, 2), ell=0, params=params)
    case = mms.discrete_case(disc, 2, temporal="trig", omega=3.0)
    src = case.sources()
    prm = disc.params
    free = disc.bdm.free
    t = 0.327
    tf = case.tf
    import biotcgp.assembly as asm

    # momentum residual against every free test function
    lhs = (prm.rho_bar * tf.dda(t) * (disc.mass_bdm @ case.u_hat)
           + prm.rho_f * tf.db(t) * (disc.mass_bdm @ case.w_hat)
           + tf.a(t) * (disc.elasticity @ case.u_hat)
           - tf.c(t) * (disc.div_u_alpha @ case.p_hat))
    rhs = asm.assemble_load(disc.bdm, src.f, t)
    assert np.abs(lhs[free] - rhs[free]).max() <= 1e-11

    # Darcy residual
    lhs = (prm.rho_f * tf.dda(t) * (disc.mass_bdm @ case.u_hat)
           + prm.rho_w * tf.db(t) * (disc.mass_bdm @ case.w_hat)
           + tf.b(t) * (disc.mass_kinv @ case.w_hat)
           - tf.c(t) * (disc.div_w @ case.p_hat))
    rhs = asm.assemble_load(disc.bdm, src.g, t)
    assert np.abs(lhs[free] - rhs[free]).max() <= 1e-11

    # mass-balance residual
    lhs = (prm.s0 * tf.dc(t) * (disc.mass_p @ case.p_hat)
           + tf.da(t) * (disc.div_u_alpha.T @ case.u_hat)
           + tf.b(t) * (disc.div_w.T @ case.w_hat))
    rhs = asm.assemble_load(disc.dgp, src.mass, t)
    assert np.abs(lhs - rhs).max() <= 1e-11
