"""The action, its gradients and the algebraic identities."""
import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import random_coeffs
from dirac_torus.field import SpinorField, norm
from dirac_torus.functional import (Problem, ProblemParams, SubspaceEvaluator, constant_external,
                                    cosine_external, directional_derivative, el_residual, energy, evaluate,
                                    grad_E, ps_identity)
from dirac_torus.nonlinear import SolerPower, ZeroNonlinearity
from dirac_torus.spectral import LatticeSpec
from dirac_torus.verify import off_cone_field

MODEL = SolerPower()


@pytest.fixture(scope="module")
def params():
    return ProblemParams(lattice=LatticeSpec(K=3))


def const(lat, s, grid=None):
    return SpinorField.constant(lat, [s, 0, 0, 0], grid)


def test_param_validation():
    with pytest.raises(ValueError, match="0 < a < m"):
        ProblemParams(a=1.5)
    with pytest.raises(ValueError):
        ProblemParams(eps=1.5)
    with pytest.raises(ValueError, match="a \\+ M < m"):
        ProblemParams(external=np.full((14, 14, 14), 0.6), lattice=LatticeSpec(K=3))


def test_zero_field(params):
    b = evaluate(SpinorField.zeros(params.lattice), params, MODEL)
    assert (b.J_eps, b.kinetic, b.mass_term, b.F_int, b.pert_int, b.residual_dual) == (0, 0, 0, 0, 0, 0)
    lhs, rhs, gap = ps_identity(SpinorField.zeros(params.lattice), params, MODEL)
    assert (lhs, rhs, gap) == (0, 0, 0)


@pytest.mark.parametrize("s,J", [(1.0, -0.75), (0.04, 8e-5)])
def test_constant_closed_form(params, s, J):
    # [DERIVED] J = 1/2 (m - a) s^2 vol - s^(2p) vol
    b = evaluate(const(params.lattice, s), params, MODEL)
    assert b.J_eps == pytest.approx(J, abs=1e-15)
    assert b.J_eps == pytest.approx(b.kinetic - b.mass_term - b.F_int - params.eps * b.pert_int, abs=1e-15)


def test_constant_residual(params):
    for s in (0.01, 0.04, 0.3):
        r = el_residual(const(params.lattice, s), params, MODEL)
        expect = np.zeros_like(r.coeffs)
        expect[params.lattice.n_modes // 2, 0] = 0.5 * s - 2.5 * s ** 1.5
        assert np.max(np.abs(r.coeffs - expect)) < 1e-14
    # [DERIVED] scalar root of (m - a) s = 2p s^(2p - 1)
    root = brentq(lambda s: 0.5 * s - 2.5 * s ** 1.5, 1e-3, 0.5, xtol=1e-16)
    assert root == pytest.approx(0.04, rel=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
def test_fd_gradient_off_cone(params, rng, eps):
    p = params.with_eps(eps)
    for _ in range(5):
        psi = off_cone_field(p.lattice, rng)
        v = SpinorField(p.lattice, random_coeffs(rng, p.lattice)) * 0.05
        h = 1e-4
        fd = (energy(psi + v * h, p, MODEL) - energy(psi - v * h, p, MODEL)) / (2 * h)
        exact = directional_derivative(psi, v, p, MODEL)
        assert abs(fd - exact) < 1e-5 * abs(exact)


def test_fd_gradient_zero_model_any_field(params, rng):
    # without the power nonlinearity the action is smooth everywhere: FD error is rounding only
    p = params.with_eps(0.3)
    psi = SpinorField(p.lattice, random_coeffs(rng, p.lattice))
    v = SpinorField(p.lattice, random_coeffs(rng, p.lattice))
    z = ZeroNonlinearity()
    fd = (energy(psi + v * 1e-4, p, z) - energy(psi - v * 1e-4, p, z)) / 2e-4
    assert fd == pytest.approx(directional_derivative(psi, v, p, z), rel=1e-7)


def test_grad_E_adjoint_and_dual_norm(params, rng):
    p = params.with_eps(0.4)
    psi = SpinorField(p.lattice, random_coeffs(rng, p.lattice)) * 0.3
    g = grad_E(psi, p, MODEL)
    r = el_residual(psi, p, MODEL)
    pb = Problem(p, MODEL)
    for _ in range(20):
        v = SpinorField(p.lattice, random_coeffs(rng, p.lattice))
        exact = directional_derivative(psi, v, p, MODEL)
        assert abs(pb.inner_E(g.coeffs, v.coeffs) - exact) < 1e-10 * abs(exact)
    assert norm(g, "E", p.m) == pytest.approx(norm(r, "Edual", p.m), rel=1e-12)
    assert np.all(grad_E(SpinorField.zeros(p.lattice), p, MODEL).coeffs == 0)


def test_ps_identity(params, rng):
    for eps in (0.0, 0.7):
        p = params.with_eps(eps)
        for _ in range(5):
            psi = SpinorField(p.lattice, random_coeffs(rng, p.lattice)) * rng.random()
            lhs, rhs, gap = ps_identity(psi, p, MODEL)
            J = energy(psi, p, MODEL)
            assert abs(gap) < 1e-10 * (1 + abs(J))
            # dF[psi] = 2p F >= 2F for the power model
            pert = evaluate(psi, p, MODEL).pert_int
            assert rhs >= eps * (2.5 - 2) * pert - 1e-12


def test_eps_monotone(params, rng):
    for _ in range(10):
        psi = SpinorField(params.lattice, random_coeffs(rng, params.lattice)) * 0.5
        vals = [energy(psi, params.with_eps(e), MODEL) for e in (0.0, 0.25, 0.5, 1.0)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_external_constant_shift():
    # a constant M shifts a to a + M: compare with the field-free problem at a' = a + M
    lat = LatticeSpec(K=2)
    grid = (10, 10, 10)
    pm = ProblemParams(lattice=lat, external=constant_external(grid, 0.1))
    p0 = ProblemParams(a=0.6, lattice=lat)
    psi = off_cone_field(lat, np.random.default_rng(0), grid)
    assert energy(psi, pm, MODEL) == pytest.approx(energy(psi, p0, MODEL), rel=1e-12)
    assert np.allclose(el_residual(psi, pm, MODEL).coeffs, el_residual(psi, p0, MODEL).coeffs, atol=1e-14)


def test_external_cosine_fd_and_ps(rng):
    lat = LatticeSpec(K=3)
    grid = (14, 14, 14)
    M = cosine_external(lat, grid)
    assert M.max() == pytest.approx(0.2) and M.min() == pytest.approx(0.0, abs=1e-15)
    p = ProblemParams(lattice=lat, external=M, eps=0.3)
    psi = off_cone_field(lat, rng, grid)
    v = SpinorField(lat, random_coeffs(rng, lat), grid) * 0.05
    fd = (energy(psi + v * 1e-4, p, MODEL) - energy(psi - v * 1e-4, p, MODEL)) / 2e-4
    exact = directional_derivative(psi, v, p, MODEL)
    assert abs(fd - exact) < 1e-5 * abs(exact)
    assert abs(ps_identity(psi, p, MODEL)[2]) < 1e-10
    with pytest.raises(ValueError):
        Problem(p, MODEL, grid=(16, 16, 16))


def test_hessian_matches_residual_fd(params, rng):
    p = params.with_eps(0.2)
    pb = Problem(p, MODEL)
    c = off_cone_field(p.lattice, rng).coeffs
    w = random_coeffs(rng, p.lattice)
    fd = (pb.residual(c + 1e-6 * w) - pb.residual(c - 1e-6 * w)) / 2e-6
    assert np.max(np.abs(pb.hess_apply(c, w) - fd)) < 1e-6 * np.max(np.abs(fd))


def test_subspace_evaluator_matches_direct(params, rng):
    pb = Problem(params.with_eps(0.5), MODEL)
    basis = np.stack([random_coeffs(rng, params.lattice) for _ in range(3)])
    ev = SubspaceEvaluator(pb, basis)
    x = rng.standard_normal((7, 3)) * 0.2
    direct = pb.energy(ev.coeffs(x))
    assert np.allclose(ev.energy(x), direct, rtol=1e-12, atol=1e-15)
    best, i = ev.max_energy(x, chunk=2)
    assert best == pytest.approx(direct.max(), rel=1e-12) and i == int(np.argmax(direct))
