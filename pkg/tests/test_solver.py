"""Linking geometry, flow, Newton and continuation on small truncations."""
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from dirac_torus.field import SpinorField, norm, project
from dirac_torus.functional import Problem, ProblemParams, level_bracket
from dirac_torus.nonlinear import HypothesisConstants, SolerPower, ZeroNonlinearity
from dirac_torus.solver import (ContinuationRecord, FlowConfig, FlowError, GeometryError, LinkingGeometry,
                                NewtonError, bound_report, boundary_audit, build_geometry, choose_R, choose_r,
                                cylinder_root, embedding_constants, eps_schedule, field_bounds, flow_minmax,
                                negative_basis, newton_refine, prepare, run_continuation,
                                sphere_floor_audit, sphere_floor_profile, unit_e)
from dirac_torus.spectral import LatticeSpec

MODEL = SolerPower()
LAT = LatticeSpec(K=3)


@pytest.fixture(scope="module")
def params():
    return ProblemParams(lattice=LAT, eps=0.5)


@pytest.fixture(scope="module")
def setup(params):
    return prepare(params, MODEL, c2_samples=2000, audit_samples=600)


def test_choose_R_closed_forms():
    # [DERIVED] A4 = 0: 1/2 = 2^(-5/4) R0^(1/2), so R0 = sqrt 2
    c = HypothesisConstants(A3=1, A4=0, nu=1.25)
    assert cylinder_root(1, 0, 1.25, 1, 1) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert choose_R(c, 1.0, 1.0) == pytest.approx(1.05 * math.sqrt(2), abs=1e-12)
    # [DERIVED] nu = 2: R^4/4 - R^2/2 - 1 = 0 gives R0^2 = 1 + sqrt 5
    assert cylinder_root(1, 1, 2.0, 1, 1) == pytest.approx(math.sqrt(1 + math.sqrt(5)), abs=1e-12)
    assert cylinder_root(2, 0, 1.25, 1, 1) < cylinder_root(1, 0, 1.25, 1, 1)
    assert cylinder_root(2, 0.5, 1.4, 6.0, 0.7) < cylinder_root(1, 0.5, 1.4, 6.0, 0.7)
    with pytest.raises(GeometryError):
        cylinder_root(1, 0, 1.0, 1, 1)


def test_R_independent_of_eps_and_grid():
    assert choose_R(MODEL, 1.0, 1.0) == choose_R(MODEL, 1.0, 1.0)
    g1 = build_geometry(ProblemParams(lattice=LAT, eps=0.0), MODEL, embed_samples=10)
    g2 = build_geometry(ProblemParams(lattice=LatticeSpec(K=2), eps=1.0), MODEL, embed_samples=10)
    assert g1.R == g2.R


def test_choose_r_against_grid_oracle(params):
    S = embedding_constants(LAT, 1.0, (2.5,), np.random.default_rng(1), samples=50)
    R = choose_R(MODEL, 1.0, 1.0)
    r, C = choose_r(MODEL, params, R, S)
    phi = sphere_floor_profile(MODEL.constants, S, params.a_max, 1.0)
    grid = np.linspace(R / 1e4, R, 10_000)
    grid = np.concatenate([grid, np.geomspace(1e-8, R, 10_000)])
    assert C >= phi(grid).max() - 1e-18
    assert 0 < r < R and C > 0
    # the floor is taken with a - a/m folded into the quadratic part
    assert C == pytest.approx(phi(r))


def test_choose_r_rejects_weak_constants(params):
    with pytest.raises(GeometryError):
        choose_r(MODEL, params, 1.0, {2.5: 1e9})


def test_geometry_invariants(setup):
    g = setup.geometry
    assert norm(g.e, "E", 1.0) == pytest.approx(1.0)
    assert np.max(np.abs(project(g.e, -1, 1.0).coeffs)) == 0
    assert 0 < g.r < g.R and g.C_star > 0
    pb = Problem(ProblemParams(lattice=LAT), MODEL)
    G = np.array([[pb.inner_E(a, b) for b in g.neg_basis] for a in g.neg_basis])
    assert np.allclose(G, np.eye(g.neg_dim), atol=1e-13)
    assert g.neg_dim == 4 and np.all(g.neg_lambda == -1.0)
    with pytest.raises(GeometryError):
        LinkingGeometry(g.e, 1.0, 2.0, 1.0, g.neg_basis, g.neg_lambda)


def test_negative_basis_cutoff():
    b, lam = negative_basis(LAT, 1.0, cutoff=7.0)
    # the six |n| = 1 modes have |lambda| = sqrt(4 pi^2 + 1) < 7
    assert b.shape[0] == 4 * 7
    assert np.all(np.diff(np.abs(lam)) >= 0)


def test_boundary_audit(setup, params):
    rep = boundary_audit(setup.geometry, params.with_eps(0.0), MODEL, samples=300)
    assert rep.passed and set(rep.face_max) == {"lambda=0", "lambda=R", "|psi-|=R"}
    # lambda = 0 face is bounded by -1/2 ||psi-||_E^2 <= 0
    assert rep.face_max["lambda=0"] <= 0


def test_sphere_floor(setup, params):
    mins = sphere_floor_audit(setup.geometry, params, MODEL, samples=120)
    assert all(v >= setup.geometry.C_star - 1e-9 for v in mins.values())


def test_level_bracket(setup, params):
    c1, c2 = setup.c1, setup.c2
    g = setup.geometry
    J_re = float(Problem(params.with_eps(0.0), MODEL).energy((g.r * g.e).coeffs))
    assert 0 < c1 <= J_re <= c2
    # the sup along the e-line is the constant critical level 8e-5
    assert c2 == pytest.approx(8e-5 * 1.001, rel=1e-6)
    bad = LinkingGeometry.__new__(LinkingGeometry)
    object.__setattr__(bad, "r", 2.0)
    object.__setattr__(bad, "R", 1.0)
    with pytest.raises(ValueError):
        level_bracket(params, MODEL, bad)


def test_flow_quadratic_sanity():
    # F = 0, eps = 0: the only critical point is 0 and the flow drives the cloud's max to it
    p = ProblemParams(lattice=LatticeSpec(K=2))
    z = ZeroNonlinearity()
    geo = build_geometry(p, z, embed_samples=10)
    res = flow_minmax(geo, p, z, FlowConfig(n_lambda=12, n_neg=6, tol_level=1e-10, check_collapse=False))
    assert res.converged
    assert abs(res.level) < 1e-6
    assert all(a >= b for a, b in zip(res.history, res.history[1:]))


def test_flow_default(setup, params):
    res = flow_minmax(setup.geometry, params, MODEL, c1=setup.c1)
    assert setup.c1 < res.level < setup.c2
    assert all(a >= b for a, b in zip(res.history, res.history[1:]))
    level, field = res
    assert field.lattice == LAT


def test_flow_collapse_detected(setup, params):
    with pytest.raises(FlowError, match="collapsed|not above"):
        flow_minmax(setup.geometry, params, MODEL, FlowConfig(tol_level=0.0, max_sweeps=400), c1=1.55e-5)


def test_newton_exact_constant():
    p = ProblemParams(lattice=LAT)
    rec = newton_refine(SpinorField.constant(LAT, [0.05, 0, 0, 0]), p, MODEL)
    diff = rec.field - SpinorField.constant(LAT, [0.04, 0, 0, 0])
    assert norm(diff, "E", 1.0) < 1e-10
    assert rec.level == pytest.approx(8e-5, abs=1e-12)
    again = newton_refine(rec.field, p, MODEL)
    assert again.newton_iters == 0


@pytest.mark.parametrize("eps", [0.5, 1.0])
def test_newton_perturbed_constant(eps):
    # [DERIVED] (m - a) s = 2p s^(2p-1) + eps alpha2 s^(alpha2 - 1), root-found independently
    p = ProblemParams(lattice=LAT, eps=eps)
    root = brentq(lambda s: 0.5 * s - 2.5 * s ** 1.5 - eps * 2.5 * s ** 1.5, 1e-4, 0.05, xtol=1e-16)
    rec = newton_refine(SpinorField.constant(LAT, [0.05, 0, 0, 0]), p, MODEL)
    assert rec.field.coeffs[LAT.n_modes // 2, 0].real == pytest.approx(root, rel=1e-10)
    others = np.delete(rec.field.coeffs, LAT.n_modes // 2, axis=0)
    assert np.max(np.abs(others)) < 1e-14


def test_newton_rejects_trivial():
    p = ProblemParams(lattice=LAT)
    with pytest.raises(NewtonError, match="trivial"):
        newton_refine(SpinorField.constant(LAT, [1e-3, 0, 0, 0]), p, MODEL)


def test_schedule():
    s = eps_schedule()
    assert len(s) == 12 and s[0] == 0.5 and s[-1] == 0.0 and s[-2] == pytest.approx(1e-3)
    assert np.allclose(np.diff(np.log(s[:-1])), np.log(1e-3 / 0.5) / 10)
    with pytest.raises(ValueError):
        eps_schedule(0.5, 0.6)


def test_continuation(setup, params):
    recs = run_continuation(params, MODEL, eps_schedule(0.5, 0.01, 4), setup)
    assert [r.stage for r in recs] == [0, 1, 2, 3]
    final = recs[-1]
    assert final.eps == 0 and final.residual_dual < 1e-10
    assert final.level == pytest.approx(8e-5, rel=1e-10)
    for r in recs:
        assert setup.c1 < r.level < setup.c2
        assert bound_report(r, MODEL).passed
    for a, b in zip(recs, recs[1:]):
        # J_eps is nonincreasing in eps on a fixed field
        assert b.pre_level >= a.level - 1e-18
    with pytest.raises(ValueError):
        run_continuation(params, MODEL, [0.1, 0.2], setup)


def test_bound_report_trivial_and_violation():
    p = ProblemParams(lattice=LAT)
    pb = Problem(p, MODEL)
    zero = np.zeros((LAT.n_modes, 4), complex)
    rec = ContinuationRecord(0.0, SpinorField.zeros(LAT), 0.0, 0.0, field_bounds(pb, zero), p)
    rep = bound_report(rec, MODEL)
    assert rep.passed and all(lhs == 0 for _, lhs, _, _ in rep.checks)
    # a non-critical field with a small level violates the chain
    c = SpinorField.constant(LAT, [0.1, 0, 0, 0])
    rec = ContinuationRecord(0.0, c, 1e-6, 1.0, field_bounds(pb, c.coeffs), p)
    assert not bound_report(rec, MODEL).passed
