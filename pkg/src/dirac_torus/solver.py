"""Linking geometry, gradient-flow min-max, Newton-Krylov refinement and eps-continuation.

The cylinder C(R) = {psi^- + lambda e : ||psi^-||_E <= R, 0 <= lambda <= R} links
with the sphere of radius r in the positive space. J_eps is <= 0 on the
cylinder's boundary and >= C* on the sphere, so the level

    inf_t sup J_eps(phi_t(C(R)))

of the negative-gradient flow phi_t lies in [C*, sup_C J_0]. Here the cylinder
is a finite point cloud, the flow is explicit E-gradient descent, and the
best point is sharpened into an exact critical point by Newton's method.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.sparse.linalg import LinearOperator, gmres

from .field import SpinorField, norm
from .functional import (Problem, ProblemParams, SubspaceEvaluator, ball_points, cylinder_basis,
                         level_bracket)
from .nonlinear import HypothesisConstants, NonlinearityModel
from .rng import stream
from .spectral import LatticeSpec

log = logging.getLogger(__name__)

NONTRIVIAL_FLOOR = 1e-6
CYLINDER_SAFETY = 1.05


class SolverError(RuntimeError):
    """Base class; ``last_good_eps`` is set by the continuation driver."""

    last_good_eps: float | None = None


class GeometryError(SolverError):
    pass


class FlowError(SolverError):
    pass


class NewtonError(SolverError):
    pass


# -- geometry ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinkingGeometry:
    """e, radii, sphere floor and the sampled negative directions.

    ``neg_basis`` has shape (neg_dim, M, 4): real directions (v and i v per
    complex eigenvector), orthonormal in the E inner product.
    """

    e: SpinorField
    R: float
    r: float
    C_star: float
    neg_basis: np.ndarray
    neg_lambda: np.ndarray
    S_q: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise GeometryError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        if not self.C_star > 0:
            raise GeometryError(f"sphere floor must be positive, got C*={self.C_star}")

    @property
    def neg_dim(self) -> int:
        return self.neg_basis.shape[0]

    @property
    def grid(self):
        return self.e.grid


def unit_e(lattice: LatticeSpec, m: float, grid=None) -> SpinorField:
    """Constant upper spinor (1,0,0,0) scaled to unit E-norm."""
    return SpinorField.constant(lattice, [1 / math.sqrt(m * lattice.vol), 0, 0, 0], grid)


def negative_basis(lattice: LatticeSpec, m: float, cutoff: float = 3.0):
    """E-orthonormal real basis of the negative eigendirections with |lambda| <= cutoff * m.

    Ordered by |lambda|, then canonical mode index, eigenvector column, and
    real before imaginary direction.
    """
    from .spectral import dirac_spectrum

    spec = dirac_spectrum(lattice, m)
    lam = spec.abs_lam[:, 2]
    idx = np.flatnonzero(lam <= cutoff * m * (1 + 1e-12))
    idx = idx[np.lexsort((idx, lam[idx]))]
    out, lams = [], []
    for i in idx:
        for col in (2, 3):
            v = spec.U[i, :, col] / math.sqrt(lattice.vol * lam[i])
            for phase in (1.0, 1j):
                c = np.zeros((lattice.n_modes, 4), complex)
                c[i] = phase * v
                out.append(c)
                lams.append(-lam[i])
    if not out:
        return np.zeros((0, lattice.n_modes, 4), complex), np.zeros(0)
    return np.stack(out), np.array(lams)


def _constants(model) -> HypothesisConstants:
    return model if isinstance(model, HypothesisConstants) else model.constants


def cylinder_root(A3: float, A4: float, nu: float, vol: float, m: float) -> float:
    """Largest positive root R0 of 1/2 R^2 - A3 vol^(1-nu) (2m)^(-nu) R^(2 nu) + A4 vol."""
    if not nu > 1 or not A3 > 0:
        raise GeometryError(f"cylinder radius needs nu > 1 and A3 > 0, got nu={nu}, A3={A3}")
    k = A3 * vol ** (1 - nu) * (2 * m) ** (-nu)

    def g(R):
        return 0.5 * R * R - k * R ** (2 * nu) + A4 * vol

    # g increases up to its critical point, then decreases to -infinity
    top = (1 / (2 * nu * k)) ** (1 / (2 * nu - 2))
    if g(top) <= 0:
        raise GeometryError("cylinder polynomial has no positive root")
    hi = 2 * top
    while g(hi) > 0:
        hi *= 2
    return scipy.optimize.brentq(g, top, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def choose_R(model, vol: float, m: float) -> float:
    """Cylinder radius: 1.05 times the root beyond which the boundary bound is negative."""
    c = _constants(model)
    return CYLINDER_SAFETY * cylinder_root(c.A3, c.A4, c.nu, vol, m)


def embedding_constants(lattice: LatticeSpec, m: float, exponents, rng, samples: int = 200,
                        grid=None, inflate: float = 2.0) -> dict:
    """Sampled S_q with ||psi||_Lq <= S_q ||psi||_E on the positive space, inflated by ``inflate``.

    The sample is the unit vector e plus ``samples`` random positive fields
    with a spread of spectral decay rates.
    """
    from .spectral import dirac_spectrum

    spec = dirac_spectrum(lattice, m)
    pos = (spec.lam > 0).astype(float)
    e = unit_e(lattice, m, grid)
    fields = [e]
    decays = np.linspace(1.0, 6.0, samples) if samples else []
    for d in decays:
        f = SpinorField.random(lattice, rng, e.grid, decay=float(d))
        f = f.like(spec.apply_multiplier(f.coeffs, pos))
        fields.append(f * (1 / norm(f, "E", m)))
    out = {}
    for q in sorted(set(float(q) for q in exponents)):
        out[q] = inflate * max(norm(f, "Lq", q=q) for f in fields)
    return out


def sphere_floor_profile(c: HypothesisConstants, S_q: dict, a_max: float, m: float):
    """phi(r), the lower bound of J_eps (any eps in [0, 1]) on the positive sphere of radius r."""
    s1 = S_q[float(c.alpha1)] ** c.alpha1
    s2 = S_q[float(c.alpha2)] ** c.alpha2
    quad = 0.5 * (1 - a_max / m)

    def phi(r):
        r = np.asarray(r, dtype=float)
        return quad * r ** 2 - c.A1 * (s1 * r ** c.alpha1 + s2 * r ** c.alpha2) - s2 * r ** c.alpha2

    return phi


def choose_r(model, params: ProblemParams, R: float, S_q: dict | None = None, rng=None,
             samples: int = 200, grid=None, n_grid: int = 10_000):
    """(r, C*) maximizing the sphere floor phi over (0, R); rejects configs with phi <= 0."""
    c = _constants(model)
    if S_q is None:
        rng = rng or stream(0, "embedding")
        S_q = embedding_constants(params.lattice, params.m, (c.alpha1, c.alpha2), rng, samples, grid)
    phi = sphere_floor_profile(c, S_q, params.a_max, params.m)
    rs = np.geomspace(R * 1e-12, R, n_grid, endpoint=False)
    vals = phi(rs)
    i = int(np.argmax(vals))
    lo, hi = rs[max(i - 1, 0)], rs[min(i + 1, n_grid - 1)]
    res = scipy.optimize.minimize_scalar(lambda t: -phi(t), bounds=(lo, hi), method="bounded",
                                         options={"xatol": lo * 1e-10})
    r, C = (float(res.x), float(-res.fun)) if -res.fun >= vals[i] else (float(rs[i]), float(vals[i]))
    if not C > 0:
        raise GeometryError("no positive sphere floor: constants too weak at this truncation")
    return r, C


def build_geometry(params: ProblemParams, model: NonlinearityModel, grid=None, neg_cutoff: float = 3.0,
                   rng=None, embed_samples: int = 200) -> LinkingGeometry:
    lat, m = params.lattice, params.m
    if grid is None:
        grid = params.grid
    c = model.constants
    R = choose_R(model, lat.vol, m)
    S_q = embedding_constants(lat, m, (c.alpha1, c.alpha2), rng or stream(0, "embedding"),
                              embed_samples, grid)
    r, C = choose_r(model, params, R, S_q)
    basis, lams = negative_basis(lat, m, neg_cutoff)
    return LinkingGeometry(unit_e(lat, m, grid), R, r, C, basis, lams, S_q)


# -- audits -----------------------------------------------------------------


@dataclass
class BoundaryReport:
    face_max: dict
    samples: int
    tol: float = 1e-9

    @property
    def max_J(self) -> float:
        return max(self.face_max.values())

    @property
    def passed(self) -> bool:
        return self.max_J <= self.tol


def boundary_points(geometry: LinkingGeometry, samples: int):
    """Deterministic samples of the three boundary faces as rows (lambda, x), keyed by face."""
    from scipy.stats import qmc

    d, R = geometry.neg_dim, geometry.R
    n = max(samples // 3, 1)
    u = qmc.Halton(d + 2, scramble=False).random(n + 1)[1:]
    x_ball = R * ball_points(u[:, 1:])
    if d:
        from scipy.special import ndtri

        g = ndtri(np.clip(u[:, 2:], 1e-12, 1 - 1e-12))
        x_sphere = R * g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    else:
        x_sphere = np.zeros((n, 0))
    lam = R * u[:, 0]
    return {
        "lambda=0": np.concatenate([np.zeros((n, 1)), x_ball], axis=1),
        "lambda=R": np.concatenate([np.full((n, 1), R), x_ball], axis=1),
        "|psi-|=R": np.concatenate([lam[:, None], x_sphere], axis=1) if d else np.zeros((0, 1)),
    }


def boundary_audit(geometry: LinkingGeometry, params: ProblemParams, model: NonlinearityModel,
                   samples: int = 1000, tol: float = 1e-9) -> BoundaryReport:
    pb = Problem(params, model, geometry.grid)
    ev = SubspaceEvaluator(pb, cylinder_basis(geometry))
    face_max = {}
    for face, pts in boundary_points(geometry, samples).items():
        if len(pts):
            face_max[face] = ev.max_energy(pts)[0]
    return BoundaryReport(face_max, samples, tol)


def sphere_samples(geometry: LinkingGeometry, params: ProblemParams, n: int, rng) -> np.ndarray:
    """Coefficient arrays of n fields on the positive sphere of E-radius r.

    Mixes random positive fields of several decay rates with combinations
    of the lowest positive modes, where the nonlinearity is most effective.
    """
    from .spectral import dirac_spectrum

    lat, m = params.lattice, params.m
    spec = dirac_spectrum(lat, m)
    pos = (spec.lam > 0).astype(float)
    out = np.empty((n, lat.n_modes, 4), complex)
    zero = lat.n_modes // 2
    for k in range(n):
        if k % 2 == 0:
            c = np.zeros((lat.n_modes, 4), complex)
            c[zero, :2] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            c += 0.1 * rng.random() * SpinorField.random(lat, rng, decay=4.0).coeffs
        else:
            c = SpinorField.random(lat, rng, decay=1.0 + 5.0 * rng.random()).coeffs
        c = spec.apply_multiplier(c, pos)
        e = math.sqrt(float(lat.vol * np.sum(spec.abs_lam * np.abs(spec.to_eig(c)) ** 2)))
        out[k] = c * (geometry.r / e)
    return out


def sphere_floor_audit(geometry: LinkingGeometry, params: ProblemParams, model: NonlinearityModel,
                       samples: int = 1000, eps_values=(0.0, 0.5, 1.0), rng=None, chunk: int = 16):
    """min over sampled psi on the positive r-sphere of J_eps, per eps."""
    rng = rng or stream(0, "sphere")
    pb = Problem(params, model, geometry.grid)
    coeffs = sphere_samples(geometry, params, samples, rng)
    mins = {float(e): np.inf for e in eps_values}
    for s in range(0, samples, chunk):
        kin, mass, F, pert = pb.terms(coeffs[s:s + chunk])
        for e in mins:
            mins[e] = min(mins[e], float(np.min(kin - mass - F - e * pert)))
    return mins


# -- flow -------------------------------------------------------------------


@dataclass
class FlowConfig:
    n_lambda: int = 32
    n_neg: int = 16
    lambda_floor: float = 1e-4
    tol_level: float = 1e-6
    max_sweeps: int = 200
    tau0: float = 1.0
    tau_max: float = 4.0
    armijo: float = 1e-4
    min_tau: float = 1e-10
    chunk: int = 8
    check_collapse: bool = True


@dataclass
class FlowResult:
    level: float
    field: SpinorField
    history: list
    sweeps: int
    converged: bool
    active_counts: list

    def __iter__(self):
        return iter((self.level, self.field))


def flow_cloud(geometry: LinkingGeometry, cfg: FlowConfig):
    """Cloud coordinates (lambda, x), shape (n_lambda * n_neg, 1 + d), lambda-major.

    lambda runs over 0 and a geometric grid from lambda_floor * R to R, so the
    small-lambda region where J is positive is resolved; x over 0 and Halton
    points of the radius-R ball.
    """
    from scipy.stats import qmc

    R, d = geometry.R, geometry.neg_dim
    lam = np.concatenate([[0.0], np.geomspace(cfg.lambda_floor * R, R, cfg.n_lambda - 1)])
    if d and cfg.n_neg > 1:
        u = qmc.Halton(d + 1, scramble=False).random(cfg.n_neg)[1:]
        x = np.concatenate([np.zeros((1, d)), R * ball_points(u)])
    else:
        x = np.zeros((1, d))
    L = np.repeat(lam, len(x))[:, None]
    X = np.tile(x, (len(lam), 1))
    return np.concatenate([L, X], axis=1), len(lam), len(x)


def flow_minmax(geometry: LinkingGeometry, params: ProblemParams, model: NonlinearityModel,
                cfg: FlowConfig | None = None, c1: float | None = None) -> FlowResult:
    """Deform the cylinder cloud by E-gradient descent of J_eps and track S = max J.

    Points with J <= 0 are frozen (the flow is the identity there, as for the
    boundary of the cylinder). Each active point takes one Armijo step per
    sweep with its own step size. The run stops when S falls by less than
    ``tol_level`` over a sweep.
    """
    cfg = cfg or FlowConfig()
    c1 = geometry.C_star if c1 is None else c1
    pb = Problem(params, model, geometry.grid)
    spec = pb.spec
    pos_w = (spec.lam > 0).astype(float)
    basis = cylinder_basis(geometry)
    pts, n_lam, n_x = flow_cloud(geometry, cfg)
    ev = SubspaceEvaluator(pb, basis)
    J = ev.energy(pts)
    # E-norm of the positive part; fixed for frozen points
    pplus = np.sqrt(np.array([pb.e_sq(spec.apply_multiplier(ev.coeffs(p[None])[0], pos_w)) for p in pts]))

    active = np.flatnonzero(J > 0)
    C = ev.coeffs(pts[active])
    V = pb.disc.to_grid(C) if len(active) else None
    tau = np.full(len(active), cfg.tau0)
    S = float(J.max())
    history, counts = [S], [len(active)]
    _witness(pplus, geometry.r, n_lam, n_x, 0)
    converged = False
    sweep = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        if not len(active):
            converged = True  # every point frozen: nothing moves any more
            break
        for lo in range(0, len(active), cfg.chunk):
            sl = slice(lo, lo + cfg.chunk)
            G = pb.grad_E(C[sl], V[sl])
            gg = pb.e_sq(G)
            for k in range(G.shape[0]):
                i = lo + k
                p = active[i]
                t = tau[i]
                while True:
                    trial = C[i] - t * G[k]
                    tv = pb.disc.to_grid(trial)
                    Jt = float(pb.energy(trial, tv))
                    if Jt <= J[p] - cfg.armijo * t * gg[k] or t < cfg.min_tau:
                        break
                    t *= 0.5
                if t >= cfg.min_tau and Jt < J[p]:
                    C[i], V[i], J[p] = trial, tv, Jt
                    tau[i] = min(2 * t, cfg.tau_max)
                else:
                    tau[i] = t
                pplus[p] = math.sqrt(float(pb.e_sq(spec.apply_multiplier(C[i], pos_w))))
        S_new = float(J.max())
        history.append(S_new)
        if S_new > S + 1e-15 * max(1.0, abs(S)):
            raise FlowError(f"flow level increased from {S!r} to {S_new!r} at sweep {sweep} (step-size failure)")
        _witness(pplus, geometry.r, n_lam, n_x, sweep)
        keep = J[active] > 0
        active, C, V, tau = active[keep], C[keep], V[keep], tau[keep]
        counts.append(len(active))
        drop = S - S_new
        S = S_new
        if cfg.check_collapse and S <= c1:
            raise FlowError(f"flow level {S!r} collapsed below c1={c1!r}; densify the cloud "
                            "(solver.flow_lambda / solver.flow_neg)")
        log.debug("sweep %d: S=%r active=%d", sweep, S, len(active))
        if drop < cfg.tol_level:
            converged = True
            break
    if cfg.check_collapse and S <= c1:
        raise FlowError(f"flow level {S!r} not above c1={c1!r}; densify the cloud")
    best = int(np.argmax(J))
    where = np.flatnonzero(active == best)
    coeffs = C[where[0]] if len(where) else ev.coeffs(pts[best:best + 1])[0]
    return FlowResult(S, SpinorField(params.lattice, coeffs, geometry.grid), history, sweep,
                      converged, counts)


def _witness(pplus, r, n_lam, n_x, sweep):
    """Some lambda-line of the cloud must cross the positive r-sphere."""
    grid = pplus.reshape(n_lam, n_x) - r
    if not np.any((grid.min(axis=0) < 0) & (grid.max(axis=0) > 0)):
        raise FlowError(f"sweep {sweep}: deformed cloud no longer meets the positive r-sphere")


# -- Newton ------------------------------------------------------------------


@dataclass
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 40
    jac_delta: float = 1e-6
    gmres_rtol: float = 1e-10
    gmres_restart: int = 40
    gmres_maxiter: int = 20


@dataclass
class ContinuationRecord:
    eps: float
    field: SpinorField
    level: float
    residual_dual: float
    bounds: dict
    params: ProblemParams
    stage: int = 0
    newton_iters: int = 0
    flow_level: float | None = None
    pre_level: float | None = None
    c1: float | None = None
    c2: float | None = None


def _flat(c):
    return np.concatenate([c.real.ravel(), c.imag.ravel()])


def _unflat(x, shape):
    n = x.size // 2
    return (x[:n] + 1j * x[n:]).reshape(shape)


def field_bounds(pb: Problem, c, values=None) -> dict:
    """The monitored integrals and norms of one field."""
    if values is None:
        values = pb.disc.to_grid(c)
    kin, mass, F, pert = pb.terms(c, values)
    mod2 = np.sum(np.abs(values) ** 2, axis=-1)
    q = mod2 - 2 * np.sum(np.abs(values[..., 2:]) ** 2, axis=-1)
    dFpair = np.real(np.sum(np.conj(pb.model.grad(values)) * values, axis=-1))
    w = 1.0 + 4 * np.pi ** 2 * np.sum(pb.spec.zeta ** 2, axis=1)
    return {
        "F_int": float(F),
        "pert_int": float(pert),
        "dF_pair": float(pb.disc.integrate(dFpair)),
        "l2": float(np.sqrt(pb.l2sq(c))),
        "l3": float(pb.disc.integrate(mod2 ** 1.5) ** (1 / 3)),
        "h1": float(np.sqrt(pb.vol * np.sum(w[:, None] * np.abs(c) ** 2))),
        "qbar": float(pb.disc.integrate(q)),
    }


def newton_refine(field: SpinorField, params: ProblemParams, model: NonlinearityModel,
                  tol: float | None = None, cfg: NewtonConfig | None = None) -> ContinuationRecord:
    """Damped Newton-Krylov on r(psi) = 0, measured in the dual E-norm.

    The linearization D - a - M - Hess F_eps uses a smoothed profile when the
    model is singular on the null cone; residuals always use the exact model.
    Inner solves: GMRES, right-preconditioned by (D - a)^{-1}.
    """
    cfg = cfg or NewtonConfig()
    tol = cfg.tol if tol is None else tol
    pb = Problem(params, model, field.grid)
    jac_model = model.smoothed(cfg.jac_delta) if model.singular_on_null_cone else model
    spec = pb.spec
    prec_w = 1.0 / (spec.lam - params.a)
    shape = field.coeffs.shape
    c = np.array(field.coeffs)
    v = pb.disc.to_grid(c)
    r = pb.residual(c, v)
    nr = math.sqrt(float(pb.dual_sq(r)))
    if not np.isfinite(nr):
        raise NewtonError("initial residual is not finite")
    it = 0
    while nr >= tol:
        if it >= cfg.max_iter:
            raise NewtonError(f"Newton did not converge in {cfg.max_iter} iterations "
                              f"(residual {nr:.3e}, tol {tol:.1e})")
        it += 1
        vals = v

        def matvec(y, vals=vals, c=c):
            z = spec.apply_multiplier(_unflat(y, shape), prec_w)
            return _flat(pb.hess_apply(c, z, jac_model, vals))

        A = LinearOperator((2 * c.size, 2 * c.size), matvec=matvec, dtype=float)
        y, info = gmres(A, -_flat(r), rtol=cfg.gmres_rtol, atol=0.0, restart=cfg.gmres_restart,
                        maxiter=cfg.gmres_maxiter)
        if info < 0 or not np.all(np.isfinite(y)):
            raise NewtonError("linear solve broke down; a smoothed model (model.delta > 0) may help")
        step = spec.apply_multiplier(_unflat(y, shape), prec_w)
        t = 1.0
        while True:
            trial = c + t * step
            tv = pb.disc.to_grid(trial)
            tr = pb.residual(trial, tv)
            ntr = math.sqrt(float(pb.dual_sq(tr)))
            if ntr < (1 - 1e-4 * t) * nr:
                break
            t *= 0.5
            if t < 1e-6:
                raise NewtonError(f"line search failed at residual {nr:.3e}")
        c, v, r, nr = trial, tv, tr, ntr
        log.debug("newton %d: residual %.3e (step %.3g)", it, nr, t)
    l2 = math.sqrt(float(pb.l2sq(c)))
    if l2 < NONTRIVIAL_FLOOR:
        raise NewtonError(f"converged to the trivial solution (||psi||_L2 = {l2:.2e})")
    level = float(pb.energy(c, v))
    return ContinuationRecord(params.eps, SpinorField(params.lattice, c, field.grid), level, nr,
                              field_bounds(pb, c, v), params, newton_iters=it)


# -- continuation ------------------------------------------------------------


def eps_schedule(eps0: float = 0.5, eps_min: float = 1e-3, steps: int = 12) -> list[float]:
    """Geometric ladder eps0 > ... > eps_min (steps - 1 values) followed by an exact 0."""
    if steps < 2:
        raise ValueError("schedule needs at least two stages")
    if not 0 < eps_min <= eps0 <= 1:
        raise ValueError(f"need 0 < eps_min <= eps0 <= 1, got {eps_min}, {eps0}")
    return [float(x) for x in np.geomspace(eps0, eps_min, steps - 1)] + [0.0]


@dataclass
class SolveSetup:
    geometry: LinkingGeometry
    c1: float
    c2: float
    c2_sample_max: float
    audit: BoundaryReport


def prepare(params: ProblemParams, model: NonlinearityModel, grid=None, neg_cutoff: float = 3.0,
            seed: int = 0, embed_samples: int = 200, audit_samples: int = 1000,
            c2_samples: int = 10_000, c2_margin: float = 1e-3) -> SolveSetup:
    """Geometry, boundary audit (eps = 1 is the worst case) and the level bracket."""
    geo = build_geometry(params, model, grid, neg_cutoff, stream(seed, "embedding"), embed_samples)
    audit = boundary_audit(geo, params.with_eps(1.0), model, audit_samples)
    if not audit.passed:
        raise GeometryError(f"boundary audit failed: max J = {audit.max_J!r} on {audit.face_max}")
    c1, c2, smax, _ = level_bracket(params, model, geo, c2_samples, c2_margin, details=True)
    return SolveSetup(geo, c1, c2, smax, audit)


def solve_stage(params: ProblemParams, model: NonlinearityModel, setup: SolveSetup,
                flow_cfg: FlowConfig | None = None, newton_cfg: NewtonConfig | None = None):
    flow = flow_minmax(setup.geometry, params, model, flow_cfg, setup.c1)
    rec = newton_refine(flow.field, params, model, cfg=newton_cfg)
    rec.flow_level = flow.level
    rec.c1, rec.c2 = setup.c1, setup.c2
    return rec, flow


def run_continuation(params: ProblemParams, model: NonlinearityModel, schedule=None,
                     setup: SolveSetup | None = None, flow_cfg: FlowConfig | None = None,
                     newton_cfg: NewtonConfig | None = None, final_tol: float = 1e-6,
                     callback=None, **prepare_kw) -> list[ContinuationRecord]:
    """Min-max plus Newton at the first eps, then warm-started Newton down the ladder."""
    schedule = list(eps_schedule() if schedule is None else schedule)
    if any(b >= a for a, b in zip(schedule, schedule[1:])) or schedule[-1] < 0:
        raise ValueError("schedule must be strictly decreasing and end at eps >= 0")
    setup = setup or prepare(params, model, **prepare_kw)
    records: list[ContinuationRecord] = []
    prev = None
    for k, eps in enumerate(schedule):
        p = params.with_eps(eps)
        try:
            if prev is None:
                rec, _ = solve_stage(p, model, setup, flow_cfg, newton_cfg)
            else:
                pre = float(Problem(p, model, prev.field.grid).energy(prev.field.coeffs, prev.field.values()))
                rec = newton_refine(prev.field, p, model, cfg=newton_cfg)
                rec.pre_level = pre
                rec.c1, rec.c2 = setup.c1, setup.c2
        except SolverError as err:
            err.last_good_eps = prev.eps if prev else None
            raise
        rec.stage = k
        records.append(rec)
        if callback:
            callback(rec)
        prev = rec
    if records[-1].residual_dual >= final_tol:
        err = SolverError(f"final residual {records[-1].residual_dual:.3e} above {final_tol:.1e}")
        err.last_good_eps = records[-1].eps
        raise err
    return records


# -- bounds ------------------------------------------------------------------


@dataclass
class BoundReport:
    checks: list  # (name, lhs, rhs, ok)

    @property
    def passed(self) -> bool:
        return all(ok for *_, ok in self.checks)


def bound_report(record: ContinuationRecord, model: NonlinearityModel, slack: float = 1e-8,
                 level: float | None = None) -> BoundReport:
    """A-priori inequalities at a critical point, with explicit constants.

    ``level`` defaults to the record's own level; pass c2 to check against the
    uniform constant instead.
    """
    c = model.constants
    b = record.bounds
    p = record.params
    lev = record.level if level is None else level
    vol = p.lattice.vol
    tol = slack * max(abs(lev), 1e-300)
    checks = []

    def add(name, lhs, rhs, rel=True):
        ok = lhs <= rhs + (slack * abs(rhs) if rel else 0) + tol
        checks.append((name, float(lhs), float(rhs), bool(ok)))

    add("F_int <= 2 level/(alpha-2)", b["F_int"], 2 * lev / (c.alpha - 2))
    add("eps pert_int <= 2 level/(alpha2-2)", p.eps * b["pert_int"], 2 * lev / (c.alpha2 - 2))
    add("F_int + eps pert_int <= 2 level/(alpha-2)", b["F_int"] + p.eps * b["pert_int"],
        2 * lev / (min(c.alpha, c.alpha2) - 2))
    pair = b["dF_pair"] + p.eps * c.alpha2 * b["pert_int"]
    add("int dF_eps[psi] <= 2 level alpha/(alpha-2)", pair, 2 * lev * c.alpha / (c.alpha - 2))
    chain = (p.m - p.a) * vol ** (1 - 1 / c.nu) * max((b["F_int"] + c.A4 * vol) / c.A3, 0.0) ** (1 / c.nu)
    add("(m-a) qbar <= (m-a) vol^(1-1/nu) ((F_int + A4 vol)/A3)^(1/nu)", (p.m - p.a) * b["qbar"], chain)
    return BoundReport(checks)
