"""The action J, its perturbations J_eps, gradients and the exact identities they satisfy.

    J_eps(psi) = integral 1/2 <psi, D psi> - (a + M)/2 |psi|^2 - F(psi) - eps |psi|^alpha2 dv

The kinetic term is evaluated spectrally (exact on the truncated space); the
potential, nonlinear and perturbation terms by grid quadrature. The gradient
is the truncated DFT of the pointwise gradient, which is the exact derivative
of the quadrature, so finite differences of J_eps and the analytic gradient
agree to rounding regardless of aliasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .field import SpinorField, discretization, inner
from .nonlinear import NonlinearityModel, pert_grad, pert_hess_apply, pert_value
from .spectral import LatticeSpec, dirac_spectrum


@dataclass(frozen=True, eq=False)
class ProblemParams:
    """Physical parameters; ``external`` is M sampled on the collocation grid."""

    m: float = 1.0
    a: float = 0.5
    eps: float = 0.0
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    external: np.ndarray | None = None

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got m={self.m}")
        if not 0 < self.a < self.m:
            raise ValueError(f"frequency requires 0 < a < m, got a={self.a}, m={self.m}")
        if not 0 <= self.eps <= 1:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if self.external is not None:
            M = np.asarray(self.external, dtype=float)
            if M.ndim != 3:
                raise ValueError("external field must be a 3-D grid array")
            if M.min() < 0 or not (self.a + M.max() < self.m):
                raise ValueError(
                    f"external field requires 0 < a <= a + M < m, got M in [{M.min()}, {M.max()}]")
            M = M.copy()
            M.flags.writeable = False
            object.__setattr__(self, "external", M)

    def with_eps(self, eps: float) -> "ProblemParams":
        return replace(self, eps=eps)

    @property
    def grid(self):
        return None if self.external is None else self.external.shape

    @property
    def a_max(self) -> float:
        """Largest value of a + M."""
        return self.a + (0.0 if self.external is None else float(self.external.max()))


def cosine_external(lattice: LatticeSpec, grid, amplitude: float = 0.1, axis: int = 0) -> np.ndarray:
    """M(theta) = amplitude * (1 + cos(2 pi theta_axis / l_axis)) on the grid."""
    disc = discretization(lattice, tuple(grid))
    theta = disc.coordinates()[..., axis]
    return amplitude * (1 + np.cos(2 * np.pi * theta / lattice.lengths[axis]))


def constant_external(grid, value: float) -> np.ndarray:
    return np.full(tuple(grid), float(value))


@dataclass(frozen=True)
class EvaluationBundle:
    J_eps: float
    kinetic: float
    mass_term: float
    F_int: float
    pert_int: float
    residual_dual: float


class Problem:
    """J_eps for fixed (params, model) on one grid, acting on raw coefficient arrays.

    Arrays have shape (..., M, 4); leading axes are batch axes. Public
    field-level functions below wrap this class.
    """

    def __init__(self, params: ProblemParams, model: NonlinearityModel, grid=None):
        if grid is None:
            grid = params.grid
        elif params.grid is not None and tuple(grid) != tuple(params.grid):
            raise ValueError(f"field grid {grid} differs from external-field grid {params.grid}")
        self.params = params
        self.model = model
        self.lattice = params.lattice
        self.disc = discretization(self.lattice, tuple(grid) if grid else None)
        self.grid = self.disc.grid
        self.spec = dirac_spectrum(self.lattice, params.m)
        self.vol = self.lattice.vol
        self.eps = params.eps
        self.alpha2 = model.constants.alpha2
        self.M = params.external

    def with_eps(self, eps: float) -> "Problem":
        return Problem(self.params.with_eps(eps), self.model, self.grid)

    # quadratic parts ----------------------------------------------------

    def kinetic(self, c):
        e = self.spec.to_eig(c)
        return 0.5 * self.vol * np.sum(self.spec.lam * np.abs(e) ** 2, axis=(-2, -1))

    def l2sq(self, c):
        return self.vol * np.sum(np.abs(c) ** 2, axis=(-2, -1))

    def e_sq(self, c):
        e = self.spec.to_eig(c)
        return self.vol * np.sum(self.spec.abs_lam * np.abs(e) ** 2, axis=(-2, -1))

    def dual_sq(self, r):
        e = self.spec.to_eig(r)
        return self.vol * np.sum(np.abs(e) ** 2 / self.spec.abs_lam, axis=(-2, -1))

    def inner(self, u, v):
        return self.vol * np.real(np.sum(np.conj(u) * v, axis=(-2, -1)))

    def inner_E(self, u, v):
        eu, ev = self.spec.to_eig(u), self.spec.to_eig(v)
        return self.vol * np.real(np.sum(self.spec.abs_lam * np.conj(eu) * ev, axis=(-2, -1)))

    def absD_pow(self, c, s):
        return self.spec.apply_multiplier(c, self.spec.abs_lam ** s)

    # full functional ----------------------------------------------------

    def terms(self, c, values=None):
        """(kinetic, mass_term, F_int, pert_int) for coefficients c."""
        if values is None:
            values = self.disc.to_grid(c)
        mod2 = np.sum(np.abs(values) ** 2, axis=-1)
        mass = 0.5 * self.params.a * self.l2sq(c)
        if self.M is not None:
            mass = mass + 0.5 * self.disc.integrate(self.M * mod2)
        F_int = self.disc.integrate(self.model.value(values))
        pert = self.disc.integrate(mod2 ** (self.alpha2 / 2))
        return self.kinetic(c), mass, F_int, pert

    def energy(self, c, values=None):
        kin, mass, F_int, pert = self.terms(c, values)
        return kin - mass - F_int - self.eps * pert

    def pointwise_gradient(self, values):
        g = self.model.grad(values)
        if self.eps:
            g = g + self.eps * pert_grad(values, self.alpha2)
        if self.M is not None:
            g = g + self.M[..., None] * values
        return g

    def residual(self, c, values=None):
        """r = D psi - a psi - M psi - dF(psi) - eps alpha2 |psi|^(alpha2-2) psi.

        This is the L2 gradient: dJ_eps(psi)[v] = <r, v> for every v.
        """
        if values is None:
            values = self.disc.to_grid(c)
        return self.spec.apply_symbol(c) - self.params.a * c - self.disc.to_modes(self.pointwise_gradient(values))

    def grad_E(self, c, values=None):
        """Gradient in the E inner product: |D|^{-1} r."""
        return self.absD_pow(self.residual(c, values), -1.0)

    def hess_apply(self, c, v, model=None, values=None):
        """Second derivative of J_eps at c applied to v (real-linear), using ``model`` for F''."""
        model = model or self.model
        if values is None:
            values = self.disc.to_grid(c)
        vv = self.disc.to_grid(v)
        h = model.hess_apply(values, vv)
        if self.eps:
            h = h + self.eps * pert_hess_apply(values, vv, self.alpha2)
        if self.M is not None:
            h = h + self.M[..., None] * vv
        return self.spec.apply_symbol(v) - self.params.a * v - self.disc.to_modes(h)

    def bundle(self, c) -> EvaluationBundle:
        values = self.disc.to_grid(c)
        kin, mass, F_int, pert = self.terms(c, values)
        r = self.residual(c, values)
        return EvaluationBundle(
            J_eps=float(kin - mass - F_int - self.eps * pert), kinetic=float(kin), mass_term=float(mass),
            F_int=float(F_int), pert_int=float(pert), residual_dual=float(np.sqrt(self.dual_sq(r))))

    def field(self, c) -> SpinorField:
        return SpinorField(self.lattice, c, self.grid)


def _problem(field: SpinorField, params: ProblemParams, model: NonlinearityModel) -> Problem:
    if field.lattice != params.lattice:
        raise ValueError("field lattice differs from params lattice")
    return Problem(params, model, field.grid)


def evaluate(field: SpinorField, params: ProblemParams, model: NonlinearityModel) -> EvaluationBundle:
    return _problem(field, params, model).bundle(field.coeffs)


def energy(field: SpinorField, params: ProblemParams, model: NonlinearityModel) -> float:
    return float(_problem(field, params, model).energy(field.coeffs, field.values()))


def el_residual(field: SpinorField, params: ProblemParams, model: NonlinearityModel) -> SpinorField:
    pb = _problem(field, params, model)
    return field.like(pb.residual(field.coeffs, field.values()))


def grad_E(field: SpinorField, params: ProblemParams, model: NonlinearityModel) -> SpinorField:
    pb = _problem(field, params, model)
    return field.like(pb.grad_E(field.coeffs, field.values()))


def directional_derivative(field, direction, params, model) -> float:
    """dJ_eps(psi)[v] = <r, v>."""
    return inner(el_residual(field, params, model), direction)


def ps_identity(field: SpinorField, params: ProblemParams, model: NonlinearityModel):
    """Both sides of 2 J_eps - dJ_eps[psi] = int dF[psi] - 2F + eps (alpha2 - 2)|psi|^alpha2.

    The left side uses the spectral action and the assembled residual; the
    right side is a direct quadrature of the pointwise integrand.
    """
    pb = _problem(field, params, model)
    c = field.coeffs
    values = field.values()
    lhs = 2 * pb.energy(c, values) - pb.inner(pb.residual(c, values), c)
    k = pb.alpha2
    dF_pair = np.real(np.sum(np.conj(model.grad(values)) * values, axis=-1))
    rhs = pb.disc.integrate(dF_pair - 2 * model.value(values) + params.eps * (k - 2) * pert_value(values, k))
    lhs, rhs = float(lhs), float(rhs)
    return lhs, rhs, lhs - rhs


class SubspaceEvaluator:
    """Fast J_eps on fields sum_j x_j B_j for a fixed list of basis coefficient arrays.

    Grid values of the basis are computed once; each sample then costs one
    linear combination and one pointwise evaluation. Quadratic terms use the
    exact Gram matrices of the basis.
    """

    def __init__(self, pb: Problem, basis: np.ndarray):
        self.pb = pb
        self.basis = np.asarray(basis, dtype=complex)
        self.values = pb.disc.to_grid(self.basis)
        B = self.basis
        DB = pb.spec.apply_symbol(B)
        self.kin = 0.5 * pb.vol * np.real(np.einsum("imk,jmk->ij", B.conj(), DB))
        self.kin = 0.5 * (self.kin + self.kin.T)
        self.gram = pb.vol * np.real(np.einsum("imk,jmk->ij", B.conj(), B))
        self.gram = 0.5 * (self.gram + self.gram.T)

    def coeffs(self, x):
        return np.einsum("pj,jmk->pmk", x, self.basis)

    def terms(self, x, chunk: int = 32):
        """(kinetic, mass_term, F_int, pert_int) for real coordinate rows x, shape (P, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pb = self.pb
        kin = np.einsum("pi,ij,pj->p", x, self.kin, x)
        mass = 0.5 * pb.params.a * np.einsum("pi,ij,pj->p", x, self.gram, x)
        F = np.empty(len(x))
        pert = np.empty(len(x))
        for s in range(0, len(x), chunk):
            v = np.einsum("pj,j...->p...", x[s:s + chunk], self.values)
            mod2 = np.sum(v.real ** 2 + v.imag ** 2, axis=-1)
            F[s:s + chunk] = pb.disc.integrate(pb.model.value(v))
            pert[s:s + chunk] = pb.disc.integrate(mod2 ** (pb.alpha2 / 2))
            if pb.M is not None:
                mass[s:s + chunk] += 0.5 * pb.disc.integrate(pb.M * mod2)
        return kin, mass, F, pert

    def energy(self, x, eps=None):
        eps = self.pb.eps if eps is None else eps
        kin, mass, F, pert = self.terms(x)
        return kin - mass - F - eps * pert

    def max_energy(self, x, eps=None, chunk: int = 32):
        """(max J, argmax row) over rows of x, skipping rows that provably cannot win.

        F >= 0, the perturbation and M >= 0 only lower J, so the quadratic part
        kin - a/2 |psi|^2 bounds J from above; rows are visited in decreasing
        order of that bound until it drops below the best value found. Ties go
        to the lowest row index.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        quad = (np.einsum("pi,ij,pj->p", x, self.kin, x)
                - 0.5 * self.pb.params.a * np.einsum("pi,ij,pj->p", x, self.gram, x))
        order = np.argsort(-quad, kind="stable")
        best, arg = -np.inf, -1
        for s in range(0, len(order), chunk):
            rows = order[s:s + chunk]
            if quad[rows[0]] < best:
                break
            kin, mass, F, pert = self.terms(x[rows])
            if np.any(F < 0):
                raise ValueError("pruned maximization needs F >= 0")
            vals = kin - mass - F - (self.pb.eps if eps is None else eps) * pert
            for i, v in zip(rows, vals):
                if v > best or (v == best and i < arg):
                    best, arg = float(v), int(i)
        return best, arg


def cylinder_basis(geometry) -> np.ndarray:
    """Stack (e, b_1, ..., b_d) of coefficient arrays spanning the sampled cylinder."""
    return np.concatenate([geometry.e.coeffs[None], geometry.neg_basis])


def cylinder_points(d: int, n: int, R: float, graded: float = 0.5, floor: float = 1e-4):
    """n Halton points (lambda, x) with lambda in [0, R] and x in the radius-R ball of R^d.

    A fraction ``graded`` of the points uses log-uniform lambda and |x| between
    floor * R and R; J is positive only in a thin region near small lambda and
    small |x|, which uniform sampling almost never hits.
    """
    from scipy.stats import qmc

    u = qmc.Halton(d + 2, scramble=False).random(n + 1)[1:]
    lam = R * u[:, 0]
    x = R * ball_points(u[:, 1:])
    k = int(round(graded * n))
    if k:
        g = u[:k]
        lam[:k] = R * floor ** (1 - g[:, 0])
        direction = ball_points(np.concatenate([np.ones((k, 1)), g[:, 2:]], axis=1))
        x[:k] = R * floor ** (1 - g[:, 1:2]) * direction
    return lam, x


def ball_points(u: np.ndarray) -> np.ndarray:
    """Map points of [0,1)^(d+1) into the unit ball of R^d.

    The first coordinate sets the radius (u^(1/d), uniform in volume), the
    remaining d give a Gaussian direction by the inverse normal CDF.
    """
    from scipy.special import ndtri

    d = u.shape[1] - 1
    if d == 0:
        return np.zeros((u.shape[0], 0))
    g = ndtri(np.clip(u[:, 1:], 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    g = np.where(nrm > 0, g / np.where(nrm > 0, nrm, 1), np.eye(1, d))
    return u[:, :1] ** (1.0 / d) * g


def level_bracket(params: ProblemParams, model: NonlinearityModel, geometry, samples: int = 10_000,
                  margin: float = 1e-3, polish_iters: int = 60, grid=None, details: bool = False):
    """(c1, c2): c1 is the sphere floor C*, c2 an upper estimate of sup J_0 over the cylinder.

    c2 samples the cylinder {psi^- + lambda e} on a Halton cloud in the
    geometry's negative subspace, then polishes the best point by projected
    E-gradient ascent over e and the whole truncated negative space, and
    inflates the result by ``margin`` (relative) so the bound is strict.
    With ``details`` the sample max and polished max are returned as well.
    """
    if not geometry.r < geometry.R:
        raise ValueError(f"degenerate geometry: need r < R, got r={geometry.r}, R={geometry.R}")
    pb = Problem(params.with_eps(0.0), model, grid or geometry.grid)
    ev = SubspaceEvaluator(pb, cylinder_basis(geometry))
    lam, x = cylinder_points(geometry.neg_basis.shape[0], samples, geometry.R)
    pts = np.concatenate([lam[:, None], x], axis=1)
    sample_max, i = ev.max_energy(pts)
    polished, _ = ascend_cylinder(pb, geometry, ev.coeffs(pts[i:i + 1])[0], polish_iters)
    top = max(sample_max, polished)
    c2 = top + margin * abs(top)
    c1 = geometry.C_star
    if not (0 < c1 < c2 < np.inf):
        raise ValueError(f"level bracket not ordered: c1={c1}, c2={c2}")
    if details:
        return c1, c2, sample_max, polished
    return c1, c2


def ascend_cylinder(pb: Problem, geometry, c0, iters: int = 200, tol: float = 1e-14):
    """Projected E-gradient ascent of J over span(e) + (truncated negative space)."""
    spec = pb.spec
    neg_w = (spec.lam < 0).astype(float)
    e = geometry.e.coeffs

    def proj(g):
        return spec.apply_multiplier(g, neg_w) + pb.inner_E(e, g) * e

    c = np.array(c0, dtype=complex)
    val = float(pb.energy(c))
    tau = 1.0
    for _ in range(iters):
        g = proj(pb.grad_E(c))
        gg = float(pb.e_sq(g))
        if gg < tol ** 2:
            break
        while tau > 1e-12:
            trial = _clip_cylinder(pb, geometry, c + tau * g)
            tv = float(pb.energy(trial))
            if tv >= val + 1e-4 * tau * gg:
                break
            tau *= 0.5
        else:
            break
        step_gain = tv - val
        c, val = trial, tv
        tau = min(2 * tau, 4.0)
        if step_gain <= 1e-16 * max(1.0, abs(val)):
            break
    return val, c


def _clip_cylinder(pb, geometry, c):
    spec = pb.spec
    neg = spec.apply_multiplier(c, (spec.lam < 0).astype(float))
    lam = pb.inner_E(geometry.e.coeffs, c)
    lam = min(max(lam, 0.0), geometry.R)
    nn = np.sqrt(pb.e_sq(neg))
    if nn > geometry.R:
        neg = neg * (geometry.R / nn)
    return lam * geometry.e.coeffs + neg
