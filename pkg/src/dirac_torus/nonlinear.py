"""Nonlinearities F: C^4 -> R built from the bilinears psi-bar psi and psi-bar gamma^5 psi.

Every model here has the form

    F(psi) = f(q) + b * f(h),   q = psi^H gamma^0 psi,   h = psi^H (gamma^0 gamma^5) psi,

with a scalar profile f. Gradients are taken with respect to the real inner
product Re <u, v> on C^4 = R^8, so dF(psi) = 2 f'(q) gamma^0 psi + 2 b f'(h) G5 psi
and the Hessian acts by

    H v = 2 f'(q) gamma^0 v + 4 f''(q) Re<gamma^0 psi, v> gamma^0 psi + (same for h).

The pure power profile |x|^p with p < 2 is not C^2 on the null cone q = 0.
``Smoothed`` replaces it by (x^2 + delta^2)^(p/2) - delta^p.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .clifford import dirac_bilinear, gamma5_bilinear_real

_G0 = np.array([1.0, 1.0, -1.0, -1.0])
# (F2) growth is audited on |psi-bar psi| >= kappa |psi|^2; closer to the null cone F'' is unbounded.
_CONE_KAPPA = 0.1


class NullConeError(ArithmeticError):
    """Hessian of an unsmoothed power model requested where psi-bar psi = 0, psi != 0."""


@dataclass(frozen=True)
class HypothesisConstants:
    """Declared constants for the growth hypotheses (F1)-(F5)."""

    A1: float = 1.0
    A2: float = 10.0
    A3: float = 1.0
    A4: float = 0.0
    A5: float = 2.5
    alpha: float = 2.5
    beta: float = 4.0
    nu: float = 1.25
    alpha1: float = 2.5
    alpha2: float = 2.5

    def validate(self) -> None:
        errors = []
        for name in ("A1", "A2", "A3", "A5"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if self.A4 < 0:
            errors.append("A4 must be >= 0")
        if not self.alpha > 2:
            errors.append("alpha must be > 2")
        if not self.beta > 3:
            errors.append("beta must be > 3")
        if not self.nu > 1:
            errors.append("nu must be > 1")
        if not 2 < self.alpha1 <= self.alpha2 < 3:
            errors.append("need 2 < alpha1 <= alpha2 < 3")
        if errors:
            raise ValueError("; ".join(errors))


def _g5_apply(psi):
    # gamma^0 gamma^5 = [[0, -i I2], [i I2, 0]]
    return np.concatenate([-1j * psi[..., 2:], 1j * psi[..., :2]], axis=-1)


def _re_dot(u, v):
    return np.real(np.sum(np.conj(u) * v, axis=-1))


class _Profile:
    """Scalar profile f with first and second derivatives."""

    def f(self, x):
        raise NotImplementedError

    def df(self, x):
        raise NotImplementedError

    def d2f(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class _Power(_Profile):
    p: float

    def f(self, x):
        return np.abs(x) ** self.p

    def df(self, x):
        return self.p * np.abs(x) ** (self.p - 1) * np.sign(x)

    def d2f(self, x):
        ax = np.abs(x)
        with np.errstate(divide="ignore"):
            return np.where(ax > 0, self.p * (self.p - 1) * ax ** (self.p - 2), np.inf)


@dataclass(frozen=True)
class _SmoothPower(_Profile):
    p: float
    delta: float

    def f(self, x):
        return (x * x + self.delta ** 2) ** (self.p / 2) - self.delta ** self.p

    def df(self, x):
        return self.p * x * (x * x + self.delta ** 2) ** (self.p / 2 - 1)

    def d2f(self, x):
        s = x * x + self.delta ** 2
        return self.p * s ** (self.p / 2 - 1) + self.p * (self.p - 2) * x * x * s ** (self.p / 2 - 2)


@dataclass(frozen=True)
class _Tabulated(_Profile):
    G: Callable
    dG: Callable
    d2G: Callable

    def f(self, x):
        return 0.5 * self.G(x)

    def df(self, x):
        return 0.5 * self.dG(x)

    def d2f(self, x):
        return 0.5 * self.d2G(x)


class NonlinearityModel:
    """Base class; subclasses supply ``profile`` and ``b``."""

    profile: _Profile
    b: float = 0.0
    constants: HypothesisConstants
    singular_on_null_cone = False

    def value(self, psi):
        psi = np.asarray(psi, dtype=complex)
        out = self.profile.f(dirac_bilinear(psi))
        if self.b:
            out = out + self.b * self.profile.f(gamma5_bilinear_real(psi))
        return out

    def grad(self, psi):
        psi = np.asarray(psi, dtype=complex)
        q = dirac_bilinear(psi)
        out = (2 * self.profile.df(q))[..., None] * (_G0 * psi)
        if self.b:
            h = gamma5_bilinear_real(psi)
            out = out + (2 * self.b * self.profile.df(h))[..., None] * _g5_apply(psi)
        return out

    def hess_apply(self, psi, v):
        psi = np.asarray(psi, dtype=complex)
        v = np.asarray(v, dtype=complex)
        out = self._hess_term(psi, v, dirac_bilinear(psi), _G0 * psi, _G0 * v, 1.0)
        if self.b:
            out = out + self._hess_term(psi, v, gamma5_bilinear_real(psi), _g5_apply(psi),
                                        _g5_apply(v), self.b)
        return out

    def _hess_term(self, psi, v, x, Apsi, Av, coef):
        nonzero = np.sum(np.abs(psi) ** 2, axis=-1) > 0
        d2 = self.profile.d2f(x)
        if self.singular_on_null_cone and np.any(nonzero & ~np.isfinite(d2)):
            raise NullConeError(
                "Hessian is singular on the null cone; use a Smoothed model or a damped step")
        d2 = np.where(nonzero, d2, 0.0)
        return coef * ((2 * self.profile.df(x))[..., None] * Av
                       + (4 * d2 * _re_dot(Apsi, v))[..., None] * Apsi)

    @property
    def homogeneity(self) -> float | None:
        """Degree of homogeneity if F is homogeneous, else None."""
        return None

    def smoothed(self, delta: float) -> "NonlinearityModel":
        raise TypeError(f"{type(self).__name__} has no smoothed variant")


@dataclass(frozen=True)
class SolerPower(NonlinearityModel):
    """F = |psi-bar psi|^p + b |psi-bar gamma^5 psi|^p with 1 < p < 3/2, b >= 0."""

    p: float = 1.25
    b: float = 0.0
    constants: HypothesisConstants = field(default=None)
    singular_on_null_cone = True

    def __post_init__(self):
        if not 1 < self.p < 1.5:
            raise ValueError(f"SolerPower exponent must satisfy 1 < p < 3/2, got {self.p}")
        if self.b < 0:
            raise ValueError(f"coefficient b must be >= 0, got {self.b}")
        if self.constants is None:
            object.__setattr__(self, "constants", default_constants(self.p, self.b))
        self.constants.validate()

    @property
    def profile(self):
        return _Power(self.p)

    @property
    def homogeneity(self):
        return 2 * self.p

    def smoothed(self, delta):
        return Smoothed(self, delta)


@dataclass(frozen=True)
class Smoothed(NonlinearityModel):
    """Power model with |x|^p replaced by (x^2 + delta^2)^(p/2) - delta^p."""

    inner: SolerPower = field(default_factory=SolerPower)
    delta: float = 1e-6

    def __post_init__(self):
        if not isinstance(self.inner, SolerPower):
            raise TypeError("Smoothed wraps a SolerPower model")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    @property
    def b(self):
        return self.inner.b

    @property
    def constants(self):
        # smoothing lowers F by at most delta^p, absorbed into A4
        c = self.inner.constants
        return replace(c, A4=c.A4 + (1 + self.b) * self.delta ** self.inner.p)

    @property
    def profile(self):
        if self.delta == 0:
            return _Power(self.inner.p)
        return _SmoothPower(self.inner.p, self.delta)

    @property
    def singular_on_null_cone(self):
        return self.delta == 0

    @property
    def homogeneity(self):
        return self.inner.homogeneity if self.delta == 0 else None

    def smoothed(self, delta):
        return replace(self, delta=delta)


@dataclass(frozen=True)
class SolerG(NonlinearityModel):
    """Soler model F = G(psi-bar psi) / 2 with user-supplied G, G', G''."""

    G: Callable = None
    dG: Callable = None
    d2G: Callable = None
    constants: HypothesisConstants = field(default_factory=HypothesisConstants)

    def __post_init__(self):
        if self.G is None or self.dG is None or self.d2G is None:
            raise ValueError("SolerG needs G, dG and d2G")

    @property
    def profile(self):
        return _Tabulated(self.G, self.dG, self.d2G)

    @classmethod
    def positive_power(cls, p: float, constants=None):
        """G(s) = 2 max(s, 0)^p, so F = (psi-bar psi)_+^p."""
        return cls(lambda s: 2 * np.maximum(s, 0) ** p,
                   lambda s: 2 * p * np.maximum(s, 0) ** (p - 1),
                   lambda s: np.where(s > 0, 2 * p * (p - 1) * np.maximum(s, 1e-300) ** (p - 2), 0.0),
                   constants or default_constants(p, 0.0))


@dataclass(frozen=True)
class ZeroNonlinearity(NonlinearityModel):
    """F = 0; only the quadratic part of the action remains. For sanity checks."""

    constants: HypothesisConstants = field(default_factory=HypothesisConstants)

    def value(self, psi):
        return np.zeros(np.shape(psi)[:-1])

    def grad(self, psi):
        return np.zeros(np.shape(psi), dtype=complex)

    def hess_apply(self, psi, v):
        return np.zeros(np.shape(v), dtype=complex)


def default_constants(p: float, b: float) -> HypothesisConstants:
    """Constants under which the power model satisfies (F1)-(F5).

    |psi-bar psi| and |psi-bar gamma^5 psi| are both <= |psi|^2, giving (F1)
    with alpha1 = alpha2 = 2p, and F is 2p-homogeneous, giving (F3) with
    equality. A2 is the off-null-cone bound used by :func:`verify_hypotheses`.
    """
    k = 2 * p
    beta = min(4.0, p / (p - 1))
    return HypothesisConstants(
        A1=1.0 + b, A2=(2 * p + 4 * p * (p - 1) * _CONE_KAPPA ** (p - 2)) * (1.0 + b),
        A3=1.0, A4=0.0, A5=2 * p * (1.0 + b + b ** (1 - 1 / beta)),
        alpha=k, beta=beta, nu=p, alpha1=k, alpha2=k)


def F_value(model: NonlinearityModel, psi):
    return model.value(psi)


def dF(model: NonlinearityModel, psi):
    return model.grad(psi)


def hessF_apply(model: NonlinearityModel, psi, v):
    return model.hess_apply(psi, v)


# Perturbation |psi|^k added with weight eps; k = alpha2.

def pert_value(psi, k):
    return np.sum(np.abs(psi) ** 2, axis=-1) ** (k / 2)


def pert_grad(psi, k):
    r2 = np.sum(np.abs(psi) ** 2, axis=-1)
    return (k * r2 ** (k / 2 - 1))[..., None] * psi


def pert_hess_apply(psi, v, k):
    r2 = np.sum(np.abs(psi) ** 2, axis=-1)
    pos = r2 > 0
    safe = np.where(pos, r2, 1.0)
    c1 = np.where(pos, k * safe ** (k / 2 - 1), 0.0)
    c2 = np.where(pos, k * (k - 2) * safe ** (k / 2 - 2), 0.0)
    return c1[..., None] * v + (c2 * _re_dot(psi, v))[..., None] * psi


@dataclass
class HypothesisReport:
    """Worst sampled margins (>= 0 means the inequality held) per hypothesis."""

    margins: dict[str, float]
    passed: dict[str, bool]
    notes: dict[str, str]
    sample_count: int
    radius: float
    c5: float = 0.0

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def sample_spinors(rng, count: int, radius: float) -> np.ndarray:
    """Deterministic spread of points: random directions, radii uniform in [0, radius],
    plus the axes, a null-cone point, and a pseudoscalar-extremal point."""
    z = rng.standard_normal((count, 4)) + 1j * rng.standard_normal((count, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.random(count)
    pts = z * r[:, None]
    special = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [1, 0, 1, 0], [1, 0, 1j, 0]], dtype=complex)
    special /= np.linalg.norm(special, axis=1, keepdims=True)
    return np.concatenate([pts, radius * special, 0.5 * radius * special])


def verify_hypotheses(model: NonlinearityModel, sample_count: int = 2000, radius: float = 10.0,
                      rng=None, tol: float = 1e-10) -> HypothesisReport:
    """Check (F1)-(F5) with the model's declared constants on sampled spinors.

    Violations are reported through negative margins, never raised. (F2)'s
    growth bound is audited away from the null cone (see module docstring);
    the excluded fraction is recorded in ``notes``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(12345))
    c = model.constants
    psi = sample_spinors(rng, sample_count, radius)
    r = np.linalg.norm(psi, axis=1)
    F = model.value(psi)
    g = model.grad(psi)
    q = dirac_bilinear(psi)
    h = gamma5_bilinear_real(psi)
    scale = 1.0 + np.abs(F) + r ** c.alpha2

    margins, passed, notes = {}, {}, {}
    m1 = np.minimum(F, c.A1 * (r ** c.alpha1 + r ** c.alpha2) - F) / scale
    margins["F1"] = float(m1.min())

    zero = np.zeros(4, complex)
    probe = np.eye(4, dtype=complex)
    base = max(abs(float(model.value(zero))), float(np.abs(model.grad(zero)).max()),
               float(np.abs(model.hess_apply(zero, probe)).max()))
    large = (r >= 1.0) & (np.abs(q) >= _CONE_KAPPA * r ** 2) & (np.abs(h) >= _CONE_KAPPA * r ** 2 if model.b else True)
    if np.any(large):
        hn = np.array([_hess_norm(model, x) for x in psi[large]])
        m2 = (c.A2 * r[large] ** (c.alpha2 - 2) - hn) / (1 + hn)
        margins["F2"] = float(min(m2.min(), -base))
    else:
        margins["F2"] = -base
    notes["F2"] = (f"growth bound audited on {int(large.sum())} samples with |psi|>=1 and "
                   f"|bilinear| >= {_CONE_KAPPA}|psi|^2; F'' is unbounded at the null cone for p<2")

    margins["F3"] = float(np.min((_re_dot(g, psi) - c.alpha * F) / scale))
    margins["F4"] = float(np.min((F - c.A3 * np.abs(q) ** c.nu + c.A4) / scale))
    gn = np.linalg.norm(g, axis=1)
    margins["F5"] = float(np.min((c.A5 * (1 + np.maximum(F, 0) ** (1 / c.beta)) * r - gn) / (1 + gn)))
    for k, v in margins.items():
        passed[k] = v >= -tol
    nz = r > 0
    c5 = float(np.max(np.abs(h[nz]) / r[nz] ** 2)) if np.any(nz) else 0.0
    return HypothesisReport(margins, passed, notes, len(psi), radius, c5)


def _hess_norm(model, psi) -> float:
    """Operator norm of the real 8x8 Hessian at psi."""
    basis = np.concatenate([np.eye(4), 1j * np.eye(4)]).astype(complex)
    cols = model.hess_apply(np.broadcast_to(psi, basis.shape), basis)
    H = np.concatenate([cols.real, cols.imag], axis=1)
    return float(np.linalg.norm(H, 2))
