"""Spinor fields on the discretized torus.

A field is psi(theta) = sum_n c_n exp(2 pi i zeta*_n . theta) with coefficients
c of shape (M, 4) in the canonical mode order. Collocation grids are uniform,
theta_j = j * l / N per axis, with N >= 2K + 1 so the truncated space is
reproduced exactly; nonlinear terms are evaluated pointwise on the grid.

Inner products carry the volume: <u, v> = Re integral u^H v = vol * Re sum conj(u_n) v_n.
The working energy norm is ||psi||_E^2 = <|D| psi, psi>, equivalent to the
H^{1/2} norm (||psi||_E^2 <= ||psi||_{H^1/2}^2 <= (1 + 1/m) ||psi||_E^2).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.fft

from .spectral import LatticeSpec, dirac_spectrum, dual_vectors

SNAPSHOT_MAGIC = b"DIRT3SPN"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIddd")


def default_grid(lattice: LatticeSpec) -> tuple[int, int, int]:
    n = 2 * lattice.side
    return (n, n, n)


class Discretization:
    """Mode <-> grid transforms for one (lattice, grid) pair."""

    def __init__(self, lattice: LatticeSpec, grid=None):
        grid = tuple(int(g) for g in (grid or default_grid(lattice)))
        if len(grid) != 3:
            raise ValueError(f"grid must have three dimensions, got {grid}")
        if min(grid) < lattice.side:
            raise ValueError(
                f"grid {grid} too small for K={lattice.K}: need at least {lattice.side} points per axis")
        self.lattice = lattice
        self.grid = grid
        self.n_points = grid[0] * grid[1] * grid[2]
        self.weight = lattice.vol / self.n_points
        r = np.arange(-lattice.K, lattice.K + 1)
        self._idx = tuple((r % g)[:, None, None] if a == 0 else
                          (r % g)[None, :, None] if a == 1 else
                          (r % g)[None, None, :] for a, g in enumerate(grid))
        self.zeta = dual_vectors(lattice)

    def coordinates(self) -> np.ndarray:
        """Grid points theta, shape (N1, N2, N3, 3)."""
        axes = [np.arange(g) * (l / g) for g, l in zip(self.grid, self.lattice.lengths)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """(..., M, 4) coefficients -> (..., N1, N2, N3, 4) grid values."""
        coeffs = np.asarray(coeffs)
        lead = coeffs.shape[:-2]
        s = self.lattice.side
        cube = coeffs.reshape(lead + (s, s, s, 4))
        buf = np.zeros(lead + self.grid + (4,), dtype=complex)
        i1, i2, i3 = self._idx
        buf[..., i1, i2, i3, :] = cube
        return scipy.fft.ifftn(buf, axes=(-4, -3, -2), norm="forward")

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        """Grid values -> truncated coefficients (the DFT restricted to |n_i| <= K)."""
        values = np.asarray(values)
        lead = values.shape[:-4]
        full = scipy.fft.fftn(values, axes=(-4, -3, -2), norm="forward")
        i1, i2, i3 = self._idx
        return full[..., i1, i2, i3, :].reshape(lead + (self.lattice.n_modes, 4))

    def tail_fraction(self, values: np.ndarray) -> float:
        """Share of the grid function's energy outside the retained modes (aliasing indicator)."""
        full = scipy.fft.fftn(values, axes=(-4, -3, -2), norm="forward")
        total = float(np.sum(np.abs(full) ** 2))
        if total == 0.0:
            return 0.0
        i1, i2, i3 = self._idx
        kept = float(np.sum(np.abs(full[..., i1, i2, i3, :]) ** 2))
        return max(0.0, 1.0 - kept / total)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoidal quadrature over the grid axes (the last three)."""
        return self.weight * np.sum(values, axis=(-3, -2, -1))


@lru_cache(maxsize=16)
def discretization(lattice: LatticeSpec, grid=None) -> Discretization:
    return Discretization(lattice, grid)


@dataclass(frozen=True, eq=False)
class SpinorField:
    """Truncated Fourier representation of psi: T^3 -> C^4."""

    lattice: LatticeSpec
    coeffs: np.ndarray
    grid: tuple[int, int, int] | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.lattice.n_modes, 4):
            raise ValueError(
                f"coefficient shape {c.shape} does not match ({self.lattice.n_modes}, 4)")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "grid", tuple(self.grid) if self.grid else default_grid(self.lattice))

    @property
    def disc(self) -> Discretization:
        return discretization(self.lattice, self.grid)

    def values(self) -> np.ndarray:
        """Cached grid values, shape (N1, N2, N3, 4)."""
        if "grid" not in self._cache:
            v = self.disc.to_grid(self.coeffs)
            v.flags.writeable = False
            self._cache["grid"] = v
        return self._cache["grid"]

    def like(self, coeffs) -> "SpinorField":
        return SpinorField(self.lattice, coeffs, self.grid)

    def __add__(self, other):
        return self.like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.like(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.like(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.coeffs)

    @classmethod
    def zeros(cls, lattice, grid=None):
        return cls(lattice, np.zeros((lattice.n_modes, 4), complex), grid)

    @classmethod
    def constant(cls, lattice, spinor, grid=None):
        c = np.zeros((lattice.n_modes, 4), complex)
        c[lattice.n_modes // 2] = np.asarray(spinor, dtype=complex)
        return cls(lattice, c, grid)

    @classmethod
    def from_grid(cls, lattice, values, grid=None):
        values = np.asarray(values)
        grid = grid or values.shape[:3]
        return cls(lattice, discretization(lattice, tuple(grid)).to_modes(values), grid)

    @classmethod
    def random(cls, lattice, rng, grid=None, decay: float = 2.0):
        """Random field with coefficients damped like (1 + |n|^2)^(-decay/2)."""
        n2 = np.sum((dual_vectors(lattice) * np.array(lattice.lengths)) ** 2, axis=1)
        amp = (1.0 + n2) ** (-decay / 2)
        c = (rng.standard_normal((lattice.n_modes, 4)) + 1j * rng.standard_normal((lattice.n_modes, 4)))
        return cls(lattice, c * amp[:, None], grid)


@dataclass(frozen=True)
class EnergyDecomposition:
    pos: SpinorField
    neg: SpinorField


def to_grid(field: SpinorField) -> np.ndarray:
    return field.values()


def to_modes(lattice: LatticeSpec, values, grid=None) -> SpinorField:
    return SpinorField.from_grid(lattice, values, grid)


def apply_D(field: SpinorField, m: float) -> SpinorField:
    return field.like(dirac_spectrum(field.lattice, m).apply_symbol(field.coeffs))


def apply_absD_pow(field: SpinorField, m: float, s: float) -> SpinorField:
    spec = dirac_spectrum(field.lattice, m)
    return field.like(spec.apply_multiplier(field.coeffs, spec.abs_lam ** s))


def projector_weights(spec, sign: int) -> np.ndarray:
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign!r}")
    return (np.sign(spec.lam) == sign).astype(float)


def project(field: SpinorField, sign: int, m: float) -> SpinorField:
    """Spectral projector P+ (sign=+1) or P- (sign=-1) of D."""
    spec = dirac_spectrum(field.lattice, m)
    return field.like(spec.apply_multiplier(field.coeffs, projector_weights(spec, sign)))


def decompose(field: SpinorField, m: float) -> EnergyDecomposition:
    return EnergyDecomposition(project(field, +1, m), project(field, -1, m))


def inner(u: SpinorField, v: SpinorField) -> float:
    """Real L2 inner product Re integral <u, v> dv."""
    return u.lattice.vol * float(np.real(np.vdot(u.coeffs, v.coeffs)))


def inner_E(u: SpinorField, v: SpinorField, m: float) -> float:
    spec = dirac_spectrum(u.lattice, m)
    eu, ev = spec.to_eig(u.coeffs), spec.to_eig(v.coeffs)
    return u.lattice.vol * float(np.real(np.sum(spec.abs_lam * np.conj(eu) * ev)))


def norm(field: SpinorField, kind: str = "L2", m: float | None = None, q: float | None = None) -> float:
    """Norms of a field.

    kind: "L2", "E" (needs m), "Edual" (||D|^{-1/2} psi||_L2, needs m),
    "Lq" (needs q >= 1, grid quadrature) or "H1" (weights 1 + 4 pi^2 |zeta|^2).
    """
    c = field.coeffs
    vol = field.lattice.vol
    if kind == "L2":
        return float(np.sqrt(vol * np.sum(np.abs(c) ** 2)))
    if kind in ("E", "Edual"):
        if m is None:
            raise ValueError(f"{kind} norm needs the mass m")
        spec = dirac_spectrum(field.lattice, m)
        w = spec.abs_lam if kind == "E" else 1.0 / spec.abs_lam
        return float(np.sqrt(vol * np.sum(w * np.abs(spec.to_eig(c)) ** 2)))
    if kind == "Lq":
        if q is None or q < 1:
            raise ValueError(f"Lq norm needs q >= 1, got {q!r}")
        mod = np.linalg.norm(field.values(), axis=-1)
        return float(field.disc.integrate(mod ** q) ** (1.0 / q))
    if kind == "H1":
        w = 1.0 + 4 * np.pi ** 2 * np.sum(dual_vectors(field.lattice) ** 2, axis=1)
        return float(np.sqrt(vol * np.sum(w[:, None] * np.abs(c) ** 2)))
    raise ValueError(f"unknown norm kind {kind!r}")


def write_snapshot(path, field: SpinorField, m: float, a: float, eps: float) -> None:
    """Little-endian binary snapshot: header then (re, im) f64 pairs in (mode, component) order."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, field.lattice.K, *field.grid,
                          float(m), float(a), float(eps))
    body = np.ascontiguousarray(field.coeffs).view(np.float64).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


@dataclass(frozen=True)
class Snapshot:
    K: int
    grid: tuple[int, int, int]
    m: float
    a: float
    eps: float
    coeffs: np.ndarray

    def field(self, lattice: LatticeSpec) -> SpinorField:
        if lattice.K != self.K:
            raise ValueError(f"snapshot has K={self.K}, lattice has K={lattice.K}")
        return SpinorField(lattice, self.coeffs, self.grid)


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ValueError("snapshot truncated before end of header")
    magic, version, K, n1, n2, n3, m, a, eps = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    n_modes = (2 * K + 1) ** 3
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != n_modes * 8:
        raise ValueError(f"snapshot body has {body.size} values, expected {n_modes * 8}")
    coeffs = body.astype(np.float64).view(np.complex128).reshape(n_modes, 4)
    return Snapshot(K, (n1, n2, n3), m, a, eps, coeffs)
