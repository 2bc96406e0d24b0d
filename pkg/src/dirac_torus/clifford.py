"""Gamma and Pauli matrices in the Dirac representation, plus spinor bilinears.

All matrices are exact: entries are 0, +-1 or +-i, so the Clifford identities
below hold with zero tolerance in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def sigma(k: int) -> np.ndarray:
    """Pauli matrix sigma^k for k in {1, 2, 3}."""
    if k not in (1, 2, 3):
        raise ValueError(f"Pauli index must be 1, 2 or 3, got {k!r}")
    return _SIGMA[k - 1].copy()


def gamma(mu: int) -> np.ndarray:
    """Dirac-representation gamma^mu for mu in {0, 1, 2, 3}.

    gamma^0 = diag(1, 1, -1, -1) and gamma^k = [[0, s_k], [-s_k, 0]].
    """
    if mu not in (0, 1, 2, 3):
        raise ValueError(f"gamma index must be in 0..3, got {mu!r}")
    if mu == 0:
        return np.diag([1, 1, -1, -1]).astype(complex)
    s = _SIGMA[mu - 1]
    g = np.zeros((4, 4), dtype=complex)
    g[:2, 2:] = s
    g[2:, :2] = -s
    return g


def gamma5() -> np.ndarray:
    """gamma^5 = gamma^0 gamma^1 gamma^2 gamma^3."""
    return gamma(0) @ gamma(1) @ gamma(2) @ gamma(3)


def alpha(k: int) -> np.ndarray:
    """alpha_k = gamma^0 gamma^k (Hermitian); the Dirac symbol is built from these."""
    return gamma(0) @ gamma(k)


GAMMA0 = gamma(0)
ALPHA = np.stack([alpha(k) for k in (1, 2, 3)])
# With gamma^5 = gamma^0 gamma^1 gamma^2 gamma^3 (no factor i) this product is Hermitian.
GAMMA0_GAMMA5 = gamma(0) @ gamma5()


@dataclass
class CliffordReport:
    """Outcome of :func:`verify_clifford`.

    ``identities`` holds the 22 algebraic relations, ``hermiticity`` the three
    alpha_k checks. Each entry is ``(name, passed, max_abs_error)``.
    """

    identities: list[tuple[str, bool, float]] = field(default_factory=list)
    hermiticity: list[tuple[str, bool, float]] = field(default_factory=list)

    @property
    def checks(self) -> list[tuple[str, bool, float]]:
        return self.identities + self.hermiticity

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def failures(self) -> list[str]:
        return [name for name, ok, _ in self.checks if not ok]


def _check(name, lhs, rhs):
    err = float(np.max(np.abs(lhs - rhs)))
    return (name, err == 0.0, err)


def verify_clifford(gammas=None, sigmas=None) -> CliffordReport:
    """Check every sigma/gamma relation exactly.

    ``gammas`` (sequence of four 4x4) and ``sigmas`` (three 2x2) default to the
    library matrices; passing modified copies is how fault injection is tested.
    """
    g = [np.asarray(x, dtype=complex) for x in (gammas if gammas is not None else [gamma(mu) for mu in range(4)])]
    s = [np.asarray(x, dtype=complex) for x in (sigmas if sigmas is not None else [sigma(k) for k in (1, 2, 3)])]
    report = CliffordReport()
    pairs = [(j, k) for j in (1, 2, 3) for k in (1, 2, 3) if j <= k]

    for j, k in pairs:
        report.identities.append(_check(
            f"sigma{j}sigma{k}+sigma{k}sigma{j}=2d{j}{k}I2",
            s[j - 1] @ s[k - 1] + s[k - 1] @ s[j - 1], 2 * (j == k) * I2))
    for j, k in pairs:
        report.identities.append(_check(
            f"gamma{j}gamma{k}+gamma{k}gamma{j}=-2d{j}{k}I4",
            g[j] @ g[k] + g[k] @ g[j], -2 * (j == k) * I4))
    for k in (1, 2, 3):
        report.identities.append(_check(
            f"gamma0gamma{k}+gamma{k}gamma0=0", g[0] @ g[k] + g[k] @ g[0], 0 * I4))
    report.identities.append(_check("gamma0^2=I4", g[0] @ g[0], I4))
    c = [None] + [-1j * g[0] @ g[k] for k in (1, 2, 3)]
    for j, k in pairs:
        report.identities.append(_check(
            f"(-ig0g{k})(-ig0g{j})+(-ig0g{j})(-ig0g{k})=-2d{j}{k}I4",
            c[k] @ c[j] + c[j] @ c[k], -2 * (j == k) * I4))

    for k in (1, 2, 3):
        a = g[0] @ g[k]
        report.hermiticity.append(_check(f"alpha{k} Hermitian", a, a.conj().T))
    return report


def upper(psi):
    """(psi^1, psi^2): the +1 eigenspace of gamma^0."""
    return np.asarray(psi)[..., :2]


def lower(psi):
    """(psi^3, psi^4): the -1 eigenspace of gamma^0."""
    return np.asarray(psi)[..., 2:]


def dirac_bilinear(psi):
    """psi-bar psi = <gamma^0 psi, psi> = |psi_up|^2 - |psi_low|^2.

    Works on a single spinor or any array whose last axis has length 4.
    """
    psi = np.asarray(psi)
    w = np.abs(psi) ** 2
    return w[..., 0] + w[..., 1] - w[..., 2] - w[..., 3]


def gamma5_bilinear(psi):
    """psi-bar gamma^5 psi = <gamma^0 gamma^5 psi, psi>, returned as a complex number.

    gamma^0 gamma^5 is Hermitian in this convention, so the imaginary part is
    zero up to rounding. Nonlinearities only consume the modulus.
    """
    psi = np.asarray(psi, dtype=complex)
    gp = psi @ GAMMA0_GAMMA5.T
    return np.sum(np.conj(gp) * psi, axis=-1)


def gamma5_bilinear_real(psi):
    """Real part of :func:`gamma5_bilinear`, computed without forming the imaginary part."""
    psi = np.asarray(psi, dtype=complex)
    # gamma^0 gamma^5 = [[0, -i I2], [i I2, 0]]
    up, low = psi[..., :2], psi[..., 2:]
    return -2.0 * np.sum(np.imag(np.conj(low) * up), axis=-1)
