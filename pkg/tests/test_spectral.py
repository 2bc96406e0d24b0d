"""Per-mode diagonalization versus dense eigensolvers and the closed form."""
import math

import numpy as np
import pytest

from dirac_torus.spectral import (DiracSpectrum, DualMode, LatticeSpec, dirac_symbol, enumerate_modes,
                                  lemma_check, mode_eigenbasis, mode_index, multiplicity_groups,
                                  spectrum_rows, spectrum_table, t_roots)


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeSpec(2.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        LatticeSpec(K=-1)
    lat = LatticeSpec(1, 2, 3, K=2)
    assert lat.vol == 6 and lat.side == 5 and lat.n_modes == 125


def test_mode_order_and_index():
    lat = LatticeSpec(K=2)
    modes = enumerate_modes(lat)
    assert modes[0].n == (-2, -2, -2) and modes[-1].n == (2, 2, 2)
    for i in (0, 17, 62, 124):
        assert mode_index(lat, modes[i].n) == i
    assert modes[62].n == (0, 0, 0)
    with pytest.raises(IndexError):
        mode_index(lat, (3, 0, 0))


def test_symbol_hermitian_traceless():
    S = dirac_symbol(DualMode((1, -2, 0), (1.0, -1.0, 0.0)), 1.3)
    assert np.allclose(S, S.conj().T)
    assert abs(np.trace(S)) < 1e-14
    with pytest.raises(ValueError):
        dirac_symbol(DualMode((0, 0, 0), (0, 0, 0)), 0.0)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_mode_eigenbasis_against_eigh(m):
    mode = DualMode((1, 2, -1), (1.0, 1.0, -1 / 3))
    b = mode_eigenbasis(mode, m)
    root = math.sqrt(4 * math.pi ** 2 * (1 + 1 + 1 / 9) + m * m)
    assert b.lambda_pos == pytest.approx(root, rel=1e-13)
    assert b.lambda_neg == pytest.approx(-root, rel=1e-13)
    S = dirac_symbol(mode, m)
    assert np.allclose(S @ b.vectors, b.vectors * b.eigenvalues, atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(S), np.sort(b.eigenvalues), atol=1e-12)


def test_t_roots_product():
    tp, tm = t_roots(np.array([0.0, 3.0]), 2.0)
    # t+ t- = -1 and t+ + t- = -2 mu / m
    assert np.allclose(tp * tm, -1)
    assert np.allclose(tp + tm, [0.0, -3.0])


def test_zero_mode_basis_is_canonical():
    b = mode_eigenbasis(DualMode((0, 0, 0), (0.0, 0.0, 0.0)), 1.0)
    assert np.allclose(np.abs(b.vectors), np.eye(4))


def test_unit_lattice_k1_table():
    # [DERIVED] |zeta|^2 in {0, 1, 2, 3} with 1, 6, 12, 8 modes, two eigenvalues per sign per mode
    table = spectrum_table(LatticeSpec(K=1), 1.0)
    expect = []
    for n2, count in ((0, 1), (1, 6), (2, 12), (3, 8)):
        v = math.sqrt(4 * math.pi ** 2 * n2 + 1)
        expect += [(-v, 2 * count), (v, 2 * count)]
    expect.sort()
    assert [c for _, c in table] == [c for _, c in expect]
    assert np.allclose([v for v, _ in table], [v for v, _ in expect], rtol=1e-12)


def test_lemma_check_skew():
    out = lemma_check(LatticeSpec(1, 2, 3, K=4), 0.7)
    assert out["eigenvalue_err"] < 1e-12
    assert out["multiplicity_ok"]
    assert out["t_construction_err"] < 1e-12


def test_spectrum_batch_consistency():
    lat = LatticeSpec(1, 1.5, 2, K=2)
    spec = DiracSpectrum(lat, 1.0)
    c = np.random.default_rng(3).standard_normal((lat.n_modes, 4)) + 0j
    assert np.allclose(spec.from_eig(spec.to_eig(c)), c, atol=1e-13)
    assert np.allclose(spec.apply_multiplier(c, spec.lam), spec.apply_symbol(c), atol=1e-12)


def test_multiplicity_groups_and_rows():
    assert multiplicity_groups([1.0, 1.0 + 1e-12, 2.0]) == [(pytest.approx(1.0), 2), (2.0, 1)]
    rows = list(spectrum_rows(LatticeSpec(K=1), 1.0))
    assert len(rows) == 27 * 4
    assert rows[13 * 4][:3] == (0, 0, 0) and rows[13 * 4][4] == 1.0
