"""Nonlinear Dirac equations on flat 3-tori: spectral discretization, linking min-max and continuation."""

__version__ = "0.1.0"

from .clifford import GAMMA0, gamma, gamma5, sigma, verify_clifford
from .field import SpinorField, norm, project, read_snapshot, write_snapshot
from .functional import ProblemParams, el_residual, evaluate, grad_E, level_bracket, ps_identity
from .nonlinear import HypothesisConstants, Smoothed, SolerG, SolerPower, verify_hypotheses
from .solver import (LinkingGeometry, boundary_audit, bound_report, build_geometry, choose_R, choose_r,
                     flow_minmax, newton_refine, run_continuation)
from .spectral import DiracSpectrum, LatticeSpec, dirac_spectrum, spectrum_table

__all__ = [
    "GAMMA0", "gamma", "gamma5", "sigma", "verify_clifford",
    "SpinorField", "norm", "project", "read_snapshot", "write_snapshot",
    "ProblemParams", "el_residual", "evaluate", "grad_E", "level_bracket", "ps_identity",
    "HypothesisConstants", "Smoothed", "SolerG", "SolerPower", "verify_hypotheses",
    "LinkingGeometry", "boundary_audit", "bound_report", "build_geometry", "choose_R", "choose_r",
    "flow_minmax", "newton_refine", "run_continuation",
    "DiracSpectrum", "LatticeSpec", "dirac_spectrum", "spectrum_table",
]
