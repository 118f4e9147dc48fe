"""Numerical toolkit for quasi-periodic Schrödinger operators.

Transfer-matrix cocycles, integrated density of states and gap labels,
Aubry duality, Bloch-wave reducibility and the perturbative gap-opening
calculus around parabolic Floquet matrices.
"""
from .params import Frequency, Potential, make_potential, norm_rho, classify_rotation
from .cocycle import Cocycle, lyapunov, rotation_number, orbit_stats
from .spectrum import (
    TWO_COS, Gap, SpectralScan, TruncatedOperator, eigen_count, find_gaps, gap_label, ids,
    scan, truncate,
)
from .duality import BlochWave, dual_operator, eigenpairs, localized_states, bloch_residual
from .reducibility import Conjugation, build_y, realify, resonant_reduce, verify_conjugation
from .moser_poschel import MPReport, analyze, averages, perturbation_matrix, sqrt_fit

__version__ = "0.1.0"

__all__ = [
    "Frequency", "Potential", "make_potential", "norm_rho", "classify_rotation",
    "Cocycle", "lyapunov", "rotation_number", "orbit_stats",
    "TWO_COS", "Gap", "SpectralScan", "TruncatedOperator", "eigen_count", "find_gaps",
    "gap_label", "ids", "scan", "truncate",
    "BlochWave", "dual_operator", "eigenpairs", "localized_states", "bloch_residual",
    "Conjugation", "build_y", "realify", "resonant_reduce", "verify_conjugation",
    "MPReport", "analyze", "averages", "perturbation_matrix", "sqrt_fit",
]
