"""Spectral analysis of the Klein-Gordon pencil ``T(lam) = H0 - V^2 + 2 lam V - lam^2``."""

from .eig import EigenvalueRecord, all_eigenvalues, clamp_to_zones, count_below, eigenvalues_in
from .gap import GapReport, analyze_gap, certify_strong_damping, compute_nu, g_of_lambda
from .linalg import Inertia, SymMatrix, ldlt_inertia
from .model import RadialGrid, RadialProblem, build_pencil
from .pencil import KGPencil, t_of_lambda

__version__ = "0.1.0"

__all__ = [
    "EigenvalueRecord",
    "GapReport",
    "Inertia",
    "KGPencil",
    "RadialGrid",
    "RadialProblem",
    "SymMatrix",
    "all_eigenvalues",
    "clamp_to_zones",
    "analyze_gap",
    "build_pencil",
    "certify_strong_damping",
    "compute_nu",
    "count_below",
    "eigenvalues_in",
    "g_of_lambda",
    "ldlt_inertia",
    "t_of_lambda",
]
