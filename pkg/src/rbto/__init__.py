"""Reliability-based topology optimization under a random-field Young's modulus.

Deterministic SIMP/MMA topology optimization interleaved with inverse
reliability analysis on a Hermite-chaos surrogate (SORA), with
Latin-hypercube Monte Carlo verification.
"""

__version__ = "0.1.0"

from .fea import ElasticitySpec, StructuredGrid, assemble_solve, element_stiffness
from .randfield import Covariance1D, KLBasis, ModulusMarginal, field_to_modulus, kl_1d, kl_product, sample_field
from .chaos import ChaosSurrogate, HermiteBasis, collocation_points, fit, hermite_terms
from .topopt import DensityField, DtoProblem, FilterKernel, run_dto
from .reliability import LimitState, MppResult, hmv_search, mpp_to_physical
from .sora import RbtoProblem, ReliabilityConstraint, SoraState, realize_modulus, run_sora
from .verification import McsReport, compare_reports, lhs_sample, run_mcs
from .problems import lbeam_grid, mbb_grid

__all__ = [
    "ChaosSurrogate",
    "Covariance1D",
    "DensityField",
    "DtoProblem",
    "ElasticitySpec",
    "FilterKernel",
    "HermiteBasis",
    "KLBasis",
    "LimitState",
    "McsReport",
    "ModulusMarginal",
    "MppResult",
    "RbtoProblem",
    "ReliabilityConstraint",
    "SoraState",
    "StructuredGrid",
    "assemble_solve",
    "collocation_points",
    "compare_reports",
    "element_stiffness",
    "field_to_modulus",
    "fit",
    "hermite_terms",
    "hmv_search",
    "kl_1d",
    "kl_product",
    "lbeam_grid",
    "lhs_sample",
    "mbb_grid",
    "mpp_to_physical",
    "realize_modulus",
    "run_dto",
    "run_mcs",
    "run_sora",
    "sample_field",
]
