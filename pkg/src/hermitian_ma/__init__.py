"""Dirichlet problem for χ_u^n = ψ χ_u ∧ ω^{n-1} on boxes in C^n with Hermitian metrics.

Submodules: ``geom`` (metrics, Chern connection, torsion, curvature),
``pointwise`` (per-point algebra of the equation), ``wedge`` (exterior-algebra
oracle), ``grid`` (finite differences), ``solver`` (Newton continuation),
``estimates`` (post-solve diagnostics), ``instances`` (random pointwise
instances and constant calibration), ``io`` (files and configs), ``cli``.
"""

__version__ = "0.1.0"

from .geom import MetricField, make_builtin_metric, make_chi
from .grid import GridSpec, ScalarField, complex_hessian
from .instances import LemmaCalibrator
from .pointwise import PointData, NotAdmissibleError, residual_point, linearization_coeffs
from .solver import (
    DirichletSolver,
    ProblemSpec,
    SolveOptions,
    mms_generate,
    solve_continuation,
)

__all__ = [
    "__version__",
    "MetricField",
    "make_builtin_metric",
    "make_chi",
    "GridSpec",
    "ScalarField",
    "complex_hessian",
    "LemmaCalibrator",
    "PointData",
    "NotAdmissibleError",
    "residual_point",
    "linearization_coeffs",
    "DirichletSolver",
    "ProblemSpec",
    "SolveOptions",
    "mms_generate",
    "solve_continuation",
]
