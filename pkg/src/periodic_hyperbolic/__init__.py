"""Time-periodic solutions of 1D hyperbolic equations with Robin boundary conditions."""
from .diagnostics import (
    EpsFamily,
    ManufacturedProblem,
    convergence_study,
    kernel_dimension,
    manufacture,
    residual_boundary,
    residual_pde,
    smoothness_indicator,
    sweep_epsilon,
)
from .estimator import PeriodicHyperbolicSolver
from .problem import GridFunction, GridSpec, ProblemSpec, validate
from .resonance import analyze
from .solver import (
    NearResonanceError,
    ResonanceError,
    SizeGuardError,
    SolveOptions,
    SolveResult,
    assemble_dense,
    solve,
)

__all__ = [
    "EpsFamily",
    "GridFunction",
    "GridSpec",
    "ManufacturedProblem",
    "NearResonanceError",
    "PeriodicHyperbolicSolver",
    "ProblemSpec",
    "ResonanceError",
    "SizeGuardError",
    "SolveOptions",
    "SolveResult",
    "analyze",
    "assemble_dense",
    "convergence_study",
    "kernel_dimension",
    "manufacture",
    "residual_boundary",
    "residual_pde",
    "smoothness_indicator",
    "solve",
    "sweep_epsilon",
    "validate",
]
