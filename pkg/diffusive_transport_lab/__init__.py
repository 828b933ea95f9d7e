"""
__init__.py for diffusive_transport_lab package

Exports the main components: geometry and quadrature, the Milne boundary layer,
the interior expansion, the remainder sources, the transport solver strategies
and the study harness.
"""

from .errors import (
    ConfigurationError,
    DomainError,
    IterationLimitError,
    LabError,
    SingularChartError,
    StudyError,
)
from .quadgeom import AngularGrid, DomainSpec, build_angular_grid, chart_at, velocity_substitution
from .data_families import BoundaryData, make_boundary_data
from .milne import MilneProblem, MilneSolution, milne_infinity, solve_milne
from .boundary_layer import CutoffSpec, build_boundary_layer
from .characteristics import classify_hollow, trace_characteristic
from .interior import build_expansion, solve_dirichlet_laplace
from .phase_space import PhaseSpaceGrid, build_phase_space_grid
from .sources import assemble_h, assemble_sources, build_approximate_solution
from .norms import norm_suite
from .transport_strategy import TransportSolverStrategy
from .transport_context import TransportSolverContext
from .direct_solve_strategy import DirectSolveStrategy
from .source_iteration_strategy import SourceIterationStrategy
from .dsa_strategy import DiffusionSyntheticStrategy
from .transport import (
    TransportField,
    TransportProblem,
    angular_average,
    kernel_estimate_check,
    remainder_diagnostics,
    solve_transport,
)
from .field_io import export_field, read_field
from .harness import StudyConfig, fit_rate, run_study

__all__ = [
    'LabError',
    'ConfigurationError',
    'DomainError',
    'SingularChartError',
    'IterationLimitError',
    'StudyError',
    'DomainSpec',
    'AngularGrid',
    'build_angular_grid',
    'chart_at',
    'velocity_substitution',
    'BoundaryData',
    'make_boundary_data',
    'MilneProblem',
    'MilneSolution',
    'solve_milne',
    'milne_infinity',
    'CutoffSpec',
    'build_boundary_layer',
    'trace_characteristic',
    'classify_hollow',
    'solve_dirichlet_laplace',
    'build_expansion',
    'PhaseSpaceGrid',
    'build_phase_space_grid',
    'build_approximate_solution',
    'assemble_h',
    'assemble_sources',
    'norm_suite',
    'TransportSolverStrategy',
    'TransportSolverContext',
    'DirectSolveStrategy',
    'SourceIterationStrategy',
    'DiffusionSyntheticStrategy',
    'TransportProblem',
    'TransportField',
    'solve_transport',
    'angular_average',
    'remainder_diagnostics',
    'kernel_estimate_check',
    'export_field',
    'read_field',
    'StudyConfig',
    'run_study',
    'fit_rate',
]
