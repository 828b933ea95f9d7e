import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.boundary_layer import build_face_layers, face_phi_inf, solve_face_milne
from diffusive_transport_lab.data_families import ConstantData, SmoothData
from diffusive_transport_lab.direct_solve_strategy import DirectSolveStrategy
from diffusive_transport_lab.dsa_strategy import DiffusionSyntheticStrategy
from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.interior import build_expansion
from diffusive_transport_lab.milne import graded_eta_mesh
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec
from diffusive_transport_lab.source_iteration_strategy import SourceIterationStrategy
from diffusive_transport_lab.sources import assemble_sources, build_approximate_solution
from diffusive_transport_lab.transport import (
    SolverSettings,
    TransportProblem,
    angular_average,
    green_identity_residual,
    kernel_estimate_check,
    leading_order_error,
    remainder_diagnostics,
    select_strategy,
    solve_transport,
    streaming_derivative,
    synthesis_bound,
)


GRID = dict(n_theta=8, n_polar=8, n_grazing=0, max_step=0.125)


def test_solver_settings_and_selection():
    with pytest.raises(ConfigurationError):
        SolverSettings(strategy="multigrid")
    with pytest.raises(ConfigurationError):
        SolverSettings(tol=0.0)
    auto = SolverSettings(direct_threshold=100)
    assert isinstance(select_strategy(auto, 50), DirectSolveStrategy)
    assert isinstance(select_strategy(auto, 500), DiffusionSyntheticStrategy)
    assert isinstance(select_strategy(SolverSettings(accelerate=False, direct_threshold=100), 500), SourceIterationStrategy)
    assert isinstance(select_strategy(SolverSettings(strategy="direct"), 10 ** 6), DirectSolveStrategy)


def test_problem_validation():
    grid = build_phase_space_grid(DomainSpec.disk(1.0), 0.2, **GRID)
    with pytest.raises(ConfigurationError):
        TransportProblem(DomainSpec.disk(1.0), 0.1, ConstantData(), grid)
    with pytest.raises(ConfigurationError):
        TransportProblem(DomainSpec.disk(2.0), 0.2, ConstantData(), grid)


@pytest.mark.parametrize("domain", [DomainSpec.disk(1.0), DomainSpec.shell(1.0, 2.0)], ids=lambda d: d.kind)
def test_constant_inflow_gives_constant_solution(domain):
    problem = TransportProblem.build(domain, 0.2, ConstantData(2.0), **GRID)
    field = solve_transport(problem)
    assert np.max(np.abs(field.values - 2.0)) < 1e-10
    assert field.inflow_defect(ConstantData(2.0)) < 1e-10
    assert leading_order_error(field, np.full(field.grid.n_space, 2.0)) < 1e-9
    assert field.collar_resolved


def test_inflow_and_maximum_principle():
    data = SmoothData(amplitude=0.5, mode=2)
    field = solve_transport(TransportProblem.build(DomainSpec.annulus(1.0, 2.0), 0.2, data, **GRID))
    assert field.inflow_defect(data) < 1e-8
    lo, hi = data.bounds()
    assert field.values.min() >= lo - 1e-8
    assert field.values.max() <= hi + 1e-8
    outgoing = field.outgoing_trace()
    for face in field.grid.domain.faces:
        assert np.all(outgoing[face.name][:, field.grid.incoming(face)] == 0.0)


def test_angular_average_is_a_projector():
    field = solve_transport(TransportProblem.build(DomainSpec.disk(1.0), 0.2, SmoothData(), **GRID))
    grid = field.grid
    avg = angular_average(field)
    assert np.allclose(grid.average(np.repeat(avg[:, None], grid.n_dirs, axis=1)), avg)
    assert np.allclose(grid.average(np.ones(grid.shape)), 1.0)
    assert np.max(np.abs(grid.average(np.tile(grid.angles.sin_phi, (grid.n_space, 1))))) < 1e-12


def test_streaming_derivative_of_simple_fields():
    grid = build_phase_space_grid(DomainSpec.annulus(1.0, 2.0), 0.2, n_theta=16, n_polar=32, n_grazing=0)
    r = grid.r_flat[:, None]
    sin_f = grid.angles.sin_phi[None, :]
    # w.grad |x|^2 = 2 x.w = -2 r sin(phi)
    exact = -2.0 * r * sin_f * np.ones(grid.shape)
    assert np.max(np.abs(streaming_derivative(grid, grid.r_flat ** 2) - exact)) < 1e-10
    # w.grad (x.w) = |w|^2 = 1
    approx = streaming_derivative(grid, -r * sin_f * np.ones(grid.shape))
    assert np.max(np.abs(approx - 1.0)) < 2e-2
    assert green_identity_residual(grid, np.ones(grid.shape), np.ones(grid.shape)) < 1e-10


def remainder_setup(domain, data, eps=0.2):
    grid = build_phase_space_grid(domain, eps, **GRID)
    solutions = solve_face_milne(grid, data, eta=graded_eta_mesh(20.0))
    interior = build_expansion(domain, face_phi_inf(solutions), eps)
    layers = build_face_layers(solutions, eps)
    ua = build_approximate_solution(grid, interior, layers)
    sources = assemble_sources(grid, interior, layers)
    field = solve_transport(TransportProblem(domain, eps, data, grid))
    return field, ua, sources


def test_remainder_norms_split_exactly():
    field, ua, sources = remainder_setup(DomainSpec.disk(1.0), SmoothData())
    diag = remainder_diagnostics(field, ua)
    assert diag.decomposition_defect() < 1e-10
    assert set(diag.norms) == {"R", "Rbar", "Rbar_spatial", "R_minus_Rbar", "R_gamma_plus", "R_gamma_minus"}
    assert synthesis_bound(diag) > 0
    # xi vanishes on the boundary
    assert np.max(np.abs(diag.xi.value[-1])) < 1e-12
    report = kernel_estimate_check(diag, sources)
    assert abs(report.terms["oddness"]) <= 1e-10 * max(1.0, abs(report.terms["rbar_squared"]))
    assert [rec["term"] for rec in report.to_records()] == sorted(report.terms)


def test_constant_data_has_zero_remainder():
    field, ua, sources = remainder_setup(DomainSpec.annulus(1.0, 2.0), ConstantData(0.7))
    diag = remainder_diagnostics(field, ua)
    assert diag.norms["R"] < 1e-9
    assert np.max(np.abs(sources.total)) < 1e-10


def test_remainder_requires_matching_eps():
    field, ua, sources = remainder_setup(DomainSpec.disk(1.0), ConstantData(1.0))
    other = solve_transport(TransportProblem.build(DomainSpec.disk(1.0), 0.1, ConstantData(1.0), **GRID))
    with pytest.raises(ConfigurationError):
        remainder_diagnostics(other, ua)
