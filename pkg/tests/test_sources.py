import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.boundary_layer import build_face_layers, face_phi_inf, solve_face_milne
from diffusive_transport_lab.data_families import ConstantData, SmoothData
from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.interior import build_expansion
from diffusive_transport_lab.milne import graded_eta_mesh
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec
from diffusive_transport_lab.sources import (
    assemble_h,
    assemble_sources,
    build_approximate_solution,
    energy_identity,
)


def pipeline(domain, data, eps=0.2):
    grid = build_phase_space_grid(domain, eps, n_theta=8, n_polar=8, n_grazing=2, max_step=0.125)
    solutions = solve_face_milne(grid, data, eta=graded_eta_mesh(20.0))
    interior = build_expansion(domain, face_phi_inf(solutions), eps)
    layers = build_face_layers(solutions, eps)
    return grid, interior, layers


@pytest.mark.parametrize(
    "domain", [DomainSpec.disk(1.0), DomainSpec.annulus(1.0, 2.0), DomainSpec.shell(1.0, 2.0)], ids=lambda d: d.kind
)
def test_constant_data_leaves_no_sources(domain):
    grid, interior, layers = pipeline(domain, ConstantData(1.5))
    ua = build_approximate_solution(grid, interior, layers)
    assert np.max(np.abs(ua.values - 1.5)) < 1e-10
    sources = assemble_sources(grid, interior, layers)
    for name, term in sources.components().items():
        assert np.max(np.abs(term)) < 1e-10, name
    for face in grid.domain.faces:
        assert np.max(np.abs(sources.h[face.name])) < 1e-10


def test_approximate_solution_matches_data_plus_h_on_the_inflow():
    grid, interior, layers = pipeline(DomainSpec.disk(1.0), SmoothData(amplitude=0.5, mode=1))
    ua = build_approximate_solution(grid, interior, layers)
    h = assemble_h(grid, interior, layers)
    face = grid.domain.face("outer")
    mask = grid.incoming(face)
    g = SmoothData(amplitude=0.5, mode=1).evaluate("outer", grid.theta[:, None], grid.chart_angle(face)[None, :])
    on_face = ua.values[grid.face_nodes(face)]
    assert np.max(np.abs((on_face - g - h[face.name])[:, mask])) < 1e-10
    # h lives on the incoming half only
    assert np.all(h[face.name][:, ~mask] == 0.0)


def test_velocity_cutoff_ablation_changes_h():
    grid, interior, layers = pipeline(DomainSpec.disk(1.0), SmoothData(amplitude=0.5, mode=1))
    with_cut = assemble_h(grid, interior, layers)["outer"]
    without = assemble_h(grid, interior, layers, velocity_cutoff=False)["outer"]
    assert np.max(np.abs(with_cut - without)) > 1e-6


def test_source_components_add_up():
    grid, interior, layers = pipeline(DomainSpec.annulus(1.0, 2.0), SmoothData(amplitude=0.5, mode=2))
    sources = assemble_sources(grid, interior, layers)
    parts = sources.components()
    assert set(parts) == {"S0", "S1", "S11", "S12", "S2", "S3", "S31", "S32"}
    assert np.allclose(parts["S1"], parts["S11"] + parts["S12"])
    assert np.allclose(sources.total, parts["S0"] + parts["S1"] + parts["S2"] + parts["S3"])
    assert sources.s0.shape == grid.shape
    assert sources.layer.shape == grid.shape


def test_mismatched_eps_is_rejected():
    grid, interior, layers = pipeline(DomainSpec.disk(1.0), ConstantData(1.0), eps=0.2)
    with pytest.raises(ConfigurationError):
        assemble_sources(grid, interior, layers, eps=0.1)
    other_layers = {name: [] for name in layers}
    with pytest.raises(ConfigurationError):
        build_approximate_solution(grid, interior, other_layers)


def test_energy_identity_for_a_constant_remainder():
    grid = build_phase_space_grid(DomainSpec.annulus(1.0, 2.0), 0.2, n_theta=8, n_polar=8, n_grazing=0)
    report = energy_identity(np.full(grid.shape, 0.3), np.zeros(grid.shape), grid)
    assert set(report.terms) == {"outflow", "relaxation", "source", "inflow"}
    assert report.terms["relaxation"] == pytest.approx(0.0, abs=1e-14)
    assert report.imbalance < 1e-12


def test_cutoff_derivative_term_lives_on_the_transition_band():
    eps = 0.2
    grid, interior, layers = pipeline(DomainSpec.disk(1.0), SmoothData(amplitude=0.5, mode=1), eps=eps)
    s12 = assemble_sources(grid, interior, layers).s12
    graze = np.abs(grid.angles.grazing_angle)
    band = (graze > eps) & (graze < 2.0 * eps)
    assert np.any(band)
    assert np.max(np.abs(s12[:, band])) > 0
    assert np.max(np.abs(s12[:, ~band])) == 0
