import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.phase_space import build_phase_space_grid, graded_radial_mesh
from diffusive_transport_lab.quadgeom import DomainSpec


@pytest.mark.parametrize(
    "domain,volume",
    [
        (DomainSpec.disk(1.0), np.pi),
        (DomainSpec.annulus(1.0, 2.0), 3.0 * np.pi),
        (DomainSpec.ball(1.0), 4.0 * np.pi / 3.0),
        (DomainSpec.shell(1.0, 2.0), 28.0 * np.pi / 3.0),
    ],
)
def test_cell_volumes_tile_the_domain(domain, volume):
    grid = build_phase_space_grid(domain, 0.1, n_theta=8, n_polar=8)
    assert grid.volumes.sum() == pytest.approx(volume, rel=1e-12)
    assert grid.volumes.shape == (grid.n_space,)


def test_radial_mesh_is_graded_towards_faces():
    radii = graded_radial_mesh(1.0, 2.0, 0.01, 1.2, 0.1)
    assert radii[0] == pytest.approx(1.0)
    assert radii[-1] == pytest.approx(2.0)
    steps = np.diff(radii)
    assert np.all(steps > 0)
    assert steps[0] == pytest.approx(0.01)
    assert steps[-1] == pytest.approx(0.01)
    disk = graded_radial_mesh(0.0, 1.0, 0.01, 1.2, 0.1, graded_inner=False)
    assert disk[0] > 0
    assert disk[-1] == pytest.approx(1.0)


def test_collar_is_resolved_by_default_grading():
    for eps in (0.2, 0.05, 0.0125):
        grid = build_phase_space_grid(DomainSpec.annulus(1.0, 2.0), eps, n_theta=8, n_polar=8)
        assert grid.collar_resolved()


def test_directions_are_unit_and_match_radial_cosine():
    grid = build_phase_space_grid(DomainSpec.disk(1.0), 0.2, n_theta=8, n_polar=8)
    w = grid.directions()
    assert np.allclose(np.linalg.norm(w, axis=-1), 1.0)
    radial = grid.points / grid.r_flat[:, None]
    assert np.allclose(np.einsum("ij,ikj->ik", radial, w), grid.radial_cosine[None, :])


def test_inner_face_chart_reverses_incoming_half():
    grid = build_phase_space_grid(DomainSpec.annulus(1.0, 2.0), 0.2, n_theta=8, n_polar=8)
    outer, inner = grid.domain.face("outer"), grid.domain.face("inner")
    assert not np.any(grid.incoming(outer) & grid.incoming(inner))
    assert np.all(grid.incoming(outer) | grid.incoming(inner))
    assert np.allclose(grid.angles.phi[grid.chart_node(inner)], grid.chart_angle(inner))


def test_three_dimensional_grid_has_one_boundary_angle():
    grid = build_phase_space_grid(DomainSpec.ball(1.0), 0.1, n_theta=48, n_polar=8)
    assert grid.n_theta == 1
    assert grid.points.shape == (grid.n_r, 3)
    assert np.all(grid.points[:, 1:] == 0)


def test_eta_weight_grows_away_from_the_boundary():
    grid = build_phase_space_grid(DomainSpec.disk(1.0), 0.1, n_theta=4, n_polar=8)
    weight = grid.reshape_polar(grid.eta_weight())[:, 0]
    assert weight[-1] == pytest.approx(1.0)
    assert np.all(np.diff(weight) < 0)


def test_refinement_and_validation():
    coarse = build_phase_space_grid(DomainSpec.disk(1.0), 0.1, n_theta=8, n_polar=8)
    fine = build_phase_space_grid(DomainSpec.disk(1.0), 0.1, n_theta=8, n_polar=8, refine=2)
    assert fine.n_theta == 2 * coarse.n_theta
    assert fine.n_dirs > coarse.n_dirs
    assert fine.n_r > coarse.n_r
    with pytest.raises(ConfigurationError):
        build_phase_space_grid(DomainSpec.disk(1.0), 0.0)
    with pytest.raises(ConfigurationError):
        build_phase_space_grid(DomainSpec.disk(1.0), 0.1, n_theta=2)
    with pytest.raises(ConfigurationError):
        build_phase_space_grid(DomainSpec.disk(1.0), 0.1, refine=0)


@pytest.mark.parametrize("domain", [DomainSpec.disk(1.0), DomainSpec.shell(1.0, 2.0)], ids=lambda d: d.kind)
@pytest.mark.parametrize("n_grazing", [1, 2, 4, 6])
def test_velocity_cutoff_transition_always_holds_directions(domain, n_grazing):
    for eps in (0.2, 0.05, 0.0125):
        grid = build_phase_space_grid(domain, eps, n_theta=8, n_polar=8, n_grazing=n_grazing)
        graze = np.abs(grid.angles.grazing_angle)
        assert np.count_nonzero((graze > eps) & (graze < 2.0 * eps)) >= 2
