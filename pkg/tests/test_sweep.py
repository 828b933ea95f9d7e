import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.data_families import ConstantData, FourierModeData, GrazingData, SmoothData
from diffusive_transport_lab.direct_solve_strategy import DirectSolveStrategy
from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec
from diffusive_transport_lab.sweep import assemble_sweep, ray_parameters, solve_full_system


DOMAINS = [DomainSpec.disk(1.0), DomainSpec.annulus(1.0, 2.0), DomainSpec.ball(1.0), DomainSpec.shell(1.0, 2.0)]


def small_grid(domain, eps=0.2):
    return build_phase_space_grid(domain, eps, n_theta=8, n_polar=8, n_grazing=0, max_step=0.125)


def test_ray_parameters():
    q = ray_parameters()
    assert q[0] == 0.0
    assert q[-1] == pytest.approx(40.0)
    assert np.all(np.diff(q) > 0)
    with pytest.raises(ConfigurationError):
        ray_parameters(step=-1.0)


@pytest.mark.parametrize("domain", DOMAINS, ids=lambda d: d.kind)
def test_constants_are_fixed_points_of_the_sweep(domain):
    system = assemble_sweep(small_grid(domain), ConstantData(2.0))
    ones = np.full(system.size, 2.0)
    assert np.max(np.abs(system.apply(ones) - ones)) < 1e-12
    assert np.allclose(system.angular_flux(ones), 2.0, atol=1e-12)


@pytest.mark.parametrize("domain", DOMAINS, ids=lambda d: d.kind)
def test_full_system_respects_maximum_principle(domain):
    data = GrazingData(width=0.3)
    system = assemble_sweep(small_grid(domain), data)
    angular, scalar = solve_full_system(system)
    lo, hi = data.bounds()
    assert angular.min() >= lo - 1e-9
    assert angular.max() <= hi + 1e-9
    assert np.max(np.abs(system.residual(scalar))) < 1e-10
    assert np.max(np.abs(system.angular_flux(scalar) - angular)) < 1e-10


def test_sweep_matrix_is_substochastic():
    system = assemble_sweep(small_grid(DomainSpec.disk(1.0)), SmoothData())
    assert system.matrix.min() >= 0
    row_sums = np.asarray(system.matrix.sum(axis=1)).ravel()
    assert np.all(row_sums <= 1.0 + 1e-12)
    # nodes next to the boundary leak through it
    assert row_sums.min() < 1.0


def test_invalid_ray_nodes():
    with pytest.raises(ConfigurationError):
        assemble_sweep(small_grid(DomainSpec.disk(1.0)), ConstantData(), q=np.array([0.5, 1.0]))


def coarse_disk(eps):
    # cells far wider than eps away from the boundary collar
    return build_phase_space_grid(DomainSpec.disk(1.0), eps, n_theta=16, n_polar=8, n_grazing=0, max_step=0.125)


def test_correction_keeps_the_sweep_matrix_substochastic():
    grid = coarse_disk(0.01)
    plain = assemble_sweep(grid, SmoothData(), corrected=False)
    system = assemble_sweep(grid, SmoothData())
    assert system.matrix.min() >= 0
    assert np.allclose(
        np.asarray(system.matrix.sum(axis=1)).ravel(), np.asarray(plain.matrix.sum(axis=1)).ravel(), atol=1e-12
    )
    assert abs(plain.correction).sum() == 0
    assert abs(system.correction).sum() > 0


def test_correction_removes_interpolation_diffusion_on_harmonic_fields():
    grid = coarse_disk(0.005)
    x, y = grid.points[:, 0], grid.points[:, 1]
    harmonic = x ** 2 - y ** 2
    bulk = (grid.r_flat > 0.3) & (grid.r_flat < 0.7)

    def defect(system):
        return np.max(np.abs(system.matrix @ harmonic - harmonic * np.asarray(system.matrix.sum(axis=1)).ravel())[bulk])

    plain = assemble_sweep(grid, ConstantData(), corrected=False)
    corrected = assemble_sweep(grid, ConstantData())
    assert defect(corrected) < 0.3 * defect(plain)


def test_corrected_solve_tracks_the_harmonic_limit_on_a_coarse_grid():
    grid = coarse_disk(0.01)
    data = FourierModeData(mode=2, amplitude=0.5)
    x, y = grid.points[:, 0], grid.points[:, 1]
    limit = 1.0 + 0.5 * (x ** 2 - y ** 2)
    interior = grid.r_flat < 0.8

    def error(system):
        average = DirectSolveStrategy().solve(system).average
        return np.max(np.abs(average - limit)[interior])

    assert error(assemble_sweep(grid, data)) < 0.5 * error(assemble_sweep(grid, data, corrected=False))


def test_full_system_matches_the_corrected_scalar_flux():
    grid = coarse_disk(0.05)
    system = assemble_sweep(grid, FourierModeData(mode=2, amplitude=0.5))
    angular, scalar = solve_full_system(system)
    assert np.max(np.abs(system.residual(scalar))) < 1e-10
    assert np.max(np.abs(system.angular_flux(scalar) - angular)) < 1e-10
