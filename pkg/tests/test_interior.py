import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.interior import (
    PolarFourierSolver,
    build_expansion,
    polar_derivatives,
    solve_dirichlet_laplace,
    solve_dirichlet_poisson,
)
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec


POINTS_2D = np.array([[0.3, 0.4], [-0.5, 0.1], [0.0, -0.7]])


def unit(angle):
    return np.column_stack([np.cos(angle), np.sin(angle)])


def test_disk_quadrupole_is_exact():
    u = solve_dirichlet_laplace(DomainSpec.disk(1.0), {"outer": lambda th: np.cos(2.0 * th)})
    x, y = POINTS_2D.T
    assert np.allclose(u(POINTS_2D), x ** 2 - y ** 2, atol=1e-12)
    assert u.truncation_error < 1e-12
    w = unit(np.array([0.2, 1.3, -2.0]))
    assert np.allclose(u.gradient(POINTS_2D), np.column_stack([2 * x, -2 * y]), atol=1e-12)
    assert np.allclose(u.directional(POINTS_2D, w, 2), 2 * w[:, 0] ** 2 - 2 * w[:, 1] ** 2, atol=1e-12)


def test_annulus_radial_profile():
    domain = DomainSpec.annulus(1.0, 2.0)
    u = solve_dirichlet_laplace(domain, {"outer": 2.0, "inner": 1.0})
    r = np.array([1.0, 1.5, 2.0])
    pts = np.column_stack([r, np.zeros(3)])
    assert np.allclose(u(pts), 1.0 + np.log(r) / np.log(2.0), atol=1e-12)


def test_annulus_fourier_data_is_matched_on_both_faces():
    domain = DomainSpec.annulus(1.0, 2.0)
    u = solve_dirichlet_laplace(domain, {"outer": lambda th: np.cos(th), "inner": lambda th: 0.5 * np.sin(3 * th)})
    assert u.truncation_error < 1e-10


def test_first_and_second_corrections_match_finite_differences():
    expansion = build_expansion(DomainSpec.annulus(1.0, 2.0), {"outer": lambda th: 1 + np.cos(th), "inner": 0.5})
    p = np.array([[1.3, 0.6]])
    w = unit(np.array([0.7]))
    h = 1e-4
    fd1 = (expansion.U0(p + h * w) - expansion.U0(p - h * w)) / (2 * h)
    fd2 = (expansion.U0(p + h * w) - 2 * expansion.U0(p) + expansion.U0(p - h * w)) / h ** 2
    assert expansion.U1(p, w) == pytest.approx(-fd1, abs=1e-7)
    assert expansion.U2(p, w) == pytest.approx(fd2, abs=1e-5)
    fd3 = (expansion.U2(p + h * w, w) - expansion.U2(p - h * w, w)) / (2 * h)
    assert expansion.streaming_U2(p, w) == pytest.approx(fd3, abs=1e-6)
    eps = 0.1
    composite = expansion.composite(p, w, eps)
    assert composite == pytest.approx(expansion.U0(p) + eps * expansion.U1(p, w) + eps ** 2 * expansion.U2(p, w))


def test_shell_harmonic_profile_and_derivatives():
    u = solve_dirichlet_laplace(DomainSpec.shell(1.0, 2.0), {"outer": 2.0, "inner": 1.0})
    on_faces = u(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    assert np.allclose(on_faces, [1.0, 2.0])
    p = np.array([[1.4, 0.0, 0.0]])
    w = np.array([[-0.6, 0.8, 0.0]])
    h = 1e-4
    fd2 = (u(p + h * w) - 2 * u(p) + u(p - h * w)) / h ** 2
    assert u.directional(p, w, 2) == pytest.approx(fd2, abs=1e-5)


def test_ball_constant_and_invalid_data():
    u = solve_dirichlet_laplace(DomainSpec.ball(1.0), {"outer": 3.0})
    assert np.allclose(u(np.array([[0.2, 0.0, 0.0]])), 3.0)
    with pytest.raises(ConfigurationError):
        solve_dirichlet_laplace(DomainSpec.shell(1.0, 2.0), {"outer": [1.0, 2.0], "inner": 1.0})
    with pytest.raises(ConfigurationError):
        solve_dirichlet_laplace(DomainSpec.annulus(1.0, 2.0), {"outer": 1.0})


@pytest.mark.parametrize("domain,source", [(DomainSpec.disk(1.0), 4.0), (DomainSpec.ball(1.0), 6.0)])
def test_poisson_solver_is_exact_for_quadratics(domain, source):
    grid = build_phase_space_grid(domain, 0.1, n_theta=8, n_polar=4)
    xi = solve_dirichlet_poisson(domain, grid.radii, grid.faces_r, grid.n_theta, np.full(grid.n_space, source))
    exact = 1.0 - grid.radii[:, None] ** 2
    assert np.max(np.abs(xi.value - exact)) < 1e-9


def test_polar_hessian_matches_exact_second_derivative():
    domain = DomainSpec.annulus(1.0, 2.0)
    grid = build_phase_space_grid(domain, 0.2, n_theta=8, n_polar=6)
    u = solve_dirichlet_laplace(domain, {"outer": lambda th: 4 * np.cos(2 * th), "inner": lambda th: np.cos(2 * th)})
    # this data gives u = r^2 cos(2 theta) exactly
    derivs = polar_derivatives(grid.radii, grid.reshape_polar(u(grid.points)))
    exact = u.directional(grid.points[:, None, :], grid.directions(), 2)
    computed = derivs.streaming_twice(grid.angles.sin_phi, grid.angles.cos_phi)
    assert np.max(np.abs(computed - exact)) < 1e-9


def test_robin_solver_validation():
    grid = build_phase_space_grid(DomainSpec.disk(1.0), 0.1, n_theta=8, n_polar=4)
    with pytest.raises(ConfigurationError):
        PolarFourierSolver(grid.domain, grid.radii, grid.faces_r, grid.n_theta, diffusion=0.0)
    with pytest.raises(ConfigurationError):
        PolarFourierSolver(grid.domain, grid.radii, grid.faces_r, grid.n_theta, robin_length=-1.0)
    solver = PolarFourierSolver(grid.domain, grid.radii, grid.faces_r, grid.n_theta, robin_length=0.5)
    assert np.allclose(solver.solve(np.zeros(grid.n_space)), 0.0)
