import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.norms import (
    BoundaryField,
    boundary_inner,
    boundary_norm,
    boundary_trace,
    l2_l1w_norm,
    l2_norm,
    norm_suite,
    phase_inner,
    spatial_l2_norm,
)
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec


@pytest.fixture(scope="module")
def disk_grid():
    return build_phase_space_grid(DomainSpec.disk(1.0), 0.2, n_theta=8, n_polar=16, n_grazing=0)


@pytest.fixture(scope="module")
def shell_grid():
    return build_phase_space_grid(DomainSpec.shell(1.0, 2.0), 0.2, n_polar=16, n_grazing=0)


def test_norms_of_one_on_the_disk(disk_grid):
    ones = np.ones(disk_grid.shape)
    assert l2_norm(disk_grid, ones) == pytest.approx(np.sqrt(np.pi * 2.0 * np.pi))
    assert l2_l1w_norm(disk_grid, ones) == pytest.approx(np.sqrt(np.pi) * 2.0 * np.pi)
    assert spatial_l2_norm(disk_grid, np.ones(disk_grid.n_space)) == pytest.approx(np.sqrt(np.pi))
    # spatial fields count as angle independent
    assert l2_norm(disk_grid, np.ones(disk_grid.n_space)) == pytest.approx(l2_norm(disk_grid, ones))


def test_boundary_norms_of_one(disk_grid, shell_grid):
    trace = boundary_trace(disk_grid, np.ones(disk_grid.shape))
    # 2*pi circumference times a half-range flux of 2
    assert boundary_norm(disk_grid, trace, "gamma_minus") == pytest.approx(np.sqrt(4.0 * np.pi))
    assert boundary_norm(disk_grid, trace, "gamma_plus") == pytest.approx(np.sqrt(4.0 * np.pi))
    assert abs(boundary_inner(disk_grid, trace, trace)) < 1e-12

    shell_trace = boundary_trace(shell_grid, np.ones(shell_grid.shape))
    area = 4.0 * np.pi * (1.0 + 4.0)
    assert boundary_norm(shell_grid, shell_trace, "gamma_minus") == pytest.approx(np.sqrt(area * np.pi), rel=1e-8)


def test_weighted_norms_and_inner_product(disk_grid):
    rng = np.random.default_rng(5)
    f = rng.normal(size=disk_grid.shape)
    assert phase_inner(disk_grid, f, f) == pytest.approx(l2_norm(disk_grid, f) ** 2)
    weight = disk_grid.eta_weight()
    assert l2_norm(disk_grid, f, weight) >= l2_norm(disk_grid, f)
    report = norm_suite(f, disk_grid, "f", 0.2, weight=weight)
    assert set(report.values) == {"L2", "L2_weighted", "L2xL1w", "L2xL1w_weighted"}
    assert report["L2"] == pytest.approx(l2_norm(disk_grid, f))
    records = report.to_records()
    assert [r["norm"] for r in records] == sorted(report.values)
    assert all(r["eps"] == 0.2 for r in records)


def test_norm_errors(disk_grid):
    with pytest.raises(ConfigurationError):
        l2_norm(disk_grid, np.ones((3, 3)))
    trace = boundary_trace(disk_grid, np.zeros(disk_grid.shape))
    with pytest.raises(ConfigurationError):
        boundary_norm(disk_grid, trace, "gamma_zero")
    with pytest.raises(ConfigurationError):
        boundary_norm(disk_grid, BoundaryField({}), "gamma_plus")
    with pytest.raises(ConfigurationError):
        norm_suite(trace, disk_grid, "trace", 0.2, measures=["L2"])
    with pytest.raises(ConfigurationError):
        norm_suite(np.zeros(disk_grid.shape), disk_grid, "u", 0.2, measures=["gamma_plus"])
    with pytest.raises(ConfigurationError):
        norm_suite(np.zeros(disk_grid.shape), disk_grid, "u", 0.2, measures=["H1"])
