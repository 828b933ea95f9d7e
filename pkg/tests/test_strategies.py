import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.data_families import GrazingData, SmoothData
from diffusive_transport_lab.direct_solve_strategy import DirectSolveStrategy
from diffusive_transport_lab.dsa_strategy import MARSHAK_FACTOR, DiffusionSyntheticStrategy
from diffusive_transport_lab.errors import ConfigurationError, IterationLimitError
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec
from diffusive_transport_lab.source_iteration_strategy import SourceIterationStrategy
from diffusive_transport_lab.sweep import assemble_sweep, solve_full_system


def make_system(domain, eps=0.2, data=None):
    grid = build_phase_space_grid(domain, eps, n_theta=8, n_polar=8, n_grazing=0, max_step=0.125)
    return assemble_sweep(grid, data or SmoothData())


@pytest.fixture(scope="module")
def annulus_system():
    return make_system(DomainSpec.annulus(1.0, 2.0), data=GrazingData(width=0.3))


def test_dense_and_sparse_direct_paths_agree(annulus_system):
    dense = DirectSolveStrategy(tol=1e-12, dense_fraction=0.0).solve(annulus_system)
    sparse = DirectSolveStrategy(tol=1e-12, dense_fraction=1.0).solve(annulus_system)
    assert np.max(np.abs(dense.average - sparse.average)) < 1e-11
    assert dense.residual < 1e-11


@pytest.mark.parametrize("domain", [DomainSpec.disk(1.0), DomainSpec.shell(1.0, 2.0)], ids=lambda d: d.kind)
def test_all_strategies_match_the_full_system(domain):
    system = make_system(domain)
    _, reference = solve_full_system(system)
    for strategy in (
        DirectSolveStrategy(tol=1e-12),
        DiffusionSyntheticStrategy(tol=1e-12, max_iterations=2000),
        SourceIterationStrategy(tol=1e-13, max_iterations=20000),
    ):
        result = strategy.solve(system)
        assert np.max(np.abs(result.average - reference)) < 1e-8, result.strategy


def test_dsa_beats_plain_iteration_at_small_eps():
    system = make_system(DomainSpec.disk(1.0), eps=0.05)
    dsa = DiffusionSyntheticStrategy(tol=1e-8, max_iterations=500).solve(system)
    plain = SourceIterationStrategy(tol=1e-8, max_iterations=20000).solve(system)
    assert dsa.iterations < plain.iterations
    assert dsa.rejected_corrections >= 0


def test_iteration_limit_keeps_history(annulus_system):
    strategy = SourceIterationStrategy(tol=1e-14, max_iterations=3)
    with pytest.raises(IterationLimitError) as info:
        strategy.solve(annulus_system)
    assert len(info.value.residual_history) == 3
    assert strategy.get_history() == info.value.residual_history


def test_warm_start_converges_immediately(annulus_system):
    exact = DirectSolveStrategy(tol=1e-12).solve(annulus_system).average
    warm = SourceIterationStrategy(tol=1e-9).solve(annulus_system, initial=exact)
    assert warm.iterations == 1


def test_invalid_settings():
    with pytest.raises(ConfigurationError):
        DirectSolveStrategy(dense_fraction=2.0)
    with pytest.raises(ConfigurationError):
        SourceIterationStrategy(tol=-1.0)
    with pytest.raises(ConfigurationError):
        DiffusionSyntheticStrategy(max_iterations=0)
    with pytest.raises(ConfigurationError):
        DiffusionSyntheticStrategy(extrapolation=0.0)
    assert MARSHAK_FACTOR[2] == pytest.approx(np.pi / 4)


def test_concurrent_solves_share_one_strategy(annulus_system):
    strategy = DiffusionSyntheticStrategy(tol=1e-10, max_iterations=2000)

    def worker(_):
        return strategy.solve(annulus_system).average

    # Run several solves in parallel on the same strategy instance
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(worker, range(4)))
    for r in results[1:]:
        assert np.array_equal(r, results[0])
    assert len(strategy.get_history()) > 0
