import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.characteristics import (
    classify_hollow,
    conserved_quantity,
    dump_paths_csv,
    reaches_boundary,
    trace_characteristic,
    trace_family,
)
from diffusive_transport_lab.errors import ConfigurationError


EPS = 0.1


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("start", [(0.5, 0.3), (3.0, -0.8), (6.0, 1.2)])
def test_conserved_quantity_is_preserved(sign, start):
    path = trace_characteristic(EPS, sign, start, (0.0, -40.0))
    assert path.conserved_drift() < 1e-8
    assert path.conserved[0] == pytest.approx(conserved_quantity(EPS, sign, *start))


def test_convex_strip_has_no_hollow_region():
    eta = np.linspace(0.0, 0.95 / EPS, 40)
    phi = np.linspace(-np.pi / 2, np.pi / 2, 37)
    assert not classify_hollow(EPS, 1, eta, phi).any()


def test_concave_strip_has_a_hollow_region():
    hollow = classify_hollow(EPS, -1, np.array([0.0, 1.0, 5.0]), np.array([0.0, 1.2]))
    assert hollow.shape == (3, 2)
    assert hollow[2, 0]
    assert not hollow[0].any()
    assert not hollow[:, 1].any()


@pytest.mark.parametrize(
    "sign,eta0,phi0",
    [(1, 2.0, 0.3), (1, 5.0, -0.2), (-1, 1.0, 1.2), (-1, 5.0, 0.0), (-1, 8.0, 0.4)],
)
def test_tracing_agrees_with_the_invariant(sign, eta0, phi0):
    hollow = bool(classify_hollow(EPS, sign, np.array(eta0), np.array(phi0)))
    assert reaches_boundary(EPS, sign, eta0, phi0) is not hollow


def test_paths_end_on_the_boundary():
    path = trace_characteristic(EPS, 1, (2.0, 0.5), (0.0, -60.0))
    assert path.reached_boundary
    assert path.eta[-1] == pytest.approx(0.0, abs=1e-9)


def test_invalid_arguments():
    with pytest.raises(ConfigurationError):
        trace_characteristic(EPS, 1, (11.0, 0.0), (0.0, -1.0))
    with pytest.raises(ConfigurationError):
        trace_characteristic(EPS, 0, (1.0, 0.0), (0.0, -1.0))
    with pytest.raises(ConfigurationError):
        classify_hollow(-EPS, 1, [1.0], [0.0])


def test_paths_csv(tmp_path):
    paths = trace_family(EPS, -1, [(1.0, 0.2), (4.0, 0.0)], t_max=5.0)
    frame = dump_paths_csv(paths, tmp_path / "paths.csv")
    back = pd.read_csv(tmp_path / "paths.csv")
    assert list(back.columns) == ["path", "t", "eta", "phi", "E"]
    assert set(back["path"]) == {0, 1}
    assert len(back) == len(frame)
