import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.data_families import (
    DATA_FAMILIES,
    ConstantData,
    SmoothData,
    TabulatedData,
    grazing_angle,
    make_boundary_data,
)
from diffusive_transport_lab.errors import ConfigurationError


PHI = np.linspace(0.01, np.pi - 0.01, 41)
THETA = np.linspace(0.0, 2.0 * np.pi, 13)


@pytest.mark.parametrize("family", sorted(DATA_FAMILIES))
def test_every_family_stays_within_its_bounds(family):
    data = make_boundary_data(family)
    values = data.evaluate("outer", THETA[:, None], PHI[None, :])
    assert values.shape == (THETA.size, PHI.size)
    lo, hi = data.bounds()
    assert values.min() >= lo - 1e-12
    assert values.max() <= hi + 1e-12


def test_constant_data():
    data = ConstantData(3.0)
    assert data.is_constant()
    assert np.all(data.evaluate("inner", 0.0, PHI) == 3.0)
    assert data.describe() == {"family": "constant", "value": 3.0}


def test_smooth_data_is_even_about_the_normal():
    data = SmoothData(amplitude=0.5, mode=2)
    # phi and pi - phi make the same angle with the boundary
    assert np.allclose(data.evaluate("outer", 0.4, PHI), data.evaluate("outer", 0.4, np.pi - PHI))
    assert not data.is_constant()


def test_grazing_angle_range():
    angles = grazing_angle(np.linspace(-np.pi, np.pi, 101))
    assert angles.min() >= -np.pi / 2
    assert angles.max() <= np.pi / 2
    assert grazing_angle(np.pi / 2) == pytest.approx(np.pi / 2)


def test_tabulated_interpolates_linearly():
    data = TabulatedData([0.0, np.pi / 2], [1.0, 3.0])
    assert data.evaluate("outer", 0.0, np.pi / 4) == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        TabulatedData([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        TabulatedData([0.5, 0.1], [1.0, 1.0])


def test_factory_errors():
    with pytest.raises(ConfigurationError):
        make_boundary_data("gaussian")
    with pytest.raises(ConfigurationError):
        make_boundary_data("constant", {"level": 2.0})
    with pytest.raises(ConfigurationError):
        make_boundary_data("grazing", {"width": 0.0})
    assert make_boundary_data("smooth", {"amplitude": 0.1}).amplitude == 0.1
