import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.errors import ConfigurationError
from diffusive_transport_lab.field_io import MAGIC, export_field, read_field
from diffusive_transport_lab.phase_space import build_phase_space_grid
from diffusive_transport_lab.quadgeom import DomainSpec


@pytest.fixture(scope="module")
def grid():
    return build_phase_space_grid(DomainSpec.annulus(1.0, 2.0), 0.1, n_theta=4, n_polar=4, n_grazing=0)


def test_field_file_keeps_values_and_grid(tmp_path, grid):
    values = np.random.default_rng(1).normal(size=grid.shape)
    path = export_field(tmp_path / "out" / "u.bin", grid, values, name="u", extra={"strategy": "direct"})
    assert path.read_bytes()[:4] == MAGIC
    back = read_field(path)
    assert np.array_equal(back.values, values)
    assert back.eps == 0.1
    assert back.header["name"] == "u"
    assert back.header["extra"] == {"strategy": "direct"}
    assert back.header["grid"]["domain"] == {"kind": "annulus", "radii": [1.0, 2.0]}
    assert np.allclose(back.header["grid"]["radii"], grid.radii)


def test_spatial_fields_are_accepted(tmp_path, grid):
    back = read_field(export_field(tmp_path / "ubar.bin", grid, np.ones(grid.n_space), name="ubar"))
    assert back.values.shape == (grid.n_space,)


def test_bad_files_are_rejected(tmp_path, grid):
    with pytest.raises(ConfigurationError):
        export_field(tmp_path / "bad.bin", grid, np.ones((2, 2)))
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ConfigurationError):
        read_field(junk)
    path = export_field(tmp_path / "u.bin", grid, np.ones(grid.shape))
    truncated = tmp_path / "truncated.bin"
    truncated.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        read_field(truncated)
