"""
Flat binary export of phase-space fields.

Layout: the 4-byte magic b"TFLD", a little-endian uint32 header length, a UTF-8
JSON header (grid descriptors, eps, domain, shape, name) and the field values
as row-major little-endian float64.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

try:
    from .errors import ConfigurationError
    from .phase_space import PhaseSpaceGrid
except ImportError:
    from errors import ConfigurationError
    from phase_space import PhaseSpaceGrid


MAGIC = b"TFLD"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")


def grid_descriptor(grid: PhaseSpaceGrid) -> dict:
    return {
        "domain": {"kind": grid.domain.kind, "radii": list(grid.domain.radii)},
        "eps": grid.eps,
        "radii": grid.radii.tolist(),
        "theta": grid.theta.tolist(),
        "phi": grid.angles.phi.tolist(),
        "weights": grid.angles.weights.tolist(),
    }


@dataclass
class FieldFile:
    header: dict
    values: np.ndarray

    @property
    def eps(self) -> float:
        return float(self.header["grid"]["eps"])


def export_field(path: Union[str, Path], grid: PhaseSpaceGrid, values: np.ndarray, name: str = "u", extra: Optional[dict] = None) -> Path:
    """
    Write one field with its grid descriptors.

    Args:
        path: output file
        grid: grid the field lives on
        values: phase-space (n_space, n_dirs) or spatial (n_space,) array
        name: field name stored in the header
        extra: additional JSON-serializable header entries

    Returns:
        the written path
    """
    data = np.ascontiguousarray(values, dtype="<f8")
    if data.shape not in (grid.shape, (grid.n_space,)):
        raise ConfigurationError(f"field shape {data.shape} does not fit grid {grid.shape}")
    header = {
        "version": FORMAT_VERSION,
        "name": name,
        "shape": list(data.shape),
        "dtype": "<f8",
        "order": "C",
        "grid": grid_descriptor(grid),
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_LENGTH.pack(len(blob)))
        fh.write(blob)
        fh.write(data.tobytes(order="C"))
    return path


def read_field(path: Union[str, Path]) -> FieldFile:
    """
    Read a field written by `export_field`.

    Raises:
        ConfigurationError: on a bad magic, version or truncated payload
    """
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not a field file")
    (length,) = _LENGTH.unpack_from(raw, 4)
    start = 4 + _LENGTH.size
    header = json.loads(raw[start:start + length].decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported field file version {header.get('version')}")
    shape = tuple(header["shape"])
    payload = raw[start + length:]
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise ConfigurationError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return FieldFile(header, values)
