"""
Boundary Data Families

Named, smooth and bounded inflow data g(face, theta, phi) on the incoming
boundary. `phi` is the chart angle of the face (incoming means sin(phi) > 0)
and `theta` the boundary angle (always 0 on ball/shell, whose data are
rotationally symmetric).
"""

from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence, Type

import numpy as np

try:
    from .errors import ConfigurationError
except ImportError:
    from errors import ConfigurationError


def grazing_angle(phi) -> np.ndarray:
    """Angle to the grazing set, arcsin(sin(phi)), in [-pi/2, pi/2]."""
    return np.arcsin(np.clip(np.sin(phi), -1.0, 1.0))


class BoundaryData(ABC):
    """
    Abstract base class for inflow data.
    """

    name = "abstract"

    @abstractmethod
    def evaluate(self, face: str, theta, phi) -> np.ndarray:
        """
        Sample the data.

        Args:
            face: "outer" or "inner"
            theta: boundary angle(s)
            phi: chart angle(s) of the velocity, broadcastable against theta

        Returns:
            Data values with the broadcast shape of theta and phi
        """
        pass

    @abstractmethod
    def bounds(self) -> tuple:
        """
        Range of the data over the whole incoming boundary.

        Returns:
            Tuple of (min g, max g)
        """
        pass

    def is_constant(self) -> bool:
        lo, hi = self.bounds()
        return lo == hi

    def describe(self) -> dict:
        return {"family": self.name}


class ConstantData(BoundaryData):
    name = "constant"

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def evaluate(self, face, theta, phi):
        return np.full(np.broadcast(np.asarray(theta), np.asarray(phi)).shape, self.value)

    def bounds(self):
        return (self.value, self.value)

    def describe(self):
        return {"family": self.name, "value": self.value}


class SmoothData(BoundaryData):
    """1 + amplitude * cos(mode * theta) * cos(grazing angle): the headline data."""

    name = "smooth"

    def __init__(self, amplitude: float = 0.5, mode: int = 1, offset: float = 1.0):
        self.amplitude = float(amplitude)
        self.mode = int(mode)
        self.offset = float(offset)

    def evaluate(self, face, theta, phi):
        return self.offset + self.amplitude * np.cos(self.mode * np.asarray(theta)) * np.cos(grazing_angle(phi))

    def bounds(self):
        a = abs(self.amplitude)
        return (self.offset - a, self.offset + a)

    def describe(self):
        return {"family": self.name, "amplitude": self.amplitude, "mode": self.mode, "offset": self.offset}


class FourierModeData(BoundaryData):
    """offset + amplitude * cos(mode * theta), independent of the velocity."""

    name = "fourier"

    def __init__(self, mode: int = 2, amplitude: float = 0.5, offset: float = 1.0):
        self.mode = int(mode)
        self.amplitude = float(amplitude)
        self.offset = float(offset)

    def evaluate(self, face, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
        return self.offset + self.amplitude * np.cos(self.mode * theta)

    def bounds(self):
        a = abs(self.amplitude)
        return (self.offset - a, self.offset + a)

    def describe(self):
        return {"family": self.name, "mode": self.mode, "amplitude": self.amplitude, "offset": self.offset}


class GrazingData(BoundaryData):
    """offset + amplitude * exp(-(grazing angle / width)^2): mass concentrated near grazing."""

    name = "grazing"

    def __init__(self, width: float = 0.2, amplitude: float = 1.0, offset: float = 1.0):
        if width <= 0:
            raise ConfigurationError(f"grazing width must be positive, got {width}")
        self.width = float(width)
        self.amplitude = float(amplitude)
        self.offset = float(offset)

    def evaluate(self, face, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
        return self.offset + self.amplitude * np.exp(-((grazing_angle(phi) / self.width) ** 2))

    def bounds(self):
        lo, hi = self.offset, self.offset + self.amplitude
        return (min(lo, hi), max(lo, hi))

    def describe(self):
        return {"family": self.name, "width": self.width, "amplitude": self.amplitude, "offset": self.offset}


class SineData(BoundaryData):
    """g = sin(phi) on the incoming half, i.e. the normal velocity component."""

    name = "sine"

    def evaluate(self, face, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
        return np.sin(phi)

    def bounds(self):
        return (0.0, 1.0)


class TabulatedData(BoundaryData):
    """Values tabulated against |grazing angle| in [0, pi/2], linearly interpolated."""

    name = "tabulated"

    def __init__(self, angles: Sequence[float], values: Sequence[float]):
        angles = np.asarray(angles, dtype=float)
        values = np.asarray(values, dtype=float)
        if angles.ndim != 1 or angles.shape != values.shape or angles.size < 2:
            raise ConfigurationError("tabulated data needs matching 1D angle and value arrays with >= 2 entries")
        if np.any(np.diff(angles) <= 0) or angles[0] < 0 or angles[-1] > 0.5 * np.pi + 1e-12:
            raise ConfigurationError("tabulated angles must increase within [0, pi/2]")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("tabulated values must be finite")
        self.angles = angles
        self.values = values

    def evaluate(self, face, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
        return np.interp(np.abs(grazing_angle(phi)), self.angles, self.values)

    def bounds(self):
        return (float(self.values.min()), float(self.values.max()))

    def describe(self):
        return {"family": self.name, "angles": self.angles.tolist(), "values": self.values.tolist()}


DATA_FAMILIES: Dict[str, Type[BoundaryData]] = {
    cls.name: cls for cls in (ConstantData, SmoothData, FourierModeData, GrazingData, SineData, TabulatedData)
}


def default_tabulated() -> TabulatedData:
    angles = np.linspace(0.0, 0.5 * np.pi, 9)
    return TabulatedData(angles, 1.0 + 0.25 * np.cos(2.0 * angles))


def make_boundary_data(family: str, params: Optional[dict] = None) -> BoundaryData:
    """
    Instantiate a named data family.

    Args:
        family: one of DATA_FAMILIES
        params: keyword arguments of the family

    Raises:
        ConfigurationError: unknown family or invalid parameters
    """
    params = dict(params or {})
    if family not in DATA_FAMILIES:
        raise ConfigurationError(f"unknown data family {family!r}; choose one of {sorted(DATA_FAMILIES)}")
    if family == "tabulated" and not params:
        return default_tabulated()
    try:
        return DATA_FAMILIES[family](**params)
    except TypeError as exc:
        raise ConfigurationError(f"invalid parameters for data family {family!r}: {exc}") from exc
