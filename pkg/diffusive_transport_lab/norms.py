"""
Bulk and boundary norms on the phase-space grid.

Phase-space fields have shape (n_space, n_dirs), spatial fields (n_space,),
boundary fields map a face name to (n_theta, n_dirs) values on that face.
Boundary norms use the measure |w.n| dw dS.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

try:
    from .errors import ConfigurationError
    from .phase_space import PhaseSpaceGrid
except ImportError:
    from errors import ConfigurationError
    from phase_space import PhaseSpaceGrid


PHASE_NORMS = ("L2", "L2xL1w")
BOUNDARY_NORMS = ("gamma_plus", "gamma_minus")


@dataclass
class BoundaryField:
    values: Dict[str, np.ndarray]

    def __getitem__(self, face: str) -> np.ndarray:
        return self.values[face]


def boundary_trace(grid: PhaseSpaceGrid, field: np.ndarray) -> BoundaryField:
    """Restriction of a phase-space field to the boundary nodes of every face."""
    f = _phase(grid, field)
    return BoundaryField({face.name: f[grid.face_nodes(face)] for face in grid.domain.faces})


def _phase(grid: PhaseSpaceGrid, field) -> np.ndarray:
    f = np.asarray(field, dtype=float)
    if f.ndim == 1 and f.size == grid.n_space:
        f = np.repeat(f[:, None], grid.n_dirs, axis=1)
    if f.shape != grid.shape:
        raise ConfigurationError(f"field shape {f.shape} does not match the phase-space grid {grid.shape}")
    return f


def _weighted(grid: PhaseSpaceGrid, f: np.ndarray, weight) -> np.ndarray:
    if weight is None:
        return f
    w = np.asarray(weight, dtype=float)
    if w.shape == (grid.n_space,):
        w = w[:, None]
    return f * w


def l2_norm(grid: PhaseSpaceGrid, field, weight=None) -> float:
    """L2 over Omega x S (spatial fields count as angle independent)."""
    f = _weighted(grid, _phase(grid, field), weight)
    return float(np.sqrt(grid.volumes @ (f ** 2 @ grid.angles.weights)))


def l2_l1w_norm(grid: PhaseSpaceGrid, field, weight=None) -> float:
    """L2 in space of the L1 norm in velocity."""
    f = _weighted(grid, _phase(grid, field), weight)
    return float(np.sqrt(grid.volumes @ (np.abs(f) @ grid.angles.weights) ** 2))


def spatial_l2_norm(grid: PhaseSpaceGrid, spatial) -> float:
    s = np.asarray(spatial, dtype=float)
    if s.shape != (grid.n_space,):
        raise ConfigurationError(f"spatial field must have shape ({grid.n_space},), got {s.shape}")
    return float(np.sqrt(grid.volumes @ s ** 2))


def phase_inner(grid: PhaseSpaceGrid, f, g) -> float:
    """<f, g> over Omega x S."""
    return float(grid.volumes @ ((_phase(grid, f) * _phase(grid, g)) @ grid.angles.weights))


def boundary_norm(grid: PhaseSpaceGrid, field: BoundaryField, side: str) -> float:
    """Norm on gamma_minus (incoming) or gamma_plus (outgoing) with measure |w.n| dw dS."""
    if side not in BOUNDARY_NORMS:
        raise ConfigurationError(f"side must be one of {BOUNDARY_NORMS}, got {side!r}")
    total = 0.0
    for face in grid.domain.faces:
        if face.name not in field.values:
            raise ConfigurationError(f"boundary field has no values on the {face.name} face")
        values = np.asarray(field.values[face.name], dtype=float)
        if values.shape != (grid.n_theta, grid.n_dirs):
            raise ConfigurationError(
                f"boundary values on {face.name} must have shape {(grid.n_theta, grid.n_dirs)}, got {values.shape}"
            )
        mask = grid.incoming(face) if side == "gamma_minus" else ~grid.incoming(face)
        weights = grid.angles.weights * np.abs(grid.angles.sin_phi) * mask
        total += grid.face_measure_per_node(face) * float(np.sum(values ** 2 @ weights))
    return float(np.sqrt(total))


def boundary_inner(grid: PhaseSpaceGrid, f: BoundaryField, g: BoundaryField) -> float:
    """Integral of f g (w.n) over the whole boundary."""
    total = 0.0
    for face in grid.domain.faces:
        # w.n = -sin(chart angle)
        w_dot_n = -np.sin(grid.chart_angle(face))
        prod = np.asarray(f.values[face.name]) * np.asarray(g.values[face.name])
        total += grid.face_measure_per_node(face) * float(np.sum(prod @ (grid.angles.weights * w_dot_n)))
    return total


@dataclass
class NormReport:
    field: str
    eps: float
    values: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, norm: str) -> float:
        return self.values[norm]

    def to_records(self) -> List[dict]:
        return [{"field": self.field, "norm": k, "eps": self.eps, "value": v} for k, v in sorted(self.values.items())]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), sort_keys=True)


def norm_suite(
    field,
    grid: PhaseSpaceGrid,
    name: str,
    eps: float,
    measures: Iterable[str] = PHASE_NORMS,
    weight: Optional[np.ndarray] = None,
) -> NormReport:
    """
    Evaluate the requested norms of one field.

    Args:
        field: phase-space array, spatial array, or BoundaryField
        grid: phase-space grid the field lives on
        name: field name used in the report
        eps: Knudsen number recorded in the report
        measures: any of "L2", "L2xL1w" (bulk) or "gamma_plus", "gamma_minus" (boundary)
        weight: optional spatial weight, e.g. 1 + eta; weighted norms are
            reported next to the plain ones with a "_weighted" suffix

    Raises:
        ConfigurationError: if a measure does not fit the field type
    """
    report = NormReport(name, float(eps))
    for measure in measures:
        if measure in BOUNDARY_NORMS:
            if not isinstance(field, BoundaryField):
                raise ConfigurationError(f"{measure} needs a boundary field")
            report.values[measure] = boundary_norm(grid, field, measure)
            continue
        if measure not in PHASE_NORMS:
            raise ConfigurationError(f"unknown norm {measure!r}")
        if isinstance(field, BoundaryField):
            raise ConfigurationError(f"{measure} needs a bulk field")
        func = l2_norm if measure == "L2" else l2_l1w_norm
        report.values[measure] = func(grid, field)
        if weight is not None:
            report.values[f"{measure}_weighted"] = func(grid, field, weight)
    return report
