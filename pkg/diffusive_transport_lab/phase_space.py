"""
Phase-space grid: graded radial nodes, uniform boundary angles (2D), and an
angular grid expressed in the local frame w = -sin(phi) e_r + cos(phi) e_theta.

In the local frame the chart angle of the outer face equals phi and that of the
inner face equals -phi, so Milne solutions computed on the same angular grid
map onto the grid without interpolation in angle.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

try:
    from .errors import ConfigurationError
    from .quadgeom import AngularGrid, BoundaryFace, DomainSpec, build_angular_grid
except ImportError:
    from errors import ConfigurationError
    from quadgeom import AngularGrid, BoundaryFace, DomainSpec, build_angular_grid


logger = logging.getLogger(__name__)

COLLAR_CELLS = 8


def _boundary_distances(length: float, first_step: float, ratio: float, max_step: float) -> List[float]:
    distances, step = [0.0], first_step
    while distances[-1] + step < length:
        distances.append(distances[-1] + step)
        step = min(step * ratio, max_step)
    return distances


def graded_radial_mesh(
    inner: float,
    outer: float,
    first_step: float,
    ratio: float = 1.15,
    max_step: float = 1.0 / 24.0,
    graded_inner: bool = True,
) -> np.ndarray:
    """
    Radial nodes refined geometrically towards the boundary.

    With `graded_inner` the mesh is graded from both ends of [inner, outer]
    and both end points are nodes; otherwise (disk/ball) it is graded from the
    outer end only and stops short of the origin.
    """
    if not 0 <= inner < outer:
        raise ConfigurationError(f"invalid radial interval [{inner}, {outer}]")
    if first_step <= 0 or ratio < 1 or max_step < first_step:
        raise ConfigurationError(f"invalid radial grading first_step={first_step}, ratio={ratio}, max_step={max_step}")

    if not graded_inner:
        distances = _boundary_distances(outer, first_step, ratio, max_step)
        nodes = [outer - d for d in distances]
        last_step = distances[-1] - distances[-2] if len(distances) > 1 else first_step
        while nodes and nodes[-1] < 0.5 * last_step:
            nodes.pop()
        return np.asarray(sorted(nodes))

    half = 0.5 * (outer - inner)
    distances = _boundary_distances(half, first_step, ratio, max_step)
    left = [inner + d for d in distances]
    right = [outer - d for d in distances]
    gap = right[-1] - left[-1]
    last_step = distances[-1] - distances[-2] if len(distances) > 1 else first_step
    if gap < 0.5 * last_step:
        mid = 0.5 * (left.pop() + right.pop())
        left.append(mid)
    return np.asarray(sorted(left + right))


def cell_faces(radii: np.ndarray, inner: float, outer: float) -> np.ndarray:
    mids = 0.5 * (radii[1:] + radii[:-1])
    return np.concatenate([[inner], mids, [outer]])


@dataclass
class PhaseSpaceGrid:
    """
    Discrete phase space. Spatial nodes are (radius, theta) pairs flattened
    radius-major; 3D domains carry a single theta node and rotationally
    symmetric fields. Phase-space fields have shape (n_space, n_dirs).
    """

    domain: DomainSpec
    eps: float
    radii: np.ndarray
    theta: np.ndarray
    angles: AngularGrid
    faces_r: np.ndarray

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def n_r(self) -> int:
        return self.radii.size

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def n_space(self) -> int:
        return self.n_r * self.n_theta

    @property
    def n_dirs(self) -> int:
        return self.angles.size

    @property
    def shape(self):
        return (self.n_space, self.n_dirs)

    @property
    def r_flat(self) -> np.ndarray:
        return np.repeat(self.radii, self.n_theta)

    @property
    def theta_flat(self) -> np.ndarray:
        return np.tile(self.theta, self.n_r)

    @property
    def volumes(self) -> np.ndarray:
        """Cell volume of each spatial node, shape (n_space,)."""
        lo, hi = self.faces_r[:-1], self.faces_r[1:]
        if self.dimension == 2:
            ring = np.pi * (hi ** 2 - lo ** 2) / self.n_theta
        else:
            ring = 4.0 * np.pi * (hi ** 3 - lo ** 3) / 3.0
        return np.repeat(ring, self.n_theta)

    @property
    def points(self) -> np.ndarray:
        """Cartesian spatial nodes; 3D nodes are placed on the x axis."""
        r, th = self.r_flat, self.theta_flat
        if self.dimension == 2:
            return np.column_stack([r * np.cos(th), r * np.sin(th)])
        return np.column_stack([r, np.zeros_like(r), np.zeros_like(r)])

    @property
    def radial_cosine(self) -> np.ndarray:
        """w . e_r = -sin(phi) per direction."""
        return -self.angles.sin_phi

    def directions(self) -> np.ndarray:
        """Cartesian unit velocity of every phase-space node, shape (n_space, n_dirs, dim)."""
        sin_f, cos_f = self.angles.sin_phi, self.angles.cos_phi
        if self.dimension == 2:
            beta = self.theta_flat[:, None] + self.angles.phi[None, :] + 0.5 * np.pi
            return np.stack([np.cos(beta), np.sin(beta)], axis=-1)
        out = np.zeros((self.n_space, self.n_dirs, 3))
        out[..., 0] = -sin_f
        out[..., 1] = cos_f
        return out

    def face_radial_index(self, face: BoundaryFace) -> int:
        return self.n_r - 1 if face.name == "outer" else 0

    def face_nodes(self, face: BoundaryFace) -> np.ndarray:
        """Flat spatial indices of the nodes on a boundary face."""
        i = self.face_radial_index(face)
        return i * self.n_theta + np.arange(self.n_theta)

    def distance_to_face(self, face: BoundaryFace) -> np.ndarray:
        """Normal distance of every radial node to a face, shape (n_r,)."""
        if face.name == "outer":
            return face.radius - self.radii
        return self.radii - face.radius

    def nearest_distance(self) -> np.ndarray:
        return np.min([self.distance_to_face(f) for f in self.domain.faces], axis=0)

    def eta_weight(self) -> np.ndarray:
        """1 + eta with eta the scaled distance to the nearest face, shape (n_space,)."""
        return np.repeat(1.0 + self.nearest_distance() / self.eps, self.n_theta)

    def chart_angle(self, face: BoundaryFace) -> np.ndarray:
        """Chart angle of every direction in the frame of `face`."""
        return self.angles.phi.copy() if face.name == "outer" else -self.angles.phi

    def chart_node(self, face: BoundaryFace) -> np.ndarray:
        """Index into the angular grid of the chart angle of every direction."""
        return np.arange(self.n_dirs) if face.name == "outer" else self.angles.mirror_index

    def incoming(self, face: BoundaryFace) -> np.ndarray:
        """Directions entering the domain through `face`."""
        return np.sin(self.chart_angle(face)) > 0

    def face_measure_per_node(self, face: BoundaryFace) -> float:
        return self.domain.face_measure(face) / self.n_theta

    def collar_cell_count(self, face: BoundaryFace) -> int:
        return int(np.count_nonzero(self.distance_to_face(face) <= 2.0 * self.eps * (1 + 1e-12))) - 1

    def collar_resolved(self) -> bool:
        return all(self.collar_cell_count(f) >= COLLAR_CELLS for f in self.domain.faces)

    def average(self, field: np.ndarray) -> np.ndarray:
        return self.angles.average(field)

    def reshape_polar(self, spatial: np.ndarray) -> np.ndarray:
        return np.asarray(spatial).reshape(self.n_r, self.n_theta, *np.shape(spatial)[1:])


def build_phase_space_grid(
    domain: DomainSpec,
    eps: float,
    n_theta: int = 48,
    n_polar: int = 24,
    n_grazing: int = 6,
    grazing_width: Optional[float] = None,
    max_step: float = 1.0 / 24.0,
    ratio: float = 1.15,
    first_step: Optional[float] = None,
    refine: int = 1,
    cutoff_edges: Tuple[float, float] = (1.0, 2.0),
) -> PhaseSpaceGrid:
    """
    Build the phase-space grid for one eps.

    Args:
        domain: the analytic domain
        eps: Knudsen number, sets the collar grading (first cell eps/8 by default)
        n_theta: boundary-angle nodes (2D only)
        n_polar: polar nodes of the angular grid
        n_grazing: extra nodes per grazing band (0 disables the band); the band is
            cut at eps * cutoff_edges and every piece gets ceil(n_grazing / 2)
            nodes, at least 2, so the velocity-cutoff transition always holds nodes
        grazing_width: band width; defaults to min(3 eps, pi/4)
        max_step: largest radial cell
        ratio: radial growth ratio
        first_step: first radial cell at each face
        refine: integer refinement factor applied to every resolution parameter
        cutoff_edges: grazing angles over eps where the velocity cutoff starts
            and ends its transition

    Returns:
        PhaseSpaceGrid
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if refine < 1:
        raise ConfigurationError(f"refine must be >= 1, got {refine}")
    h0 = (eps / 8.0 if first_step is None else first_step) / refine
    h_max = max(max_step / refine, h0)
    if domain.dimension == 2 and n_theta < 4:
        raise ConfigurationError(f"n_theta must be >= 4, got {n_theta}")

    width = min(3.0 * eps, np.pi / 4) if grazing_width is None else grazing_width
    breaks = [edge * eps for edge in cutoff_edges if 0 < edge * eps < width]
    band = max(2, -(-n_grazing * refine // 2)) if n_grazing > 0 else 0
    angles = build_angular_grid(
        domain.dimension,
        n_polar * refine,
        1,
        grazing_width=width if band else None,
        n_grazing=band,
        grazing_breaks=breaks if band else (),
    )
    radii = graded_radial_mesh(
        domain.inner_radius,
        domain.outer_radius,
        h0,
        ratio,
        h_max,
        graded_inner=not domain.is_convex(),
    )
    n_th = n_theta * refine if domain.dimension == 2 else 1
    theta = 2.0 * np.pi * np.arange(n_th) / n_th
    grid = PhaseSpaceGrid(
        domain=domain,
        eps=float(eps),
        radii=radii,
        theta=theta,
        angles=angles,
        faces_r=cell_faces(radii, domain.inner_radius, domain.outer_radius),
    )
    logger.debug(
        "phase-space grid %s eps=%g: n_r=%d n_theta=%d n_dirs=%d", domain.kind, eps, grid.n_r, grid.n_theta, grid.n_dirs
    )
    return grid
