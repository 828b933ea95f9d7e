"""
Angular quadrature and boundary geometry

Domains, velocity quadrature on the circle/sphere, boundary charts with signed
curvature, the orthogonal velocity substitution and the coefficients of the
curvilinear advection operator in the scaled normal variable.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

try:
    from .errors import ConfigurationError, DomainError, SingularChartError
except ImportError:
    from errors import ConfigurationError, DomainError, SingularChartError


DOMAIN_KINDS = ("disk", "annulus", "ball", "shell")
BOUNDARY_TOL = 1e-9
UNIT_TOL = 1e-10


@dataclass(frozen=True)
class BoundaryFace:
    """
    One boundary circle/sphere of an analytic domain.

    `sign` is +1 when the face bounds the domain from outside (convex side) and
    -1 for the inner face of an annulus/shell, where the outward normal of the
    domain points towards the origin.
    """

    name: str
    radius: float
    sign: int

    @property
    def curvature(self) -> float:
        """Signed principal curvature (both principal curvatures on a sphere)."""
        return self.sign / self.radius

    @property
    def is_convex(self) -> bool:
        return self.sign > 0


@dataclass(frozen=True)
class DomainSpec:
    """
    Geometry selector for the four supported analytic domains.

    Args:
        kind: one of "disk", "annulus", "ball", "shell"
        radii: (R,) for disk/ball, (a, b) with 0 < a < b for annulus/shell
    """

    kind: str
    radii: Tuple[float, ...]

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}; expected one of {DOMAIN_KINDS}")
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if self.kind in ("disk", "ball"):
            if len(radii) != 1 or not radii[0] > 0:
                raise ConfigurationError(f"{self.kind} needs a single radius R > 0, got {radii}")
        else:
            if len(radii) != 2 or not 0 < radii[0] < radii[1]:
                raise ConfigurationError(f"{self.kind} needs radii 0 < a < b, got {radii}")

    @classmethod
    def disk(cls, radius: float = 1.0) -> "DomainSpec":
        return cls("disk", (radius,))

    @classmethod
    def annulus(cls, inner: float = 1.0, outer: float = 2.0) -> "DomainSpec":
        return cls("annulus", (inner, outer))

    @classmethod
    def ball(cls, radius: float = 1.0) -> "DomainSpec":
        return cls("ball", (radius,))

    @classmethod
    def shell(cls, inner: float = 1.0, outer: float = 2.0) -> "DomainSpec":
        return cls("shell", (inner, outer))

    def is_convex(self) -> bool:
        return self.kind in ("disk", "ball")

    @property
    def dimension(self) -> int:
        return 2 if self.kind in ("disk", "annulus") else 3

    @property
    def inner_radius(self) -> float:
        return 0.0 if self.is_convex() else self.radii[0]

    @property
    def outer_radius(self) -> float:
        return self.radii[-1]

    @property
    def faces(self) -> List[BoundaryFace]:
        faces = [BoundaryFace("outer", self.outer_radius, +1)]
        if not self.is_convex():
            faces.append(BoundaryFace("inner", self.inner_radius, -1))
        return faces

    def face(self, name: str) -> BoundaryFace:
        for candidate in self.faces:
            if candidate.name == name:
                return candidate
        raise ConfigurationError(f"{self.kind} has no {name!r} boundary")

    def face_measure(self, face: BoundaryFace) -> float:
        """Length (2D) or area (3D) of a boundary face."""
        if self.dimension == 2:
            return 2.0 * np.pi * face.radius
        return 4.0 * np.pi * face.radius ** 2

    def locate_face(self, point: Sequence[float]) -> BoundaryFace:
        """
        Return the face a boundary point lies on.

        Raises:
            DomainError: if the point is not on the boundary
        """
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dimension,):
            raise DomainError(f"expected a {self.dimension}D point, got shape {p.shape}")
        rho = float(np.linalg.norm(p))
        for candidate in self.faces:
            if abs(rho - candidate.radius) <= BOUNDARY_TOL * max(1.0, candidate.radius):
                return candidate
        raise DomainError(f"point at radius {rho:.6g} is not on the boundary of {self.kind} {self.radii}")


@dataclass(frozen=True)
class AngularPoint:
    """Velocity in chart coordinates; psi is None in 2D."""

    phi: float
    psi: Optional[float] = None


@dataclass(frozen=True)
class AngularGrid:
    """
    Quadrature over the velocity circle (2D) or sphere (3D).

    In 3D the weights carry the Jacobian cos(phi) so that sum(weights) = 4*pi;
    in 2D phi is the circle angle in (-pi, pi] and sum(weights) = 2*pi.
    Nodes are ordered polar-major (ascending phi), azimuth-minor.
    """

    dimension: int
    phi: np.ndarray
    psi: Optional[np.ndarray]
    weights: np.ndarray
    n_polar_nodes: int = 0
    n_azimuth: int = 1

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def nodes(self) -> List[AngularPoint]:
        if self.psi is None:
            return [AngularPoint(float(p)) for p in self.phi]
        return [AngularPoint(float(p), float(s)) for p, s in zip(self.phi, self.psi)]

    @property
    def total_measure(self) -> float:
        return 2.0 * np.pi if self.dimension == 2 else 4.0 * np.pi

    @property
    def sin_phi(self) -> np.ndarray:
        return np.sin(self.phi)

    @property
    def cos_phi(self) -> np.ndarray:
        return np.cos(self.phi)

    @property
    def incoming(self) -> np.ndarray:
        """Mask of directions entering the domain through the chart's face (sin phi > 0)."""
        return self.sin_phi > 0

    @property
    def grazing_angle(self) -> np.ndarray:
        """Signed angle to the grazing set; equals phi in 3D, arcsin(sin phi) on the circle."""
        if self.dimension == 3:
            return self.phi.copy()
        return np.arcsin(np.clip(np.sin(self.phi), -1.0, 1.0))

    @property
    def mirror_index(self) -> np.ndarray:
        """Index of the node obtained by phi -> -phi at the same azimuth."""
        n_az = self.n_azimuth if self.dimension == 3 else 1
        n_pol = self.size // n_az
        polar = np.arange(self.size) // n_az
        azim = np.arange(self.size) % n_az
        return (n_pol - 1 - polar) * n_az + azim

    def average(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        """Measure-correct angular average (1/|S|) * sum_i w_i f_i along `axis`."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights / self.total_measure

    def integrate(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights


def _gauss_on(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _half_range(pieces: Sequence[Tuple[float, float, int]]) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = zip(*(_gauss_on(lo, hi, n) for lo, hi, n in pieces if n > 0))
    return np.concatenate(nodes), np.concatenate(weights)


def build_angular_grid(
    dimension: int,
    n_polar: int,
    n_azimuth: int = 1,
    grazing_width: Optional[float] = None,
    n_grazing: int = 0,
    grazing_breaks: Sequence[float] = (),
) -> AngularGrid:
    """
    Build a double-Gauss velocity quadrature with no node on the grazing set.

    The 3D polar rule is Gauss-Legendre in sin(phi) on each half-range, so the
    weights absorb the cos(phi) Jacobian and polynomials in sin(phi) up to
    degree n_polar-1 integrate exactly. The azimuth uses the uniform midpoint
    rule. The 2D rule is Gauss-Legendre in the circle angle on (0, pi) and its
    mirror image.

    Args:
        dimension: 2 or 3
        n_polar: even number of polar nodes over both half-ranges (>= 2)
        n_azimuth: number of azimuth nodes (3D only; 1 gives the rotationally
            reduced rule with weight 2*pi)
        grazing_width: optional angular width of a refined band next to each
            grazing direction
        n_grazing: number of Gauss nodes per piece of a grazing band
        grazing_breaks: grazing angles inside (0, grazing_width) where the band
            is cut into pieces, each resolved with its own `n_grazing` nodes

    Returns:
        AngularGrid

    Raises:
        ConfigurationError: on invalid counts or band width
    """
    if dimension not in (2, 3):
        raise ConfigurationError(f"dimension must be 2 or 3, got {dimension}")
    if n_polar < 2 or n_polar % 2:
        raise ConfigurationError(f"n_polar must be an even integer >= 2, got {n_polar}")
    if n_azimuth < 1:
        raise ConfigurationError(f"n_azimuth must be >= 1, got {n_azimuth}")
    half = n_polar // 2
    if grazing_width is not None:
        if not 0 < grazing_width < np.pi / 2 or n_grazing < 1:
            raise ConfigurationError(
                f"grazing band needs 0 < width < pi/2 and n_grazing >= 1, got {grazing_width}, {n_grazing}"
            )
        breaks = [float(b) for b in grazing_breaks]
        if any(not 0 < b < grazing_width for b in breaks) or any(np.diff(breaks) <= 0):
            raise ConfigurationError(f"grazing breaks must increase inside (0, {grazing_width}), got {breaks}")
        edges = [0.0] + breaks + [grazing_width]
    elif len(grazing_breaks):
        raise ConfigurationError("grazing breaks need a grazing band")

    if dimension == 3:
        if grazing_width is None:
            mu, a = _half_range([(0.0, 1.0, half)])
        else:
            mu_edges = np.sin(edges)
            pieces = [(lo, hi, n_grazing) for lo, hi in zip(mu_edges[:-1], mu_edges[1:])]
            mu, a = _half_range(pieces + [(mu_edges[-1], 1.0, half)])
        mu = np.concatenate([-mu[::-1], mu])
        a = np.concatenate([a[::-1], a])
        phi_polar = np.arcsin(mu)
        psi_nodes = -np.pi + (np.arange(n_azimuth) + 0.5) * (2.0 * np.pi / n_azimuth)
        phi = np.repeat(phi_polar, n_azimuth)
        psi = np.tile(psi_nodes, phi_polar.size)
        weights = np.repeat(a, n_azimuth) * (2.0 * np.pi / n_azimuth)
        return AngularGrid(3, phi, psi, weights, n_polar_nodes=phi_polar.size, n_azimuth=n_azimuth)

    if grazing_width is None:
        ang, a = _half_range([(0.0, np.pi, half)])
    else:
        near = [(lo, hi, n_grazing) for lo, hi in zip(edges[:-1], edges[1:])]
        far = [(np.pi - hi, np.pi - lo, n) for lo, hi, n in reversed(near)]
        ang, a = _half_range(near + [(grazing_width, np.pi - grazing_width, half)] + far)
    phi = np.concatenate([-ang[::-1], ang])
    weights = np.concatenate([a[::-1], a])
    return AngularGrid(2, phi, None, weights, n_polar_nodes=phi.size, n_azimuth=1)


@dataclass(frozen=True)
class BoundaryChart:
    """
    Orthogonal principal-direction chart at a boundary point.

    In 2D only the in-plane tangent (tangent2) and curvature (kappa2) are
    meaningful; kappa1 is 0 and tangent1 is None, which makes the 2D operator
    the psi = 0 slice of the 3D one.
    """

    params: Tuple[float, ...]
    point: np.ndarray
    normal: np.ndarray
    tangent1: Optional[np.ndarray]
    tangent2: np.ndarray
    length1: float
    length2: float
    kappa1: float
    kappa2: float
    mixed_derivative: Optional[np.ndarray] = None
    face: Optional[BoundaryFace] = None

    @property
    def dimension(self) -> int:
        return self.point.size

    @property
    def radius1(self) -> float:
        return np.inf if self.kappa1 == 0 else 1.0 / self.kappa1

    @property
    def radius2(self) -> float:
        return np.inf if self.kappa2 == 0 else 1.0 / self.kappa2

    def frame_defect(self) -> float:
        """Largest deviation of {n, tangents} from orthonormality."""
        vectors = [self.normal, self.tangent2] + ([self.tangent1] if self.tangent1 is not None else [])
        gram = np.array([[u @ v for v in vectors] for u in vectors])
        return float(np.max(np.abs(gram - np.eye(len(vectors)))))

    def twist_terms(self) -> Tuple[float, float]:
        """The triple products s1.(s2 x (r_12 x s2)) and s2.(s1 x (r_12 x s1)) of the psi coefficient."""
        if self.dimension == 2 or self.mixed_derivative is None:
            return 0.0, 0.0
        m, s1, s2 = self.mixed_derivative, self.tangent1, self.tangent2
        t1 = float(s1 @ np.cross(s2, np.cross(m, s2)))
        t2 = float(s2 @ np.cross(s1, np.cross(m, s1)))
        return t1, t2


def chart_at(domain: DomainSpec, boundary_point: Sequence[float]) -> BoundaryChart:
    """
    Chart at a boundary point of an analytic domain.

    Circles are parameterized by the polar angle, spheres by (polar, azimuth)
    angles; the normal is the outward normal of the domain, so on the inner
    face of an annulus/shell it points to the origin and the curvature is
    negative.

    Raises:
        DomainError: if the point is off the boundary
        SingularChartError: at the poles of the sphere parameterization
    """
    face = domain.locate_face(boundary_point)
    p = np.asarray(boundary_point, dtype=float)
    rho = face.radius
    if domain.dimension == 2:
        theta = float(np.arctan2(p[1], p[0]))
        e_r = np.array([np.cos(theta), np.sin(theta)])
        e_t = np.array([-np.sin(theta), np.cos(theta)])
        return BoundaryChart(
            params=(theta,),
            point=rho * e_r,
            normal=face.sign * e_r,
            tangent1=None,
            tangent2=e_t,
            length1=1.0,
            length2=rho,
            kappa1=0.0,
            kappa2=face.curvature,
            face=face,
        )

    theta = float(np.arccos(np.clip(p[2] / rho, -1.0, 1.0)))
    azimuth = float(np.arctan2(p[1], p[0]))
    sin_t = np.sin(theta)
    if sin_t < 1e-12:
        raise SingularChartError("the (polar, azimuth) chart is singular at the poles")
    e_r = np.array([sin_t * np.cos(azimuth), sin_t * np.sin(azimuth), np.cos(theta)])
    e_theta = np.array([np.cos(theta) * np.cos(azimuth), np.cos(theta) * np.sin(azimuth), -sin_t])
    e_az = np.array([-np.sin(azimuth), np.cos(azimuth), 0.0])
    return BoundaryChart(
        params=(theta, azimuth),
        point=rho * e_r,
        normal=face.sign * e_r,
        tangent1=e_theta,
        tangent2=e_az,
        length1=rho,
        length2=rho * sin_t,
        kappa1=face.curvature,
        kappa2=face.curvature,
        mixed_derivative=rho * np.cos(theta) * e_az,
        face=face,
    )


def velocity_substitution(w: Sequence[float], chart: BoundaryChart) -> AngularPoint:
    """
    Chart angles of a unit velocity: -w.n = sin(phi), w.s1 = cos(phi) sin(psi),
    w.s2 = cos(phi) cos(psi). In 2D phi is the circle angle with w.s = cos(phi).

    Raises:
        DomainError: if |w| != 1
    """
    w = np.asarray(w, dtype=float)
    if w.shape != chart.normal.shape or abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
        raise DomainError(f"velocity must be a unit {chart.dimension}-vector, got {w}")
    normal_part = -float(w @ chart.normal)
    if chart.dimension == 2:
        return AngularPoint(float(np.arctan2(normal_part, float(w @ chart.tangent2))))
    phi = float(np.arcsin(np.clip(normal_part, -1.0, 1.0)))
    psi = float(np.arctan2(float(w @ chart.tangent1), float(w @ chart.tangent2)))
    return AngularPoint(phi, psi)


def inverse_velocity_substitution(point: AngularPoint, chart: BoundaryChart) -> np.ndarray:
    """Unit velocity from chart angles."""
    if chart.dimension == 2:
        return -np.sin(point.phi) * chart.normal + np.cos(point.phi) * chart.tangent2
    psi = 0.0 if point.psi is None else point.psi
    return (
        -np.sin(point.phi) * chart.normal
        + np.cos(point.phi) * np.sin(psi) * chart.tangent1
        + np.cos(point.phi) * np.cos(psi) * chart.tangent2
    )


@dataclass(frozen=True)
class AdvectionCoefficients:
    """Coefficients of d/d(eta), d/d(phi), d/d(iota1), d/d(iota2), d/d(psi) in w.grad."""

    c_eta: np.ndarray
    c_phi: np.ndarray
    c_iota1: np.ndarray
    c_iota2: np.ndarray
    c_psi: np.ndarray


def curvature_factors(chart: BoundaryChart, eta, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Return 1 - kappa_i*eps*eta for both principal directions.

    Raises:
        SingularChartError: if any factor is <= 0 (eps*eta reached a radius of curvature)
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    mu = eps * np.asarray(eta, dtype=float)
    d1 = 1.0 - chart.kappa1 * mu
    d2 = 1.0 - chart.kappa2 * mu
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise SingularChartError(
            f"eps*eta reached the curvature radius (min factors {np.min(d1):.3g}, {np.min(d2):.3g})"
        )
    return d1, d2


def advection_coefficients(chart: BoundaryChart, eta, eps: float, point: AngularPoint) -> AdvectionCoefficients:
    """
    Coefficients of w.grad in (eta, iota1, iota2, phi, psi) coordinates.

    The curvature enters as kappa/(1 - kappa*eps*eta) = 1/(R - eps*eta), so the
    convex (R - eps*eta) and non-convex (R + eps*eta) forms come from the same
    signed formula. Arrays broadcast over eta, phi and psi.
    """
    d1, d2 = curvature_factors(chart, eta, eps)
    phi = np.asarray(point.phi, dtype=float)
    psi = np.zeros_like(phi) if point.psi is None else np.asarray(point.psi, dtype=float)
    sin_f, cos_f = np.sin(phi), np.cos(phi)
    sin_p, cos_p = np.sin(psi), np.cos(psi)
    k1, k2 = chart.kappa1 / d1, chart.kappa2 / d2

    c_eta = sin_f / eps + 0.0 * d1
    c_phi = -(sin_p ** 2 * k1 + cos_p ** 2 * k2) * cos_f
    c_iota2 = cos_f * cos_p / (chart.length2 * d2)
    if chart.dimension == 2:
        zero = np.zeros(np.broadcast(c_phi, c_iota2).shape)
        return AdvectionCoefficients(c_eta, c_phi, zero, c_iota2, zero)
    t1, t2 = chart.twist_terms()
    c_iota1 = cos_f * sin_p / (chart.length1 * d1)
    area = chart.length1 * chart.length2
    c_psi = sin_p * (cos_f * t1 / (area * d1) - k1 * sin_f * cos_p) - cos_p * (
        cos_f * t2 / (area * d2) - k2 * sin_f * sin_p
    )
    return AdvectionCoefficients(c_eta, c_phi, c_iota1, c_iota2, c_psi)
