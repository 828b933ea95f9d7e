"""
Approximate solution, remainder boundary data and sources

With u_a = U0 + eps U1 + eps^2 U2 + U^B_0 the remainder R = u - u_a solves

    w.grad R + eps^-1 (R - avg R) = S,    R = -h on the incoming boundary,

and S = S0 + S1 + S2 + S3 is what u_a leaves behind:

    S0  = -eps^2 w.grad U2
    S11 = -c_phi chi_t chi Psi_phi                    S1 = S11 + S12
    S12 = -c_phi chi_t'(th/eps) eps^-1 th_phi chi Psi
    S2  = -(sin(phi) chi_t chi'(mu) Psi + c_iota Psi_iota chi_t chi)
    S31 = eps^-1 chi(th/eps) avg(Psi) chi           S3 = S31 + S32
    S32 = -eps^-1 chi avg(chi(th/eps) Psi)

where chi = chi(mu) is the collar cutoff at physical distance mu, chi_t =
chi_tilde(th/eps) the velocity cutoff, th the grazing angle of the chart
direction and c_phi, c_iota the curvilinear advection coefficients of the face.
The layers of both faces of an annulus/shell are superposed.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

try:
    from .boundary_layer import CutoffSpec, FaceLayers
    from .errors import ConfigurationError
    from .interior import InteriorSolution
    from .norms import BoundaryField, boundary_norm, phase_inner
    from .phase_space import PhaseSpaceGrid
    from .quadgeom import AngularGrid, AngularPoint, BoundaryFace, advection_coefficients, chart_at
except ImportError:
    from boundary_layer import CutoffSpec, FaceLayers
    from errors import ConfigurationError
    from interior import InteriorSolution
    from norms import BoundaryField, boundary_norm, phase_inner
    from phase_space import PhaseSpaceGrid
    from quadgeom import AngularGrid, AngularPoint, BoundaryFace, advection_coefficients, chart_at


logger = logging.getLogger(__name__)


def _phi_derivative(grid: AngularGrid, values: np.ndarray) -> np.ndarray:
    """d/dphi within each half-range of the chart angle; the grazing set is never differenced across."""
    n_az = grid.n_azimuth if grid.dimension == 3 else 1
    n_eta = values.shape[0]
    v = values.reshape(n_eta, -1, n_az)
    phi = grid.phi[::n_az]
    out = np.zeros_like(v)
    for half in (np.sin(phi) < 0, np.sin(phi) > 0):
        idx = np.flatnonzero(half)
        if idx.size < 2:
            continue
        order = 2 if idx.size >= 3 else 1
        out[:, idx] = np.gradient(v[:, idx], phi[idx], axis=1, edge_order=order)
    return out.reshape(values.shape)


def _interp_eta(mesh: np.ndarray, values: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Linear interpolation in eta along axis 0, zero beyond the mesh."""
    idx = np.clip(np.searchsorted(mesh, eta, side="right") - 1, 0, mesh.size - 2)
    s = np.clip((eta - mesh[idx]) / (mesh[idx + 1] - mesh[idx]), 0.0, 1.0)[:, None]
    out = (1.0 - s) * values[idx] + s * values[idx + 1]
    out[eta > mesh[-1]] = 0.0
    return out


def _face_chart(grid: PhaseSpaceGrid, face: BoundaryFace):
    if grid.dimension == 2:
        return chart_at(grid.domain, [face.radius, 0.0])
    return chart_at(grid.domain, [face.radius, 0.0, 0.0])


@dataclass
class FaceSamples:
    """
    Milne data of one face sampled on the phase-space grid, directions in grid
    order: arrays are (n_r, n_theta, n_dirs) or (n_r, n_theta).
    """

    face: BoundaryFace
    mu: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    psi_phi: np.ndarray
    psi_theta: np.ndarray
    psi_average: np.ndarray
    boundary_psi: np.ndarray
    chart_phi: np.ndarray
    grazing: np.ndarray


def sample_face(grid: PhaseSpaceGrid, face: BoundaryFace, layers: FaceLayers) -> FaceSamples:
    """Map the Milne solutions of a face onto the radial nodes and grid directions."""
    if face.name not in layers:
        raise ConfigurationError(f"no boundary layer for the {face.name} face")
    face_layers = layers[face.name]
    n_theta = grid.n_theta
    if len(face_layers) != n_theta:
        raise ConfigurationError(f"{face.name} face needs {n_theta} boundary layers, got {len(face_layers)}")
    mu = grid.distance_to_face(face)
    eta = mu / grid.eps
    node = grid.chart_node(face)

    psi, psi_phi, psi_bar, trace = [], [], [], []
    for layer in face_layers:
        sol = layer.solution
        if sol.grid.size != grid.n_dirs:
            raise ConfigurationError("Milne angular grid does not match the phase-space angular grid")
        psi.append(sol.psi_at(eta)[:, node])
        psi_phi.append(_interp_eta(sol.eta, _phi_derivative(sol.grid, sol.psi), eta)[:, node])
        psi_bar.append(sol.psi_average_at(eta))
        trace.append(sol.boundary_trace()[node])
    psi = np.stack(psi, axis=1)
    if n_theta > 1:
        h = 2.0 * np.pi / n_theta
        psi_theta = (np.roll(psi, -1, axis=1) - np.roll(psi, 1, axis=1)) / (2.0 * h)
    else:
        psi_theta = np.zeros_like(psi)
    chart_phi = grid.chart_angle(face)
    return FaceSamples(
        face=face,
        mu=mu,
        eta=eta,
        psi=psi,
        psi_phi=np.stack(psi_phi, axis=1),
        psi_theta=psi_theta,
        psi_average=np.stack(psi_bar, axis=1),
        boundary_psi=np.stack(trace, axis=0),
        chart_phi=chart_phi,
        grazing=np.arcsin(np.clip(np.sin(chart_phi), -1.0, 1.0)),
    )


def _check_eps(grid: PhaseSpaceGrid, interior: InteriorSolution, layers: FaceLayers, eps: Optional[float]) -> float:
    eps = grid.eps if eps is None else float(eps)
    if abs(eps - grid.eps) > 1e-14 * eps:
        raise ConfigurationError(f"eps={eps} does not match the grid (eps={grid.eps})")
    if interior.eps is not None and abs(interior.eps - eps) > 1e-14 * eps:
        raise ConfigurationError(f"interior expansion was built for eps={interior.eps}, not {eps}")
    for name, face_layers in layers.items():
        for layer in face_layers:
            if abs(layer.eps - eps) > 1e-14 * eps:
                raise ConfigurationError(f"{name} boundary layer was built for eps={layer.eps}, not {eps}")
    return eps


@dataclass
class ApproximateSolution:
    """u_a = (U0 + eps U1 + eps^2 U2) + U^B_0 on the phase-space grid."""

    grid: PhaseSpaceGrid
    eps: float
    interior: InteriorSolution
    layers: FaceLayers
    interior_part: np.ndarray
    layer_part: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.interior_part + self.layer_part

    @property
    def leading_order(self) -> np.ndarray:
        """U0 on the spatial nodes."""
        return self.interior.U0(self.grid.points)


def build_approximate_solution(
    grid: PhaseSpaceGrid, interior: InteriorSolution, layers: FaceLayers, eps: Optional[float] = None
) -> ApproximateSolution:
    eps = _check_eps(grid, interior, layers, eps)
    points = grid.points[:, None, :]
    interior_part = np.broadcast_to(interior.composite(points, grid.directions(), eps), grid.shape).copy()
    layer_part = np.zeros(grid.shape)
    for face in grid.domain.faces:
        cutoffs = layers[face.name][0].cutoffs
        samples = sample_face(grid, face, layers)
        velocity = cutoffs.chi_tilde(samples.grazing / eps)
        collar = cutoffs.chi(samples.mu)[:, None, None]
        layer_part += (collar * velocity * samples.psi).reshape(grid.shape)
    return ApproximateSolution(grid, eps, interior, layers, interior_part, layer_part)


def assemble_h(
    grid: PhaseSpaceGrid,
    interior: InteriorSolution,
    layers: FaceLayers,
    eps: Optional[float] = None,
    velocity_cutoff: bool = True,
) -> BoundaryField:
    """
    Boundary data of the remainder on the incoming boundary,

        h = -eps w.grad U0 - eps^2 w.grad U1 - chi(th/eps) Psi(0)

    plus, on annulus/shell, the trace of the opposite face's layer. Values on
    outgoing directions are 0. With `velocity_cutoff=False` chi(th/eps) is
    replaced by 1.

    Raises:
        ConfigurationError: if the components were built for different eps
    """
    eps = _check_eps(grid, interior, layers, eps)
    dirs = grid.directions()
    points = grid.points[:, None, :]
    samples = {face.name: sample_face(grid, face, layers) for face in grid.domain.faces}
    values: Dict[str, np.ndarray] = {}
    for face in grid.domain.faces:
        nodes = grid.face_nodes(face)
        i = grid.face_radial_index(face)
        own = samples[face.name]
        cutoffs = layers[face.name][0].cutoffs
        first = interior.u0.directional(points[nodes], dirs[nodes], 1)
        second = interior.u0.directional(points[nodes], dirs[nodes], 2)
        chi_v = cutoffs.chi(own.grazing / eps) if velocity_cutoff else np.ones(grid.n_dirs)
        h = -eps * first + eps ** 2 * second - chi_v * own.boundary_psi
        for other in grid.domain.faces:
            if other.name == face.name:
                continue
            far = samples[other.name]
            far_cut = layers[other.name][0].cutoffs
            h = h + far_cut.chi(far.mu[i]) * far_cut.chi_tilde(far.grazing / eps) * far.psi[i]
        values[face.name] = np.where(grid.incoming(face), h, 0.0)
    return BoundaryField(values)


@dataclass
class SourceTerms:
    """Sources of the remainder equation on the phase-space grid, shape (n_space, n_dirs) each."""

    grid: PhaseSpaceGrid
    eps: float
    s0: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s2: np.ndarray
    s31: np.ndarray
    s32: np.ndarray
    h: BoundaryField
    layer: np.ndarray

    @property
    def s1(self) -> np.ndarray:
        return self.s11 + self.s12

    @property
    def s3(self) -> np.ndarray:
        return self.s31 + self.s32

    @property
    def total(self) -> np.ndarray:
        return self.s0 + self.s1 + self.s2 + self.s3

    def components(self) -> Dict[str, np.ndarray]:
        return {
            "S0": self.s0, "S1": self.s1, "S11": self.s11, "S12": self.s12,
            "S2": self.s2, "S3": self.s3, "S31": self.s31, "S32": self.s32,
        }


def assemble_sources(
    grid: PhaseSpaceGrid,
    interior: InteriorSolution,
    layers: FaceLayers,
    eps: Optional[float] = None,
    velocity_cutoff: bool = True,
) -> SourceTerms:
    """
    Assemble h and S0..S3 for one eps.

    Angular derivatives of Psi are one-sided within each half-range of the
    chart angle; the velocity cutoff removes the grazing neighbourhood where
    they are not bounded.

    Args:
        grid: phase-space grid
        interior: interior expansion (U0, U1, U2)
        layers: boundary layers per face and boundary angle
        eps: Knudsen number (defaults to the grid's)
        velocity_cutoff: passed to assemble_h

    Returns:
        SourceTerms
    """
    eps = _check_eps(grid, interior, layers, eps)
    shape3 = (grid.n_r, grid.n_theta, grid.n_dirs)
    points = grid.points[:, None, :]
    s0 = np.broadcast_to(-eps ** 2 * interior.streaming_U2(points, grid.directions()), grid.shape).copy()
    s11, s12, s2, s31, s32, layer = (np.zeros(shape3) for _ in range(6))
    weights = grid.angles.weights / grid.angles.total_measure

    for face in grid.domain.faces:
        f = sample_face(grid, face, layers)
        cut: CutoffSpec = layers[face.name][0].cutoffs
        chart = _face_chart(grid, face)
        psi_node = None if grid.dimension == 2 else np.zeros(grid.n_dirs)
        coeff = advection_coefficients(chart, f.eta[:, None], eps, AngularPoint(f.chart_phi, psi_node))
        c_phi = coeff.c_phi[:, None, :]
        c_iota = coeff.c_iota2[:, None, :]

        chi_t = cut.chi_tilde(f.grazing / eps)
        chi_t_prime = cut.chi_tilde_prime(f.grazing / eps)
        # d(grazing)/d(chart angle): sign(cos) on the circle, 1 on the sphere
        dgraze = np.sign(np.cos(f.chart_phi)) if grid.dimension == 2 else np.ones(grid.n_dirs)
        chi_c = cut.chi(f.mu)[:, None, None]
        chi_c_prime = cut.chi_prime(f.mu)[:, None, None]
        sin_c = np.sin(f.chart_phi)

        layer += chi_c * chi_t * f.psi
        s11 += -c_phi * chi_t * chi_c * f.psi_phi
        s12 += -c_phi * (chi_t_prime * dgraze / eps) * chi_c * f.psi
        s2 += -(sin_c * chi_t * chi_c_prime * f.psi + c_iota * chi_t * chi_c * f.psi_theta)
        chi_v = cut.chi(f.grazing / eps)
        s31 += chi_v * chi_c * f.psi_average[:, :, None] / eps
        s32 += -chi_c * ((chi_v * f.psi) @ weights)[:, :, None] / eps

    h = assemble_h(grid, interior, layers, eps, velocity_cutoff)
    flat = [a.reshape(grid.shape) for a in (s11, s12, s2, s31, s32, layer)]
    terms = SourceTerms(grid, eps, s0, *flat[:5], h=h, layer=flat[5])
    logger.debug(
        "sources eps=%g: max|S0|=%.3e max|S1|=%.3e max|S2|=%.3e max|S3|=%.3e",
        eps, np.max(np.abs(terms.s0)), np.max(np.abs(terms.s1)), np.max(np.abs(terms.s2)), np.max(np.abs(terms.s3)),
    )
    return terms


@dataclass
class EnergyReport:
    eps: float
    terms: Dict[str, float]
    imbalance: float


def energy_identity(remainder: np.ndarray, source: np.ndarray, grid: PhaseSpaceGrid, eps: Optional[float] = None) -> EnergyReport:
    """
    Discrete energy balance of the remainder equation tested with R/eps:

        1/2 eps^-1 |R|^2_out + eps^-2 |R - avg R|^2 = eps^-1 <R, S> + 1/2 eps^-1 |R|^2_in

    Boundary norms use the traces of R itself. The imbalance is relative to
    the largest term.
    """
    eps = grid.eps if eps is None else float(eps)
    r = np.asarray(remainder, dtype=float)
    deviation = r - grid.average(r)[:, None]
    trace = BoundaryField({f.name: r[grid.face_nodes(f)] for f in grid.domain.faces})
    terms = {
        "outflow": 0.5 / eps * boundary_norm(grid, trace, "gamma_plus") ** 2,
        "relaxation": phase_inner(grid, deviation, deviation) / eps ** 2,
        "source": phase_inner(grid, r, source) / eps,
        "inflow": 0.5 / eps * boundary_norm(grid, trace, "gamma_minus") ** 2,
    }
    lhs = terms["outflow"] + terms["relaxation"]
    rhs = terms["source"] + terms["inflow"]
    scale = max(abs(v) for v in terms.values())
    imbalance = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    return EnergyReport(eps, terms, float(imbalance))
