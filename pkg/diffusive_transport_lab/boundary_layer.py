"""
Cutoff boundary layer built from a Milne solution.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

try:
    from .data_families import BoundaryData
    from .errors import ConfigurationError
    from .milne import MilneOperator, MilneProblem, MilneSolution, graded_eta_mesh, solve_milne
    from .phase_space import PhaseSpaceGrid
except ImportError:
    from data_families import BoundaryData
    from errors import ConfigurationError
    from milne import MilneOperator, MilneProblem, MilneSolution, graded_eta_mesh, solve_milne
    from phase_space import PhaseSpaceGrid


logger = logging.getLogger(__name__)


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _bump_prime(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


@dataclass(frozen=True)
class CutoffSpec:
    """
    Smooth even cutoff: chi = 1 on |y| <= inner, 0 on |y| >= outer, with the
    normalized exp(-1/t) transition in between; chi_tilde = 1 - chi.
    """

    inner: float = 1.0
    outer: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ConfigurationError(f"cutoff needs 0 < inner < outer, got {self.inner}, {self.outer}")

    def _t(self, y):
        y = np.abs(np.asarray(y, dtype=float))
        return (self.outer - y) / (self.outer - self.inner)

    def chi(self, y) -> np.ndarray:
        t = np.clip(self._t(y), 0.0, 1.0)
        num = _bump(t)
        return num / (num + _bump(1.0 - t))

    def chi_tilde(self, y) -> np.ndarray:
        return 1.0 - self.chi(y)

    def chi_prime(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        t = np.clip(self._t(y), 0.0, 1.0)
        f, fc = _bump(t), _bump(1.0 - t)
        # f + fc > 0 on [0, 1]
        dchi_dt = (_bump_prime(t) * fc + f * _bump_prime(1.0 - t)) / (f + fc) ** 2
        return dchi_dt * (-np.sign(y) / (self.outer - self.inner))

    def chi_tilde_prime(self, y) -> np.ndarray:
        return -self.chi_prime(y)


@dataclass
class BoundaryLayerField:
    """
    chi_tilde(theta_g/eps) * chi(eps*eta) * Psi(eta, w) on the Milne mesh of one
    boundary point, with theta_g the grazing angle of each node.
    """

    solution: MilneSolution
    eps: float
    cutoffs: CutoffSpec

    @property
    def grazing_angle(self) -> np.ndarray:
        return self.solution.grid.grazing_angle

    @property
    def velocity_cutoff(self) -> np.ndarray:
        return self.cutoffs.chi_tilde(self.grazing_angle / self.eps)

    def collar_cutoff(self, eta) -> np.ndarray:
        return self.cutoffs.chi(self.eps * np.asarray(eta, dtype=float))

    @property
    def values(self) -> np.ndarray:
        """U^B_0 on (eta mesh, directions)."""
        return self.collar_cutoff(self.solution.eta)[:, None] * self.velocity_cutoff[None, :] * self.solution.psi

    def at_boundary(self) -> np.ndarray:
        """U^B_0(0, w) = chi_tilde(theta_g/eps) Psi(0, w)."""
        return self.velocity_cutoff * self.solution.boundary_trace()

    def evaluate(self, eta_query) -> np.ndarray:
        """U^B_0 at arbitrary eta (zero beyond the truncation height); shape (*eta.shape, n_dirs)."""
        eta_query = np.asarray(eta_query, dtype=float)
        return self.collar_cutoff(eta_query)[..., None] * self.velocity_cutoff * self.solution.psi_at(eta_query)


def build_boundary_layer(solution: MilneSolution, eps: float, cutoffs: CutoffSpec = CutoffSpec()) -> BoundaryLayerField:
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    return BoundaryLayerField(solution, float(eps), cutoffs)


FaceSolutions = Dict[str, List[MilneSolution]]
FaceLayers = Dict[str, List[BoundaryLayerField]]


def solve_face_milne(
    grid: PhaseSpaceGrid,
    data: BoundaryData,
    eta: Optional[np.ndarray] = None,
    closure: str = "isotropic",
    method: str = "direct",
    tol: float = 1e-10,
    threads: int = 1,
) -> FaceSolutions:
    """
    One Milne problem per boundary node of every face, on the grid's angular nodes.

    All problems share one MilneOperator; with `threads` > 1 they are solved
    concurrently and gathered in boundary-angle order.

    Returns:
        face name -> list of MilneSolution over the boundary angles
    """
    if threads < 1:
        raise ConfigurationError(f"threads must be >= 1, got {threads}")
    eta = graded_eta_mesh() if eta is None else np.asarray(eta, dtype=float)
    angles = grid.angles
    operator = MilneOperator(angles, eta, closure)
    incoming_phi = angles.phi[angles.incoming]
    theta = grid.theta if grid.dimension == 2 else np.zeros(1)

    problems = []
    for face in grid.domain.faces:
        for th in theta:
            values = np.broadcast_to(data.evaluate(face.name, th, incoming_phi), incoming_phi.shape)
            problems.append(MilneProblem(angles, values.copy(), eta, closure))

    def solve(problem):
        return solve_milne(problem, tol=tol, method=method, operator=operator)

    if threads == 1:
        solutions = [solve(p) for p in problems]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solutions = list(pool.map(solve, problems))

    out: FaceSolutions = {}
    for n, face in enumerate(grid.domain.faces):
        out[face.name] = solutions[n * theta.size:(n + 1) * theta.size]
    logger.info(
        "solved %d Milne problems (%s closure, H=%g) for %s",
        len(problems), closure, float(eta[-1]), grid.domain.kind,
    )
    return out


def face_phi_inf(solutions: FaceSolutions) -> Dict[str, np.ndarray]:
    """Far-field values per face, sampled on the boundary angles."""
    return {name: np.array([s.phi_inf for s in sols]) for name, sols in solutions.items()}


def build_face_layers(solutions: FaceSolutions, eps: float, cutoffs: CutoffSpec = CutoffSpec()) -> FaceLayers:
    return {name: [build_boundary_layer(s, eps, cutoffs) for s in sols] for name, sols in solutions.items()}
